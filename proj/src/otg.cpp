// Copyright 2026 The Flexible Handover Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "handover/otg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace handover {

void MotionLimits::validate() const {
  if (!(v_max > 0.0 && a_max > 0.0 && omega_max_deg > 0.0)) {
    throw std::invalid_argument("motion limits must be positive");
  }
}

const char* to_string(GripperState state) {
  switch (state) {
    case GripperState::kOpen:
      return "open";
    case GripperState::kClosing:
      return "closing";
    case GripperState::kClosed:
      return "closed";
  }
  return "open";
}

namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

// Constant-acceleration segment.
struct Segment {
  double accel;
  double duration;
};

}  // namespace

AxisState axis_step(const AxisState& state, double target, double v_max, double a_max, double dt) {
  const double x = state.position;
  double v = state.velocity;
  const double e = target - x;
  if (e == 0.0 && v == 0.0) return state;

  // Direction of the cruise phase: toward the target unless braking now
  // already overshoots it.
  const double stop = v * std::abs(v) / (2.0 * a_max);
  double s = sign(e - stop);
  if (s == 0.0) s = sign(e) != 0.0 ? sign(e) : -sign(v);

  Segment seg[3];
  double vp = std::sqrt(std::max(0.0, a_max * s * e + 0.5 * v * v));
  const double ramp_accel = [&] {
    const double capped = std::min(vp, v_max);
    return sign(s * capped - v) * a_max;
  }();
  double cruise = 0.0;
  if (vp > v_max) {
    vp = v_max;
    const double ramp = ramp_accel != 0.0 ? (vp * vp - v * v) / (2.0 * ramp_accel) : 0.0;
    const double brake = vp * vp / (2.0 * a_max);
    cruise = std::max(0.0, (s * e - s * ramp - brake) / vp);
  }
  seg[0] = {ramp_accel, std::abs(s * vp - v) / a_max};
  seg[1] = {0.0, cruise};
  seg[2] = {-s * a_max, vp / a_max};

  const double total = seg[0].duration + seg[1].duration + seg[2].duration;
  if (total <= dt) return {target, 0.0};

  double p = x;
  double remaining = dt;
  for (const Segment& g : seg) {
    const double h = std::min(remaining, g.duration);
    p += v * h + 0.5 * g.accel * h * h;
    v += g.accel * h;
    remaining -= h;
    if (remaining <= 0.0) break;
  }
  v = std::clamp(v, -v_max, v_max);
  return {p, v};
}

double rest_to_rest_time(double distance, double v_max, double a_max) {
  distance = std::abs(distance);
  if (distance < v_max * v_max / a_max) return 2.0 * std::sqrt(distance / a_max);
  return distance / v_max + v_max / a_max;
}

RobotState otg_step(const RobotState& current, const Pose& target, double dt) {
  current.limits.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  RobotState next = current;
  for (int axis = 0; axis < 3; ++axis) {
    const AxisState a = axis_step({current.ee_pose.translation[axis], current.ee_velocity[axis]},
                                  target.translation[axis], current.limits.v_max,
                                  current.limits.a_max, dt);
    next.ee_pose.translation[axis] = a.position;
    next.ee_velocity[axis] = a.velocity;
  }
  const Eigen::Quaterniond from(current.ee_pose.rotation);
  const Eigen::Quaterniond to(target.rotation);
  const double angle = rotation_geodesic(current.ee_pose.rotation, target.rotation);
  const double max_step = deg2rad(current.limits.omega_max_deg) * dt;
  if (angle <= max_step) {
    next.ee_pose.rotation = target.rotation;
  } else {
    next.ee_pose.rotation = orthonormalize(from.slerp(max_step / angle, to).toRotationMatrix());
  }
  return next;
}

}  // namespace handover
