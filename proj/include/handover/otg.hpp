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

// Online trajectory generation for a free-flying end-effector. Each translation
// axis follows its own time-optimal bang-coast-bang profile to the current
// target with zero final velocity, sampled one tick ahead. The profile carries
// no state besides position and velocity, so the target may change every tick.

#pragma once

#include "handover/se3.hpp"

namespace handover {

/// Per-axis translational limits and a rotational slew limit.
struct MotionLimits {
  double v_max = 0.25;         // m/s
  double a_max = 1.0;          // m/s²
  double omega_max_deg = 90.0; // deg/s

  void validate() const;
};

enum class GripperState { kOpen, kClosing, kClosed };

const char* to_string(GripperState state);

struct RobotState {
  Pose ee_pose;
  Vector3d ee_velocity = Vector3d::Zero();
  GripperState gripper = GripperState::kOpen;
  double gripper_remaining = 0.0;  // seconds left while closing
  MotionLimits limits;
};

struct AxisState {
  double position = 0.0;
  double velocity = 0.0;
};

/// One tick of the 1-D profile from state toward target. Guarantees
/// |Δv| ≤ a_max·dt and |v| ≤ v_max when the start speed is within v_max.
AxisState axis_step(const AxisState& state, double target, double v_max, double a_max, double dt);

/// Rest-to-rest time over distance d: 2√(d/a) when the peak stays below v,
/// else d/v + v/a.
double rest_to_rest_time(double distance, double v_max, double a_max);

/// Next commanded state: axis_step per translation axis, rotation slewed
/// toward the target by at most ω_max·dt. Gripper fields pass through.
RobotState otg_step(const RobotState& current, const Pose& target, double dt);

}  // namespace handover
