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

#include "handover/fsm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace handover {

const char* to_string(HandoverPhase phase) {
  switch (phase) {
    case HandoverPhase::kReady:
      return "Ready";
    case HandoverPhase::kTracking:
      return "Tracking";
    case HandoverPhase::kSearch:
      return "Search";
    case HandoverPhase::kGrasping:
      return "Grasping";
    case HandoverPhase::kPlacing:
      return "Placing";
  }
  return "Ready";
}

bool transition_allowed(HandoverPhase from, HandoverPhase to) {
  using P = HandoverPhase;
  if (from == to || to == P::kReady) return true;
  switch (from) {
    case P::kReady:
      return to == P::kTracking;
    case P::kTracking:
      return to == P::kSearch || to == P::kGrasping;
    case P::kSearch:
      return to == P::kTracking;
    case P::kGrasping:
      return to == P::kPlacing;
    case P::kPlacing:
      return false;
  }
  return false;
}

const char* to_string(TrackerMode mode) {
  switch (mode) {
    case TrackerMode::kLearned:
      return "learned";
    case TrackerMode::kBaseline:
      return "baseline";
    case TrackerMode::kOracle:
      return "oracle";
  }
  return "learned";
}

TrackerMode tracker_mode_from_string(const std::string& name) {
  if (name == "learned") return TrackerMode::kLearned;
  if (name == "baseline" || name == "baseline_nearest_last") return TrackerMode::kBaseline;
  if (name == "oracle") return TrackerMode::kOracle;
  throw std::invalid_argument("unknown tracker mode '" + name + "'");
}

// ---------------------------------------------------------------------------

GraspTracker::GraspTracker(TrackerMode mode, std::shared_ptr<const TrackerModel<float>> model,
                           double p_min)
    : mode_(mode), model_(std::move(model)), p_min_(p_min) {
  if (mode_ == TrackerMode::kLearned) {
    if (!model_) throw std::invalid_argument("learned tracking needs a model");
    history_cap_ = static_cast<std::size_t>(std::max(1, model_->config().frames - 1));
  }
}

void GraspTracker::reset() {
  history_.clear();
  anchor_.reset();
  last_.reset();
}

void GraspTracker::remember(const FrameObservation& obs, const Grasp& selected) {
  last_ = selected;
  if (mode_ != TrackerMode::kLearned) return;
  history_.push_back({obs, selected});
  while (history_.size() > history_cap_) history_.erase(history_.begin());
}

std::optional<TrackedGrasp> GraspTracker::update(const FrameObservation& obs,
                                                 const WorkspaceFilter& filter) {
  if (!anchor_) {
    const auto fresh = fresh_anchor(obs, filter);
    if (!fresh) return std::nullopt;
    anchor_ = *fresh;
    anchor_object_pose_ = obs.true_object_pose;
    remember(obs, *fresh);
    return TrackedGrasp{*fresh, 1.0};
  }

  std::optional<TrackedGrasp> out;
  if (mode_ == TrackerMode::kLearned) {
    out = infer_track(history_, obs, *model_, filter, p_min_);
  } else {
    FrameObservation survivors = obs;
    survivors.candidates.clear();
    for (const auto& c : obs.candidates) {
      if (filter.accepts(c)) survivors.candidates.push_back(c);
    }
    if (survivors.candidates.empty()) return std::nullopt;
    if (mode_ == TrackerMode::kBaseline) {
      out = TrackedGrasp{baseline_nearest_last(survivors, *last_), 1.0};
    } else {
      out = TrackedGrasp{oracle_track(survivors, *anchor_, anchor_object_pose_), 1.0};
    }
  }
  if (out) remember(obs, out->grasp);
  return out;
}

// ---------------------------------------------------------------------------

bool evaluate_grasp_success(const RobotState& robot, const ObjectModel& object,
                            const Pose& object_pose, double object_speed,
                            const SuccessTolerances& tol) {
  if (robot.gripper != GripperState::kClosed) {
    throw std::logic_error("grasp success is evaluated on a closed gripper");
  }
  if (object_speed > tol.slip_speed) return false;
  const Pose ee_in_object = compose(invert(object_pose), robot.ee_pose);
  const double max_angle = deg2rad(tol.angle_deg);
  for (const auto& a : object.annotations) {
    if (a.base_quality < tol.min_quality) continue;
    const double d = (a.grasp.pose.translation - ee_in_object.translation).norm();
    if (d > tol.distance) continue;
    if (symmetric_grasp_geodesic(a.grasp.pose.rotation, ee_in_object.rotation) <= max_angle) {
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------

void FsmConfig::validate() const {
  if (!(reinit_threshold < search_threshold && search_threshold < waiting_threshold)) {
    throw std::invalid_argument("fsm thresholds must satisfy reinit < search < waiting");
  }
  if (reinit_threshold < 0) throw std::invalid_argument("reinit_threshold must be >= 0");
  if (z_offset < 0.0) throw std::invalid_argument("z_offset must be >= 0");
  if (!(control_rate > 0.0)) throw std::invalid_argument("control_rate must be positive");
  if (!(gripper_close_time >= 0.0 && place_time >= 0.0)) {
    throw std::invalid_argument("phase durations must be non-negative");
  }
  if (!(trigger_dist > 0.0 && trigger_angle_deg > 0.0)) {
    throw std::invalid_argument("trigger thresholds must be positive");
  }
  predictor.validate();
  limits.validate();
}

WorkspaceFilter FsmConfig::default_filter() {
  WorkspaceFilter f;
  f.box_min = Vector3d(-0.5, -0.35, 0.15);
  f.box_max = Vector3d(0.5, 0.35, 0.5);
  f.min_score = 0.1;
  f.max_approach_deg = 30.0;
  return f;
}

bool object_in_view(const Pose& ee_pose, const Pose& object_pose, const Vector3d& extent,
                    const FsmConfig& cfg) {
  const Vector3d camera = ee_pose.translation + cfg.camera_offset;
  const double depth = camera.z() - object_pose.translation.z();
  if (depth <= 0.0) return false;
  // Camera axis in the object frame, clamped onto the footprint rectangle.
  const Vector3d local = object_pose.rotation.transpose() * (camera - object_pose.translation);
  const double cx = std::clamp(local.x(), -0.5 * extent.x(), 0.5 * extent.x());
  const double cy = std::clamp(local.y(), -0.5 * extent.y(), 0.5 * extent.y());
  const double gap = std::hypot(local.x() - cx, local.y() - cy);
  return gap <= depth * std::tan(deg2rad(cfg.camera_half_fov_deg));
}

// ---------------------------------------------------------------------------

HandoverController::HandoverController(const FsmConfig& cfg, GraspTracker tracker)
    : cfg_(cfg), tracker_(std::move(tracker)), history_(cfg.predictor.max_history) {
  cfg_.validate();
  reset();
}

void HandoverController::reset() {
  robot_ = RobotState{};
  robot_.ee_pose = cfg_.ready_pose;
  robot_.limits = cfg_.limits;
  phase_ = HandoverPhase::kReady;
  target_ = cfg_.ready_pose;
  last_motion_.setZero();
  phase_timer_ = 0.0;
  lost_ = 0;
  clear_tracking();
}

void HandoverController::clear_tracking() {
  tracker_.reset();
  history_.clear();
  descending_ = false;
}

Pose HandoverController::approach_target(const Pose& predicted) {
  Pose target = predicted;
  const Matrix3d flipped = flip_about_approach(predicted.rotation);
  if (rotation_geodesic(robot_.ee_pose.rotation, flipped) <
      rotation_geodesic(robot_.ee_pose.rotation, predicted.rotation)) {
    target.rotation = flipped;
  }
  const double lateral = (robot_.ee_pose.translation - predicted.translation).head<2>().norm();
  if (lateral <= cfg_.descend_radius) descending_ = true;
  if (lateral > 2.0 * cfg_.descend_radius) descending_ = false;
  if (!descending_) target.translation.z() += cfg_.z_offset;
  return target;
}

TickDiagnostics HandoverController::step(const FrameObservation& obs, const WorldTruth& truth) {
  const double dt = cfg_.dt();
  TickDiagnostics d;
  d.tick = tick_;
  d.time = tick_ * dt;
  d.previous = phase_;
  d.ee_pose = robot_.ee_pose;

  auto on_lost = [&] {
    ++lost_;
    if (lost_ > cfg_.waiting_threshold) {
      phase_ = HandoverPhase::kReady;
      target_ = cfg_.ready_pose;
      lost_ = 0;
      clear_tracking();
      return;
    }
    if (lost_ == cfg_.reinit_threshold + 1) {
      clear_tracking();
      d.reinitialized = true;
    }
    if (lost_ > cfg_.search_threshold && phase_ == HandoverPhase::kTracking) {
      phase_ = HandoverPhase::kSearch;
      target_ = cfg_.top_pose;
    }
  };

  auto on_tracked = [&](const TrackedGrasp& t) {
    lost_ = 0;
    history_.append(t.grasp, d.time);
    d.tracked = t.grasp;
    d.selected_index = t.grasp.candidate_index;
    const Pose predicted =
        cfg_.prediction ? predict_future(history_, last_motion_, cfg_.predictor) : t.grasp.pose;
    d.predicted = predicted;
    target_ = approach_target(predicted);
    const double dist = (robot_.ee_pose.translation - predicted.translation).norm();
    const double angle = symmetric_grasp_geodesic(robot_.ee_pose.rotation, predicted.rotation);
    if (dist <= cfg_.trigger_dist && angle <= deg2rad(cfg_.trigger_angle_deg)) {
      phase_ = HandoverPhase::kGrasping;
      d.triggered = true;
      hold_pose_ = predicted;
      hold_pose_.rotation = target_.rotation;
      target_ = hold_pose_;
      robot_.gripper = GripperState::kClosing;
      robot_.gripper_remaining = cfg_.gripper_close_time;
    }
  };

  switch (phase_) {
    case HandoverPhase::kReady: {
      target_ = cfg_.ready_pose;
      if (auto t = tracker_.update(obs, cfg_.filter)) {
        phase_ = HandoverPhase::kTracking;
        on_tracked(*t);
      }
      break;
    }
    case HandoverPhase::kTracking:
    case HandoverPhase::kSearch: {
      if (auto t = tracker_.update(obs, cfg_.filter)) {
        phase_ = HandoverPhase::kTracking;
        on_tracked(*t);
      } else {
        on_lost();
      }
      break;
    }
    case HandoverPhase::kGrasping: {
      target_ = hold_pose_;
      robot_.gripper_remaining -= dt;
      if (robot_.gripper_remaining <= 1e-9) {
        robot_.gripper_remaining = 0.0;
        robot_.gripper = GripperState::kClosed;
        const bool ok = truth.object != nullptr &&
                        evaluate_grasp_success(robot_, *truth.object, truth.object_pose,
                                               truth.object_speed, cfg_.success);
        d.success = ok;
        clear_tracking();
        lost_ = 0;
        if (ok) {
          phase_ = HandoverPhase::kPlacing;
          phase_timer_ = cfg_.place_time;
          target_ = cfg_.ready_pose;
        } else {
          phase_ = HandoverPhase::kReady;
          target_ = cfg_.ready_pose;
          robot_.gripper = GripperState::kOpen;
        }
      }
      break;
    }
    case HandoverPhase::kPlacing: {
      target_ = cfg_.ready_pose;
      phase_timer_ -= dt;
      if (phase_timer_ <= 1e-9) {
        phase_ = HandoverPhase::kReady;
        robot_.gripper = GripperState::kOpen;
      }
      break;
    }
  }

  if (!transition_allowed(d.previous, phase_)) {
    throw std::logic_error(std::string("forbidden transition ") + to_string(d.previous) + " -> " +
                           to_string(phase_));
  }
  d.phase = phase_;
  d.target = target_;
  d.lost_counter = lost_;
  d.history_size = history_.size();
  d.tracker_history_size = tracker_.history_size();

  const Vector3d before = robot_.ee_pose.translation;
  robot_ = otg_step(robot_, target_, dt);
  last_motion_ = robot_.ee_pose.translation - before;
  ++tick_;
  return d;
}

// ---------------------------------------------------------------------------

namespace {

void append_pose(std::ostringstream& out, const Pose& p) {
  const Eigen::Quaterniond q = to_quaternion(p.rotation);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", p.translation.x(),
                p.translation.y(), p.translation.z(), q.w(), q.x(), q.y(), q.z());
  out << buf;
}

}  // namespace

std::string event_log_header() {
  return "tick\tphase\tee_tx\tee_ty\tee_tz\tee_qw\tee_qx\tee_qy\tee_qz\ttarget_tx\ttarget_ty\t"
         "target_tz\ttarget_qw\ttarget_qx\ttarget_qy\ttarget_qz\tlost_counter\tselected_index";
}

std::string format_event(const TickDiagnostics& d) {
  std::ostringstream out;
  out << d.tick << '\t' << to_string(d.phase);
  append_pose(out, d.ee_pose);
  append_pose(out, d.target);
  out << '\t' << d.lost_counter << '\t' << d.selected_index;
  return out.str();
}

}  // namespace handover
