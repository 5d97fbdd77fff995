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

// Five-phase handover controller. One step() per control tick: the robot state
// and the observation describe time t, the returned command is the state at
// t + dt.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "handover/otg.hpp"
#include "handover/predictor.hpp"
#include "handover/tracker.hpp"

namespace handover {

enum class HandoverPhase { kReady, kTracking, kSearch, kGrasping, kPlacing };

const char* to_string(HandoverPhase phase);

/// Edges of the phase graph; self-loops are always allowed.
bool transition_allowed(HandoverPhase from, HandoverPhase to);

enum class TrackerMode { kLearned, kBaseline, kOracle };

const char* to_string(TrackerMode mode);
TrackerMode tracker_mode_from_string(const std::string& name);

/// Runtime tracker over a stream of observations. Without an anchor the next
/// frame with a surviving candidate starts a new track at its best score.
class GraspTracker {
 public:
  explicit GraspTracker(TrackerMode mode,
                        std::shared_ptr<const TrackerModel<float>> model = nullptr,
                        double p_min = -1.0);

  /// nullopt means lost for this frame.
  std::optional<TrackedGrasp> update(const FrameObservation& obs, const WorkspaceFilter& filter);
  void reset();

  TrackerMode mode() const { return mode_; }
  bool anchored() const { return anchor_.has_value(); }
  std::size_t history_size() const { return history_.size(); }
  const std::optional<Grasp>& anchor() const { return anchor_; }
  const Pose& anchor_object_pose() const { return anchor_object_pose_; }

 private:
  void remember(const FrameObservation& obs, const Grasp& selected);

  TrackerMode mode_;
  std::shared_ptr<const TrackerModel<float>> model_;
  double p_min_;
  std::size_t history_cap_ = 2;
  std::vector<HistoryFrame> history_;
  std::optional<Grasp> anchor_;
  std::optional<Grasp> last_;
  Pose anchor_object_pose_;
};

struct SuccessTolerances {
  double distance = 0.015;   // m, closed bound
  double angle_deg = 15.0;   // closed bound, half-turn symmetric
  double min_quality = 0.5;
  double slip_speed = 0.3;   // m/s, object speed at closure
};

/// True iff the closed gripper sits on an annotation of sufficient quality in
/// the current object frame and the object is not slipping away.
bool evaluate_grasp_success(const RobotState& robot, const ObjectModel& object,
                            const Pose& object_pose, double object_speed,
                            const SuccessTolerances& tol = {});

struct FsmConfig {
  int reinit_threshold = 5;
  int search_threshold = 20;
  int waiting_threshold = 60;
  double z_offset = 0.035;
  double descend_radius = 0.03;  // lateral distance at which the offset is dropped
  double trigger_dist = 0.01;
  double trigger_angle_deg = 10.0;
  double gripper_close_time = 0.5;
  double control_rate = 6.0;
  double place_time = 1.0;
  bool prediction = true;
  PredictorParams predictor;
  MotionLimits limits;
  SuccessTolerances success;
  WorkspaceFilter filter = default_filter();
  Pose ready_pose = Pose(top_down_rotation(0.0), Vector3d(0.0, 0.0, 0.55));
  Pose top_pose = Pose(top_down_rotation(0.0), Vector3d(0.0, 0.0, 0.75));
  Vector3d camera_offset = Vector3d(0.0, 0.0, 0.12);
  double camera_half_fov_deg = 35.0;

  double dt() const { return 1.0 / control_rate; }
  void validate() const;
  static WorkspaceFilter default_filter();
};

/// Wrist camera model: the object is visible iff it lies below the camera and
/// its footprint (extent x by y in the object frame) meets the view disk of
/// radius Δz·tan(half fov) around the camera axis.
bool object_in_view(const Pose& ee_pose, const Pose& object_pose, const Vector3d& extent,
                    const FsmConfig& cfg);

/// Simulation ground truth, read only when a grasp is evaluated.
struct WorldTruth {
  const ObjectModel* object = nullptr;
  Pose object_pose;
  double object_speed = 0.0;
};

struct TickDiagnostics {
  int tick = 0;
  double time = 0.0;
  HandoverPhase previous = HandoverPhase::kReady;
  HandoverPhase phase = HandoverPhase::kReady;
  Pose ee_pose;  // state at the start of the tick
  Pose target;
  int lost_counter = 0;
  int selected_index = -1;
  bool reinitialized = false;
  bool triggered = false;
  std::optional<bool> success;  // set on the tick the grasp is evaluated
  std::optional<Grasp> tracked;
  std::optional<Pose> predicted;
  std::size_t history_size = 0;
  std::size_t tracker_history_size = 0;
};

class HandoverController {
 public:
  HandoverController(const FsmConfig& cfg, GraspTracker tracker);

  /// Advances one control tick with the frame observed at the current time.
  TickDiagnostics step(const FrameObservation& obs, const WorldTruth& truth);

  /// Robot back to the ready pose at rest; tracker and history cleared.
  void reset();

  HandoverPhase phase() const { return phase_; }
  const RobotState& robot() const { return robot_; }
  const GraspHistory& history() const { return history_; }
  const GraspTracker& tracker() const { return tracker_; }
  const FsmConfig& config() const { return cfg_; }
  int tick() const { return tick_; }
  int lost_counter() const { return lost_; }

 private:
  void clear_tracking();
  Pose approach_target(const Pose& predicted);

  FsmConfig cfg_;
  GraspTracker tracker_;
  GraspHistory history_;
  RobotState robot_;
  Vector3d last_motion_ = Vector3d::Zero();
  HandoverPhase phase_ = HandoverPhase::kReady;
  Pose target_;
  Pose hold_pose_;
  int lost_ = 0;
  int tick_ = 0;
  double phase_timer_ = 0.0;
  bool descending_ = false;
};

/// Tab-separated per-tick log: tick, phase, ee pose, target pose, lost counter,
/// selected candidate index. Poses are t then q (w, x, y, z).
std::string event_log_header();
std::string format_event(const TickDiagnostics& d);

}  // namespace handover
