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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "handover/random.hpp"
#include "handover/se3.hpp"

namespace handover {

/// Parallel-jaw stroke of the simulated gripper (Robotiq-85 class).
inline constexpr double kGripperMaxWidth = 0.085;

struct Annotation {
  Grasp grasp;  // object frame
  double base_quality = 0.0;
};

/// Synthetic object with an annotated grasp set, all poses in the object frame.
struct ObjectModel {
  std::string id;
  Vector3d extent = Vector3d::Zero();
  std::vector<Annotation> annotations;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

enum class MotionKind {
  kStatic,
  kOneMotionRotation,
  kOneMotionTranslation,
  kContinuousRandom,
  kLinear,
};

const char* to_string(MotionKind kind);
MotionKind motion_kind_from_string(const std::string& name);

/// Planar workspace for the object; yaw in degrees.
struct WorkspaceBounds {
  double x_min = -0.3, x_max = 0.3;
  double y_min = -0.15, y_max = 0.15;
  double yaw_min_deg = -60.0, yaw_max_deg = 60.0;

  bool contains(double x, double y, double yaw_deg, double slack = 1e-12) const {
    return x >= x_min - slack && x <= x_max + slack && y >= y_min - slack && y <= y_max + slack &&
           yaw_deg >= yaw_min_deg - slack && yaw_deg <= yaw_max_deg + slack;
  }
};

/// Scripted object motion. Poses are planar (x, y, yaw) at a fixed height.
struct MotionScript {
  MotionKind kind = MotionKind::kStatic;
  double rotation_deg = 0.0;     // one-motion rotation magnitude, [0, 60]
  double translation_m = 0.0;    // one-motion translation magnitude, [0, 0.2]
  double direction_deg = 0.0;    // heading of translation / linear motion in the xy-plane
  double trigger_time = 0.5;     // seconds on the script clock
  double motion_duration = 1.0;  // seconds for one-motion scripts
  WorkspaceBounds bounds;
  double speed_limit = 0.1;                // m/s
  double angular_speed_limit_deg = 30.0;   // deg/s
  double start_x = 0.0, start_y = 0.0, start_yaw_deg = 0.0;
  double height = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One detector pass: exactly M world-frame candidates (or none when out of view).
struct FrameObservation {
  int frame_index = 0;
  double timestamp = 0.0;
  std::vector<Grasp> candidates;
  Pose true_object_pose;  // simulation ground truth; never read by learned paths
};

struct TimeSlice {
  std::vector<FrameObservation> frames;
  std::vector<Grasp> labels;
  std::vector<Pose> camera_poses;
};

struct AugmentationConfig {
  double rot_xy_bound_deg = 22.5;
  double rot_z_bound_deg = 30.0;
  double trans_xy_bound = 0.2;
  double trans_z_bound = 0.25;
};

struct NoiseConfig {
  double pose_jitter_sigma = 0.002;     // m, per axis
  double rot_jitter_sigma_deg = 2.0;
  double score_jitter_sigma = 0.05;
  double dropout_prob = 0.02;   // annotation missed, slot refilled anywhere in the workspace
  double spurious_prob = 0.02;  // slot overwritten by a hallucination close to the object
  std::uint64_t seed = 0;
  double spurious_spread = 0.15;   // half-width of the box holding workspace hallucinations
  double confusable_radius = 0.03; // hallucinations near the object stay within this of a true grasp
  double visibility_jitter = 0.3;  // spread of the per-frame draw that ranks annotations for detection

  static NoiseConfig zero(std::uint64_t seed = 0) {
    NoiseConfig n;
    n.pose_jitter_sigma = n.rot_jitter_sigma_deg = n.score_jitter_sigma = 0.0;
    n.dropout_prob = n.spurious_prob = 0.0;
    n.visibility_jitter = 0.0;
    n.seed = seed;
    return n;
  }
  void validate() const;
};

class InsufficientViewpoints : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Detector stand-in: a seeded, quality-biased subsample of annotations moved into the world by
/// object_pose, jittered, with dropouts and hallucinations. Deterministic in
/// (noise.seed, frame_index). Throws std::invalid_argument when the object has
/// fewer than ⌈m/2⌉ annotations.
FrameObservation detect_candidates(const ObjectModel& object, const Pose& object_pose,
                                   const NoiseConfig& noise, int m, int frame_index,
                                   double timestamp = 0.0);

/// Anchor plus t−1 distinct pool poses within radius of the anchor translation,
/// drawn uniformly without replacement.
std::vector<Pose> sample_time_slice(const Pose& anchor, const std::vector<Pose>& camera_pool,
                                    int t, double radius, std::uint64_t seed);

/// Rigid transform x ↦ Rz(γ)Ry(β)Rx(α)·x + Δ in camera coordinates.
Pose augmentation_transform(double alpha_deg, double beta_deg, double gamma_deg,
                            const Vector3d& delta);

/// Applies one rigid transform to every candidate, the label and the true object pose of a frame.
void transform_frame(FrameObservation& frame, Grasp& label, const Pose& transform);

/// Independent per-frame rigid augmentation sampled within cfg bounds.
TimeSlice augment_slice(const TimeSlice& slice, const AugmentationConfig& cfg, std::uint64_t seed);

/// Index of the frame-0 anchor: highest score, lowest index on ties.
int highest_score_index(const std::vector<Grasp>& candidates);

/// Index of the candidate nearest to anchor in the object frame; ties by
/// rotation geodesic, then candidate index.
int nearest_in_object_frame(const FrameObservation& frame, const Grasp& anchor,
                            const Pose& anchor_object_pose);

/// Fills labels: Ĝ_0 is the highest-score candidate of frame 0, Ĝ_j the
/// candidate of frame j closest to Ĝ_0 in the object frame.
TimeSlice label_ground_truth(TimeSlice slice);

/// Object pose at script-clock time (seconds).
Pose script_object_pose(const MotionScript& script, double time);

/// Viewpoints on a spherical cap around the origin, all looking at it.
std::vector<Pose> viewpoint_pool(int count, double radius, double polar_max_deg,
                                 double azimuth_span_deg = 360.0);

/// Camera pose at eye looking at target; optical axis is the camera z axis.
Pose look_at(const Vector3d& eye, const Vector3d& target);

struct DatasetConfig {
  int slices = 2000;
  int frames = 3;
  int candidates = 48;
  double sphere_radius = 0.1;
  int pool_size = 256;
  double pool_radius = 0.45;
  double pool_polar_max_deg = 80.0;
  NoiseConfig noise;
  std::uint64_t seed = 1;
};

/// One labelled slice of `object` seen from a sphere-searched viewpoint set.
TimeSlice build_slice(const ObjectModel& object, const std::vector<Pose>& pool,
                      const DatasetConfig& cfg, std::uint64_t slice_seed);

/// Labelled slices cycling through objects; slice i depends only on (cfg.seed, i).
std::vector<TimeSlice> generate_dataset(const std::vector<ObjectModel>& objects,
                                        const DatasetConfig& cfg);

/// The twelve synthetic benchmark archetypes.
std::vector<ObjectModel> standard_archetypes();
const ObjectModel& find_object(const std::vector<ObjectModel>& objects, const std::string& id);

}  // namespace handover
