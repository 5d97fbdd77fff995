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

#include "handover/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

namespace handover {
namespace {

Vector3d random_unit(Rng& rng) {
  Vector3d v;
  do {
    v = Vector3d(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  if (q.norm() < 1e-9) q = Eigen::Quaterniond::Identity();
  return q.normalized().toRotationMatrix();
}

Grasp hallucinate_in_workspace(const Pose& object_pose, const NoiseConfig& noise, Rng& rng) {
  Grasp g;
  const double s = noise.spurious_spread;
  g.pose.translation = object_pose.translation +
                       Vector3d(rng.uniform(-s, s), rng.uniform(-s, s), rng.uniform(-s, s));
  g.pose.rotation = random_rotation(rng);
  g.width = rng.uniform(0.01, 0.08);
  g.score = rng.uniform(0.0, 0.3);
  g.annotation = -1;
  return g;
}

Grasp hallucinate_near(const Grasp& real, const NoiseConfig& noise, Rng& rng) {
  Grasp g = real;
  const double r = rng.uniform(0.3, 1.0) * noise.confusable_radius;
  g.pose.translation += r * random_unit(rng);
  const double angle = deg2rad(rng.uniform(-30.0, 30.0));
  g.pose.rotation = Eigen::AngleAxisd(angle, random_unit(rng)).toRotationMatrix() * real.pose.rotation;
  g.score = rng.uniform(0.0, 0.3);
  g.annotation = -1;
  return g;
}

double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

Pose planar_pose(double x, double y, double yaw_deg, double height) {
  return Pose(rotation_z(deg2rad(yaw_deg)), Vector3d(x, y, height));
}

Pose continuous_random_pose(const MotionScript& s, double time) {
  Rng rng(mix_seed(s.seed, 0xC0417));
  const WorkspaceBounds& b = s.bounds;
  double x = std::clamp(s.start_x, b.x_min, b.x_max);
  double y = std::clamp(s.start_y, b.y_min, b.y_max);
  double yaw = std::clamp(s.start_yaw_deg, b.yaw_min_deg, b.yaw_max_deg);
  constexpr double kMaxStep = 0.25;
  double t0 = 0.0;
  for (;;) {
    double nx = rng.uniform(b.x_min, b.x_max);
    double ny = rng.uniform(b.y_min, b.y_max);
    const double nyaw = rng.uniform(b.yaw_min_deg, b.yaw_max_deg);
    const double step = std::hypot(nx - x, ny - y);
    if (step > kMaxStep) {
      nx = x + (nx - x) * kMaxStep / step;
      ny = y + (ny - y) * kMaxStep / step;
    }
    const double dist = std::hypot(nx - x, ny - y);
    const double speed_frac = rng.uniform(0.5, 1.0);
    // Smoothstep peaks at 1.5x the mean rate.
    const double duration =
        std::max({1.5 * dist / (s.speed_limit * speed_frac),
                  1.5 * std::abs(nyaw - yaw) / (s.angular_speed_limit_deg * speed_frac), 0.3});
    if (time < t0 + duration) {
      const double h = smoothstep((time - t0) / duration);
      return planar_pose(x + h * (nx - x), y + h * (ny - y), yaw + h * (nyaw - yaw), s.height);
    }
    t0 += duration;
    x = nx;
    y = ny;
    yaw = nyaw;
  }
}

}  // namespace

void ObjectModel::validate() const {
  if (annotations.empty()) throw std::invalid_argument("object " + id + " has no annotations");
  bool has_good = false;
  for (const auto& a : annotations) {
    const Vector3d& t = a.grasp.pose.translation;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(t[k]) > 0.75 * extent[k] + 1e-12) {
        throw std::invalid_argument("object " + id + ": annotation outside 1.5x extent box");
      }
    }
    if (a.base_quality < 0.0 || a.base_quality > 1.0) {
      throw std::invalid_argument("object " + id + ": base_quality outside [0,1]");
    }
    if (a.grasp.width < 0.0 || a.grasp.width > kGripperMaxWidth) {
      throw std::invalid_argument("object " + id + ": grasp width outside gripper range");
    }
    has_good = has_good || a.base_quality >= 0.5;
  }
  if (!has_good) throw std::invalid_argument("object " + id + ": no annotation with quality >= 0.5");
}

const char* to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::kStatic: return "static";
    case MotionKind::kOneMotionRotation: return "one_motion_rotation";
    case MotionKind::kOneMotionTranslation: return "one_motion_translation";
    case MotionKind::kContinuousRandom: return "continuous_random";
    case MotionKind::kLinear: return "linear";
  }
  return "static";
}

MotionKind motion_kind_from_string(const std::string& name) {
  for (MotionKind k : {MotionKind::kStatic, MotionKind::kOneMotionRotation,
                       MotionKind::kOneMotionTranslation, MotionKind::kContinuousRandom,
                       MotionKind::kLinear}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown motion kind: " + name);
}

void MotionScript::validate() const {
  if (kind == MotionKind::kOneMotionRotation && (rotation_deg < 0.0 || rotation_deg > 60.0)) {
    throw std::invalid_argument("one-motion rotation must lie in [0, 60] degrees");
  }
  if (kind == MotionKind::kOneMotionTranslation && (translation_m < 0.0 || translation_m > 0.2)) {
    throw std::invalid_argument("one-motion translation must lie in [0, 0.2] m");
  }
  if (speed_limit <= 0.0 || angular_speed_limit_deg <= 0.0 || motion_duration <= 0.0) {
    throw std::invalid_argument("motion limits must be positive");
  }
  if (bounds.x_min > bounds.x_max || bounds.y_min > bounds.y_max ||
      bounds.yaw_min_deg > bounds.yaw_max_deg) {
    throw std::invalid_argument("empty workspace bounds");
  }
}

void NoiseConfig::validate() const {
  if (pose_jitter_sigma < 0.0 || rot_jitter_sigma_deg < 0.0 || score_jitter_sigma < 0.0) {
    throw std::invalid_argument("noise sigmas must be non-negative");
  }
  if (dropout_prob < 0.0 || dropout_prob > 1.0 || spurious_prob < 0.0 || spurious_prob > 1.0) {
    throw std::invalid_argument("noise probabilities must lie in [0,1]");
  }
  if (visibility_jitter < 0.0) throw std::invalid_argument("visibility jitter must be non-negative");
}

FrameObservation detect_candidates(const ObjectModel& object, const Pose& object_pose,
                                   const NoiseConfig& noise, int m, int frame_index,
                                   double timestamp) {
  noise.validate();
  const int k = static_cast<int>(object.annotations.size());
  if (m <= 0) throw std::invalid_argument("candidate count must be positive");
  if (k < (m + 1) / 2) {
    throw std::invalid_argument("object " + object.id + " has fewer than ceil(m/2) annotations");
  }
  Rng rng(mix_seed(noise.seed, static_cast<std::uint64_t>(frame_index)));

  // Seeds go to the strongest annotations, ranked by quality plus a uniform
  // visibility draw; with zero visibility jitter the subset is the top m.
  std::vector<std::pair<double, int>> keyed(k);
  for (int i = 0; i < k; ++i) {
    keyed[i] = {-(object.annotations[i].base_quality + noise.visibility_jitter * rng.uniform()), i};
  }
  std::sort(keyed.begin(), keyed.end());
  const int take = std::min(m, k);
  std::vector<int> order(take);
  for (int i = 0; i < take; ++i) order[i] = keyed[i].second;
  std::sort(order.begin(), order.end());

  FrameObservation obs;
  obs.frame_index = frame_index;
  obs.timestamp = timestamp;
  obs.true_object_pose = object_pose;
  obs.candidates.reserve(m);
  const double rot_sigma = deg2rad(noise.rot_jitter_sigma_deg);
  for (int i = 0; i < take; ++i) {
    const Annotation& a = object.annotations[order[i]];
    Grasp g = transformed(object_pose, a.grasp);
    const Vector3d dt(rng.normal(), rng.normal(), rng.normal());
    const Vector3d axis = random_unit(rng);
    const double angle = rot_sigma * rng.normal();
    const double ds = rng.normal();
    g.pose.translation += noise.pose_jitter_sigma * dt;
    if (angle != 0.0) {
      g.pose.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * g.pose.rotation;
    }
    g.score = std::clamp(a.base_quality + noise.score_jitter_sigma * ds, 0.0, 1.0);
    g.annotation = order[i];
    const bool dropped = rng.bernoulli(noise.dropout_prob);
    const bool confused = rng.bernoulli(noise.spurious_prob);
    if (dropped) {
      g = hallucinate_in_workspace(object_pose, noise, rng);
    } else if (confused) {
      g = hallucinate_near(g, noise, rng);
    }
    obs.candidates.push_back(g);
  }
  while (static_cast<int>(obs.candidates.size()) < m) {
    obs.candidates.push_back(hallucinate_in_workspace(object_pose, noise, rng));
  }
  for (int i = 0; i < m; ++i) obs.candidates[i].candidate_index = i;
  return obs;
}

std::vector<Pose> sample_time_slice(const Pose& anchor, const std::vector<Pose>& camera_pool,
                                    int t, double radius, std::uint64_t seed) {
  if (t < 1) throw std::invalid_argument("slice length must be at least 1");
  if (radius <= 0.0) throw std::invalid_argument("sphere-search radius must be positive");
  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(camera_pool.size()); ++i) {
    const double d = (camera_pool[i].translation - anchor.translation).norm();
    if (d > 0.0 && d < radius) eligible.push_back(i);
  }
  const int need = t - 1;
  if (static_cast<int>(eligible.size()) < need) {
    throw InsufficientViewpoints("only " + std::to_string(eligible.size()) +
                                 " viewpoints within radius, need " + std::to_string(need));
  }
  Rng rng(seed);
  std::vector<Pose> out{anchor};
  const int n = static_cast<int>(eligible.size());
  for (int i = 0; i < need; ++i) {
    const int j = i + static_cast<int>(rng.index(static_cast<std::uint64_t>(n - i)));
    std::swap(eligible[i], eligible[j]);
    out.push_back(camera_pool[eligible[i]]);
  }
  return out;
}

Pose augmentation_transform(double alpha_deg, double beta_deg, double gamma_deg,
                            const Vector3d& delta) {
  const Matrix3d r = rotation_z(deg2rad(gamma_deg)) * rotation_y(deg2rad(beta_deg)) *
                     rotation_x(deg2rad(alpha_deg));
  return Pose(r, delta);
}

void transform_frame(FrameObservation& frame, Grasp& label, const Pose& transform) {
  for (auto& c : frame.candidates) c.pose = compose(transform, c.pose);
  label.pose = compose(transform, label.pose);
  frame.true_object_pose = compose(transform, frame.true_object_pose);
}

TimeSlice augment_slice(const TimeSlice& slice, const AugmentationConfig& cfg, std::uint64_t seed) {
  TimeSlice out = slice;
  for (std::size_t j = 0; j < out.frames.size(); ++j) {
    Rng rng(mix_seed(seed, j));
    const double alpha = rng.uniform(-cfg.rot_xy_bound_deg, cfg.rot_xy_bound_deg);
    const double beta = rng.uniform(-cfg.rot_xy_bound_deg, cfg.rot_xy_bound_deg);
    const double gamma = rng.uniform(-cfg.rot_z_bound_deg, cfg.rot_z_bound_deg);
    const Vector3d delta(rng.uniform(-cfg.trans_xy_bound, cfg.trans_xy_bound),
                         rng.uniform(-cfg.trans_xy_bound, cfg.trans_xy_bound),
                         rng.uniform(-cfg.trans_z_bound, cfg.trans_z_bound));
    Grasp scratch;
    Grasp& label = j < out.labels.size() ? out.labels[j] : scratch;
    transform_frame(out.frames[j], label, augmentation_transform(alpha, beta, gamma, delta));
  }
  return out;
}

int highest_score_index(const std::vector<Grasp>& candidates) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    if (best < 0 || candidates[i].score > candidates[best].score) best = i;
  }
  return best;
}

int nearest_in_object_frame(const FrameObservation& frame, const Grasp& anchor,
                            const Pose& anchor_object_pose) {
  int best = -1;
  std::tuple<double, double, int> best_key;
  for (int i = 0; i < static_cast<int>(frame.candidates.size()); ++i) {
    const Grasp& c = frame.candidates[i];
    const std::tuple<double, double, int> key{
        object_frame_distance(c, frame.true_object_pose, anchor, anchor_object_pose),
        object_frame_rotation(c, frame.true_object_pose, anchor, anchor_object_pose),
        c.candidate_index};
    if (best < 0 || key < best_key) {
      best = i;
      best_key = key;
    }
  }
  return best;
}

TimeSlice label_ground_truth(TimeSlice slice) {
  if (slice.frames.empty() || slice.frames.front().candidates.empty()) {
    throw std::invalid_argument("frame 0 needs at least one candidate");
  }
  slice.labels.assign(slice.frames.size(), Grasp{});
  const FrameObservation& f0 = slice.frames.front();
  const Grasp anchor = f0.candidates[highest_score_index(f0.candidates)];
  slice.labels[0] = anchor;
  for (std::size_t j = 1; j < slice.frames.size(); ++j) {
    const int idx = nearest_in_object_frame(slice.frames[j], anchor, f0.true_object_pose);
    if (idx < 0) throw std::invalid_argument("frame without candidates");
    slice.labels[j] = slice.frames[j].candidates[idx];
  }
  return slice;
}

Pose script_object_pose(const MotionScript& s, double time) {
  time = std::max(time, 0.0);
  const double heading = deg2rad(s.direction_deg);
  switch (s.kind) {
    case MotionKind::kStatic:
      break;
    case MotionKind::kOneMotionRotation: {
      const double h = smoothstep((time - s.trigger_time) / s.motion_duration);
      return planar_pose(s.start_x, s.start_y, s.start_yaw_deg + h * s.rotation_deg, s.height);
    }
    case MotionKind::kOneMotionTranslation: {
      const double h = smoothstep((time - s.trigger_time) / s.motion_duration);
      return planar_pose(s.start_x + h * s.translation_m * std::cos(heading),
                         s.start_y + h * s.translation_m * std::sin(heading), s.start_yaw_deg,
                         s.height);
    }
    case MotionKind::kLinear: {
      const double run = std::max(0.0, time - s.trigger_time);
      const double x = std::clamp(s.start_x + run * s.speed_limit * std::cos(heading),
                                  s.bounds.x_min, s.bounds.x_max);
      const double y = std::clamp(s.start_y + run * s.speed_limit * std::sin(heading),
                                  s.bounds.y_min, s.bounds.y_max);
      return planar_pose(x, y, s.start_yaw_deg, s.height);
    }
    case MotionKind::kContinuousRandom:
      return continuous_random_pose(s, time);
  }
  return planar_pose(s.start_x, s.start_y, s.start_yaw_deg, s.height);
}

Pose look_at(const Vector3d& eye, const Vector3d& target) {
  const Vector3d z = (target - eye).normalized();
  Vector3d up = Vector3d::UnitZ();
  if (z.cross(up).norm() < 1e-6) up = Vector3d::UnitX();
  const Vector3d x = z.cross(up).normalized();
  const Vector3d y = z.cross(x);
  Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(r, eye);
}

std::vector<Pose> viewpoint_pool(int count, double radius, double polar_max_deg,
                                 double azimuth_span_deg) {
  std::vector<Pose> pool;
  pool.reserve(count);
  const double cos_max = std::cos(deg2rad(polar_max_deg));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double span = deg2rad(azimuth_span_deg);
  for (int i = 0; i < count; ++i) {
    const double cos_theta = 1.0 - (1.0 - cos_max) * (i + 0.5) / count;
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double turns = i * golden / (2.0 * std::numbers::pi);
    const double phi = span * (turns - std::floor(turns));
    const Vector3d eye =
        radius * Vector3d(sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta);
    pool.push_back(look_at(eye, Vector3d::Zero()));
  }
  return pool;
}

TimeSlice build_slice(const ObjectModel& object, const std::vector<Pose>& pool,
                      const DatasetConfig& cfg, std::uint64_t slice_seed) {
  Rng rng(slice_seed);
  const Pose object_world(rotation_z(rng.uniform(-std::numbers::pi, std::numbers::pi)),
                          Vector3d(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), 0.0));
  std::vector<Pose> cameras;
  for (int attempt = 0; cameras.empty(); ++attempt) {
    const Pose& anchor = pool[rng.index(pool.size())];
    try {
      cameras = sample_time_slice(anchor, pool, cfg.frames, cfg.sphere_radius,
                                  mix_seed(slice_seed, 0x5A + attempt));
    } catch (const InsufficientViewpoints&) {
      if (attempt > 1000) throw;
    }
  }
  NoiseConfig noise = cfg.noise;
  noise.seed = mix_seed(slice_seed, 0xD7);
  TimeSlice slice;
  slice.camera_poses = cameras;
  for (int j = 0; j < cfg.frames; ++j) {
    const Pose object_in_camera = compose(invert(cameras[j]), object_world);
    slice.frames.push_back(
        detect_candidates(object, object_in_camera, noise, cfg.candidates, j, j / 6.0));
  }
  return label_ground_truth(std::move(slice));
}

std::vector<TimeSlice> generate_dataset(const std::vector<ObjectModel>& objects,
                                        const DatasetConfig& cfg) {
  if (objects.empty()) throw std::invalid_argument("dataset needs at least one object");
  const std::vector<Pose> pool =
      viewpoint_pool(cfg.pool_size, cfg.pool_radius, cfg.pool_polar_max_deg);
  std::vector<TimeSlice> out;
  out.reserve(cfg.slices);
  for (int i = 0; i < cfg.slices; ++i) {
    out.push_back(build_slice(objects[i % objects.size()], pool, cfg,
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

const ObjectModel& find_object(const std::vector<ObjectModel>& objects, const std::string& id) {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw std::invalid_argument("unknown object: " + id);
}

}  // namespace handover
