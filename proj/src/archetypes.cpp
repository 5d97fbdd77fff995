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

#include <algorithm>
#include <cmath>

#include "handover/scene.hpp"

namespace handover {
namespace {

enum class Footprint { kElongated, kFlat, kRound };

// Knobs spanning the difficulty axes: how many grasps, how tightly packed,
// mirror symmetry, and how often a grasp is poor.
struct ArchetypeSpec {
  const char* id;
  Vector3d extent;
  int count;
  double spread;  // fraction of the top face holding grasps
  bool mirrored;
  Footprint footprint;
  double low_quality_fraction;
  double side_fraction;
  double max_tilt_deg;
  std::uint64_t seed;
};

Annotation top_down_annotation(const ArchetypeSpec& spec, double x, double y, Rng& rng) {
  const Vector3d& e = spec.extent;
  double yaw = 0.0;
  switch (spec.footprint) {
    case Footprint::kElongated:
      yaw = deg2rad(rng.uniform(-15.0, 15.0));
      break;
    case Footprint::kFlat:
      yaw = deg2rad(rng.uniform(-15.0, 15.0) + (rng.bernoulli(0.5) ? 90.0 : 0.0));
      break;
    case Footprint::kRound:
      yaw = std::atan2(y, x) + deg2rad(rng.uniform(-15.0, 15.0));
      break;
  }
  const double tilt = deg2rad(rng.uniform(-spec.max_tilt_deg, spec.max_tilt_deg));
  Annotation a;
  a.grasp.pose.rotation = top_down_rotation(yaw) * rotation_z(tilt);
  a.grasp.pose.translation = Vector3d(x, y, 0.5 * e.z() * (1.0 - rng.uniform(0.2, 0.6)));
  a.grasp.width = std::clamp(std::min(e.x(), e.y()) + 0.01, 0.01, kGripperMaxWidth);
  return a;
}

Annotation side_annotation(const ArchetypeSpec& spec, Rng& rng) {
  const Vector3d& e = spec.extent;
  const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  Annotation a;
  Matrix3d r;
  r.col(0) = Vector3d(0.0, -sign, 0.0);
  r.col(1) = Vector3d::UnitZ();
  r.col(2) = r.col(0).cross(r.col(1));
  a.grasp.pose.rotation = r;
  a.grasp.pose.translation =
      Vector3d(rng.uniform(-0.4, 0.4) * e.x(), sign * 0.5 * e.y(), rng.uniform(-0.2, 0.2) * e.z());
  a.grasp.width = std::clamp(e.z() + 0.01, 0.01, kGripperMaxWidth);
  return a;
}

ObjectModel make_archetype(const ArchetypeSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0xA7C4));
  ObjectModel obj;
  obj.id = spec.id;
  obj.extent = spec.extent;
  const Vector3d half = 0.5 * spec.spread * spec.extent;
  const int sides = static_cast<int>(std::lround(spec.side_fraction * spec.count));
  const int tops = spec.count - sides;
  while (static_cast<int>(obj.annotations.size()) < tops) {
    double x = rng.uniform(-half.x(), half.x());
    double y = rng.uniform(-half.y(), half.y());
    if (spec.footprint == Footprint::kRound) {
      // Grasps sit on the rim of round objects.
      const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
      x = half.x() * std::cos(phi);
      y = half.y() * std::sin(phi);
    }
    obj.annotations.push_back(top_down_annotation(spec, x, y, rng));
    if (spec.mirrored && static_cast<int>(obj.annotations.size()) < tops) {
      Annotation m = obj.annotations.back();
      m.grasp.pose.translation.x() = -m.grasp.pose.translation.x();
      m.grasp.pose.translation.y() = -m.grasp.pose.translation.y();
      m.grasp.pose.rotation = rotation_z(std::numbers::pi) * m.grasp.pose.rotation;
      obj.annotations.push_back(m);
    }
  }
  for (int i = 0; i < sides; ++i) obj.annotations.push_back(side_annotation(spec, rng));
  for (auto& a : obj.annotations) {
    a.base_quality = rng.bernoulli(spec.low_quality_fraction) ? rng.uniform(0.05, 0.45)
                                                               : rng.uniform(0.55, 0.92);
  }
  obj.annotations.front().base_quality = 0.95;
  for (int i = 0; i < static_cast<int>(obj.annotations.size()); ++i) {
    obj.annotations[i].grasp.candidate_index = i;
    obj.annotations[i].grasp.annotation = i;
    obj.annotations[i].grasp.score = obj.annotations[i].base_quality;
  }
  obj.validate();
  return obj;
}

}  // namespace

std::vector<ObjectModel> standard_archetypes() {
  // Sparse-grasp objects (comb, pen, toothbrush) spread few grasps along a thin
  // line; dense ones (paper box, book, basket) pack them onto a face.
  static const ArchetypeSpec kSpecs[] = {
      {"banana", {0.18, 0.04, 0.04}, 50, 0.9, false, Footprint::kElongated, 0.35, 0.10, 15.0, 1},
      {"bottle", {0.22, 0.07, 0.07}, 52, 0.9, true, Footprint::kElongated, 0.30, 0.15, 10.0, 2},
      {"paper_box", {0.16, 0.10, 0.06}, 56, 0.8, true, Footprint::kFlat, 0.30, 0.10, 10.0, 3},
      {"mug", {0.09, 0.09, 0.10}, 52, 0.9, false, Footprint::kRound, 0.40, 0.15, 15.0, 4},
      {"pen", {0.14, 0.012, 0.012}, 48, 0.95, false, Footprint::kElongated, 0.35, 0.0, 10.0, 5},
      {"spoon", {0.16, 0.035, 0.02}, 48, 0.9, false, Footprint::kElongated, 0.45, 0.0, 15.0, 6},
      {"comb", {0.18, 0.03, 0.008}, 48, 0.95, true, Footprint::kElongated, 0.45, 0.0, 10.0, 7},
      {"scissors", {0.17, 0.07, 0.015}, 50, 0.8, false, Footprint::kFlat, 0.40, 0.0, 15.0, 8},
      {"book", {0.22, 0.15, 0.03}, 56, 0.7, true, Footprint::kFlat, 0.25, 0.10, 10.0, 9},
      {"toothbrush", {0.19, 0.02, 0.02}, 48, 0.95, false, Footprint::kElongated, 0.40, 0.0, 10.0, 10},
      {"tape", {0.10, 0.10, 0.05}, 52, 0.9, true, Footprint::kRound, 0.30, 0.10, 10.0, 11},
      {"basket", {0.30, 0.20, 0.12}, 56, 0.6, true, Footprint::kFlat, 0.35, 0.15, 20.0, 12},
  };
  std::vector<ObjectModel> out;
  for (const auto& spec : kSpecs) out.push_back(make_archetype(spec));
  return out;
}

}  // namespace handover
