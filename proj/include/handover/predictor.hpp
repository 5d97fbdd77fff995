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

// Future grasp position from the tracked history: keep the longest stable
// suffix of per-tick displacements, vote a direction per axis, and scale the
// winning mean by a momentum coefficient chosen from the robot's own motion.

#pragma once

#include <deque>
#include <stdexcept>
#include <vector>

#include "handover/se3.hpp"

namespace handover {

struct PredictorParams {
  double stability = 0.03;      // δ_s, meters
  double perturbation = 0.005;  // δ_p, meters
  double lambda_opposite = 1.0; // λ_o
  double lambda_parallel = 3.0; // λ_p
  int max_history = 15;

  void validate() const;
};

class EmptyHistory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tracked poses with strictly increasing timestamps, oldest dropped past the cap.
class GraspHistory {
 public:
  struct Entry {
    Grasp grasp;
    double timestamp = 0.0;
  };

  explicit GraspHistory(int max_length = 15);

  /// Throws std::invalid_argument unless timestamp exceeds the last one.
  void append(const Grasp& grasp, double timestamp);
  void clear() { entries_.clear(); }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  int max_length() const { return max_length_; }
  const Entry& back() const;
  const std::deque<Entry>& entries() const { return entries_; }

  /// Consecutive translation differences, oldest first; size() − 1 of them.
  std::vector<Vector3d> deltas() const;

 private:
  int max_length_;
  std::deque<Entry> entries_;
};

/// Longest suffix in which every component satisfies |Δ| < delta_s.
std::vector<Vector3d> stable_suffix(const std::vector<Vector3d>& deltas, double delta_s);

/// Per axis: plus set {δ > −δ_p}, minus set {δ < δ_p}; the mean of the larger
/// set wins, the plus set on ties. Empty input gives zero.
Vector3d vote_momentum(const std::vector<Vector3d>& stable, double delta_p);

/// λ_o when the cosine between the two vectors is negative, else λ_p. A zero
/// vector counts as cosine +1.
double momentum_coefficient(const Vector3d& mean_delta, const Vector3d& robot_motion,
                            const PredictorParams& params);

/// Last tracked pose shifted by λ·Δt̄; rotation unchanged. Throws EmptyHistory.
Pose predict_future(const GraspHistory& history, const Vector3d& robot_motion,
                    const PredictorParams& params);

}  // namespace handover
