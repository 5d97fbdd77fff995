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

#include "handover/predictor.hpp"

#include <cmath>

namespace handover {

void PredictorParams::validate() const {
  if (!(perturbation >= 0.0 && perturbation < stability)) {
    throw std::invalid_argument("predictor needs 0 <= perturbation < stability");
  }
  if (!(lambda_opposite > 0.0 && lambda_parallel > 0.0)) {
    throw std::invalid_argument("momentum coefficients must be positive");
  }
  if (max_history < 1) throw std::invalid_argument("max_history must be >= 1");
}

GraspHistory::GraspHistory(int max_length) : max_length_(max_length) {
  if (max_length < 1) throw std::invalid_argument("history length must be >= 1");
}

void GraspHistory::append(const Grasp& grasp, double timestamp) {
  if (!entries_.empty() && !(timestamp > entries_.back().timestamp)) {
    throw std::invalid_argument("history timestamps must strictly increase");
  }
  entries_.push_back({grasp, timestamp});
  while (entries_.size() > static_cast<std::size_t>(max_length_)) entries_.pop_front();
}

const GraspHistory::Entry& GraspHistory::back() const {
  if (entries_.empty()) throw EmptyHistory("grasp history is empty");
  return entries_.back();
}

std::vector<Vector3d> GraspHistory::deltas() const {
  std::vector<Vector3d> out;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    out.push_back(entries_[i].grasp.pose.translation - entries_[i - 1].grasp.pose.translation);
  }
  return out;
}

std::vector<Vector3d> stable_suffix(const std::vector<Vector3d>& deltas, double delta_s) {
  std::size_t start = deltas.size();
  while (start > 0 && (deltas[start - 1].array().abs() < delta_s).all()) --start;
  return {deltas.begin() + static_cast<std::ptrdiff_t>(start), deltas.end()};
}

Vector3d vote_momentum(const std::vector<Vector3d>& stable, double delta_p) {
  Vector3d out = Vector3d::Zero();
  if (stable.empty()) return out;
  for (int axis = 0; axis < 3; ++axis) {
    double plus_sum = 0.0, minus_sum = 0.0;
    int plus_n = 0, minus_n = 0;
    for (const auto& d : stable) {
      const double v = d[axis];
      if (v > -delta_p) {
        plus_sum += v;
        ++plus_n;
      }
      if (v < delta_p) {
        minus_sum += v;
        ++minus_n;
      }
    }
    out[axis] = plus_n >= minus_n ? plus_sum / plus_n : minus_sum / minus_n;
  }
  return out;
}

double momentum_coefficient(const Vector3d& mean_delta, const Vector3d& robot_motion,
                            const PredictorParams& params) {
  // The cosine sign is the dot-product sign; zero vectors give a zero dot.
  return mean_delta.dot(robot_motion) < 0.0 ? params.lambda_opposite : params.lambda_parallel;
}

Pose predict_future(const GraspHistory& history, const Vector3d& robot_motion,
                    const PredictorParams& params) {
  if (history.empty()) throw EmptyHistory("cannot predict from an empty history");
  const Vector3d mean = vote_momentum(stable_suffix(history.deltas(), params.stability),
                                      params.perturbation);
  Pose out = history.back().grasp.pose;
  out.translation += momentum_coefficient(mean, robot_motion, params) * mean;
  return out;
}

}  // namespace handover
