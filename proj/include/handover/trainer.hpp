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
#include <functional>
#include <vector>

#include "handover/tracker.hpp"

namespace handover {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  int epochs = 20;
  int batch_size = 4;
  double lr_power = 0.9;
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentationConfig augmentation;

  void validate() const;
};

/// lr·(1 − step/total)^power, step counted from zero.
double poly_learning_rate(double base, std::size_t step, std::size_t total, double power);

/// Adaptive-moment optimizer with bias correction and decoupled weight decay.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  /// Applies one update from each parameter's accumulated grad.
  void step(std::vector<ad::Parameter<Scalar>>& params, double learning_rate);
  int steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<ad::Matrix<Scalar>> m_, v_;
  int t_ = 0;
};

/// Mean tolerance loss over the batch; gradients are batch means. Throws
/// NonFiniteError naming the first parameter with a non-finite gradient, in
/// which case no weight is modified.
template <typename Scalar>
double gradient_step(TrackerModel<Scalar>& model, Adam<Scalar>& optimizer,
                     const std::vector<TimeSlice>& batch, double learning_rate, Rng* dropout_rng);

struct TrainReport {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

template <typename Scalar>
TrainReport train(TrackerModel<Scalar>& model, const std::vector<TimeSlice>& data,
                  const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_epoch = nullptr);

struct AccuracyReport {
  int slices = 0;
  int learned_correct = 0;
  int baseline_correct = 0;

  double learned() const { return slices ? double(learned_correct) / slices : 0.0; }
  double baseline() const { return slices ? double(baseline_correct) / slices : 0.0; }
};

/// Tracks the last frame of each slice from the labelled earlier frames. A pick
/// is correct when within tau of the label in the object frame.
template <typename Scalar>
AccuracyReport evaluate_accuracy(const TrackerModel<Scalar>& model,
                                 const std::vector<TimeSlice>& slices, double tau);

}  // namespace handover
