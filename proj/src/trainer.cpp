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

#include "handover/trainer.hpp"

#include <cmath>
#include <numeric>

namespace handover {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
}

double poly_learning_rate(double base, std::size_t step, std::size_t total, double power) {
  if (total == 0 || step >= total) return 0.0;
  return base * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

template <typename Scalar>
void Adam<Scalar>::step(std::vector<ad::Parameter<Scalar>>& params, double learning_rate) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(ad::Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(ad::Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("parameter set changed under Adam");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  const auto b1 = static_cast<Scalar>(cfg_.beta1);
  const auto b2 = static_cast<Scalar>(cfg_.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (p.grad.size() == 0) p.zero_grad();
    m_[k] = b1 * m_[k] + (Scalar(1) - b1) * p.grad;
    v_[k] = b2 * v_[k] + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    const auto m_hat = (m_[k].array() / static_cast<Scalar>(c1));
    const auto v_hat = (v_[k].array() / static_cast<Scalar>(c2));
    const auto lr = static_cast<Scalar>(learning_rate);
    p.value.array() -= lr * m_hat / (v_hat.sqrt() + static_cast<Scalar>(cfg_.epsilon));
    if (cfg_.weight_decay != 0.0) {
      p.value *= Scalar(1) - lr * static_cast<Scalar>(cfg_.weight_decay);
    }
  }
}

template <typename Scalar>
double gradient_step(TrackerModel<Scalar>& model, Adam<Scalar>& optimizer,
                     const std::vector<TimeSlice>& batch, double learning_rate, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (auto& p : model.parameters()) p.zero_grad();
  const double tau = model.config().tolerance;
  const int knn = model.config().knn;
  double total = 0.0;
  for (const auto& slice : batch) {
    ad::Tape<Scalar> tape(true);
    const FeatureBundle bundle = make_bundle(slice, knn);
    const auto vars = forward(tape, model, bundle, dropout_rng);
    const auto loss = tolerance_loss(vars.scores, bundle.blocks(), slice, tau);
    total += static_cast<double>(loss.value()(0, 0));
    tape.backward(loss);
  }
  const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(batch.size()));
  for (auto& p : model.parameters()) {
    p.grad *= inv;
    if (!p.grad.allFinite()) throw NonFiniteError("non-finite gradient in " + p.name);
  }
  optimizer.step(model.parameters(), learning_rate);
  return total / static_cast<double>(batch.size());
}

template <typename Scalar>
TrainReport train(TrackerModel<Scalar>& model, const std::vector<TimeSlice>& data,
                  const TrainConfig& cfg, const std::function<void(int, double)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("no training slices");
  Adam<Scalar> optimizer(cfg);
  Rng dropout_rng(mix_seed(cfg.seed, 0xd409));
  const std::size_t n = data.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = per_epoch * static_cast<std::size_t>(cfg.epochs);

  TrainReport report;
  std::vector<std::size_t> order(n);
  std::vector<TimeSlice> mini;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(cfg.seed, 0x5000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      mini.clear();
      for (std::size_t k = start; k < std::min(n, start + batch); ++k) {
        const std::size_t idx = order[k];
        if (cfg.augment) {
          const std::uint64_t aug_seed =
              mix_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) ^ idx);
          mini.push_back(augment_slice(data[idx], cfg.augmentation, aug_seed));
        } else {
          mini.push_back(data[idx]);
        }
      }
      const double lr =
          poly_learning_rate(cfg.learning_rate, report.steps, total_steps, cfg.lr_power);
      epoch_loss += gradient_step(model, optimizer, mini, lr, &dropout_rng) *
                    static_cast<double>(mini.size());
      ++report.steps;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

template <typename Scalar>
AccuracyReport evaluate_accuracy(const TrackerModel<Scalar>& model,
                                 const std::vector<TimeSlice>& slices, double tau) {
  WorkspaceFilter open;
  open.min_score = -1.0;
  AccuracyReport report;
  for (const auto& slice : slices) {
    const std::size_t t = slice.frames.size();
    if (t < 2) throw std::invalid_argument("accuracy needs slices of at least two frames");
    std::vector<HistoryFrame> history;
    for (std::size_t j = 0; j + 1 < t; ++j) history.push_back({slice.frames[j], slice.labels[j]});
    const FrameObservation& current = slice.frames[t - 1];
    const Grasp& label = slice.labels[t - 1];
    ++report.slices;
    const auto pick = infer_track(history, current, model, open, 0.0);
    if (pick && object_frame_distance(pick->grasp, label, current.true_object_pose) < tau) {
      ++report.learned_correct;
    }
    const Grasp base = baseline_nearest_last(current, slice.labels[t - 2]);
    if (object_frame_distance(base, label, current.true_object_pose) < tau) {
      ++report.baseline_correct;
    }
  }
  return report;
}

#define HANDOVER_TRAINER_INSTANTIATE(S)                                                      \
  template class Adam<S>;                                                                    \
  template double gradient_step(TrackerModel<S>&, Adam<S>&, const std::vector<TimeSlice>&,   \
                                double, Rng*);                                               \
  template TrainReport train(TrackerModel<S>&, const std::vector<TimeSlice>&,                \
                             const TrainConfig&, const std::function<void(int, double)>&);   \
  template AccuracyReport evaluate_accuracy(const TrackerModel<S>&,                          \
                                            const std::vector<TimeSlice>&, double);

HANDOVER_TRAINER_INSTANTIATE(float)
HANDOVER_TRAINER_INSTANTIATE(double)

#undef HANDOVER_TRAINER_INSTANTIATE

}  // namespace handover
