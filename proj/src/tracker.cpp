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

#include "handover/tracker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace handover {

void TrackerConfig::validate() const {
  if (feature_dim <= 0 || heads <= 0 || feature_dim % heads != 0) {
    throw std::invalid_argument("feature_dim must be a positive multiple of heads");
  }
  if (frames < 1) throw std::invalid_argument("frames must be >= 1");
  if (candidates < 1) throw std::invalid_argument("candidates must be >= 1");
  if (encoder_layers < 0 || decoder_layers < 0) throw std::invalid_argument("negative layer count");
  if (ffn_dim < 1) throw std::invalid_argument("ffn_dim must be >= 1");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw std::invalid_argument("dropout in [0, 1)");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if (annotation_ids < 1) throw std::invalid_argument("annotation_ids must be >= 1");
  if (knn < 1) throw std::invalid_argument("knn must be >= 1");
}

Eigen::MatrixXd candidate_descriptors(const FrameObservation& obs, int knn) {
  const auto n = static_cast<Eigen::Index>(obs.candidates.size());
  Eigen::MatrixXd out(n, kDescriptorDim);
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Grasp& g = obs.candidates[static_cast<std::size_t>(i)];
    out.row(i).segment<3>(descriptor::kTranslation) = g.pose.translation.transpose();
    out.row(i).segment<3>(descriptor::kRotation6d) = g.pose.rotation.col(0).transpose();
    out.row(i).segment<3>(descriptor::kRotation6d + 3) = g.pose.rotation.col(1).transpose();
    out(i, descriptor::kWidth) = g.width;
    out(i, descriptor::kScore) = g.score;
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.push_back(
          (obs.candidates[static_cast<std::size_t>(j)].pose.translation - g.pose.translation).norm());
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(knn), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += dist[j];
    out(i, descriptor::kKnnMean) = k > 0 ? sum / static_cast<double>(k) : 0.0;
    out(i, descriptor::kKnnMin) = k > 0 ? dist[0] : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model parameters

template <typename Scalar>
void TrackerModel<Scalar>::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                               double bound, Rng& rng) {
  Param p;
  p.name = name;
  p.value.resize(rows, cols);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  p.zero_grad();
  params_.push_back(std::move(p));
}

template <typename Scalar>
void TrackerModel<Scalar>::add_constant(const std::string& name, Eigen::Index rows,
                                        Eigen::Index cols, double value) {
  Param p;
  p.name = name;
  p.value = ad::Matrix<Scalar>::Constant(rows, cols, static_cast<Scalar>(value));
  p.zero_grad();
  params_.push_back(std::move(p));
}

template <typename Scalar>
TrackerModel<Scalar>::TrackerModel(const TrackerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x7472616bULL));
  const Eigen::Index c = cfg_.feature_dim;
  const Eigen::Index f = cfg_.ffn_dim;
  const double unit = std::sqrt(3.0);  // U(-√3, √3) has unit variance
  const double fan_c = 1.0 / std::sqrt(static_cast<double>(c));
  const double fan_f = 1.0 / std::sqrt(static_cast<double>(f));

  add("input.weight", kDescriptorDim, c, 1.0 / std::sqrt(double(kDescriptorDim)), rng);
  add_constant("input.bias", 1, c, 0.0);
  add("embed.annotation", cfg_.annotation_ids + 1, c, unit, rng);
  add("embed.frame", cfg_.frames, c, 0.1 * unit, rng);

  auto attention = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv"}) {
      add(p + w, c, c, fan_c, rng);
      add_constant(p + "b" + std::string(w + 1), 1, c, 0.0);
    }
    add_constant(p + "wo", c, c, 0.0);
    add_constant(p + "bo", 1, c, 0.0);
  };
  auto norm = [&](const std::string& p) {
    add_constant(p + ".gain", 1, c, 1.0);
    add_constant(p + ".bias", 1, c, 0.0);
  };
  auto ffn = [&](const std::string& p) {
    add(p + "w1", c, f, fan_c, rng);
    add_constant(p + "b1", 1, f, 0.0);
    add(p + "w2", f, c, fan_f, rng);
    add_constant(p + "b2", 1, c, 0.0);
  };
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    norm(p + "ln1");
    attention(p + "attn.");
    norm(p + "ln2");
    ffn(p + "ffn.");
  }
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    norm(p + "ln_query");
    norm(p + "ln_memory");
    attention(p + "cross.");
    norm(p + "ln2");
    ffn(p + "ffn.");
  }
}

template <typename Scalar>
typename TrackerModel<Scalar>::Param& TrackerModel<Scalar>::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename Scalar>
const typename TrackerModel<Scalar>::Param& TrackerModel<Scalar>::parameter(
    const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename Scalar>
std::size_t TrackerModel<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Bundles

std::vector<Eigen::Index> FeatureBundle::blocks() const {
  std::vector<Eigen::Index> b;
  for (const auto& d : descriptors) b.push_back(d.rows());
  return b;
}

Eigen::Index FeatureBundle::total_candidates() const {
  Eigen::Index n = 0;
  for (const auto& d : descriptors) n += d.rows();
  return n;
}

FeatureBundle make_bundle(const std::vector<const FrameObservation*>& frames,
                          const std::vector<std::pair<int, int>>& queries, int knn) {
  FeatureBundle b;
  for (const FrameObservation* f : frames) {
    b.descriptors.push_back(candidate_descriptors(*f, knn));
    std::vector<int> ids;
    ids.reserve(f->candidates.size());
    for (const auto& c : f->candidates) ids.push_back(c.annotation);
    b.annotation_ids.push_back(std::move(ids));
  }
  b.queries = queries;
  return b;
}

FeatureBundle make_bundle(const TimeSlice& slice, int knn) {
  std::vector<const FrameObservation*> frames;
  std::vector<std::pair<int, int>> queries;
  for (std::size_t j = 0; j < slice.frames.size(); ++j) {
    frames.push_back(&slice.frames[j]);
    queries.emplace_back(static_cast<int>(j), slice.labels.at(j).candidate_index);
  }
  return make_bundle(frames, queries, knn);
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

template <typename Scalar>
using Var = ad::Var<Scalar>;

/// A recording tape binds the parameter so backward() accumulates into it;
/// otherwise the value is copied in as a constant.
template <typename Scalar>
Var<Scalar> use(ad::Tape<Scalar>& tape, const ad::Parameter<Scalar>& p) {
  if (tape.recording()) return tape.parameter(const_cast<ad::Parameter<Scalar>&>(p));
  return tape.constant(p.value);
}

template <typename Scalar>
void check_finite(const Var<Scalar>& v, const std::string& where) {
  const auto& m = v.value();
  if (m.allFinite()) return;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!std::isfinite(static_cast<double>(m(r, c)))) {
        std::ostringstream msg;
        msg << "non-finite activation in " << where << " at (" << r << ", " << c << ") of "
            << m.rows() << "x" << m.cols();
        throw NonFiniteError(msg.str());
      }
    }
  }
}

template <typename Scalar>
struct Layers {
  ad::Tape<Scalar>& tape;
  const TrackerModel<Scalar>& model;
  Rng* rng;

  Var<Scalar> p(const std::string& name) const { return use(tape, model.parameter(name)); }

  Var<Scalar> linear(Var<Scalar> x, const std::string& w, const std::string& b) const {
    return ad::add_row(ad::matmul(x, p(w)), p(b));
  }

  Var<Scalar> norm(Var<Scalar> x, const std::string& prefix) const {
    return ad::layer_norm(x, p(prefix + ".gain"), p(prefix + ".bias"));
  }

  Var<Scalar> drop(Var<Scalar> x) const {
    if (rng == nullptr) return x;
    return ad::dropout(x, model.config().dropout_prob, *rng);
  }

  Var<Scalar> attention(Var<Scalar> q_in, Var<Scalar> kv_in, const std::string& prefix) const {
    const int heads = model.config().heads;
    const Eigen::Index dh = model.config().feature_dim / heads;
    const Var<Scalar> q = linear(q_in, prefix + "wq", prefix + "bq");
    const Var<Scalar> k = linear(kv_in, prefix + "wk", prefix + "bk");
    const Var<Scalar> v = linear(kv_in, prefix + "wv", prefix + "bv");
    const auto inv_sqrt_dh = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Var<Scalar>> outs;
    for (int h = 0; h < heads; ++h) {
      const auto qh = ad::slice_cols(q, h * dh, dh);
      const auto kh = ad::slice_cols(k, h * dh, dh);
      const auto vh = ad::slice_cols(v, h * dh, dh);
      const auto weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dh));
      outs.push_back(ad::matmul(weights, vh));
    }
    return linear(ad::concat_cols(outs), prefix + "wo", prefix + "bo");
  }

  Var<Scalar> ffn(Var<Scalar> x, const std::string& prefix) const {
    return linear(ad::gelu(linear(x, prefix + "w1", prefix + "b1")), prefix + "w2", prefix + "b2");
  }
};

int embedding_row(int annotation, int table_rows) {
  if (annotation < 0) return 0;
  return 1 + annotation % (table_rows - 1);
}

}  // namespace

template <typename Scalar>
ad::Var<Scalar> build_features(ad::Tape<Scalar>& tape, const TrackerModel<Scalar>& model,
                               const Eigen::MatrixXd& descriptors, const std::vector<int>& ids,
                               int frame_position) {
  if (descriptors.cols() != kDescriptorDim) {
    throw std::invalid_argument("descriptor width " + std::to_string(descriptors.cols()) +
                                " != " + std::to_string(kDescriptorDim));
  }
  if (static_cast<Eigen::Index>(ids.size()) != descriptors.rows()) {
    throw std::invalid_argument("one annotation id per descriptor row required");
  }
  if (frame_position < 0 || frame_position >= model.config().frames) {
    throw std::invalid_argument("frame position outside [0, T)");
  }
  Layers<Scalar> L{tape, model, nullptr};
  const auto table = L.p("embed.annotation");
  std::vector<int> rows;
  rows.reserve(ids.size());
  for (int id : ids) rows.push_back(embedding_row(id, static_cast<int>(table.rows())));
  auto f = L.linear(tape.constant(descriptors.cast<Scalar>()), "input.weight", "input.bias");
  f = f + ad::gather_rows(table, std::move(rows));
  return ad::add_row(f, ad::gather_rows(L.p("embed.frame"), {frame_position}));
}

template <typename Scalar>
ForwardVars<Scalar> forward(ad::Tape<Scalar>& tape, const TrackerModel<Scalar>& model,
                            const FeatureBundle& bundle, Rng* dropout_rng) {
  const TrackerConfig& cfg = model.config();
  if (bundle.frames() < 1 || bundle.frames() > cfg.frames) {
    throw std::invalid_argument("bundle needs between 1 and T frames");
  }
  if (bundle.annotation_ids.size() != bundle.descriptors.size()) {
    throw std::invalid_argument("bundle ids and descriptors disagree in frame count");
  }
  if (bundle.queries.empty()) throw std::invalid_argument("bundle needs at least one query");

  std::vector<Var<Scalar>> per_frame;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (int j = 0; j < bundle.frames(); ++j) {
    if (bundle.descriptors[j].rows() == 0) throw std::invalid_argument("frame without candidates");
    per_frame.push_back(
        build_features(tape, model, bundle.descriptors[j], bundle.annotation_ids[j], j));
    offsets.push_back(at);
    at += bundle.descriptors[j].rows();
  }
  std::vector<int> query_rows;
  for (const auto& [frame, index] : bundle.queries) {
    if (frame < 0 || frame >= bundle.frames() || index < 0 ||
        index >= bundle.descriptors[frame].rows()) {
      throw std::invalid_argument("query designates a missing candidate");
    }
    query_rows.push_back(static_cast<int>(offsets[frame] + index));
  }

  ForwardVars<Scalar> out;
  out.features = ad::concat_rows(per_frame);
  check_finite(out.features, "features");
  out.queries = ad::gather_rows(out.features, query_rows);

  Layers<Scalar> L{tape, model, dropout_rng};
  Var<Scalar> e = out.features;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    const auto h = L.norm(e, p + "ln1");
    e = e + L.drop(L.attention(h, h, p + "attn."));
    e = e + L.ffn(L.norm(e, p + "ln2"), p + "ffn.");
    check_finite(e, "encoder layer " + std::to_string(l));
  }
  Var<Scalar> d = out.queries;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    d = d + L.drop(L.attention(L.norm(d, p + "ln_query"), L.norm(e, p + "ln_memory"), p + "cross."));
    d = d + L.ffn(L.norm(d, p + "ln2"), p + "ffn.");
    check_finite(d, "decoder layer " + std::to_string(l));
  }
  out.encoded = e;
  out.decoded = d;
  const auto inv_sqrt_c = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)));
  out.scores = ad::scale(ad::matmul_nt(d, e), inv_sqrt_c);
  check_finite(out.scores, "association scores");
  return out;
}

template <typename Scalar>
ForwardCache associate(const FeatureBundle& bundle, const TrackerModel<Scalar>& model) {
  ad::Tape<Scalar> tape(false);
  const auto vars = forward(tape, model, bundle, nullptr);
  ForwardCache cache;
  cache.encoded = vars.encoded.value().template cast<double>();
  cache.decoded = vars.decoded.value().template cast<double>();
  cache.scores = vars.scores.value().template cast<double>();
  cache.blocks = bundle.blocks();
  return cache;
}

// ---------------------------------------------------------------------------
// Probabilities and loss

Eigen::Index AssociationScores::block_offset(int frame) const {
  if (frame < 0 || frame >= static_cast<int>(blocks.size())) throw std::out_of_range("frame");
  Eigen::Index at = 0;
  for (int j = 0; j < frame; ++j) at += blocks[static_cast<std::size_t>(j)];
  return at;
}

Eigen::VectorXd AssociationScores::block(int query, int frame) const {
  return probabilities.row(query)
      .segment(block_offset(frame), blocks[static_cast<std::size_t>(frame)])
      .transpose();
}

AssociationScores association_probabilities(const Eigen::MatrixXd& scores,
                                            const std::vector<Eigen::Index>& blocks) {
  Eigen::Index total = 0;
  for (auto b : blocks) {
    if (b <= 0) throw std::invalid_argument("empty probability block");
    total += b;
  }
  if (total != scores.cols()) throw std::invalid_argument("blocks do not tile the score rows");
  AssociationScores out;
  out.scores = scores;
  out.blocks = blocks;
  out.probabilities.resize(scores.rows(), scores.cols());
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    Eigen::Index at = 0;
    for (auto b : blocks) {
      const auto seg = scores.row(t).segment(at, b);
      const Eigen::RowVectorXd e = (seg.array() - seg.maxCoeff()).exp().matrix();
      out.probabilities.row(t).segment(at, b) = e / e.sum();
      at += b;
    }
  }
  return out;
}

AssociationScores association_probabilities(const ForwardCache& cache) {
  return association_probabilities(cache.scores, cache.blocks);
}

Eigen::RowVectorXd tolerance_targets(const TimeSlice& slice, double tau) {
  if (slice.labels.size() != slice.frames.size()) {
    throw std::invalid_argument("slice needs one label per frame");
  }
  Eigen::Index total = 0;
  for (const auto& f : slice.frames) total += static_cast<Eigen::Index>(f.candidates.size());
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(total);
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < slice.frames.size(); ++j) {
    const FrameObservation& f = slice.frames[j];
    const Grasp& label = slice.labels[j];
    std::vector<Eigen::Index> hits;
    for (std::size_t i = 0; i < f.candidates.size(); ++i) {
      if (object_frame_distance(f.candidates[i], label, f.true_object_pose) < tau) {
        hits.push_back(static_cast<Eigen::Index>(i));
      }
    }
    if (hits.empty()) {
      if (label.candidate_index < 0 ||
          label.candidate_index >= static_cast<int>(f.candidates.size())) {
        throw std::invalid_argument("label is not a member of its frame");
      }
      hits.push_back(label.candidate_index);
    }
    for (auto i : hits) w[at + i] = 1.0 / static_cast<double>(hits.size());
    at += static_cast<Eigen::Index>(f.candidates.size());
  }
  return w;
}

double tolerance_loss(const AssociationScores& scores, const TimeSlice& slice, double tau) {
  const Eigen::RowVectorXd w = tolerance_targets(slice, tau);
  if (w.size() != scores.probabilities.cols()) {
    throw std::invalid_argument("scores and slice disagree in candidate count");
  }
  double loss = 0.0;
  for (Eigen::Index t = 0; t < scores.probabilities.rows(); ++t) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w[i] != 0.0) loss -= w[i] * std::log(scores.probabilities(t, i));
    }
  }
  return loss;
}

template <typename Scalar>
ad::Var<Scalar> tolerance_loss(ad::Var<Scalar> scores, const std::vector<Eigen::Index>& blocks,
                               const TimeSlice& slice, double tau) {
  const Eigen::RowVectorXd w = tolerance_targets(slice, tau);
  if (w.size() != scores.cols()) {
    throw std::invalid_argument("scores and slice disagree in candidate count");
  }
  const auto log_p = ad::block_log_softmax(scores, blocks);
  ad::Matrix<Scalar> weights = w.cast<Scalar>().replicate(scores.rows(), 1);
  return ad::scale(ad::weighted_sum(log_p, std::move(weights)), Scalar(-1));
}

// ---------------------------------------------------------------------------
// Inference and baselines

bool WorkspaceFilter::accepts(const Grasp& g) const {
  if (g.score < min_score) return false;
  const Vector3d& t = g.pose.translation;
  if ((t.array() < box_min.array()).any() || (t.array() > box_max.array()).any()) return false;
  const double cos_down = -approach_axis(g.pose.rotation).z();
  const double angle = rad2deg(std::acos(std::clamp(cos_down, -1.0, 1.0)));
  return angle <= max_approach_deg;
}

std::optional<Grasp> fresh_anchor(const FrameObservation& current, const WorkspaceFilter& filter) {
  std::optional<Grasp> best;
  for (const auto& c : current.candidates) {
    if (!filter.accepts(c)) continue;
    if (!best || c.score > best->score) best = c;
  }
  return best;
}

template <typename Scalar>
std::optional<TrackedGrasp> infer_track(const std::vector<HistoryFrame>& history,
                                        const FrameObservation& current,
                                        const TrackerModel<Scalar>& model,
                                        const WorkspaceFilter& filter, double p_min) {
  std::vector<int> survivors;
  for (int i = 0; i < static_cast<int>(current.candidates.size()); ++i) {
    if (filter.accepts(current.candidates[static_cast<std::size_t>(i)])) survivors.push_back(i);
  }
  if (survivors.empty()) return std::nullopt;
  if (history.empty()) {
    const auto anchor = fresh_anchor(current, filter);
    return TrackedGrasp{*anchor, 1.0};
  }

  const std::size_t keep =
      std::min(history.size(), static_cast<std::size_t>(model.config().frames - 1));
  std::vector<const FrameObservation*> frames;
  std::vector<std::pair<int, int>> queries;
  for (std::size_t j = history.size() - keep; j < history.size(); ++j) {
    const HistoryFrame& h = history[j];
    const int idx = h.selected.candidate_index;
    if (idx < 0 || idx >= static_cast<int>(h.frame.candidates.size())) {
      throw std::invalid_argument("history selection is not a member of its frame");
    }
    queries.emplace_back(static_cast<int>(frames.size()), idx);
    frames.push_back(&h.frame);
  }
  const int current_frame = static_cast<int>(frames.size());
  frames.push_back(&current);

  const auto probs =
      association_probabilities(associate(make_bundle(frames, queries, model.config().knn), model));
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(current.candidates.size()));
  for (Eigen::Index t = 0; t < probs.probabilities.rows(); ++t) {
    avg += probs.block(static_cast<int>(t), current_frame);
  }
  avg /= static_cast<double>(probs.probabilities.rows());

  int best = survivors.front();
  for (int i : survivors) {
    if (avg[i] > avg[best]) best = i;
  }
  const double threshold =
      p_min >= 0.0 ? p_min : 2.0 / static_cast<double>(current.candidates.size());
  if (avg[best] < threshold) return std::nullopt;
  return TrackedGrasp{current.candidates[static_cast<std::size_t>(best)], avg[best]};
}

Grasp baseline_nearest_last(const FrameObservation& current, const Grasp& last) {
  if (current.candidates.empty()) throw std::invalid_argument("no candidates to choose from");
  const Grasp* best = nullptr;
  double best_d = 0.0;
  for (const auto& c : current.candidates) {
    const double d = (c.pose.translation - last.pose.translation).norm();
    if (best == nullptr || d < best_d ||
        (d == best_d && c.candidate_index < best->candidate_index)) {
      best = &c;
      best_d = d;
    }
  }
  return *best;
}

Grasp oracle_track(const FrameObservation& current, const Grasp& anchor,
                   const Pose& anchor_object_pose) {
  const int idx = nearest_in_object_frame(current, anchor, anchor_object_pose);
  if (idx < 0) throw std::invalid_argument("no candidates to choose from");
  return current.candidates[static_cast<std::size_t>(idx)];
}

// ---------------------------------------------------------------------------
// Weights file

namespace {

constexpr std::array<char, 5> kMagic{'G', 'T', 'R', 'K', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw std::runtime_error("truncated weights");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace

template <typename Scalar>
void save_weights(const std::string& path, const TrackerModel<Scalar>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const auto f = static_cast<float>(p.value(r, c));
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

template <typename Scalar>
void load_weights(const std::string& path, TrackerModel<Scalar>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error(path + " is not a GTRK1 weights file");
  }
  const std::uint32_t count = get_u32(in);
  if (count != model.parameters().size()) {
    throw std::runtime_error("weights file holds " + std::to_string(count) + " tensors, model has " +
                             std::to_string(model.parameters().size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = get_u32(in);
    if (len > 4096) throw std::runtime_error("implausible tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("truncated weights");
    auto& p = model.parameter(name);
    const std::uint32_t rank = get_u32(in);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = get_u32(in);
    if (rank != 2 || dims[0] != p.value.rows() || dims[1] != p.value.cols()) {
      throw std::runtime_error("shape mismatch for tensor " + name);
    }
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const std::uint32_t bits = get_u32(in);
        float f = 0.0f;
        std::memcpy(&f, &bits, 4);
        p.value(r, c) = static_cast<Scalar>(f);
      }
    }
    p.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Instantiations

#define HANDOVER_TRACKER_INSTANTIATE(S)                                                        \
  template class TrackerModel<S>;                                                              \
  template ad::Var<S> build_features(ad::Tape<S>&, const TrackerModel<S>&,                     \
                                     const Eigen::MatrixXd&, const std::vector<int>&, int);    \
  template ForwardVars<S> forward(ad::Tape<S>&, const TrackerModel<S>&, const FeatureBundle&, \
                                  Rng*);                                                       \
  template ForwardCache associate(const FeatureBundle&, const TrackerModel<S>&);               \
  template ad::Var<S> tolerance_loss(ad::Var<S>, const std::vector<Eigen::Index>&,             \
                                     const TimeSlice&, double);                                \
  template std::optional<TrackedGrasp> infer_track(const std::vector<HistoryFrame>&,           \
                                                   const FrameObservation&,                    \
                                                   const TrackerModel<S>&,                     \
                                                   const WorkspaceFilter&, double);            \
  template void save_weights(const std::string&, const TrackerModel<S>&);                      \
  template void load_weights(const std::string&, TrackerModel<S>&);

HANDOVER_TRACKER_INSTANTIATE(float)
HANDOVER_TRACKER_INSTANTIATE(double)

#undef HANDOVER_TRACKER_INSTANTIATE

}  // namespace handover
