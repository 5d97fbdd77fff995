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

// Grasp tracking by association. Candidates from T frames are embedded, passed
// through a transformer encoder, queried by the features of already-tracked
// poses through a transformer decoder, and scored with S = D·Eᵀ/√C. Each
// (query, frame) block of S is soft-maxed into a distribution over that frame's
// candidates.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "handover/autodiff.hpp"
#include "handover/scene.hpp"

namespace handover {

struct TrackerConfig {
  int feature_dim = 32;  // C
  int frames = 3;        // T
  int candidates = 48;   // M
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int ffn_dim = 64;
  double dropout_prob = 0.1;
  double tolerance = 0.01;  // τ, meters
  int annotation_ids = 128;
  int knn = 4;

  void validate() const;
};

/// Raw descriptor layout, one row per candidate.
inline constexpr int kDescriptorDim = 13;
namespace descriptor {
inline constexpr int kTranslation = 0;  // 3
inline constexpr int kRotation6d = 3;   // 6: first two rotation columns
inline constexpr int kWidth = 9;
inline constexpr int kScore = 10;
inline constexpr int kKnnMean = 11;
inline constexpr int kKnnMin = 12;
}  // namespace descriptor

/// Per-candidate descriptor before the learned projection (M×13).
Eigen::MatrixXd candidate_descriptors(const FrameObservation& obs, int knn = 4);

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
class TrackerModel {
 public:
  using Param = ad::Parameter<Scalar>;

  /// Uniform fan-in initialization; attention output projections start at zero.
  TrackerModel(const TrackerConfig& cfg, std::uint64_t seed);

  const TrackerConfig& config() const { return cfg_; }
  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  Param& parameter(const std::string& name);
  const Param& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  template <typename Other>
  TrackerModel<Other> cast() const {
    TrackerModel<Other> out(cfg_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].value = params_[i].value.template cast<Other>();
    }
    return out;
  }

 private:
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
  void add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double value);

  TrackerConfig cfg_;
  std::vector<Param> params_;
};

/// Inputs to one forward pass: descriptors and annotation ids per frame, plus
/// the (frame, candidate) designations whose features become the queries.
struct FeatureBundle {
  std::vector<Eigen::MatrixXd> descriptors;
  std::vector<std::vector<int>> annotation_ids;
  std::vector<std::pair<int, int>> queries;

  int frames() const { return static_cast<int>(descriptors.size()); }
  std::vector<Eigen::Index> blocks() const;
  Eigen::Index total_candidates() const;
};

FeatureBundle make_bundle(const std::vector<const FrameObservation*>& frames,
                          const std::vector<std::pair<int, int>>& queries, int knn);

/// All frames of a labelled slice, queried by every label.
FeatureBundle make_bundle(const TimeSlice& slice, int knn);

template <typename Scalar>
struct ForwardVars {
  ad::Var<Scalar> features;  // f*, N×C
  ad::Var<Scalar> queries;   // Q*, T_q×C
  ad::Var<Scalar> encoded;   // E, N×C
  ad::Var<Scalar> decoded;   // D, T_q×C
  ad::Var<Scalar> scores;    // S, T_q×N
};

/// Learned projection of one frame's descriptors to M×C features.
template <typename Scalar>
ad::Var<Scalar> build_features(ad::Tape<Scalar>& tape, const TrackerModel<Scalar>& model,
                               const Eigen::MatrixXd& descriptors, const std::vector<int>& ids,
                               int frame_position);

/// Forward pass on a tape. Dropout is applied only when rng is non-null.
template <typename Scalar>
ForwardVars<Scalar> forward(ad::Tape<Scalar>& tape, const TrackerModel<Scalar>& model,
                            const FeatureBundle& bundle, Rng* dropout_rng = nullptr);

struct ForwardCache {
  Eigen::MatrixXd encoded;  // E
  Eigen::MatrixXd decoded;  // D
  Eigen::MatrixXd scores;   // S
  std::vector<Eigen::Index> blocks;
};

/// Inference-mode forward pass. Throws NonFiniteError naming the first bad tensor.
template <typename Scalar>
ForwardCache associate(const FeatureBundle& bundle, const TrackerModel<Scalar>& model);

/// S with every per-frame block soft-maxed; P has the same T_q×N layout.
struct AssociationScores {
  Eigen::MatrixXd scores;
  Eigen::MatrixXd probabilities;
  std::vector<Eigen::Index> blocks;

  Eigen::Index block_offset(int frame) const;
  /// P(G_j^(i) = Ĝ_j | Q_t) for i over frame j's candidates.
  Eigen::VectorXd block(int query, int frame) const;
};

AssociationScores association_probabilities(const Eigen::MatrixXd& scores,
                                            const std::vector<Eigen::Index>& blocks);
AssociationScores association_probabilities(const ForwardCache& cache);

/// Per-frame target weights for the tolerance loss as one 1×N row: 1/n_j on
/// every candidate of frame j within τ of the label in the object frame. A frame
/// with no tolerance pose falls back to its label alone.
Eigen::RowVectorXd tolerance_targets(const TimeSlice& slice, double tau);

/// −Σ_t Σ_j (1/n_j) Σ_{i within τ} log P(G_j^(i) | Q_t).
double tolerance_loss(const AssociationScores& scores, const TimeSlice& slice, double tau);

/// Same loss as a differentiable node on the tape.
template <typename Scalar>
ad::Var<Scalar> tolerance_loss(ad::Var<Scalar> scores, const std::vector<Eigen::Index>& blocks,
                               const TimeSlice& slice, double tau);

/// Candidate filter applied before any selection.
struct WorkspaceFilter {
  Vector3d box_min = Vector3d::Constant(-1e9);
  Vector3d box_max = Vector3d::Constant(1e9);
  double min_score = 0.1;
  double max_approach_deg = 180.0;  // angle between approach axis and world −z

  bool accepts(const Grasp& g) const;
};

struct TrackedGrasp {
  Grasp grasp;
  double probability = 1.0;
};

/// A previously tracked frame and the pose selected in it.
struct HistoryFrame {
  FrameObservation frame;
  Grasp selected;
};

/// Query-averaged association over the current frame. Returns nullopt (lost)
/// when no candidate survives the filter or the best averaged probability is
/// below p_min (default 2/M). With no history, returns the highest-score survivor.
template <typename Scalar>
std::optional<TrackedGrasp> infer_track(const std::vector<HistoryFrame>& history,
                                        const FrameObservation& current,
                                        const TrackerModel<Scalar>& model,
                                        const WorkspaceFilter& filter, double p_min = -1.0);

/// Highest-score candidate passing the filter; nullopt when none does.
std::optional<Grasp> fresh_anchor(const FrameObservation& current, const WorkspaceFilter& filter);

/// Candidate nearest to last in world-frame translation; ties by index.
Grasp baseline_nearest_last(const FrameObservation& current, const Grasp& last);

/// Candidate nearest to the anchor in the object frame, using the hidden true pose.
Grasp oracle_track(const FrameObservation& current, const Grasp& anchor,
                   const Pose& anchor_object_pose);

/// Binary weights: "GTRK1", u32 count, then per tensor u32 name length, name,
/// u32 rank, u32 dims, f32 data in row-major order. Little-endian throughout.
template <typename Scalar>
void save_weights(const std::string& path, const TrackerModel<Scalar>& model);
template <typename Scalar>
void load_weights(const std::string& path, TrackerModel<Scalar>& model);

}  // namespace handover
