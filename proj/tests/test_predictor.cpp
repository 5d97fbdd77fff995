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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "generators.hpp"
#include "handover/predictor.hpp"

using namespace handover;
using namespace handover::testing;

namespace {

std::vector<Vector3d> xs(std::initializer_list<double> values) {
  std::vector<Vector3d> out;
  for (double v : values) out.emplace_back(v, 0.0, 0.0);
  return out;
}

GraspHistory history_of(const std::vector<Vector3d>& translations, int cap = 15) {
  GraspHistory h(cap);
  double t = 0.0;
  for (const auto& p : translations) {
    Grasp g;
    g.pose = Pose(rotation_z(0.3), p);
    h.append(g, t);
    t += 1.0 / 6.0;
  }
  return h;
}

}  // namespace

TEST_CASE("stable suffix of an all-zero list is the whole list") {
  const auto d = std::vector<Vector3d>(5, Vector3d::Zero());
  CHECK(stable_suffix(d, 0.03).size() == 5);
}

TEST_CASE("stable suffix stops at the last violating entry") {
  const auto s = stable_suffix(xs({0.05, 0.01, 0.02}), 0.03);
  REQUIRE(s.size() == 2);
  CHECK(s[0].x() == 0.01);
  CHECK(s[1].x() == 0.02);
}

TEST_CASE("stable suffix is empty when the last entry violates") {
  CHECK(stable_suffix(xs({0.01, 0.01, 0.04}), 0.03).empty());
}

TEST_CASE("stable suffix threshold is strict on every component") {
  CHECK(stable_suffix(xs({0.01, 0.03}), 0.03).empty());
  std::vector<Vector3d> d{Vector3d(0.0, 0.0, 0.0), Vector3d(0.0, -0.03, 0.0)};
  CHECK(stable_suffix(d, 0.03).empty());
  d.back() = Vector3d(0.0, 0.0, 0.0299);
  CHECK(stable_suffix(d, 0.03).size() == 2);
}

TEST_CASE("stable suffix matches a brute-force scan") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Vector3d> d;
    const int n = static_cast<int>(rng.index(12));
    for (int i = 0; i < n; ++i) d.push_back(random_vector(rng, 0.04));
    // Longest suffix whose entries all pass, by checking every start.
    std::size_t best = 0;
    for (std::size_t start = 0; start <= d.size(); ++start) {
      bool ok = true;
      for (std::size_t i = start; i < d.size(); ++i) {
        ok = ok && d[i].cwiseAbs().maxCoeff() < 0.03;
      }
      if (ok) {
        best = d.size() - start;
        break;
      }
    }
    CHECK(stable_suffix(d, 0.03).size() == best);
  }
}

TEST_CASE("vote with unanimous deltas is their mean") {
  CHECK(vote_momentum(xs({0.01, 0.01, 0.01}), 0.005).x() == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("vote follows the majority sign") {
  const Vector3d m = vote_momentum(xs({0.01, -0.02, -0.03}), 0.005);
  CHECK(m.x() == doctest::Approx(-0.025).epsilon(1e-15));
}

TEST_CASE("values inside the perturbation band count for both signs and ties go positive") {
  const Vector3d m = vote_momentum(xs({0.004, -0.004}), 0.005);
  CHECK(m.x() == 0.0);
}

TEST_CASE("empty stable suffix votes zero") {
  CHECK(vote_momentum({}, 0.005) == Vector3d::Zero());
}

TEST_CASE("vote with zero band and positive deltas is the arithmetic mean") {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vector3d> d;
    const int n = 1 + static_cast<int>(rng.index(10));
    Vector3d sum = Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
      d.emplace_back(rng.uniform(1e-6, 0.03), rng.uniform(1e-6, 0.03), rng.uniform(1e-6, 0.03));
      sum += d.back();
    }
    const Vector3d m = vote_momentum(d, 0.0);
    CHECK((m - sum / n).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("vote matches an independent per-axis count") {
  Rng rng(33);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Vector3d> d;
    const int n = 1 + static_cast<int>(rng.index(10));
    for (int i = 0; i < n; ++i) d.push_back(random_vector(rng, 0.02));
    const double band = rng.uniform(0.0, 0.01);
    const Vector3d m = vote_momentum(d, band);
    for (int a = 0; a < 3; ++a) {
      double plus = 0.0, minus = 0.0;
      int np = 0, nm = 0;
      for (const auto& v : d) {
        if (v[a] > -band) plus += v[a], ++np;
        if (v[a] < band) minus += v[a], ++nm;
      }
      const double expected = np >= nm ? plus / np : minus / nm;
      CHECK(m[a] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("momentum coefficient branches") {
  const PredictorParams p;
  CHECK(momentum_coefficient(Vector3d(1, 0, 0), Vector3d(1, 0, 0), p) == 3.0);
  CHECK(momentum_coefficient(Vector3d(1, 0, 0), Vector3d(-1, 0, 0), p) == 1.0);
  CHECK(momentum_coefficient(Vector3d(1, 0, 0), Vector3d(0, 1, 0), p) == 3.0);
  CHECK(momentum_coefficient(Vector3d::Zero(), Vector3d(-1, 0, 0), p) == 3.0);
  CHECK(momentum_coefficient(Vector3d(1, 0, 0), Vector3d::Zero(), p) == 3.0);
}

TEST_CASE("constant history predicts the last pose") {
  const GraspHistory h = history_of(std::vector<Vector3d>(4, Vector3d(0.1, 0.2, 0.3)));
  const Pose p = predict_future(h, Vector3d(1, 0, 0), PredictorParams{});
  CHECK(p.translation == Vector3d(0.1, 0.2, 0.3));
  CHECK(p.rotation == h.back().grasp.pose.rotation);
}

TEST_CASE("receding history uses the parallel coefficient") {
  const GraspHistory h = history_of(xs({0.0, 0.01, 0.02, 0.03}));
  const Pose p = predict_future(h, Vector3d(1, 0, 0), PredictorParams{});
  CHECK(p.translation.x() == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(p.translation.y() == 0.0);
  CHECK(p.translation.z() == 0.0);
  CHECK(p.rotation == h.back().grasp.pose.rotation);
}

TEST_CASE("approaching history uses the opposite coefficient") {
  const GraspHistory h = history_of(xs({0.0, 0.01, 0.02, 0.03}));
  const Pose p = predict_future(h, Vector3d(-1, 0, 0), PredictorParams{});
  CHECK(p.translation.x() == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("prediction of an empty history throws") {
  GraspHistory h;
  CHECK_THROWS_AS(predict_future(h, Vector3d::Zero(), PredictorParams{}), EmptyHistory);
}

TEST_CASE("history timestamps must increase and length is capped") {
  GraspHistory h(3);
  Grasp g;
  h.append(g, 0.0);
  CHECK_THROWS_AS(h.append(g, 0.0), std::invalid_argument);
  for (int i = 1; i <= 5; ++i) {
    g.pose.translation.x() = i;
    h.append(g, i);
  }
  CHECK(h.size() == 3);
  CHECK(h.entries().front().grasp.pose.translation.x() == 3.0);
  CHECK(h.deltas().size() == 2);
}

TEST_CASE("prediction is translation-equivariant") {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vector3d> path{random_vector(rng, 0.2)};
    const int n = 1 + static_cast<int>(rng.index(14));
    for (int i = 0; i < n; ++i) path.push_back(path.back() + random_vector(rng, 0.02));
    const Vector3d shift = random_vector(rng, 0.5);
    std::vector<Vector3d> shifted;
    for (const auto& p : path) shifted.push_back(p + shift);
    const Vector3d robot = random_vector(rng, 1.0);
    const Pose a = predict_future(history_of(path), robot, PredictorParams{});
    const Pose b = predict_future(history_of(shifted), robot, PredictorParams{});
    CHECK((b.translation - a.translation - shift).norm() < 1e-12);
  }
}

TEST_CASE("prediction shift is bounded by the stability filter") {
  Rng rng(35);
  const PredictorParams params;
  const double bound = params.lambda_parallel * params.stability * std::sqrt(3.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Vector3d> path{Vector3d::Zero()};
    const int n = 1 + static_cast<int>(rng.index(14));
    for (int i = 0; i < n; ++i) path.push_back(path.back() + random_vector(rng, 0.06));
    const GraspHistory h = history_of(path);
    const Pose p = predict_future(h, random_vector(rng, 1.0), params);
    CHECK((p.translation - h.back().grasp.pose.translation).norm() <= bound);
  }
}

TEST_CASE("results depending only on the stable suffix survive the history cap") {
  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vector3d> path{Vector3d::Zero()};
    for (int i = 0; i < 30; ++i) path.push_back(path.back() + random_vector(rng, 0.01));
    const std::vector<Vector3d> tail(path.end() - 15, path.end());
    const Vector3d robot = random_vector(rng, 1.0);
    const Pose capped = predict_future(history_of(path, 15), robot, PredictorParams{});
    const Pose direct = predict_future(history_of(tail, 15), robot, PredictorParams{});
    CHECK((capped.translation - direct.translation).norm() < 1e-15);
  }
}

TEST_CASE("predictor parameters are validated") {
  PredictorParams p;
  CHECK_NOTHROW(p.validate());
  p.perturbation = p.stability;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = PredictorParams{};
  p.lambda_opposite = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
