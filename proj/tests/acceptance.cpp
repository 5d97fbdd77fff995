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

// Acceptance gate: one PASS/FAIL line per release criterion. Exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "handover/bench.hpp"
#include "handover/predictor.hpp"
#include "handover/trainer.hpp"

using namespace handover;
using namespace handover::testing;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s  %-22s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void softmax_blocks() {
  const auto start = Clock::now();
  const TrackerConfig cfg;
  const TrackerModel<float> model(cfg, 11);
  Rng rng(101);
  double worst = 0.0;
  int blocks = 0;
  for (int pass = 0; pass < 1000; ++pass) {
    TimeSlice slice;
    for (int j = 0; j < cfg.frames; ++j) {
      slice.frames.push_back(random_frame(rng, cfg.candidates, j, 0.2));
      // Queries are the labelled grasps; any candidate will do here.
      slice.labels.push_back(slice.frames.back().candidates[rng.index(cfg.candidates)]);
    }
    const FeatureBundle bundle = make_bundle(slice, cfg.knn);
    const AssociationScores p = association_probabilities(associate(bundle, model));
    for (int q = 0; q < p.probabilities.rows(); ++q) {
      for (int j = 0; j < bundle.frames(); ++j) {
        worst = std::max(worst, std::abs(p.block(q, j).sum() - 1.0));
        ++blocks;
      }
    }
  }
  report("softmax-normalization", worst <= 1e-6,
         fmt("%d blocks over 1000 passes, max |sum-1| = %.3g (tol 1e-6), %.2f s", blocks, worst,
             seconds_since(start)));
}

void loss_reduces_to_cross_entropy() {
  const auto start = Clock::now();
  const TrackerConfig cfg = toy_config();
  Rng rng(102);
  double worst = 0.0;
  bool single_hits = true;
  for (int trial = 0; trial < 100; ++trial) {
    const TrackerModel<double> model(cfg, 200 + trial);
    TimeSlice slice;
    const Pose object = random_pose(rng, 0.1);
    for (int j = 0; j < cfg.frames; ++j) {
      // Candidates on a 5 cm lattice, so only the label lies within τ of itself.
      FrameObservation f;
      f.frame_index = j;
      f.true_object_pose = object;
      for (int i = 0; i < cfg.candidates; ++i) {
        Grasp g;
        g.pose = Pose(random_rotation(rng), object.translation + Vector3d(0.05 * i, 0.05 * j, 0.0));
        g.score = rng.uniform(0.1, 1.0);
        g.width = rng.uniform(0.02, 0.08);
        g.candidate_index = i;
        g.annotation = static_cast<int>(rng.index(cfg.annotation_ids));
        f.candidates.push_back(g);
      }
      slice.labels.push_back(f.candidates[rng.index(cfg.candidates)]);
      slice.frames.push_back(std::move(f));
    }
    const Eigen::RowVectorXd targets = tolerance_targets(slice, cfg.tolerance);
    single_hits = single_hits && (targets.array() == 0.0 || targets.array() == 1.0).all() &&
                  targets.sum() == cfg.frames;

    const FeatureBundle bundle = make_bundle(slice, cfg.knn);
    const ForwardCache cache = associate(bundle, model);
    double ce = 0.0;
    for (int q = 0; q < cache.scores.rows(); ++q) {
      Eigen::Index at = 0;
      for (int j = 0; j < cfg.frames; ++j) {
        const Eigen::VectorXd seg = cache.scores.row(q).segment(at, cache.blocks[j]).transpose();
        ce -= seg[slice.labels[j].candidate_index] - log_sum_exp(seg);
        at += cache.blocks[j];
      }
    }
    const double loss = tolerance_loss(association_probabilities(cache), slice, cfg.tolerance);
    worst = std::max(worst, std::abs(loss - ce));
    ad::Tape<double> tape(false);
    const auto vars = forward(tape, model, bundle, nullptr);
    const double taped = tolerance_loss(vars.scores, bundle.blocks(), slice, cfg.tolerance).value()(0, 0);
    worst = std::max(worst, std::abs(taped - ce));
  }
  report("loss-equals-ce", single_hits && worst <= 1e-9,
         fmt("100 cases, single hits %s, max |loss-ce| = %.3g (tol 1e-9), %.2f s",
             single_hits ? "yes" : "no", worst, seconds_since(start)));
}

void gradient_fidelity() {
  const auto start = Clock::now();
  const TrackerConfig cfg = toy_config();
  TrackerModel<double> model(cfg, 7);
  Rng rng(103);
  std::vector<TimeSlice> data;
  for (int i = 0; i < 8; ++i) data.push_back(toy_slice(rng, cfg));
  const TimeSlice probe = toy_slice(rng, cfg);

  const GradCheck at_init = check_gradients(model, probe, 20, 1e-4, rng);

  TrainConfig train_cfg;
  train_cfg.learning_rate = 1e-3;
  Adam<double> adam(train_cfg);
  for (int step = 0; step < 100; ++step) {
    gradient_step(model, adam, {data[step % data.size()]}, train_cfg.learning_rate, nullptr);
  }
  const GradCheck trained = check_gradients(model, probe, 20, 1e-4, rng);
  const double elapsed = seconds_since(start);
  const bool pass = at_init.max_relative_error < 1e-3 && trained.max_relative_error < 1e-3 &&
                    adam.steps() == 100 && elapsed < 30.0;
  report("gradient-fidelity", pass,
         fmt("init max rel %.3g (%d exact zero), after %d steps max rel %.3g (%d exact zero), "
             "tol 1e-3, %.2f s (limit 30)",
             at_init.max_relative_error, at_init.exact_zero, adam.steps(),
             trained.max_relative_error, trained.exact_zero, elapsed));
}

// Predictor traces. Each expected value is the worked example evaluated with
// the same IEEE operations a hand calculation performs (differences, then the
// mean as sum / count, then last + λ·mean). The dyadic traces use values that
// are exact in binary, so there the literal itself is the expectation.

GraspHistory history_x(const std::vector<double>& xs) {
  GraspHistory h(15);
  double t = 0.0;
  for (double x : xs) {
    Grasp g;
    g.pose = Pose(rotation_z(0.7), Vector3d(x, 0.0, 0.0));
    h.append(g, t);
    t += 0.25;
  }
  return h;
}

std::vector<Vector3d> along_x(const std::vector<double>& xs) {
  std::vector<Vector3d> out;
  for (double x : xs) out.emplace_back(x, 0.0, 0.0);
  return out;
}

void predictor_oracle() {
  const auto start = Clock::now();
  const PredictorParams p;
  int cases = 0, matched = 0;
  std::string first_miss;
  auto expect = [&](bool ok, const char* what) {
    ++cases;
    if (ok) ++matched;
    else if (first_miss.empty()) first_miss = what;
  };

  // Stable suffix.
  {
    const auto s = stable_suffix(along_x({0.05, 0.01, 0.02}), 0.03);
    expect(s.size() == 2 && s[0] == Vector3d(0.01, 0, 0) && s[1] == Vector3d(0.02, 0, 0),
           "suffix drops the leading violation");
    expect(stable_suffix(along_x({0.01, 0.01, 0.04}), 0.03).empty(), "suffix empty on last violation");
    expect(stable_suffix(std::vector<Vector3d>(4, Vector3d::Zero()), 0.03).size() == 4,
           "suffix keeps all zeros");
  }
  // Voting.
  {
    expect(vote_momentum(along_x({0.01, 0.01, 0.01}), p.perturbation) ==
               Vector3d((0.01 + 0.01 + 0.01) / 3.0, 0, 0),
           "unanimous vote");
    expect(vote_momentum(along_x({0.01, -0.02, -0.03}), p.perturbation) ==
               Vector3d((-0.02 + -0.03) / 2.0, 0, 0),
           "majority negative vote");
    expect(vote_momentum(along_x({0.004, -0.004}), p.perturbation) == Vector3d::Zero(),
           "band values in both sets, tie to positive");
    expect(vote_momentum(along_x({1.0 / 256, -1.0 / 256}), p.perturbation) == Vector3d::Zero(),
           "dyadic band tie");
    expect(vote_momentum(along_x({1.0 / 128, -1.0 / 64, -3.0 / 128}), p.perturbation) ==
               Vector3d(-5.0 / 256, 0, 0),
           "dyadic majority negative");
    // 1/256 sits inside the band and joins both sets: a 2 to 2 tie, so positive wins.
    expect(vote_momentum(along_x({1.0 / 128, 1.0 / 256, -1.0 / 64}), p.perturbation) ==
               Vector3d(3.0 / 512, 0, 0),
           "dyadic band value breaks toward positive");
  }
  // Full predictions on both coefficient branches.
  {
    const GraspHistory h = history_x({0.0, 0.01, 0.02, 0.03});
    const double d0 = 0.01 - 0.0, d1 = 0.02 - 0.01, d2 = 0.03 - 0.02;
    const double mean = (d0 + d1 + d2) / 3.0;
    const Pose fwd = predict_future(h, Vector3d(1, 0, 0), p);
    const Pose back = predict_future(h, Vector3d(-1, 0, 0), p);
    expect(fwd.translation == Vector3d(0.03 + 3.0 * mean, 0, 0), "receding uses the parallel λ");
    expect(back.translation == Vector3d(0.03 + 1.0 * mean, 0, 0), "approaching uses the opposite λ");
    expect(fwd.rotation == h.back().grasp.pose.rotation && back.rotation == h.back().grasp.pose.rotation,
           "rotation copied");
    const GraspHistory still = history_x({0.1, 0.1, 0.1, 0.1});
    expect(predict_future(still, Vector3d(1, 0, 0), p).translation == Vector3d(0.1, 0, 0),
           "constant history");
  }
  {
    const GraspHistory h = history_x({0.0, 1.0 / 128, 2.0 / 128, 3.0 / 128});
    expect(predict_future(h, Vector3d(1, 0, 0), p).translation == Vector3d(6.0 / 128, 0, 0),
           "dyadic receding");
    expect(predict_future(h, Vector3d(-1, 0, 0), p).translation == Vector3d(4.0 / 128, 0, 0),
           "dyadic approaching");
    expect(predict_future(h, Vector3d::Zero(), p).translation == Vector3d(6.0 / 128, 0, 0),
           "zero robot motion counts as parallel");
  }
  {
    bool threw = false;
    try {
      predict_future(GraspHistory{}, Vector3d::Zero(), p);
    } catch (const EmptyHistory&) {
      threw = true;
    }
    expect(threw, "empty history throws");
  }
  const double elapsed = seconds_since(start);
  report("predictor-oracle", matched == cases && elapsed < 1.0,
         fmt("%d/%d exact matches%s%s, %.3f s (limit 1)", matched, cases,
             first_miss.empty() ? "" : ", first miss: ", first_miss.c_str(), elapsed));
}

std::shared_ptr<TrackerModel<float>> tracker_efficacy() {
  const auto start = Clock::now();
  const auto objects = standard_archetypes();
  DatasetConfig data_cfg;
  data_cfg.slices = 2000;
  data_cfg.seed = 1;
  const std::vector<TimeSlice> data = generate_dataset(objects, data_cfg);
  DatasetConfig eval_cfg = data_cfg;
  eval_cfg.slices = 500;
  eval_cfg.seed = mix_seed(1, 0xe7a1);
  const std::vector<TimeSlice> held_out = generate_dataset(objects, eval_cfg);

  const TrackerConfig tracker;
  auto model = std::make_shared<TrackerModel<float>>(tracker, 1);
  TrainConfig train_cfg;
  train_cfg.epochs = 20;
  train_cfg.seed = 1;
  train(*model, data, train_cfg);
  const AccuracyReport acc = evaluate_accuracy(*model, held_out, tracker.tolerance);
  const double elapsed = seconds_since(start);
  const bool pass = acc.learned() >= 0.90 && acc.learned() >= acc.baseline() && elapsed <= 900.0;
  report("tracker-efficacy", pass,
         fmt("%zu slices x %d epochs; held-out %d: learned %.4f (min 0.90), baseline %.4f; "
             "%.0f s (limit 900)",
             data.size(), train_cfg.epochs, acc.slices, acc.learned(), acc.baseline(), elapsed));
  return model;
}

ExperimentConfig paired_config(MotionKind kind, TrackerMode mode, bool prediction, int first,
                               int count) {
  ExperimentConfig cfg;
  cfg.protocol = Protocol::kMotionContinuous;
  cfg.objects = standard_archetypes();
  cfg.motion.kind = kind;
  cfg.mode = mode;
  cfg.prediction = prediction;
  cfg.stop_rule = StopRule::kFixed;
  cfg.seeds.clear();
  for (int i = 0; i < count; ++i) cfg.seeds.push_back(first + i);
  return cfg;
}

void closed_loop_static() {
  const auto start = Clock::now();
  ExperimentConfig cfg = paired_config(MotionKind::kStatic, TrackerMode::kOracle, true, 1, 30);
  cfg.noise = NoiseConfig::zero();
  const BenchResult r = run_experiment(cfg);
  const FsmConfig& f = cfg.fsm;
  // Closed-form bound: slowest axis of independent rest-to-rest profiles from
  // the ready pose to the first tracked grasp, or the rotation slew if longer.
  double worst_ticks = 0.0;
  bool bounded = true;
  for (const TrialResult& t : r.trials) {
    if (!t.first_anchor) {
      bounded = false;
      continue;
    }
    const Pose& g = t.first_anchor->pose;
    double bound = 0.0;
    for (int a = 0; a < 3; ++a) {
      bound = std::max(bound, rest_to_rest_time(std::abs(g.translation[a] - f.ready_pose.translation[a]),
                                                f.limits.v_max, f.limits.a_max));
    }
    bound = std::max(bound, symmetric_grasp_geodesic(f.ready_pose.rotation, g.rotation) /
                                deg2rad(f.limits.omega_max_deg));
    const double ticks = std::abs(t.approach_time - bound) / f.dt();
    worst_ticks = std::max(worst_ticks, ticks);
  }
  const bool pass = r.attempts == 30 && r.successes == 30 && bounded && worst_ticks <= 2.0;
  report("closed-loop-static", pass,
         fmt("%d/%d successes; max |approach - bound| = %.2f ticks (limit 2), %.1f s", r.successes,
             r.attempts, worst_ticks, seconds_since(start)));
}

double mean_success_approach(const BenchResult& r) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : r.trials) {
    if (t.success) sum += t.approach_time, ++n;
  }
  return n ? sum / n : std::nan("");
}

void prediction_benefit(std::shared_ptr<const TrackerModel<float>> model) {
  const auto start = Clock::now();
  const BenchResult on = run_experiment(
      paired_config(MotionKind::kContinuousRandom, TrackerMode::kLearned, true, 1, 100), model);
  const BenchResult off = run_experiment(
      paired_config(MotionKind::kContinuousRandom, TrackerMode::kLearned, false, 1, 100), model);
  const BenchResult rec_on =
      run_experiment(paired_config(MotionKind::kLinear, TrackerMode::kLearned, true, 1, 100), model);
  const BenchResult rec_off =
      run_experiment(paired_config(MotionKind::kLinear, TrackerMode::kLearned, false, 1, 100), model);
  const double t_on = mean_success_approach(rec_on), t_off = mean_success_approach(rec_off);
  const double elapsed = seconds_since(start);
  const bool pass = on.attempts == 100 && off.attempts == 100 &&
                    on.success_rate() >= off.success_rate() && t_on < t_off && elapsed <= 600.0;
  report("prediction-benefit", pass,
         fmt("continuous success ON %.2f vs OFF %.2f; receding mean approach ON %.3f s "
             "(%d ok) vs OFF %.3f s (%d ok); %.0f s (limit 600)",
             on.success_rate(), off.success_rate(), t_on, rec_on.successes, t_off,
             rec_off.successes, elapsed));
}

void tracker_benefit(std::shared_ptr<const TrackerModel<float>> model) {
  const auto start = Clock::now();
  const BenchResult learned = run_experiment(
      paired_config(MotionKind::kContinuousRandom, TrackerMode::kLearned, true, 1, 100), model);
  const BenchResult baseline = run_experiment(
      paired_config(MotionKind::kContinuousRandom, TrackerMode::kBaseline, true, 1, 100));
  const bool pass = learned.attempts == 100 && baseline.attempts == 100 &&
                    learned.success_rate() >= baseline.success_rate();
  report("tracker-benefit", pass,
         fmt("continuous success learned %.2f vs baseline %.2f over 100 paired seeds, %.0f s",
             learned.success_rate(), baseline.success_rate(), seconds_since(start)));
}

void fsm_liveness() {
  const auto start = Clock::now();
  const auto objects = standard_archetypes();
  const FsmConfig cfg;
  Rng rng(109);
  int returned = 0, violations = 0, worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ObjectModel& object = objects[rng.index(objects.size())];
    const Pose pose(rotation_z(rng.uniform(-1.0, 1.0)),
                    Vector3d(rng.uniform(-0.15, 0.15), rng.uniform(-0.1, 0.1), 0.25));
    HandoverController c(cfg, GraspTracker(TrackerMode::kOracle));
    RobotState prev = c.robot();
    auto check = [&] {
      const RobotState& now = c.robot();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(now.ee_velocity[a]) > cfg.limits.v_max + 1e-9) ++violations;
        if (std::abs(now.ee_velocity[a] - prev.ee_velocity[a]) > cfg.limits.a_max * cfg.dt() + 1e-9) {
          ++violations;
        }
      }
      prev = now;
    };
    // A random seen/lost prefix puts the controller in an arbitrary phase.
    const int prefix = static_cast<int>(rng.index(120));
    const double seen_rate = rng.uniform(0.3, 1.0);
    int frame = 0;
    for (int k = 0; k < prefix; ++k) {
      if (rng.bernoulli(seen_rate)) {
        c.step(detect_candidates(object, pose, NoiseConfig{}, 48, frame++), {&object, pose, 0.0});
      } else {
        c.step(FrameObservation{}, {&object, pose, 0.0});
      }
      check();
    }
    int ticks = 0;
    while (c.phase() != HandoverPhase::kReady && ticks < 1000) {
      c.step(FrameObservation{}, {&object, pose, 0.0});
      check();
      ++ticks;
    }
    worst = std::max(worst, ticks);
    if (ticks <= cfg.waiting_threshold + 2) ++returned;
  }
  const double elapsed = seconds_since(start);
  report("fsm-liveness", returned == 1000 && violations == 0 && elapsed <= 60.0,
         fmt("%d/1000 back in Ready, worst %d ticks (limit %d), %d limit violations, %.1f s",
             returned, worst, cfg.waiting_threshold + 2, violations, elapsed));
}

void determinism(std::shared_ptr<const TrackerModel<float>> model) {
  const auto start = Clock::now();
  const ExperimentConfig cfg =
      paired_config(MotionKind::kContinuousRandom, TrackerMode::kLearned, true, 1, 100);
  const auto root = std::filesystem::temp_directory_path() / "handover_acceptance";
  std::filesystem::remove_all(root);
  write_results((root / "a").string(), cfg, run_experiment(cfg, model));
  write_results((root / "b").string(), cfg, run_experiment(cfg, model));
  int identical = 0, files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(root / "a")) {
    ++files;
    const std::string a = slurp(entry.path());
    const std::string b = slurp(root / "b" / entry.path().filename());
    if (!a.empty() && a == b) ++identical;
  }
  std::filesystem::remove_all(root);
  report("determinism", files > 0 && identical == files,
         fmt("%d/%d result files byte-identical, %.0f s", identical, files, seconds_since(start)));
}

}  // namespace

int main() {
  softmax_blocks();
  loss_reduces_to_cross_entropy();
  gradient_fidelity();
  predictor_oracle();
  const auto model = tracker_efficacy();
  closed_loop_static();
  prediction_benefit(model);
  tracker_benefit(model);
  fsm_liveness();
  determinism(model);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
