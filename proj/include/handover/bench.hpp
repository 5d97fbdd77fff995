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

// Simulated handover trials and the two experiment protocols. Every trial is a
// pure function of its spec and seed, so paired runs that differ only in
// tracker mode or prediction see identical object trajectories.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "handover/fsm.hpp"
#include "handover/io.hpp"

namespace handover {

enum class Protocol { kOneMotion, kMotionContinuous };

const char* to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name);

/// kUntilSuccesses repeats each cell until successes_required successes or
/// max_trials attempts. kFixed runs one trial per seed, the i-th seed on
/// object i modulo the object count.
enum class StopRule { kUntilSuccesses, kFixed };

struct ExperimentConfig {
  Protocol protocol = Protocol::kMotionContinuous;
  std::vector<ObjectModel> objects;
  MotionScript motion;  // template; kind selects the motion-continuous variant
  NoiseConfig noise;
  TrackerMode mode = TrackerMode::kLearned;
  std::string weights;  // learned mode only
  TrackerConfig tracker;
  double p_min = -1.0;  // negative selects 2/M
  bool prediction = true;
  FsmConfig fsm;
  std::vector<std::uint64_t> seeds{1};
  StopRule stop_rule = StopRule::kUntilSuccesses;
  int successes_required = 3;
  int max_trials = 50;
  double trial_timeout = 20.0;  // seconds
  double start_spread = 0.05;   // half-width of the random start box, m

  void validate() const;
};

/// Keys: protocol, objects, noise, tracker, predictor, fsm, seeds, plus the
/// optional motion and stop_rule blocks. Missing keys keep their defaults.
ExperimentConfig experiment_from_json(const Json& j);
Json to_json(const ExperimentConfig& cfg);

struct TrialSpec {
  const ObjectModel* object = nullptr;
  std::string pattern;
  MotionScript script;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  int attempt = 0;
  /// One-motion scripts run on a clock that starts when the robot starts moving.
  bool clock_from_motion_start = false;
};

struct TrialResult {
  std::string object_id;
  std::string pattern;
  std::uint64_t seed = 0;
  int attempt = 0;
  bool success = false;
  bool triggered = false;
  double approach_time = 0.0;  // first Tracking tick to trigger; 0 without trigger
  double smoothness = 0.0;     // mean per-tick ee jerk magnitude, m/s³
  double quality_consistency = 0.0;  // std of tracked object-frame distance to the first anchor
  int ticks = 0;
  std::optional<Grasp> first_anchor;  // world frame, at the first Tracking tick
  std::optional<Pose> first_anchor_object_pose;
};

/// Per-tick record of one trial.
struct TrialTrace {
  std::vector<TickDiagnostics> ticks;
  std::vector<Pose> object_poses;
  std::vector<RobotState> commands;  // state after each tick's command
};

/// Runs one trial on a freshly reset controller.
TrialResult run_trial(const TrialSpec& spec, HandoverController& controller, double timeout,
                      int candidates, TrialTrace* trace = nullptr);

/// Script for one attempt of a protocol pattern, drawn from the trial seed.
MotionScript make_script(const ExperimentConfig& cfg, const std::string& pattern,
                         std::uint64_t trial_seed);

/// Patterns of a protocol: rotation and translation for one-motion, the
/// motion kind's name for motion-continuous.
std::vector<std::string> protocol_patterns(const ExperimentConfig& cfg);

struct Aggregate {
  int n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std over n − 1; 0 when n = 1
  bool single = false;
};

/// Throws std::invalid_argument on empty input.
Aggregate summarize(const std::vector<double>& values);

struct CellSummary {
  std::string object_id;
  std::string pattern;
  int attempts = 0;
  int successes = 0;
  bool aborted = false;  // stop rule not met within max_trials
  std::optional<Aggregate> approach_time;  // over successful trials
  double success_rate() const { return attempts ? double(successes) / attempts : 0.0; }
};

struct BenchResult {
  std::vector<TrialResult> trials;
  std::vector<CellSummary> cells;
  int attempts = 0;
  int successes = 0;
  double success_rate() const { return attempts ? double(successes) / attempts : 0.0; }
};

/// Builds the tracker a config asks for; learned mode needs a model.
GraspTracker make_tracker(const ExperimentConfig& cfg,
                          std::shared_ptr<const TrackerModel<float>> model);

BenchResult run_experiment(const ExperimentConfig& cfg,
                           std::shared_ptr<const TrackerModel<float>> model = nullptr);
BenchResult run_one_motion(const ExperimentConfig& cfg,
                           std::shared_ptr<const TrackerModel<float>> model = nullptr);
BenchResult run_motion_continuous(const ExperimentConfig& cfg,
                                  std::shared_ptr<const TrackerModel<float>> model = nullptr);

/// summary.tsv, summary.json and trials.tsv with fixed formatting.
void write_results(const std::string& dir, const ExperimentConfig& cfg, const BenchResult& result);
std::string summary_tsv(const BenchResult& result);
std::string trials_tsv(const BenchResult& result);
Json summary_json(const ExperimentConfig& cfg, const BenchResult& result);

}  // namespace handover
