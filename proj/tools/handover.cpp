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

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "handover/bench.hpp"
#include "handover/bridge_server.hpp"
#include "handover/trainer.hpp"

using namespace handover;

namespace {

std::atomic<bool> g_stop{false};

std::shared_ptr<const TrackerModel<float>> load_model(const TrackerConfig& cfg,
                                                      const std::string& path) {
  auto model = std::make_shared<TrackerModel<float>>(cfg, 0);
  load_weights(path, *model);
  return model;
}

int run_bench(const std::string& config_path, const std::string& out, const std::string& mode,
              const std::string& prediction, long seed, const std::string& weights) {
  ExperimentConfig cfg = experiment_from_json(read_json_file(config_path));
  if (!mode.empty()) cfg.mode = tracker_mode_from_string(mode);
  if (!prediction.empty()) cfg.prediction = prediction == "on";
  if (seed >= 0) {
    const std::size_t n = cfg.seeds.size();
    cfg.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(static_cast<std::uint64_t>(seed) + i);
  }
  if (!weights.empty()) cfg.weights = weights;
  std::shared_ptr<const TrackerModel<float>> model;
  if (cfg.mode == TrackerMode::kLearned) {
    if (cfg.weights.empty()) throw std::invalid_argument("learned mode needs --weights or tracker.weights");
    model = load_model(cfg.tracker, cfg.weights);
  }
  const BenchResult result = run_experiment(cfg, model);
  write_results(out, cfg, result);
  std::cout << summary_tsv(result);
  return 0;
}

int run_train(int epochs, double lr, int batch, std::uint64_t seed, int slices, int eval_slices,
              const std::string& out) {
  const auto objects = standard_archetypes();
  DatasetConfig data_cfg;
  data_cfg.slices = slices;
  data_cfg.seed = seed;
  const std::vector<TimeSlice> data = generate_dataset(objects, data_cfg);
  DatasetConfig eval_cfg = data_cfg;
  eval_cfg.slices = eval_slices;
  eval_cfg.seed = mix_seed(seed, 0xe7a1);
  const std::vector<TimeSlice> held_out = generate_dataset(objects, eval_cfg);

  TrackerConfig tracker;
  TrackerModel<float> model(tracker, seed);
  TrainConfig train_cfg;
  train_cfg.epochs = epochs;
  train_cfg.learning_rate = lr;
  train_cfg.batch_size = batch;
  train_cfg.seed = seed;
  train(model, data, train_cfg, [](int epoch, double loss) {
    std::fprintf(stderr, "epoch %d\tloss %.6f\n", epoch, loss);
  });
  const AccuracyReport acc = evaluate_accuracy(model, held_out, tracker.tolerance);
  std::printf("held_out\t%d\nlearned_accuracy\t%.4f\nbaseline_accuracy\t%.4f\n", acc.slices,
              acc.learned(), acc.baseline());
  save_weights(out, model);
  return 0;
}

int run_simulate(const std::string& script_path, const std::string& object_id,
                 const std::string& mode, const std::string& weights, bool prediction, bool ui,
                 int port, double timeout, std::uint64_t seed) {
  const Json j = read_json_file(script_path);
  std::vector<ObjectModel> objects = standard_archetypes();
  MotionScript script;
  if (j.contains("scripts") || j.contains("objects")) {
    SceneFile scene = scene_from_json(j);
    if (!scene.objects.empty()) objects = scene.objects;
    if (!scene.scripts.empty()) script = scene.scripts.front();
  } else {
    script = script_from_json(j);
  }
  const ObjectModel& object = object_id.empty() ? objects.front() : find_object(objects, object_id);

  FsmConfig fsm;
  fsm.prediction = prediction;
  const TrackerMode tracker_mode = tracker_mode_from_string(mode);
  std::shared_ptr<const TrackerModel<float>> model;
  if (!weights.empty()) model = load_model(TrackerConfig{}, weights);
  if (tracker_mode == TrackerMode::kLearned && !model) {
    throw std::invalid_argument("learned mode needs --weights");
  }
  NoiseConfig noise;
  noise.seed = seed;

  if (ui) {
    BridgeConfig bridge;
    bridge.object = object;
    bridge.script = script;
    bridge.noise = noise;
    bridge.fsm = fsm;
    bridge.mode = tracker_mode;
    BridgeSession session(bridge, model);
    ServeOptions options;
    options.port = static_cast<std::uint16_t>(port);
    options.stop = &g_stop;
    options.on_listening = [](std::uint16_t p) {
      std::fprintf(stderr, "listening on ws://127.0.0.1:%u\n", static_cast<unsigned>(p));
    };
    std::signal(SIGINT, [](int) { g_stop = true; });
    serve_session(session, options);
    return 0;
  }

  HandoverController controller(fsm, GraspTracker(tracker_mode, model));
  TrialSpec spec;
  spec.object = &object;
  spec.pattern = to_string(script.kind);
  spec.script = script;
  spec.noise = noise;
  spec.seed = seed;
  TrialTrace trace;
  const TrialResult r = run_trial(spec, controller, timeout, TrackerConfig{}.candidates, &trace);
  std::cout << event_log_header() << '\n';
  for (const auto& d : trace.ticks) std::cout << format_event(d) << '\n';
  std::fprintf(stderr, "success %d\ttriggered %d\tapproach_time %.4f\tticks %d\n", r.success ? 1 : 0,
               r.triggered ? 1 : 0, r.approach_time, r.ticks);
  return r.success ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reactive grasp handover: tracker training, benchmark and live session"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "Run a benchmark protocol from a config file");
  std::string config_path, out_dir, mode, prediction, weights;
  long seed = -1;
  bench->add_option("--config", config_path, "Experiment config (JSON)")->required();
  bench->add_option("--out", out_dir, "Output directory")->required();
  bench->add_option("--mode", mode, "Tracker mode")
      ->check(CLI::IsMember({"learned", "baseline", "oracle"}));
  bench->add_option("--prediction", prediction, "Grasp prediction")->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--seed", seed, "First seed; replaces the configured seed list");
  bench->add_option("--weights", weights, "Tracker weights for learned mode");

  auto* trainer = app.add_subcommand("train", "Train the grasp tracker on synthetic slices");
  int epochs = 20, batch = 4, slices = 2000, eval_slices = 500;
  double lr = 1e-4;
  std::uint64_t train_seed = 1;
  std::string weights_out = "tracker.bin";
  trainer->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  trainer->add_option("--lr", lr)->check(CLI::PositiveNumber);
  trainer->add_option("--batch", batch)->check(CLI::PositiveNumber);
  trainer->add_option("--seed", train_seed);
  trainer->add_option("--slices", slices, "Training slices")->check(CLI::PositiveNumber);
  trainer->add_option("--eval-slices", eval_slices, "Held-out slices")->check(CLI::PositiveNumber);
  trainer->add_option("--out", weights_out, "Weights file");

  auto* simulate = app.add_subcommand("simulate", "Run one scripted trial or a live session");
  std::string script_path, object_id, sim_mode = "baseline", sim_weights, sim_prediction = "on";
  bool ui = false;
  int port = kDefaultBridgePort;
  double timeout = 20.0;
  std::uint64_t sim_seed = 1;
  simulate->add_option("--script", script_path, "Motion script or scene file (JSON)")->required();
  simulate->add_option("--object", object_id, "Object id");
  simulate->add_option("--mode", sim_mode)->check(CLI::IsMember({"learned", "baseline", "oracle"}));
  simulate->add_option("--weights", sim_weights);
  simulate->add_option("--prediction", sim_prediction)->check(CLI::IsMember({"on", "off"}));
  simulate->add_flag("--ui", ui, "Serve the live session over a websocket");
  simulate->add_option("--port", port)->check(CLI::Range(0, 65535));
  simulate->add_option("--timeout", timeout, "Trial timeout in seconds")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*bench) return run_bench(config_path, out_dir, mode, prediction, seed, weights);
    if (*trainer) return run_train(epochs, lr, batch, train_seed, slices, eval_slices, weights_out);
    if (*simulate) {
      return run_simulate(script_path, object_id, sim_mode, sim_weights, sim_prediction == "on", ui,
                          port, timeout, sim_seed);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
