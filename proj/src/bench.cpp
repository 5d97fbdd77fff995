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

#include "handover/bench.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string_view>

namespace handover {

const char* to_string(Protocol protocol) {
  return protocol == Protocol::kOneMotion ? "one_motion" : "motion_continuous";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "one_motion") return Protocol::kOneMotion;
  if (name == "motion_continuous") return Protocol::kMotionContinuous;
  throw std::invalid_argument("unknown protocol '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (objects.empty()) throw std::invalid_argument("experiment needs at least one object");
  if (seeds.empty()) throw std::invalid_argument("experiment needs explicit seeds");
  if (successes_required < 1) throw std::invalid_argument("successes_required must be >= 1");
  if (max_trials < successes_required) {
    throw std::invalid_argument("max_trials must be >= successes_required");
  }
  if (!(trial_timeout > 0.0)) throw std::invalid_argument("trial_timeout must be positive");
  if (mode == TrackerMode::kLearned && tracker.candidates < 1) {
    throw std::invalid_argument("learned mode needs a candidate count");
  }
  motion.validate();
  noise.validate();
  tracker.validate();
  fsm.validate();
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

Vector3d vec3(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json vec3_json(const Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

void read_fsm(const Json& j, FsmConfig& f) {
  f.reinit_threshold = j.value("reinit_threshold", f.reinit_threshold);
  f.search_threshold = j.value("search_threshold", f.search_threshold);
  f.waiting_threshold = j.value("waiting_threshold", f.waiting_threshold);
  f.z_offset = j.value("z_offset", f.z_offset);
  f.descend_radius = j.value("descend_radius", f.descend_radius);
  f.trigger_dist = j.value("trigger_dist", f.trigger_dist);
  f.trigger_angle_deg = j.value("trigger_angle_deg", f.trigger_angle_deg);
  f.gripper_close_time = j.value("gripper_close_time", f.gripper_close_time);
  f.control_rate = j.value("control_rate", f.control_rate);
  f.place_time = j.value("place_time", f.place_time);
  f.camera_half_fov_deg = j.value("camera_half_fov_deg", f.camera_half_fov_deg);
  if (j.contains("limits")) {
    const Json& l = j["limits"];
    f.limits.v_max = l.value("v_max", f.limits.v_max);
    f.limits.a_max = l.value("a_max", f.limits.a_max);
    f.limits.omega_max_deg = l.value("omega_max_deg", f.limits.omega_max_deg);
  }
  if (j.contains("success")) {
    const Json& s = j["success"];
    f.success.distance = s.value("distance", f.success.distance);
    f.success.angle_deg = s.value("angle_deg", f.success.angle_deg);
    f.success.min_quality = s.value("min_quality", f.success.min_quality);
    f.success.slip_speed = s.value("slip_speed", f.success.slip_speed);
  }
  if (j.contains("filter")) {
    const Json& w = j["filter"];
    if (w.contains("box_min")) f.filter.box_min = vec3(w["box_min"]);
    if (w.contains("box_max")) f.filter.box_max = vec3(w["box_max"]);
    f.filter.min_score = w.value("min_score", f.filter.min_score);
    f.filter.max_approach_deg = w.value("max_approach_deg", f.filter.max_approach_deg);
  }
}

Json fsm_json(const FsmConfig& f) {
  return Json{{"reinit_threshold", f.reinit_threshold},
              {"search_threshold", f.search_threshold},
              {"waiting_threshold", f.waiting_threshold},
              {"z_offset", f.z_offset},
              {"descend_radius", f.descend_radius},
              {"trigger_dist", f.trigger_dist},
              {"trigger_angle_deg", f.trigger_angle_deg},
              {"gripper_close_time", f.gripper_close_time},
              {"control_rate", f.control_rate},
              {"place_time", f.place_time},
              {"camera_half_fov_deg", f.camera_half_fov_deg},
              {"limits",
               {{"v_max", f.limits.v_max},
                {"a_max", f.limits.a_max},
                {"omega_max_deg", f.limits.omega_max_deg}}},
              {"success",
               {{"distance", f.success.distance},
                {"angle_deg", f.success.angle_deg},
                {"min_quality", f.success.min_quality},
                {"slip_speed", f.success.slip_speed}}},
              {"filter",
               {{"box_min", vec3_json(f.filter.box_min)},
                {"box_max", vec3_json(f.filter.box_max)},
                {"min_score", f.filter.min_score},
                {"max_approach_deg", f.filter.max_approach_deg}}}};
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
  ExperimentConfig c;
  c.protocol = protocol_from_string(j.value("protocol", std::string("motion_continuous")));
  if (j.contains("objects")) {
    for (const auto& o : j["objects"]) c.objects.push_back(object_from_json(o));
  } else {
    c.objects = standard_archetypes();
  }
  if (j.contains("motion")) c.motion = script_from_json(j["motion"]);
  if (j.contains("noise")) c.noise = noise_from_json(j["noise"]);
  if (j.contains("tracker")) {
    const Json& t = j["tracker"];
    if (t.contains("mode")) c.mode = tracker_mode_from_string(t["mode"].get<std::string>());
    c.weights = t.value("weights", c.weights);
    c.p_min = t.value("p_min", c.p_min);
    TrackerConfig& k = c.tracker;
    k.feature_dim = t.value("feature_dim", k.feature_dim);
    k.frames = t.value("frames", k.frames);
    k.candidates = t.value("candidates", k.candidates);
    k.encoder_layers = t.value("encoder_layers", k.encoder_layers);
    k.decoder_layers = t.value("decoder_layers", k.decoder_layers);
    k.heads = t.value("heads", k.heads);
    k.ffn_dim = t.value("ffn_dim", k.ffn_dim);
    k.dropout_prob = t.value("dropout_prob", k.dropout_prob);
    k.tolerance = t.value("tolerance", k.tolerance);
  }
  c.prediction = j.value("prediction", c.prediction);
  if (j.contains("predictor")) {
    const Json& p = j["predictor"];
    PredictorParams& q = c.fsm.predictor;
    q.stability = p.value("stability", q.stability);
    q.perturbation = p.value("perturbation", q.perturbation);
    q.lambda_opposite = p.value("lambda_opposite", q.lambda_opposite);
    q.lambda_parallel = p.value("lambda_parallel", q.lambda_parallel);
    q.max_history = p.value("max_history", q.max_history);
  }
  if (j.contains("fsm")) read_fsm(j["fsm"], c.fsm);
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    c.seeds.clear();
    if (s.is_array()) {
      for (const auto& v : s) c.seeds.push_back(v.get<std::uint64_t>());
    } else {
      const auto start = s.at("start").get<std::uint64_t>();
      const auto count = s.at("count").get<std::uint64_t>();
      for (std::uint64_t i = 0; i < count; ++i) c.seeds.push_back(start + i);
    }
  }
  if (j.contains("stop_rule")) {
    const Json& r = j["stop_rule"];
    const std::string kind = r.value("kind", std::string("until_successes"));
    if (kind == "until_successes") {
      c.stop_rule = StopRule::kUntilSuccesses;
    } else if (kind == "fixed") {
      c.stop_rule = StopRule::kFixed;
    } else {
      throw std::invalid_argument("unknown stop rule '" + kind + "'");
    }
    c.successes_required = r.value("successes_required", c.successes_required);
    c.max_trials = r.value("max_trials", c.max_trials);
  }
  c.trial_timeout = j.value("trial_timeout", c.trial_timeout);
  c.start_spread = j.value("start_spread", c.start_spread);
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json objects = Json::array();
  for (const auto& o : c.objects) objects.push_back(o.id);
  const TrackerConfig& k = c.tracker;
  const PredictorParams& q = c.fsm.predictor;
  return Json{
      {"protocol", to_string(c.protocol)},
      {"objects", objects},
      {"motion", to_json(c.motion)},
      {"noise", to_json(c.noise)},
      {"tracker",
       {{"mode", to_string(c.mode)},
        {"weights", c.weights},
        {"p_min", c.p_min},
        {"feature_dim", k.feature_dim},
        {"frames", k.frames},
        {"candidates", k.candidates},
        {"encoder_layers", k.encoder_layers},
        {"decoder_layers", k.decoder_layers},
        {"heads", k.heads},
        {"ffn_dim", k.ffn_dim},
        {"dropout_prob", k.dropout_prob},
        {"tolerance", k.tolerance}}},
      {"prediction", c.prediction},
      {"predictor",
       {{"stability", q.stability},
        {"perturbation", q.perturbation},
        {"lambda_opposite", q.lambda_opposite},
        {"lambda_parallel", q.lambda_parallel},
        {"max_history", q.max_history}}},
      {"fsm", fsm_json(c.fsm)},
      {"seeds", c.seeds},
      {"stop_rule",
       {{"kind", c.stop_rule == StopRule::kFixed ? "fixed" : "until_successes"},
        {"successes_required", c.successes_required},
        {"max_trials", c.max_trials}}},
      {"trial_timeout", c.trial_timeout},
      {"start_spread", c.start_spread}};
}

// ---------------------------------------------------------------------------
// Trials

TrialResult run_trial(const TrialSpec& spec, HandoverController& controller, double timeout,
                      int candidates, TrialTrace* trace) {
  if (spec.object == nullptr) throw std::invalid_argument("trial needs an object");
  controller.reset();
  const FsmConfig& fsm = controller.config();
  const double dt = fsm.dt();
  NoiseConfig noise = spec.noise;
  noise.seed = mix_seed(spec.seed, 0x401);
  const int max_ticks = static_cast<int>(std::ceil(timeout / dt - 1e-9));

  TrialResult r;
  r.object_id = spec.object->id;
  r.pattern = spec.pattern;
  r.seed = spec.seed;
  r.attempt = spec.attempt;

  double motion_start = -1.0;
  double trigger_time = -1.0;
  std::vector<Vector3d> positions{controller.robot().ee_pose.translation};
  std::vector<double> anchor_distance;

  auto clock = [&](double t) {
    if (!spec.clock_from_motion_start) return t;
    return motion_start < 0.0 ? 0.0 : t - motion_start;
  };

  for (int k = 0; k < max_ticks; ++k) {
    const double t = k * dt;
    const double c = clock(t);
    const Pose object_pose = script_object_pose(spec.script, c);
    const Pose before = script_object_pose(spec.script, std::max(0.0, c - dt));
    const double speed = (object_pose.translation - before.translation).norm() / dt;

    FrameObservation obs;
    if (object_in_view(controller.robot().ee_pose, object_pose, spec.object->extent, fsm)) {
      obs = detect_candidates(*spec.object, object_pose, noise, candidates, k, t);
    } else {
      obs.frame_index = k;
      obs.timestamp = t;
      obs.true_object_pose = object_pose;
    }
    const TickDiagnostics d = controller.step(obs, WorldTruth{spec.object, object_pose, speed});
    positions.push_back(controller.robot().ee_pose.translation);
    r.ticks = k + 1;
    if (trace != nullptr) {
      trace->ticks.push_back(d);
      trace->object_poses.push_back(object_pose);
      trace->commands.push_back(controller.robot());
    }

    if (motion_start < 0.0 && d.phase == HandoverPhase::kTracking) motion_start = t;
    if (d.tracked) {
      if (!r.first_anchor) {
        r.first_anchor = d.tracked;
        r.first_anchor_object_pose = object_pose;
      }
      anchor_distance.push_back(object_frame_distance(*d.tracked, object_pose, *r.first_anchor,
                                                      *r.first_anchor_object_pose));
    }
    if (d.triggered && trigger_time < 0.0) {
      trigger_time = t;
      r.triggered = true;
      r.approach_time = t - motion_start;
    }
    if (d.success.has_value()) {
      r.success = *d.success;
      break;
    }
    if (d.phase == HandoverPhase::kReady && d.previous != HandoverPhase::kReady) break;
  }

  if (positions.size() >= 4) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 3 < positions.size(); ++i) {
      const Vector3d jerk =
          (positions[i + 3] - 3.0 * positions[i + 2] + 3.0 * positions[i + 1] - positions[i]) /
          (dt * dt * dt);
      sum += jerk.norm();
    }
    r.smoothness = sum / static_cast<double>(positions.size() - 3);
  }
  if (!anchor_distance.empty()) r.quality_consistency = summarize(anchor_distance).std;
  return r;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t trial_seed(std::uint64_t seed, const std::string& object, const std::string& pattern,
                         int attempt) {
  return mix_seed(mix_seed(seed, fnv1a(object)), fnv1a(pattern) + static_cast<std::uint64_t>(attempt));
}

}  // namespace

MotionScript make_script(const ExperimentConfig& cfg, const std::string& pattern,
                         std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5c));
  MotionScript s = cfg.motion;
  s.seed = mix_seed(seed, 0x5d);
  const double spread = cfg.start_spread;
  s.start_x = rng.uniform(-spread, spread);
  s.start_y = rng.uniform(-spread, spread);
  s.start_yaw_deg = rng.uniform(-30.0, 30.0);
  if (pattern == "rotation") {
    s.kind = MotionKind::kOneMotionRotation;
    s.rotation_deg = rng.uniform(0.0, 60.0);
  } else if (pattern == "translation") {
    s.kind = MotionKind::kOneMotionTranslation;
    s.translation_m = rng.uniform(0.0, 0.2);
    s.direction_deg = rng.uniform(0.0, 360.0);
  } else {
    s.kind = motion_kind_from_string(pattern);
    if (s.kind == MotionKind::kLinear) {
      s.direction_deg = rng.uniform(0.0, 360.0);
      s.speed_limit = cfg.motion.speed_limit * rng.uniform(0.4, 0.8);
    }
  }
  s.validate();
  return s;
}

std::vector<std::string> protocol_patterns(const ExperimentConfig& cfg) {
  if (cfg.protocol == Protocol::kOneMotion) {
    if (cfg.motion.kind == MotionKind::kStatic) return {"static"};
    return {"rotation", "translation"};
  }
  return {to_string(cfg.motion.kind)};
}

Aggregate summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("cannot summarize an empty sample");
  Aggregate a;
  a.n = static_cast<int>(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / a.n;
  a.single = a.n == 1;
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (a.n - 1));
  }
  return a;
}

GraspTracker make_tracker(const ExperimentConfig& cfg,
                          std::shared_ptr<const TrackerModel<float>> model) {
  if (cfg.mode == TrackerMode::kLearned && !model) {
    throw std::invalid_argument("learned tracker mode needs trained weights");
  }
  return GraspTracker(cfg.mode, cfg.mode == TrackerMode::kLearned ? std::move(model) : nullptr,
                      cfg.p_min);
}

namespace {

BenchResult run_cells(const ExperimentConfig& cfg, std::shared_ptr<const TrackerModel<float>> model,
                      bool clock_from_motion_start) {
  cfg.validate();
  FsmConfig fsm = cfg.fsm;
  fsm.prediction = cfg.prediction;
  const std::vector<std::string> patterns = protocol_patterns(cfg);

  BenchResult out;
  std::map<std::pair<std::string, std::string>, std::size_t> cell_index;
  auto cell = [&](const std::string& object, const std::string& pattern) -> CellSummary& {
    const auto key = std::make_pair(object, pattern);
    auto it = cell_index.find(key);
    if (it == cell_index.end()) {
      it = cell_index.emplace(key, out.cells.size()).first;
      CellSummary c;
      c.object_id = object;
      c.pattern = pattern;
      out.cells.push_back(std::move(c));
    }
    return out.cells[it->second];
  };
  auto run = [&](const ObjectModel& object, const std::string& pattern, std::uint64_t seed,
                 int attempt) {
    TrialSpec spec;
    spec.object = &object;
    spec.pattern = pattern;
    spec.seed = trial_seed(seed, object.id, pattern, attempt);
    spec.attempt = attempt;
    spec.script = make_script(cfg, pattern, spec.seed);
    spec.noise = cfg.noise;
    spec.clock_from_motion_start = clock_from_motion_start;
    HandoverController controller(fsm, make_tracker(cfg, model));
    TrialResult r = run_trial(spec, controller, cfg.trial_timeout, cfg.tracker.candidates);
    CellSummary& c = cell(object.id, pattern);
    ++c.attempts;
    ++out.attempts;
    if (r.success) {
      ++c.successes;
      ++out.successes;
    }
    out.trials.push_back(r);
    return r.success;
  };

  if (cfg.stop_rule == StopRule::kFixed) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      const ObjectModel& object = cfg.objects[i % cfg.objects.size()];
      for (const auto& pattern : patterns) run(object, pattern, cfg.seeds[i], 0);
    }
  } else {
    for (const auto& object : cfg.objects) {
      for (const auto& pattern : patterns) {
        int successes = 0;
        int attempt = 0;
        while (successes < cfg.successes_required && attempt < cfg.max_trials) {
          successes += run(object, pattern, cfg.seeds.front(), attempt) ? 1 : 0;
          ++attempt;
        }
        cell(object.id, pattern).aborted = successes < cfg.successes_required;
      }
    }
  }

  for (auto& c : out.cells) {
    std::vector<double> times;
    for (const auto& t : out.trials) {
      if (t.success && t.object_id == c.object_id && t.pattern == c.pattern) {
        times.push_back(t.approach_time);
      }
    }
    if (!times.empty()) c.approach_time = summarize(times);
  }
  return out;
}

}  // namespace

BenchResult run_one_motion(const ExperimentConfig& cfg,
                           std::shared_ptr<const TrackerModel<float>> model) {
  if (cfg.protocol != Protocol::kOneMotion) throw std::invalid_argument("protocol is not one_motion");
  return run_cells(cfg, std::move(model), true);
}

BenchResult run_motion_continuous(const ExperimentConfig& cfg,
                                  std::shared_ptr<const TrackerModel<float>> model) {
  if (cfg.protocol != Protocol::kMotionContinuous) {
    throw std::invalid_argument("protocol is not motion_continuous");
  }
  return run_cells(cfg, std::move(model), false);
}

BenchResult run_experiment(const ExperimentConfig& cfg,
                           std::shared_ptr<const TrackerModel<float>> model) {
  return cfg.protocol == Protocol::kOneMotion ? run_one_motion(cfg, std::move(model))
                                              : run_motion_continuous(cfg, std::move(model));
}

// ---------------------------------------------------------------------------
// Result files

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string summary_tsv(const BenchResult& result) {
  std::string out =
      "object\tpattern\tattempts\tsuccesses\tsuccess_rate\tapproach_mean\tapproach_std\tn\t"
      "aborted\n";
  for (const auto& c : result.cells) {
    out += c.object_id + '\t' + c.pattern + '\t' + std::to_string(c.attempts) + '\t' +
           std::to_string(c.successes) + '\t' + fixed(c.success_rate()) + '\t';
    if (c.approach_time) {
      out += fixed(c.approach_time->mean) + '\t' + fixed(c.approach_time->std) + '\t' +
             std::to_string(c.approach_time->n) + (c.approach_time->single ? " (n=1)" : "");
    } else {
      out += "-\t-\t0";
    }
    out += std::string("\t") + (c.aborted ? "yes" : "no") + '\n';
  }
  out += "ALL\t-\t" + std::to_string(result.attempts) + '\t' + std::to_string(result.successes) +
         '\t' + fixed(result.success_rate()) + "\t-\t-\t-\t-\n";
  return out;
}

std::string trials_tsv(const BenchResult& result) {
  std::string out =
      "object\tpattern\tseed\tattempt\tsuccess\ttriggered\tapproach_time\tsmoothness\t"
      "quality_consistency\tticks\n";
  for (const auto& t : result.trials) {
    out += t.object_id + '\t' + t.pattern + '\t' + std::to_string(t.seed) + '\t' +
           std::to_string(t.attempt) + '\t' + (t.success ? "1" : "0") + '\t' +
           (t.triggered ? "1" : "0") + '\t' + fixed(t.approach_time) + '\t' +
           fixed(t.smoothness) + '\t' + fixed(t.quality_consistency, 6) + '\t' +
           std::to_string(t.ticks) + '\n';
  }
  return out;
}

Json summary_json(const ExperimentConfig& cfg, const BenchResult& result) {
  Json cells = Json::array();
  for (const auto& c : result.cells) {
    Json cell{{"object", c.object_id},
              {"pattern", c.pattern},
              {"attempts", c.attempts},
              {"successes", c.successes},
              {"success_rate", c.success_rate()},
              {"aborted", c.aborted}};
    if (c.approach_time) {
      cell["approach_time"] = {{"mean", c.approach_time->mean},
                               {"std", c.approach_time->std},
                               {"n", c.approach_time->n},
                               {"single", c.approach_time->single}};
    }
    cells.push_back(cell);
  }
  return Json{{"protocol", to_string(cfg.protocol)},
              {"mode", to_string(cfg.mode)},
              {"prediction", cfg.prediction},
              {"seeds", cfg.seeds},
              {"cells", cells},
              {"overall",
               {{"attempts", result.attempts},
                {"successes", result.successes},
                {"success_rate", result.success_rate()}}}};
}

void write_results(const std::string& dir, const ExperimentConfig& cfg, const BenchResult& result) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_text_file((base / "summary.tsv").string(), summary_tsv(result));
  write_text_file((base / "trials.tsv").string(), trials_tsv(result));
  write_text_file((base / "summary.json").string(), summary_json(cfg, result).dump(2) + "\n");
}

}  // namespace handover
