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

#include "handover/bridge.hpp"

#include <algorithm>
#include <cmath>

namespace handover {

namespace {

bool is_number(const Json& j, const char* key) {
  return j.contains(key) && j[key].is_number() && std::isfinite(j[key].get<double>());
}

std::optional<std::string> pose_violation(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_object()) return std::string(key) + " must be a pose";
  const Json& p = j[key];
  if (!p.contains("t") || !p["t"].is_array() || p["t"].size() != 3) {
    return std::string(key) + ".t must hold 3 numbers";
  }
  if (!p.contains("q") || !p["q"].is_array() || p["q"].size() != 4) {
    return std::string(key) + ".q must hold 4 numbers";
  }
  for (const auto& v : p["t"]) {
    if (!v.is_number()) return std::string(key) + ".t must hold 3 numbers";
  }
  for (const auto& v : p["q"]) {
    if (!v.is_number()) return std::string(key) + ".q must hold 4 numbers";
  }
  return std::nullopt;
}

bool is_phase(const std::string& s) {
  for (auto p : {HandoverPhase::kReady, HandoverPhase::kTracking, HandoverPhase::kSearch,
                 HandoverPhase::kGrasping, HandoverPhase::kPlacing}) {
    if (s == to_string(p)) return true;
  }
  return false;
}

bool is_gripper(const std::string& s) {
  return s == to_string(GripperState::kOpen) || s == to_string(GripperState::kClosing) ||
         s == to_string(GripperState::kClosed);
}

Json bounds_json(const WorkspaceBounds& b) {
  return Json{{"x_min", b.x_min},
              {"x_max", b.x_max},
              {"y_min", b.y_min},
              {"y_max", b.y_max},
              {"yaw_min_deg", b.yaw_min_deg},
              {"yaw_max_deg", b.yaw_max_deg}};
}

std::string error_frame(const std::string& message) {
  return Json{{"kind", "error"}, {"message", message}}.dump();
}

// Moves `value` toward `goal` by at most `step`.
double approach(double value, double goal, double step) {
  return value + std::clamp(goal - value, -step, step);
}

}  // namespace

std::optional<std::string> schema_violation(const Json& f) {
  if (!f.is_object()) return "frame must be an object";
  if (!f.contains("kind") || !f["kind"].is_string()) return "frame needs a string kind";
  const std::string kind = f["kind"].get<std::string>();
  if (kind == "hello") {
    if (!f.contains("version") || !f["version"].is_number_integer() ||
        f["version"].get<int>() != kBridgeProtocolVersion) {
      return "hello.version must be 1";
    }
    if (!is_number(f, "control_rate")) return "hello.control_rate must be a number";
    if (!f.contains("bounds") || !f["bounds"].is_object()) return "hello.bounds must be an object";
    for (const char* k : {"x_min", "x_max", "y_min", "y_max", "yaw_min_deg", "yaw_max_deg"}) {
      if (!is_number(f["bounds"], k)) return std::string("hello.bounds.") + k + " missing";
    }
    return std::nullopt;
  }
  if (kind == "state") {
    if (!f.contains("tick") || !f["tick"].is_number_integer() || f["tick"].get<long>() < 0) {
      return "state.tick must be a non-negative integer";
    }
    if (!is_number(f, "time")) return "state.time must be a number";
    if (!f.contains("phase") || !f["phase"].is_string() || !is_phase(f["phase"])) {
      return "state.phase is not a phase";
    }
    if (auto v = pose_violation(f, "object")) return v;
    if (auto v = pose_violation(f, "ee")) return v;
    if (!f.contains("object_target") || !f["object_target"].is_object()) {
      return "state.object_target must be an object";
    }
    for (const char* k : {"x", "y", "yaw_deg"}) {
      if (!is_number(f["object_target"], k)) return std::string("state.object_target.") + k;
    }
    if (!f.contains("tracked")) return "state.tracked missing";
    if (!f["tracked"].is_null()) {
      if (!f["tracked"].is_object()) return "state.tracked must be a grasp or null";
      if (auto v = pose_violation(f["tracked"], "pose")) return v;
      if (!is_number(f["tracked"], "width") || !is_number(f["tracked"], "score")) {
        return "state.tracked needs width and score";
      }
    }
    if (!f.contains("predicted")) return "state.predicted missing";
    if (!f["predicted"].is_null()) {
      Json wrap{{"predicted", f["predicted"]}};
      if (auto v = pose_violation(wrap, "predicted")) return v;
    }
    if (!f.contains("gripper") || !f["gripper"].is_string() || !is_gripper(f["gripper"])) {
      return "state.gripper is not a gripper state";
    }
    return std::nullopt;
  }
  if (kind == "drag") {
    if (!is_number(f, "x") || !is_number(f, "y")) return "drag needs numeric x and y";
    if (f.contains("yaw_deg") && !is_number(f, "yaw_deg")) return "drag.yaw_deg must be a number";
    return std::nullopt;
  }
  if (kind == "reset") return std::nullopt;
  if (kind == "config") {
    if (f.contains("prediction") && !f["prediction"].is_boolean()) {
      return "config.prediction must be a boolean";
    }
    if (f.contains("mode")) {
      if (!f["mode"].is_string()) return "config.mode must be a string";
      try {
        tracker_mode_from_string(f["mode"].get<std::string>());
      } catch (const std::invalid_argument&) {
        return "config.mode is not a tracker mode";
      }
    }
    return std::nullopt;
  }
  if (kind == "error") {
    if (!f.contains("message") || !f["message"].is_string()) return "error.message must be a string";
    return std::nullopt;
  }
  return "unknown kind '" + kind + "'";
}

PlanarTarget clamp_to_bounds(const PlanarTarget& t, const WorkspaceBounds& b) {
  return {std::clamp(t.x, b.x_min, b.x_max), std::clamp(t.y, b.y_min, b.y_max),
          std::clamp(t.yaw_deg, b.yaw_min_deg, b.yaw_max_deg)};
}

BridgeSession::BridgeSession(BridgeConfig cfg, std::shared_ptr<const TrackerModel<float>> model)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      controller_(cfg_.fsm, GraspTracker(cfg_.mode, model_, cfg_.p_min)) {
  cfg_.object.validate();
  cfg_.script.validate();
  cfg_.noise.validate();
  cfg_.fsm.validate();
  if (cfg_.mode == TrackerMode::kLearned && !model_) {
    throw std::invalid_argument("learned tracker mode needs trained weights");
  }
  restart();
}

void BridgeSession::restart() {
  controller_ = HandoverController(
      cfg_.fsm, GraspTracker(cfg_.mode, cfg_.mode == TrackerMode::kLearned ? model_ : nullptr,
                             cfg_.p_min));
  current_ = clamp_to_bounds({cfg_.script.start_x, cfg_.script.start_y, cfg_.script.start_yaw_deg},
                             cfg_.script.bounds);
  target_ = current_;
  object_pose_ = Pose(rotation_z(deg2rad(current_.yaw_deg)),
                      Vector3d(current_.x, current_.y, cfg_.script.height));
}

std::string BridgeSession::hello() const {
  return Json{{"kind", "hello"},
              {"version", kBridgeProtocolVersion},
              {"control_rate", cfg_.fsm.control_rate},
              {"bounds", bounds_json(cfg_.script.bounds)}}
      .dump();
}

std::string BridgeSession::config_frame() const {
  return Json{{"kind", "config"}, {"prediction", cfg_.fsm.prediction}, {"mode", to_string(cfg_.mode)}}
      .dump();
}

void BridgeSession::enqueue(int client, std::string frame) {
  inbox_.emplace_back(client, std::move(frame));
}

void BridgeSession::apply(int client, const std::string& text, std::vector<Outbound>& out) {
  Json f = Json::parse(text, nullptr, false);
  if (f.is_discarded()) {
    out.push_back({client, error_frame("frame is not valid JSON")});
    return;
  }
  if (auto why = schema_violation(f)) {
    out.push_back({client, error_frame(*why)});
    return;
  }
  const std::string kind = f["kind"].get<std::string>();
  if (kind == "drag") {
    const double yaw = f.contains("yaw_deg") ? f["yaw_deg"].get<double>() : target_.yaw_deg;
    target_ = clamp_to_bounds({f["x"].get<double>(), f["y"].get<double>(), yaw}, cfg_.script.bounds);
  } else if (kind == "reset") {
    restart();
  } else if (kind == "config") {
    if (f.contains("mode")) {
      const TrackerMode mode = tracker_mode_from_string(f["mode"].get<std::string>());
      if (mode == TrackerMode::kLearned && !model_) {
        out.push_back({client, error_frame("no trained weights loaded")});
        return;
      }
      cfg_.mode = mode;
    }
    if (f.contains("prediction")) cfg_.fsm.prediction = f["prediction"].get<bool>();
    restart();
    out.push_back({client, config_frame()});
  } else {
    out.push_back({client, error_frame("kind '" + kind + "' is server-to-client only")});
  }
}

std::vector<Outbound> BridgeSession::tick() {
  std::vector<Outbound> out;
  while (!inbox_.empty()) {
    auto [client, text] = std::move(inbox_.front());
    inbox_.pop_front();
    apply(client, text, out);
  }

  const double dt = cfg_.fsm.dt();
  const Vector3d before = object_pose_.translation;
  const Eigen::Vector2d delta(target_.x - current_.x, target_.y - current_.y);
  const double reach = cfg_.script.speed_limit * dt;
  if (delta.norm() <= reach) {
    current_.x = target_.x;
    current_.y = target_.y;
  } else {
    current_.x += delta.x() * reach / delta.norm();
    current_.y += delta.y() * reach / delta.norm();
  }
  current_.yaw_deg =
      approach(current_.yaw_deg, target_.yaw_deg, cfg_.script.angular_speed_limit_deg * dt);
  current_ = clamp_to_bounds(current_, cfg_.script.bounds);
  object_pose_ = Pose(rotation_z(deg2rad(current_.yaw_deg)),
                      Vector3d(current_.x, current_.y, cfg_.script.height));

  const double t = tick_ * dt;
  FrameObservation obs;
  if (object_in_view(controller_.robot().ee_pose, object_pose_, cfg_.object.extent, cfg_.fsm)) {
    obs = detect_candidates(cfg_.object, object_pose_, cfg_.noise, cfg_.candidates, tick_, t);
  } else {
    obs.frame_index = tick_;
    obs.timestamp = t;
    obs.true_object_pose = object_pose_;
  }
  const double speed = (object_pose_.translation - before).norm() / dt;
  const TickDiagnostics d = controller_.step(obs, WorldTruth{&cfg_.object, object_pose_, speed});

  Json state{{"kind", "state"},
             {"tick", tick_},
             {"time", t},
             {"phase", to_string(d.phase)},
             {"object", to_json(object_pose_)},
             {"object_target", {{"x", target_.x}, {"y", target_.y}, {"yaw_deg", target_.yaw_deg}}},
             {"ee", to_json(controller_.robot().ee_pose)},
             {"tracked", d.tracked ? to_json(*d.tracked) : Json(nullptr)},
             {"predicted", d.predicted ? to_json(*d.predicted) : Json(nullptr)},
             {"gripper", to_string(controller_.robot().gripper)}};
  out.push_back({-1, state.dump()});
  ++tick_;
  return out;
}

}  // namespace handover
