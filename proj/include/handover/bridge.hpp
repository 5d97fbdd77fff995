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

// Transport-free session logic behind the live websocket. Frames are single
// JSON objects with a "kind" field:
//
//   hello   server → client  {version, control_rate, bounds}
//   state   server → client  {tick, time, phase, object, object_target, ee,
//                             tracked, predicted, gripper}
//   drag    client → server  {x, y, yaw_deg?}
//   reset   client → server  {}
//   config  both directions  {prediction?, mode?}; the server answers with the
//                            effective values
//   error   server → client  {message}

#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "handover/fsm.hpp"
#include "handover/io.hpp"

namespace handover {

inline constexpr int kBridgeProtocolVersion = 1;
inline constexpr int kDefaultBridgePort = 8790;

/// Empty when the frame conforms to the schema of its kind, else the reason.
std::optional<std::string> schema_violation(const Json& frame);

struct PlanarTarget {
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;
};

PlanarTarget clamp_to_bounds(const PlanarTarget& target, const WorkspaceBounds& bounds);

struct BridgeConfig {
  ObjectModel object;
  MotionScript script;  // start pose, bounds and speed limits of the dragged object
  NoiseConfig noise;
  FsmConfig fsm;
  TrackerMode mode = TrackerMode::kBaseline;
  double p_min = -1.0;
  int candidates = 48;
};

/// A frame for one client, or for every client when client < 0.
struct Outbound {
  int client = -1;
  std::string frame;
};

/// Owns the simulation. Inputs are queued by enqueue() and applied in arrival
/// order at the start of the next tick(); nothing else mutates the session.
class BridgeSession {
 public:
  explicit BridgeSession(BridgeConfig cfg,
                         std::shared_ptr<const TrackerModel<float>> model = nullptr);

  std::string hello() const;
  void enqueue(int client, std::string frame);

  /// Drains the queue, advances the object and the controller by one control
  /// period and returns replies followed by the broadcast state frame.
  std::vector<Outbound> tick();

  int ticks() const { return tick_; }
  const Pose& object_pose() const { return object_pose_; }
  const PlanarTarget& object_target() const { return target_; }
  const HandoverController& controller() const { return controller_; }

 private:
  void restart();
  void apply(int client, const std::string& text, std::vector<Outbound>& out);
  std::string config_frame() const;

  BridgeConfig cfg_;
  std::shared_ptr<const TrackerModel<float>> model_;
  HandoverController controller_;
  std::deque<std::pair<int, std::string>> inbox_;
  PlanarTarget current_;
  PlanarTarget target_;
  Pose object_pose_;
  int tick_ = 0;
};

}  // namespace handover
