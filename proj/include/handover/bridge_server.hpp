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

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>

#include "handover/bridge.hpp"

namespace handover {

struct ServeOptions {
  std::uint16_t port = kDefaultBridgePort;  // 0 picks a free port
  long max_ticks = -1;                      // negative runs until stopped
  const std::atomic<bool>* stop = nullptr;
  std::function<void(std::uint16_t)> on_listening;
};

/// Runs the session over a websocket on one thread: frames from every client
/// feed the session queue, a steady timer ticks it at the control rate and
/// each state frame is sent to all connected clients. New clients get hello.
void serve_session(BridgeSession& session, const ServeOptions& options);

}  // namespace handover
