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

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <future>
#include <thread>

#include "doctest.h"
#include "handover/bridge.hpp"
#include "handover/bridge_server.hpp"

using namespace handover;

namespace {

BridgeConfig bridge_config() {
  BridgeConfig cfg;
  cfg.object = find_object(standard_archetypes(), "mug");
  cfg.noise = NoiseConfig::zero(3);
  cfg.mode = TrackerMode::kOracle;
  return cfg;
}

Json last_state(const std::vector<Outbound>& out) {
  REQUIRE_FALSE(out.empty());
  const Json j = Json::parse(out.back().frame);
  REQUIRE(j["kind"] == "state");
  return j;
}

}  // namespace

TEST_CASE("hello and state frames conform to the schema") {
  BridgeSession s(bridge_config());
  const Json hello = Json::parse(s.hello());
  CHECK_FALSE(schema_violation(hello).has_value());
  CHECK(hello["version"] == kBridgeProtocolVersion);
  for (int k = 0; k < 40; ++k) {
    for (const Outbound& o : s.tick()) {
      const auto why = schema_violation(Json::parse(o.frame));
      CHECK_MESSAGE(!why.has_value(), why.value_or(""));
    }
  }
}

TEST_CASE("schema rejects malformed frames") {
  CHECK(schema_violation(Json::array()).has_value());
  CHECK(schema_violation(Json{{"x", 1}}).has_value());
  CHECK(schema_violation(Json{{"kind", "drag"}, {"x", "left"}, {"y", 0}}).has_value());
  CHECK(schema_violation(Json{{"kind", "config"}, {"mode", "psychic"}}).has_value());
  CHECK(schema_violation(Json{{"kind", "config"}, {"prediction", 1}}).has_value());
  CHECK(schema_violation(Json{{"kind", "teleport"}}).has_value());
  CHECK(schema_violation(Json{{"kind", "hello"}, {"version", 2}}).has_value());
  CHECK_FALSE(schema_violation(Json{{"kind", "drag"}, {"x", 0.1}, {"y", 0.0}}).has_value());
  CHECK_FALSE(schema_violation(Json{{"kind", "reset"}}).has_value());
  CHECK_FALSE(schema_violation(Json{{"kind", "error"}, {"message", "m"}}).has_value());
}

TEST_CASE("drag targets are clamped to the workspace") {
  const WorkspaceBounds b;
  const PlanarTarget t = clamp_to_bounds({0.5, 0.0, 0.0}, b);
  CHECK(t.x == 0.3);
  CHECK(t.y == 0.0);
  const PlanarTarget u = clamp_to_bounds({-1.0, 0.4, -90.0}, b);
  CHECK(u.x == -0.3);
  CHECK(u.y == 0.15);
  CHECK(u.yaw_deg == -60.0);
}

TEST_CASE("without input the object holds its pose") {
  BridgeSession s(bridge_config());
  const Pose start = s.object_pose();
  for (int k = 0; k < 30; ++k) s.tick();
  CHECK((s.object_pose().translation - start.translation).norm() == 0.0);
  CHECK(rotation_geodesic(s.object_pose().rotation, start.rotation) == 0.0);
}

TEST_CASE("a drag shows up in the next state frame and the object follows at its speed limit") {
  const BridgeConfig cfg = bridge_config();
  BridgeSession s(cfg);
  for (int k = 0; k < 3; ++k) s.tick();
  const double x0 = s.object_pose().translation.x();
  s.enqueue(0, R"({"kind": "drag", "x": 0.5, "y": 0.0})");
  const Json state = last_state(s.tick());
  CHECK(state["object_target"]["x"] == 0.3);
  const double step = cfg.script.speed_limit * cfg.fsm.dt();
  CHECK(s.object_pose().translation.x() == doctest::Approx(x0 + step).epsilon(1e-12));
  for (int k = 0; k < 200; ++k) s.tick();
  CHECK(s.object_pose().translation.x() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("malformed input is answered with an error to the sender only") {
  BridgeSession s(bridge_config());
  s.enqueue(4, "{not json");
  s.enqueue(5, R"({"kind": "drag", "x": "far"})");
  s.enqueue(6, R"({"kind": "state"})");
  const auto out = s.tick();
  REQUIRE(out.size() == 4);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[i].client == 4 + i);
    const Json e = Json::parse(out[i].frame);
    CHECK(e["kind"] == "error");
    CHECK_FALSE(schema_violation(e).has_value());
  }
  CHECK(out[3].client == -1);
}

TEST_CASE("config switches prediction and replies with the effective values") {
  BridgeSession s(bridge_config());
  s.enqueue(1, R"({"kind": "config", "prediction": false})");
  const auto out = s.tick();
  REQUIRE(out.size() == 2);
  const Json reply = Json::parse(out[0].frame);
  CHECK(reply["kind"] == "config");
  CHECK(reply["prediction"] == false);
  CHECK(reply["mode"] == "oracle");
  s.enqueue(1, R"({"kind": "config", "mode": "learned"})");
  CHECK(Json::parse(s.tick()[0].frame)["kind"] == "error");
}

TEST_CASE("replaying the same inputs reproduces the same frames") {
  auto run = [] {
    BridgeSession s(bridge_config());
    std::vector<std::string> frames;
    for (int k = 0; k < 60; ++k) {
      if (k == 10) s.enqueue(0, R"({"kind": "drag", "x": 0.2, "y": 0.1, "yaw_deg": 30})");
      if (k == 40) s.enqueue(0, R"({"kind": "reset"})");
      for (auto& o : s.tick()) frames.push_back(o.frame);
    }
    return frames;
  };
  CHECK(run() == run());
}

TEST_CASE("a live session round-trips frames over a websocket") {
  namespace asio = boost::asio;
  namespace websocket = boost::beast::websocket;
  BridgeConfig cfg = bridge_config();
  cfg.fsm.control_rate = 30.0;
  BridgeSession session(cfg);

  std::promise<std::uint16_t> port_promise;
  ServeOptions options;
  options.port = 0;
  options.max_ticks = 90;
  options.on_listening = [&](std::uint16_t p) { port_promise.set_value(p); };
  std::thread server([&] { serve_session(session, options); });
  const std::uint16_t port = port_promise.get_future().get();

  asio::io_context io;
  asio::ip::tcp::socket socket(io);
  socket.connect({asio::ip::address_v4::loopback(), port});
  websocket::stream<asio::ip::tcp::socket> ws(std::move(socket));
  ws.handshake("127.0.0.1", "/");

  auto read = [&] {
    boost::beast::flat_buffer buf;
    ws.read(buf);
    return Json::parse(boost::beast::buffers_to_string(buf.data()));
  };
  const Json hello = read();
  CHECK(hello["kind"] == "hello");
  CHECK_FALSE(schema_violation(hello).has_value());

  ws.text(true);
  ws.write(asio::buffer(std::string(R"({"kind": "drag", "x": 0.1, "y": 0.05})")));
  ws.write(asio::buffer(std::string("oops")));
  bool saw_target = false, saw_error = false;
  int states = 0;
  for (int k = 0; k < 60 && !(saw_target && saw_error); ++k) {
    const Json f = read();
    CHECK_FALSE(schema_violation(f).has_value());
    if (f["kind"] == "error") saw_error = true;
    if (f["kind"] == "state") {
      ++states;
      saw_target = saw_target || f["object_target"]["x"] == 0.1;
    }
  }
  CHECK(saw_target);
  CHECK(saw_error);
  CHECK(states > 0);
  boost::beast::error_code ec;
  ws.close(websocket::close_code::normal, ec);
  server.join();
  CHECK(session.ticks() == 90);
}
