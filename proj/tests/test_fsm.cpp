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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "generators.hpp"
#include "handover/fsm.hpp"

using namespace handover;
using namespace handover::testing;

namespace {

constexpr double kDt = 1.0 / 6.0;

struct Rig {
  std::vector<ObjectModel> objects = standard_archetypes();
  const ObjectModel& object = objects.front();
  Pose object_pose = Pose(Matrix3d::Identity(), Vector3d(0.0, 0.0, 0.25));
  HandoverController controller{FsmConfig{}, GraspTracker(TrackerMode::kOracle)};
  int frame = 0;

  TickDiagnostics seen() {
    const auto obs = detect_candidates(object, object_pose, NoiseConfig::zero(), 48, frame++);
    return controller.step(obs, {&object, object_pose, 0.0});
  }
  TickDiagnostics lost() { return controller.step(FrameObservation{}, {&object, object_pose, 0.0}); }
};

}  // namespace

TEST_CASE("trajectory generator holds still at its target") {
  const AxisState s = axis_step({0.3, 0.0}, 0.3, 0.25, 1.0, kDt);
  CHECK(s.position == 0.3);
  CHECK(s.velocity == 0.0);
  RobotState r;
  r.ee_pose = Pose(top_down_rotation(0.4), Vector3d(0.1, 0.2, 0.3));
  const RobotState n = otg_step(r, r.ee_pose, kDt);
  CHECK((n.ee_pose.translation - r.ee_pose.translation).norm() == 0.0);
  CHECK(n.ee_velocity.norm() == 0.0);
}

TEST_CASE("triangular profile reaches 0.2 m in 2√(d/a)") {
  const double expected = 2.0 * std::sqrt(0.2 / 1.0);
  CHECK(rest_to_rest_time(0.2, 1e6, 1.0) == doctest::Approx(expected).epsilon(1e-15));
  AxisState s;
  int ticks = 0;
  while (s.position != 0.2 && ticks < 100) {
    s = axis_step(s, 0.2, 1e6, 1.0, kDt);
    ++ticks;
  }
  CHECK(ticks * kDt >= expected - 1e-12);
  CHECK(ticks * kDt <= expected + kDt);
}

TEST_CASE("rest-to-rest time matches the simulated profile on both regimes") {
  Rng rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    const double d = rng.uniform(0.001, 0.8);
    const double v = rng.uniform(0.05, 0.5);
    const double a = rng.uniform(0.3, 3.0);
    const double dt = 1.0 / 120.0;
    AxisState s;
    int ticks = 0;
    while (s.position != d && ticks < 100000) {
      s = axis_step(s, d, v, a, dt);
      ++ticks;
    }
    const double closed = d < v * v / a ? 2.0 * std::sqrt(d / a) : d / v + v / a;
    CHECK(rest_to_rest_time(d, v, a) == doctest::Approx(closed).epsilon(1e-15));
    CHECK(ticks * dt >= closed - 1e-9);
    CHECK(ticks * dt <= closed + dt + 1e-9);
  }
}

TEST_CASE("random retargeting never exceeds the acceleration or speed limit") {
  Rng rng(72);
  RobotState r;
  r.ee_pose = Pose(top_down_rotation(0.0), Vector3d(0.0, 0.0, 0.5));
  Pose target = r.ee_pose;
  double max_accel = 0.0, max_speed = 0.0, max_turn = 0.0;
  for (int k = 0; k < 10000; ++k) {
    if (rng.bernoulli(0.3)) {
      target = Pose(random_rotation(rng), Vector3d(0.0, 0.0, 0.5) + random_vector(rng, 0.4));
    }
    const RobotState n = otg_step(r, target, kDt);
    for (int a = 0; a < 3; ++a) {
      max_accel = std::max(max_accel, std::abs(n.ee_velocity[a] - r.ee_velocity[a]) / kDt);
      max_speed = std::max(max_speed, std::abs(n.ee_velocity[a]));
      // Commanded displacement is consistent with the speed bound too.
      CHECK(std::abs(n.ee_pose.translation[a] - r.ee_pose.translation[a]) <=
            r.limits.v_max * kDt + 1e-9);
    }
    max_turn = std::max(max_turn, rotation_geodesic(n.ee_pose.rotation, r.ee_pose.rotation) / kDt);
    r = n;
  }
  CHECK(max_accel <= r.limits.a_max + 1e-9);
  CHECK(max_speed <= r.limits.v_max + 1e-9);
  CHECK(max_turn <= deg2rad(r.limits.omega_max_deg) + 1e-9);
}

TEST_CASE("grasp success at an annotation and at the tolerance boundary") {
  const auto objects = standard_archetypes();
  const ObjectModel& object = objects.front();
  const Pose object_pose(rotation_z(0.5), Vector3d(0.1, 0.0, 0.25));
  const Annotation* good = nullptr;
  for (const auto& a : object.annotations) {
    if (a.base_quality >= 0.5) {
      good = &a;
      break;
    }
  }
  REQUIRE(good != nullptr);
  RobotState r;
  r.gripper = GripperState::kClosed;
  r.ee_pose = compose(object_pose, good->grasp.pose);
  CHECK(evaluate_grasp_success(r, object, object_pose, 0.0));
  CHECK_FALSE(evaluate_grasp_success(r, object, object_pose, 0.31));
  r.ee_pose.rotation = flip_about_approach(r.ee_pose.rotation);
  CHECK(evaluate_grasp_success(r, object, object_pose, 0.0));
  r.gripper = GripperState::kOpen;
  CHECK_THROWS_AS(evaluate_grasp_success(r, object, object_pose, 0.0), std::logic_error);

  // A one-annotation object isolates the bounds.
  ObjectModel single;
  single.id = "single";
  single.extent = Vector3d(0.1, 0.1, 0.1);
  single.annotations.push_back({Grasp{}, 0.8});
  single.annotations.back().grasp.pose = Pose(top_down_rotation(0.0), Vector3d::Zero());
  r.gripper = GripperState::kClosed;
  r.ee_pose = Pose(top_down_rotation(0.0), Vector3d(0.015, 0.0, 0.0));
  CHECK(evaluate_grasp_success(r, single, Pose::Identity(), 0.0));
  r.ee_pose.translation.x() = 0.0151;
  CHECK_FALSE(evaluate_grasp_success(r, single, Pose::Identity(), 0.0));
  r.ee_pose = Pose(top_down_rotation(deg2rad(14.9)), Vector3d::Zero());
  CHECK(evaluate_grasp_success(r, single, Pose::Identity(), 0.0));
  r.ee_pose = Pose(top_down_rotation(deg2rad(15.1)), Vector3d::Zero());
  CHECK_FALSE(evaluate_grasp_success(r, single, Pose::Identity(), 0.0));
  single.annotations.back().base_quality = 0.4;
  r.ee_pose = Pose(top_down_rotation(0.0), Vector3d::Zero());
  CHECK_FALSE(evaluate_grasp_success(r, single, Pose::Identity(), 0.0));
}

TEST_CASE("grasp success matches a brute-force scan") {
  const auto objects = standard_archetypes();
  Rng rng(73);
  for (int trial = 0; trial < 400; ++trial) {
    const ObjectModel& object = objects[rng.index(objects.size())];
    const Pose object_pose = random_pose(rng, 0.3);
    const Annotation& a = object.annotations[rng.index(object.annotations.size())];
    RobotState r;
    r.gripper = GripperState::kClosed;
    r.ee_pose = compose(object_pose, a.grasp.pose);
    r.ee_pose.translation += random_vector(rng, 0.012);
    r.ee_pose.rotation = rotation_about(random_vector(rng, 1.0), deg2rad(rng.uniform(0.0, 25.0))) *
                         r.ee_pose.rotation;
    bool expected = false;
    for (const auto& b : object.annotations) {
      const Pose world = compose(object_pose, b.grasp.pose);
      const double d = (world.translation - r.ee_pose.translation).norm();
      const double ang = std::min(rotation_geodesic(world.rotation, r.ee_pose.rotation),
                                  rotation_geodesic(flip_about_approach(world.rotation),
                                                    r.ee_pose.rotation));
      expected = expected || (b.base_quality >= 0.5 && d <= 0.015 + 1e-12 &&
                              ang <= deg2rad(15.0) + 1e-12);
    }
    CHECK(evaluate_grasp_success(r, object, object_pose, 0.0) == expected);
  }
}

TEST_CASE("wrist camera sees the footprint under its cone") {
  const FsmConfig cfg;
  const Vector3d extent(0.2, 0.1, 0.05);
  const Pose object(Matrix3d::Identity(), Vector3d(0.0, 0.0, 0.25));
  // Camera at z = 0.55 + 0.12: depth 0.42, view radius 0.42·tan 35° ≈ 0.294.
  const double radius = 0.42 * std::tan(deg2rad(35.0));
  CHECK(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0, 0, 0.55)), object, extent, cfg));
  // Footprint edge at x = 0.1: visible up to 0.1 + radius.
  CHECK(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0.1 + radius - 1e-6, 0, 0.55)),
                       object, extent, cfg));
  CHECK_FALSE(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0.1 + radius + 1e-6, 0, 0.55)),
                             object, extent, cfg));
  // Below the object nothing is seen.
  CHECK_FALSE(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0, 0, 0.0)), object, extent, cfg));
  // A yawed object turns its long side toward y.
  const Pose yawed(rotation_z(std::numbers::pi / 2.0), object.translation);
  CHECK(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0, 0.1 + radius - 1e-6, 0.55)), yawed,
                       extent, cfg));
  CHECK_FALSE(object_in_view(Pose(top_down_rotation(0.0), Vector3d(0.1 + radius - 1e-6, 0, 0.55)),
                             yawed, extent, cfg));
}

TEST_CASE("phase graph admits exactly the handover edges") {
  using P = HandoverPhase;
  const P all[] = {P::kReady, P::kTracking, P::kSearch, P::kGrasping, P::kPlacing};
  auto expected = [](P a, P b) {
    if (a == b || b == P::kReady) return true;
    return (a == P::kReady && b == P::kTracking) || (a == P::kTracking && b == P::kSearch) ||
           (a == P::kTracking && b == P::kGrasping) || (a == P::kSearch && b == P::kTracking) ||
           (a == P::kGrasping && b == P::kPlacing);
  };
  for (P a : all) {
    for (P b : all) CHECK(transition_allowed(a, b) == expected(a, b));
  }
  CHECK_FALSE(transition_allowed(P::kSearch, P::kGrasping));
  CHECK_FALSE(transition_allowed(P::kReady, P::kGrasping));
}

TEST_CASE("ready waits without candidates and tracks on the first one") {
  Rig rig;
  for (int k = 0; k < 5; ++k) CHECK(rig.lost().phase == HandoverPhase::kReady);
  CHECK(rig.controller.lost_counter() == 0);
  const TickDiagnostics d = rig.seen();
  CHECK(d.phase == HandoverPhase::kTracking);
  CHECK(d.tracked.has_value());
  CHECK(rig.controller.history().size() == 1);
}

TEST_CASE("lost counter drives reinitialization, search and waiting") {
  Rig rig;
  rig.seen();
  rig.seen();
  REQUIRE(rig.controller.phase() == HandoverPhase::kTracking);
  const FsmConfig cfg;
  for (int k = 1; k <= cfg.waiting_threshold + 1; ++k) {
    const TickDiagnostics d = rig.lost();
    CAPTURE(k);
    if (k <= cfg.waiting_threshold) CHECK(d.lost_counter == k);
    CHECK(d.reinitialized == (k == cfg.reinit_threshold + 1));
    if (k > cfg.reinit_threshold && k <= cfg.waiting_threshold) {
      CHECK(rig.controller.history().size() == 0);
      CHECK_FALSE(rig.controller.tracker().anchored());
    } else if (k <= cfg.reinit_threshold) {
      CHECK(rig.controller.history().size() == 2);
    }
    if (k <= cfg.search_threshold) {
      CHECK(d.phase == HandoverPhase::kTracking);
    } else if (k <= cfg.waiting_threshold) {
      CHECK(d.phase == HandoverPhase::kSearch);
      CHECK((d.target.translation - cfg.top_pose.translation).norm() == 0.0);
    } else {
      CHECK(d.phase == HandoverPhase::kReady);
      CHECK(d.lost_counter == 0);
    }
  }
}

TEST_CASE("search returns to tracking when the object reappears") {
  Rig rig;
  rig.seen();
  for (int k = 0; k < 25; ++k) rig.lost();
  REQUIRE(rig.controller.phase() == HandoverPhase::kSearch);
  const TickDiagnostics d = rig.seen();
  CHECK(d.phase == HandoverPhase::kTracking);
  CHECK(d.lost_counter == 0);
}

TEST_CASE("static zero-noise object is grasped, placed and released") {
  Rig rig;
  bool triggered = false, succeeded = false, placed = false;
  HandoverPhase last = HandoverPhase::kReady;
  for (int k = 0; k < 120; ++k) {
    const TickDiagnostics d = rig.seen();
    CHECK(transition_allowed(d.previous, d.phase));
    triggered = triggered || d.triggered;
    if (d.success) succeeded = *d.success;
    placed = placed || d.phase == HandoverPhase::kPlacing;
    if (last == HandoverPhase::kPlacing && d.phase == HandoverPhase::kReady) break;
    last = d.phase;
  }
  CHECK(triggered);
  CHECK(succeeded);
  CHECK(placed);
}

TEST_CASE("a permanently lost object always returns the controller to ready") {
  Rng rng(74);
  const FsmConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    Rig rig;
    rig.object_pose = Pose(rotation_z(rng.uniform(-1.0, 1.0)),
                           Vector3d(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.25));
    const int prefix = static_cast<int>(rng.index(80));
    RobotState prev = rig.controller.robot();
    for (int k = 0; k < prefix; ++k) rng.bernoulli(0.7) ? rig.seen() : rig.lost();
    int ticks = 0;
    while (rig.controller.phase() != HandoverPhase::kReady && ticks < 500) {
      prev = rig.controller.robot();
      rig.lost();
      ++ticks;
      for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(rig.controller.robot().ee_velocity[a]) <= cfg.limits.v_max + 1e-9);
        CHECK(std::abs(rig.controller.robot().ee_velocity[a] - prev.ee_velocity[a]) <=
              cfg.limits.a_max * cfg.dt() + 1e-9);
      }
    }
    CHECK(ticks <= cfg.waiting_threshold + 2);
    for (int k = 0; k < 10; ++k) CHECK(rig.lost().phase == HandoverPhase::kReady);
  }
}

TEST_CASE("controller configuration is validated") {
  FsmConfig cfg;
  cfg.search_threshold = cfg.waiting_threshold;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = FsmConfig{};
  cfg.z_offset = -0.01;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(GraspTracker(TrackerMode::kLearned), std::invalid_argument);
  CHECK(tracker_mode_from_string("baseline_nearest_last") == TrackerMode::kBaseline);
}

TEST_CASE("event log rows line up with the header") {
  Rig rig;
  const TickDiagnostics d = rig.seen();
  const std::string header = event_log_header();
  const std::string row = format_event(d);
  CHECK(std::count(header.begin(), header.end(), '\t') == std::count(row.begin(), row.end(), '\t'));
  CHECK(row.rfind("0\tTracking\t", 0) == 0);
}
