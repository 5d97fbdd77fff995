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

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "handover/io.hpp"

namespace handover {

Json to_json(const Pose& pose) {
  const Eigen::Quaterniond q = to_quaternion(pose.rotation);
  return Json{{"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
              {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const Json& j) {
  const auto& t = j.at("t");
  const auto& q = j.at("q");
  if (t.size() != 3 || q.size() != 4) throw std::invalid_argument("pose needs t[3] and q[4]");
  return Pose(from_quaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                              q[3].get<double>()),
              Vector3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
}

Json to_json(const Grasp& g) {
  return Json{{"pose", to_json(g.pose)},
              {"width", g.width},
              {"score", g.score},
              {"candidate_index", g.candidate_index},
              {"annotation", g.annotation}};
}

Grasp grasp_from_json(const Json& j) {
  Grasp g;
  g.pose = pose_from_json(j.at("pose"));
  g.width = j.value("width", 0.0);
  g.score = j.value("score", 0.0);
  g.candidate_index = j.value("candidate_index", 0);
  g.annotation = j.value("annotation", -1);
  return g;
}

Json to_json(const ObjectModel& o) {
  Json anns = Json::array();
  for (const auto& a : o.annotations) {
    anns.push_back({{"grasp", to_json(a.grasp)}, {"base_quality", a.base_quality}});
  }
  return Json{{"id", o.id},
              {"extent", {o.extent.x(), o.extent.y(), o.extent.z()}},
              {"grasp_annotations", anns}};
}

ObjectModel object_from_json(const Json& j) {
  if (j.is_string()) return find_object(standard_archetypes(), j.get<std::string>());
  ObjectModel o;
  o.id = j.at("id").get<std::string>();
  const auto& e = j.at("extent");
  o.extent = Vector3d(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
  int index = 0;
  for (const auto& a : j.at("grasp_annotations")) {
    Annotation ann;
    ann.grasp = grasp_from_json(a.at("grasp"));
    ann.grasp.annotation = index;
    ann.grasp.candidate_index = index++;
    ann.base_quality = a.at("base_quality").get<double>();
    o.annotations.push_back(ann);
  }
  o.validate();
  return o;
}

Json to_json(const MotionScript& s) {
  return Json{{"kind", to_string(s.kind)},
              {"rotation_deg", s.rotation_deg},
              {"translation_m", s.translation_m},
              {"direction_deg", s.direction_deg},
              {"trigger_time", s.trigger_time},
              {"motion_duration", s.motion_duration},
              {"bounds",
               {{"x", {s.bounds.x_min, s.bounds.x_max}},
                {"y", {s.bounds.y_min, s.bounds.y_max}},
                {"yaw_deg", {s.bounds.yaw_min_deg, s.bounds.yaw_max_deg}}}},
              {"speed_limit", s.speed_limit},
              {"angular_speed_limit_deg", s.angular_speed_limit_deg},
              {"start", {s.start_x, s.start_y, s.start_yaw_deg}},
              {"height", s.height},
              {"seed", s.seed}};
}

MotionScript script_from_json(const Json& j) {
  MotionScript s;
  s.kind = motion_kind_from_string(j.value("kind", std::string("static")));
  s.rotation_deg = j.value("rotation_deg", s.rotation_deg);
  s.translation_m = j.value("translation_m", s.translation_m);
  s.direction_deg = j.value("direction_deg", s.direction_deg);
  s.trigger_time = j.value("trigger_time", s.trigger_time);
  s.motion_duration = j.value("motion_duration", s.motion_duration);
  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    if (b.contains("x")) {
      s.bounds.x_min = b["x"][0].get<double>();
      s.bounds.x_max = b["x"][1].get<double>();
    }
    if (b.contains("y")) {
      s.bounds.y_min = b["y"][0].get<double>();
      s.bounds.y_max = b["y"][1].get<double>();
    }
    if (b.contains("yaw_deg")) {
      s.bounds.yaw_min_deg = b["yaw_deg"][0].get<double>();
      s.bounds.yaw_max_deg = b["yaw_deg"][1].get<double>();
    }
  }
  s.speed_limit = j.value("speed_limit", s.speed_limit);
  s.angular_speed_limit_deg = j.value("angular_speed_limit_deg", s.angular_speed_limit_deg);
  if (j.contains("start")) {
    const auto& st = j.at("start");
    s.start_x = st[0].get<double>();
    s.start_y = st[1].get<double>();
    s.start_yaw_deg = st[2].get<double>();
  }
  s.height = j.value("height", s.height);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

Json to_json(const NoiseConfig& n) {
  return Json{{"pose_jitter_sigma", n.pose_jitter_sigma},
              {"rot_jitter_sigma_deg", n.rot_jitter_sigma_deg},
              {"score_jitter_sigma", n.score_jitter_sigma},
              {"dropout_prob", n.dropout_prob},
              {"spurious_prob", n.spurious_prob},
              {"visibility_jitter", n.visibility_jitter},
              {"seed", n.seed}};
}

NoiseConfig noise_from_json(const Json& j, NoiseConfig n) {
  if (j.is_string() && j.get<std::string>() == "zero") return NoiseConfig::zero(n.seed);
  n.pose_jitter_sigma = j.value("pose_jitter_sigma", n.pose_jitter_sigma);
  n.rot_jitter_sigma_deg = j.value("rot_jitter_sigma_deg", n.rot_jitter_sigma_deg);
  n.score_jitter_sigma = j.value("score_jitter_sigma", n.score_jitter_sigma);
  n.dropout_prob = j.value("dropout_prob", n.dropout_prob);
  n.spurious_prob = j.value("spurious_prob", n.spurious_prob);
  n.visibility_jitter = j.value("visibility_jitter", n.visibility_jitter);
  n.seed = j.value("seed", n.seed);
  n.validate();
  return n;
}

Json to_json(const FrameObservation& f) {
  Json cands = Json::array();
  for (const auto& c : f.candidates) cands.push_back(to_json(c));
  return Json{{"frame_index", f.frame_index},
              {"timestamp", f.timestamp},
              {"candidates", cands},
              {"true_object_pose", to_json(f.true_object_pose)}};
}

FrameObservation frame_from_json(const Json& j) {
  FrameObservation f;
  f.frame_index = j.value("frame_index", 0);
  f.timestamp = j.value("timestamp", 0.0);
  for (const auto& c : j.at("candidates")) f.candidates.push_back(grasp_from_json(c));
  f.true_object_pose = pose_from_json(j.at("true_object_pose"));
  return f;
}

Json to_json(const TimeSlice& s) {
  Json frames = Json::array(), labels = Json::array(), cams = Json::array();
  for (const auto& f : s.frames) frames.push_back(to_json(f));
  for (const auto& l : s.labels) labels.push_back(to_json(l));
  for (const auto& c : s.camera_poses) cams.push_back(to_json(c));
  return Json{{"frames", frames}, {"labels", labels}, {"camera_poses", cams}};
}

TimeSlice slice_from_json(const Json& j) {
  TimeSlice s;
  for (const auto& f : j.at("frames")) s.frames.push_back(frame_from_json(f));
  for (const auto& l : j.at("labels")) s.labels.push_back(grasp_from_json(l));
  for (const auto& c : j.at("camera_poses")) s.camera_poses.push_back(pose_from_json(c));
  if (s.labels.size() != s.frames.size()) {
    throw std::invalid_argument("slice needs one label per frame");
  }
  return s;
}

SceneFile scene_from_json(const Json& j) {
  SceneFile scene;
  if (j.contains("objects")) {
    for (const auto& o : j.at("objects")) scene.objects.push_back(object_from_json(o));
  }
  if (j.contains("scripts")) {
    for (const auto& s : j.at("scripts")) scene.scripts.push_back(script_from_json(s));
  }
  return scene;
}

Json to_json(const SceneFile& scene) {
  Json objects = Json::array(), scripts = Json::array();
  for (const auto& o : scene.objects) objects.push_back(to_json(o));
  for (const auto& s : scene.scripts) scripts.push_back(to_json(s));
  return Json{{"objects", objects}, {"scripts", scripts}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void save_slice(const std::string& path, const TimeSlice& slice) {
  write_text_file(path, to_json(slice).dump() + "\n");
}

TimeSlice load_slice(const std::string& path) { return slice_from_json(read_json_file(path)); }

}  // namespace handover
