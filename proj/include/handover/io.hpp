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

// JSON encodings of the scene types. Poses are {"t": [x, y, z], "q": [w, x, y, z]}
// with t in meters and q a unit quaternion.

#pragma once

#include <string>
#include <vector>

#include "handover/scene.hpp"
#include "json.hpp"

namespace handover {

using Json = nlohmann::json;

Json to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json to_json(const Grasp& grasp);
Grasp grasp_from_json(const Json& j);

Json to_json(const ObjectModel& object);
ObjectModel object_from_json(const Json& j);

Json to_json(const MotionScript& script);
MotionScript script_from_json(const Json& j);

Json to_json(const NoiseConfig& noise);
NoiseConfig noise_from_json(const Json& j, NoiseConfig defaults = {});

Json to_json(const FrameObservation& frame);
FrameObservation frame_from_json(const Json& j);

/// {"frames": [...], "labels": [...], "camera_poses": [...]}
Json to_json(const TimeSlice& slice);
TimeSlice slice_from_json(const Json& j);

/// Top-level {"objects": [...], "scripts": [...]}. Objects may also be given by
/// archetype name as plain strings.
struct SceneFile {
  std::vector<ObjectModel> objects;
  std::vector<MotionScript> scripts;
};

SceneFile scene_from_json(const Json& j);
Json to_json(const SceneFile& scene);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

void save_slice(const std::string& path, const TimeSlice& slice);
TimeSlice load_slice(const std::string& path);

}  // namespace handover
