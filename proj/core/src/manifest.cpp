// Copyright 2026 The lsmpc Authors
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

#include "lsmpc/manifest.hpp"

#include <cstdio>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "lsmpc/csv.hpp"

namespace lsmpc {

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace

RunManifest::RunManifest(std::string command, std::uint64_t config_hash,
                         std::uint64_t seed)
    : command_(std::move(command)), config_hash_(config_hash), seed_(seed) {}

void RunManifest::begin_stage(const std::string& name) {
  if (stage_open_) {
    throw std::logic_error("RunManifest: stage '" + stages_.back().name +
                           "' still open");
  }
  stages_.push_back(ManifestStage{name, 0.0, {}});
  stage_open_ = true;
}

void RunManifest::add_artifact(const std::string& path, bool deterministic) {
  if (!stage_open_) {
    throw std::logic_error("RunManifest: no open stage for artifact " + path);
  }
  stages_.back().artifacts.push_back(ManifestArtifact{path, deterministic});
}

void RunManifest::end_stage(double wall_seconds) {
  if (!stage_open_) {
    throw std::logic_error("RunManifest: end_stage without begin_stage");
  }
  stages_.back().wall_seconds = wall_seconds;
  stage_open_ = false;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["config_hash"] = hash_hex(config_hash_);
  j["seed"] = seed_;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const ManifestStage& s : stages_) {
    nlohmann::ordered_json js;
    js["name"] = s.name;
    js["wall_seconds"] = s.wall_seconds;
    nlohmann::ordered_json arts = nlohmann::ordered_json::array();
    for (const ManifestArtifact& a : s.artifacts) {
      arts.push_back({{"path", a.path}, {"deterministic", a.deterministic}});
    }
    js["artifacts"] = arts;
    stages.push_back(js);
  }
  j["stages"] = stages;
  return j.dump(2) + "\n";
}

void RunManifest::save(const std::string& path) const {
  write_text_file(path, to_json());
}

}  // namespace lsmpc
