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
//
// Records what a run produced: command, config hash, seed, per-stage wall
// times and artifact paths. Artifacts are flagged deterministic unless they
// contain wall-clock measurements, so reruns can be diffed byte for byte on
// the deterministic subset.

#ifndef LSMPC_MANIFEST_HPP_
#define LSMPC_MANIFEST_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace lsmpc {

struct ManifestArtifact {
  std::string path;
  bool deterministic = true;
};

struct ManifestStage {
  std::string name;
  double wall_seconds = 0.0;
  std::vector<ManifestArtifact> artifacts;
};

class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t config_hash,
              std::uint64_t seed);

  void begin_stage(const std::string& name);
  // Attaches to the currently open stage; throws if begin_stage was not
  // called.
  void add_artifact(const std::string& path, bool deterministic = true);
  void end_stage(double wall_seconds);

  const std::vector<ManifestStage>& stages() const { return stages_; }

  std::string to_json() const;
  void save(const std::string& path) const;

 private:
  std::string command_;
  std::uint64_t config_hash_;
  std::uint64_t seed_;
  std::vector<ManifestStage> stages_;
  bool stage_open_ = false;
};

}  // namespace lsmpc

#endif  // LSMPC_MANIFEST_HPP_
