// Copyright 2026 The dsflow Authors
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

// Model checkpoints: `<stem>.json` holds the manifest (format version, seed,
// model config, parameter names and shapes, blob size) and `<stem>.bin` the
// parameters as little-endian 64-bit floats in manifest order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dsflow/models.hpp"

namespace dsflow::eval {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::ordered_json config_to_json(const model::ModelConfig& cfg);
model::ModelConfig config_from_json(const nlohmann::json& j);

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest path.
std::filesystem::path save_checkpoint(const model::VelocityModel& model, std::uint64_t seed,
                                      const std::filesystem::path& stem);

struct LoadedCheckpoint {
  model::VelocityModel model;
  std::uint64_t seed = 0;
};

/// Reads a checkpoint given its manifest path or stem.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into an existing model; the stored config must equal the
/// model's config exactly.
void load_checkpoint_into(model::VelocityModel& model, const std::filesystem::path& path);

/// Manifest path for a stem or manifest path.
std::filesystem::path manifest_path(const std::filesystem::path& path);

}  // namespace dsflow::eval
