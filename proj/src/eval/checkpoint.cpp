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

#include "dsflow/eval/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace dsflow::eval {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kFormatName = "dsflow-checkpoint";

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

void put_le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

json read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw CheckpointError("cannot open checkpoint manifest " + manifest.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
  }
}

std::vector<unsigned char> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint blob " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Validates the manifest against `model` and copies the blob into it.
void fill_params(model::VelocityModel& model, const json& manifest,
                 const std::filesystem::path& manifest_file) {
  const auto& entries = model.params().entries();
  const auto& listed = manifest.at("params");
  if (listed.size() != entries.size()) {
    throw CheckpointError("manifest lists " + std::to_string(listed.size()) +
                          " parameters, model has " + std::to_string(entries.size()));
  }
  std::size_t expected_values = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto name = listed[i].at("name").get<std::string>();
    const auto shape = listed[i].at("shape").get<num::Shape>();
    if (name != entries[i].name || shape != entries[i].var.shape()) {
      throw CheckpointError("parameter " + std::to_string(i) + " is " + name + " " +
                            num::shape_str(shape) + " in the manifest but " + entries[i].name +
                            " " + num::shape_str(entries[i].var.shape()) + " in the model");
    }
    expected_values += num::shape_product(shape);
  }
  const std::size_t expected_bytes = expected_values * 8;
  if (manifest.at("blob_bytes").get<std::size_t>() != expected_bytes) {
    throw CheckpointError("manifest blob_bytes " +
                          std::to_string(manifest.at("blob_bytes").get<std::size_t>()) +
                          " disagrees with its parameter list (" + std::to_string(expected_bytes) +
                          " bytes)");
  }
  const auto blob = read_blob(blob_path(manifest_file));
  if (blob.size() < expected_bytes) {
    throw CheckpointError("truncated checkpoint blob " + blob_path(manifest_file).string() +
                          ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                          std::to_string(blob.size()));
  }
  if (blob.size() > expected_bytes) {
    throw CheckpointError("checkpoint blob " + blob_path(manifest_file).string() + " holds " +
                          std::to_string(blob.size()) + " bytes but the manifest describes " +
                          std::to_string(expected_bytes));
  }
  std::size_t offset = 0;
  for (auto& e : model.params().entries()) {
    num::Tensor& value = e.var.node()->value;
    for (auto& v : value.storage()) {
      v = get_le(blob.data() + offset);
      offset += 8;
    }
    if (!value.all_finite()) throw CheckpointError("non-finite value in parameter " + e.name);
  }
  model.params().set_step_count(manifest.value("step_count", std::int64_t{0}));
}

void check_version(const json& manifest) {
  if (manifest.value("format", std::string()) != kFormatName) {
    throw CheckpointError("not a dsflow checkpoint manifest");
  }
  const int version = manifest.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
}

}  // namespace

ordered_json config_to_json(const model::ModelConfig& cfg) {
  ordered_json j;
  j["layers"] = cfg.layers;
  j["width"] = cfg.width;
  j["data_dim"] = cfg.data_dim;
  j["num_conditions"] = cfg.num_conditions;
  j["mode"] = model::to_string(cfg.mode);
  j["tokens_per_step"] = cfg.tokens_per_step;
  j["step_counts"] = cfg.step_counts;
  return j;
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig cfg;
  cfg.layers = j.at("layers").get<std::size_t>();
  cfg.width = j.at("width").get<std::size_t>();
  cfg.data_dim = j.at("data_dim").get<std::size_t>();
  cfg.num_conditions = j.at("num_conditions").get<std::size_t>();
  cfg.mode = model::conditioning_from_string(j.at("mode").get<std::string>());
  cfg.tokens_per_step = j.at("tokens_per_step").get<std::size_t>();
  cfg.step_counts = j.at("step_counts").get<std::vector<int>>();
  return cfg;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  if (path.extension() == ".json") return path;
  auto p = path;
  p += ".json";
  return p;
}

std::filesystem::path save_checkpoint(const model::VelocityModel& model, std::uint64_t seed,
                                      const std::filesystem::path& stem) {
  const auto manifest_file = manifest_path(stem);
  if (manifest_file.has_parent_path()) std::filesystem::create_directories(manifest_file.parent_path());

  std::vector<unsigned char> blob;
  ordered_json params = ordered_json::array();
  for (const auto& e : model.params().entries()) {
    params.push_back({{"name", e.name}, {"shape", e.var.shape()}});
    for (double v : e.var.value().data()) put_le(blob, v);
  }
  ordered_json m;
  m["format"] = kFormatName;
  m["version"] = kCheckpointVersion;
  m["seed"] = seed;
  m["step_count"] = model.params().step_count();
  m["config"] = config_to_json(model.config());
  m["params"] = std::move(params);
  m["blob"] = blob_path(manifest_file).filename().string();
  m["blob_bytes"] = blob.size();

  std::ofstream out(manifest_file, std::ios::trunc);
  out << m.dump(2) << '\n';
  std::ofstream bin(blob_path(manifest_file), std::ios::binary | std::ios::trunc);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out || !bin) throw CheckpointError("failed writing checkpoint " + manifest_file.string());
  return manifest_file;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto manifest_file = manifest_path(path);
  if (!std::filesystem::exists(manifest_file)) {
    throw CheckpointError("checkpoint not found: " + manifest_file.string());
  }
  const json manifest = read_manifest(manifest_file);
  check_version(manifest);
  const auto seed = manifest.at("seed").get<std::uint64_t>();
  LoadedCheckpoint out{model::VelocityModel(config_from_json(manifest.at("config")), seed), seed};
  fill_params(out.model, manifest, manifest_file);
  return out;
}

void load_checkpoint_into(model::VelocityModel& model, const std::filesystem::path& path) {
  const auto manifest_file = manifest_path(path);
  if (!std::filesystem::exists(manifest_file)) {
    throw CheckpointError("checkpoint not found: " + manifest_file.string());
  }
  const json manifest = read_manifest(manifest_file);
  check_version(manifest);
  const model::ModelConfig stored = config_from_json(manifest.at("config"));
  if (!(stored == model.config())) {
    throw CheckpointError("config mismatch: checkpoint holds a " + model::to_string(stored.mode) +
                          " model (L=" + std::to_string(stored.layers) +
                          ", D=" + std::to_string(stored.width) + "), target is " +
                          model::to_string(model.config().mode) +
                          " (L=" + std::to_string(model.config().layers) +
                          ", D=" + std::to_string(model.config().width) + ")");
  }
  fill_params(model, manifest, manifest_file);
}

}  // namespace dsflow::eval
