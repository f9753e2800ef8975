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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsflow/eval/metrics.hpp"

namespace dsflow::eval {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text `key = value` configuration. `#` starts a comment; blank lines
/// are ignored. Every key must be known and may appear once.
class RunConfig {
 public:
  /// Keys accepted by parse().
  static const std::vector<std::string>& known_keys();

  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;

  /// Overrides or adds a key (used for command-line flags).
  void set(const std::string& key, const std::string& value);

  /// The original text, verbatim, followed by any overrides.
  std::string echo() const;

 private:
  std::string origin_;
  std::string text_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, std::string>> overrides_;
};

/// Named scalars and histograms of one run.
class MetricReport {
 public:
  explicit MetricReport(std::string run_id) : run_id_(std::move(run_id)) {}

  /// Throws std::invalid_argument for non-finite values.
  void set_scalar(const std::string& name, double value);
  void set_histogram(const std::string& name, Histogram h);
  void set_series(const std::string& name, std::vector<double> values);
  void set_note(const std::string& name, std::string text);
  void add_seed(std::uint64_t seed) { seeds_.push_back(seed); }
  void set_config_echo(std::string echo) { config_echo_ = std::move(echo); }

  const std::string& run_id() const { return run_id_; }
  std::optional<double> scalar(const std::string& name) const;
  const std::map<std::string, double>& scalars() const { return scalars_; }
  const std::map<std::string, Histogram>& histograms() const { return histograms_; }

  nlohmann::ordered_json to_json() const;
  /// Pretty JSON with a trailing newline.
  std::string dump() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string run_id_;
  std::map<std::string, double> scalars_;
  std::map<std::string, Histogram> histograms_;
  std::map<std::string, std::vector<double>> series_;
  std::map<std::string, std::string> notes_;
  std::vector<std::uint64_t> seeds_;
  std::string config_echo_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Deterministic SVG line plot.
std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

/// Deterministic SVG bar chart of one or more histograms sharing a range.
std::string svg_histograms(const std::vector<std::pair<std::string, Histogram>>& hists,
                           const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dsflow::eval
