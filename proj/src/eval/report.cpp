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

#include "dsflow/eval/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dsflow::eval {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Fixed-precision coordinates keep the SVG text stable across platforms.
std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b"};

struct Frame {
  double w = 640, h = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0, x1, y0, y1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

void open_svg(std::ostringstream& os, const Frame& f, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h
     << "\" viewBox=\"0 0 " << f.w << ' ' << f.h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << coord(f.w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << xml_escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xl, const std::string& yl) {
  os << "<line x1=\"" << coord(f.left) << "\" y1=\"" << coord(f.h - f.bottom) << "\" x2=\""
     << coord(f.w - f.right) << "\" y2=\"" << coord(f.h - f.bottom) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << coord(f.left) << "\" y1=\"" << coord(f.top) << "\" x2=\""
     << coord(f.left) << "\" y2=\"" << coord(f.h - f.bottom) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << coord(f.px(xv)) << "\" y=\"" << coord(f.h - f.bottom + 16)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << format_double(std::round(xv * 1e4) / 1e4)
       << "</text>\n";
    os << "<text x=\"" << coord(f.left - 6) << "\" y=\"" << coord(f.py(yv) + 4)
       << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(std::round(yv * 1e4) / 1e4)
       << "</text>\n";
  }
  os << "<text x=\"" << coord((f.left + f.w - f.right) / 2) << "\" y=\"" << coord(f.h - 10)
     << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(xl) << "</text>\n";
  os << "<text x=\"16\" y=\"" << coord((f.top + f.h - f.bottom) / 2)
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << coord((f.top + f.h - f.bottom) / 2) << ")\">" << xml_escape(yl) << "</text>\n";
}

void legend(std::ostringstream& os, const Frame& f, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = f.top + 14.0 * static_cast<double>(i);
    os << "<rect x=\"" << coord(f.w - f.right - 150) << "\" y=\"" << coord(y) << "\" width=\"10\" "
       << "height=\"10\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    os << "<text x=\"" << coord(f.w - f.right - 135) << "\" y=\"" << coord(y + 9)
       << "\" font-size=\"11\">" << xml_escape(labels[i]) << "</text>\n";
  }
}

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
}

}  // namespace

// --- RunConfig -------------------------------------------------------------

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "dataset",          "data_path",       "data_dim",         "conditions",
      "size",             "heldout_size",    "layers",           "width",
      "tokens_per_step",  "steps",           "alpha",            "lambda",
      "cfg_reg",          "w_teacher",       "w_student",        "p_uncond",
      "teacher_p_uncond", "teacher_steps",   "teacher_schedule", "rollout",
      "midpoint",         "student_mode",    "init_from_teacher", "cache_targets",
      "teacher_epochs",   "teacher_batch",   "distill_iters",    "progressive_iters",
      "batch_size",       "lr",              "weight_decay",     "seed",
      "seeds",            "out_dir",         "projections",      "cfg_weights",
      "teacher",          "student",         "preset",           "baselines"};
  return keys;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  cfg.text_ = text;
  const auto& known = known_keys();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (!cfg.values_.emplace(key, value).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(origin_ + ": key '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = values_.at(key);
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key, std::vector<int> fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  std::istringstream in(values_.at(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError(origin_ + ": key '" + key + "' expects a comma-separated integer list");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  std::istringstream in(values_.at(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size() || !std::isfinite(v)) {
      throw ConfigError(origin_ + ": key '" + key + "' expects a comma-separated number list");
    }
    out.push_back(v);
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& known = known_keys();
  if (std::find(known.begin(), known.end(), key) == known.end()) {
    throw ConfigError("unknown key '" + key + "'");
  }
  values_[key] = value;
  overrides_.emplace_back(key, value);
}

std::string RunConfig::echo() const {
  std::string out = text_;
  if (!out.empty() && out.back() != '\n') out += '\n';
  for (const auto& [k, v] : overrides_) out += "# override\n" + k + " = " + v + "\n";
  return out;
}

// --- MetricReport ----------------------------------------------------------

void MetricReport::set_scalar(const std::string& name, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("metric " + name + " is not finite");
  scalars_[name] = value;
}

void MetricReport::set_histogram(const std::string& name, Histogram h) {
  histograms_.insert_or_assign(name, std::move(h));
}

void MetricReport::set_series(const std::string& name, std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("series " + name + " has a non-finite value");
  }
  series_[name] = std::move(values);
}

void MetricReport::set_note(const std::string& name, std::string text) {
  notes_[name] = std::move(text);
}

std::optional<double> MetricReport::scalar(const std::string& name) const {
  const auto it = scalars_.find(name);
  if (it == scalars_.end()) return std::nullopt;
  return it->second;
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id_;
  j["seeds"] = seeds_;
  j["scalars"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : scalars_) j["scalars"][k] = v;
  j["histograms"] = nlohmann::ordered_json::object();
  for (const auto& [k, h] : histograms_) {
    j["histograms"][k] = {{"lo", h.lo}, {"hi", h.hi}, {"bins", h.counts.size()},
                          {"mass", h.mass()}, {"counts", h.counts}};
  }
  j["series"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : series_) j["series"][k] = v;
  j["notes"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : notes_) j["notes"][k] = v;
  j["config"] = config_echo_;
  return j;
}

std::string MetricReport::dump() const { return to_json().dump(2) + "\n"; }

void MetricReport::write(const std::filesystem::path& path) const { write_text(path, dump()); }

// --- formatting and plots --------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  Frame f;
  f.x0 = f.y0 = std::numeric_limits<double>::infinity();
  f.x1 = f.y1 = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series x and y lengths differ");
    for (double x : s.x) f.x0 = std::min(f.x0, x), f.x1 = std::max(f.x1, x);
    for (double y : s.y) f.y0 = std::min(f.y0, y), f.y1 = std::max(f.y1, y);
  }
  if (!std::isfinite(f.x0)) f.x0 = 0, f.x1 = 1, f.y0 = 0, f.y1 = 1;
  f.y0 = std::min(f.y0, 0.0);
  pad_range(f.x0, f.x1);
  pad_range(f.y0, f.y1);
  std::ostringstream os;
  open_svg(os, f, title);
  axes(os, f, x_label, y_label);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (k) os << ' ';
      os << coord(f.px(s.x[k])) << ',' << coord(f.py(s.y[k]));
    }
    os << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      os << "<circle cx=\"" << coord(f.px(s.x[k])) << "\" cy=\"" << coord(f.py(s.y[k]))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    labels.push_back(s.label);
  }
  legend(os, f, labels);
  os << "</svg>\n";
  return os.str();
}

std::string svg_histograms(const std::vector<std::pair<std::string, Histogram>>& hists,
                           const std::string& title) {
  if (hists.empty()) throw std::invalid_argument("nothing to plot");
  Frame f;
  f.x0 = hists.front().second.lo;
  f.x1 = hists.front().second.hi;
  f.y0 = 0.0;
  f.y1 = 0.0;
  for (const auto& [label, h] : hists) {
    if (h.lo != f.x0 || h.hi != f.x1 || h.counts.size() != hists.front().second.counts.size()) {
      throw std::invalid_argument("histograms must share range and bins");
    }
    const double mass = static_cast<double>(std::max<std::uint64_t>(h.mass(), 1));
    for (auto c : h.counts) f.y1 = std::max(f.y1, static_cast<double>(c) / mass);
  }
  pad_range(f.y0, f.y1);
  std::ostringstream os;
  open_svg(os, f, title);
  axes(os, f, "value", "fraction");
  std::vector<std::string> labels;
  const double bw = (f.x1 - f.x0) / static_cast<double>(hists.front().second.counts.size());
  for (std::size_t i = 0; i < hists.size(); ++i) {
    const auto& [label, h] = hists[i];
    const double mass = static_cast<double>(std::max<std::uint64_t>(h.mass(), 1));
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[i % std::size(kPalette)]
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const double y = f.py(static_cast<double>(h.counts[b]) / mass);
      const double xa = f.px(f.x0 + bw * static_cast<double>(b));
      const double xb = f.px(f.x0 + bw * static_cast<double>(b + 1));
      if (b) os << ' ';
      os << coord(xa) << ',' << coord(y) << ' ' << coord(xb) << ',' << coord(y);
    }
    os << "\"/>\n";
    labels.push_back(label);
  }
  legend(os, f, labels);
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace dsflow::eval
