// Copyright 2026 The riattn Authors.
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

// Flat key=value training configuration. Blank lines and lines starting with
// '#' are ignored; surrounding whitespace is trimmed.

#pragma once

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "riattn/error.hpp"
#include "riattn/training.hpp"

namespace riattn {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    fail(Errc::InvalidConfig, "'" + value + "' is not a valid value for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  fail(Errc::InvalidConfig, "'" + value + "' is not a boolean for " + key);
}

}  // namespace detail

inline ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::size_t start = 0, line_no = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = detail::trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::InvalidConfig, "config line " + std::to_string(line_no) + " has no '='");
    std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) fail(Errc::InvalidConfig, "config line " + std::to_string(line_no) + " has no key");
    out[key] = std::string(detail::trim(line.substr(eq + 1)));
    if (end == text.size()) break;
  }
  return out;
}

/// Applies every entry of `kv` to `cfg`; unknown keys are an error.
inline void apply_config(const ConfigMap& kv, TrainConfig& cfg) {
  using detail::parse_bool;
  using detail::parse_number;
  for (const auto& [key, value] : kv) {
    if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
    else if (key == "optimizer") {
      if (value == "adam") cfg.optimizer = OptimizerKind::Adam;
      else if (value == "sgd") cfg.optimizer = OptimizerKind::Sgd;
      else fail(Errc::InvalidConfig, "optimizer must be adam or sgd");
    }
    else if (key == "beta1") cfg.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") cfg.beta2 = parse_number<double>(key, value);
    else if (key == "epsilon") cfg.epsilon = parse_number<double>(key, value);
    else if (key == "loss_mask") {
      if (value == "none") cfg.loss_mask = LossMask::None;
      else if (value == "after_eos") cfg.loss_mask = LossMask::AfterEos;
      else fail(Errc::InvalidConfig, "loss_mask must be none or after_eos");
    }
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "gate_enabled") cfg.gate_enabled = parse_bool(key, value);
    else if (key == "h") cfg.h = parse_number<std::size_t>(key, value);
    else if (key == "w") cfg.w = parse_number<std::size_t>(key, value);
    else if (key == "f") cfg.f = parse_number<std::size_t>(key, value);
    else if (key == "d") cfg.d = parse_number<std::size_t>(key, value);
    else if (key == "t_max") cfg.max_length = parse_number<std::size_t>(key, value);
    else if (key == "clip_norm") cfg.clip_norm = parse_number<double>(key, value);
    else if (key == "threads") cfg.threads = parse_number<std::size_t>(key, value);
    else fail(Errc::InvalidConfig, "unknown config key '" + key + "'");
  }
  cfg.validate();
}

inline std::string format_config(const TrainConfig& cfg) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string out;
  out += "learning_rate=" + num(cfg.learning_rate) + "\n";
  out += "batch_size=" + std::to_string(cfg.batch_size) + "\n";
  out += "epochs=" + std::to_string(cfg.epochs) + "\n";
  out += std::string("optimizer=") + (cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd") + "\n";
  out += "beta1=" + num(cfg.beta1) + "\n";
  out += "beta2=" + num(cfg.beta2) + "\n";
  out += "epsilon=" + num(cfg.epsilon) + "\n";
  out += std::string("loss_mask=") + (cfg.loss_mask == LossMask::None ? "none" : "after_eos") + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  out += std::string("gate_enabled=") + (cfg.gate_enabled ? "true" : "false") + "\n";
  out += "h=" + std::to_string(cfg.h) + "\n";
  out += "w=" + std::to_string(cfg.w) + "\n";
  out += "f=" + std::to_string(cfg.f) + "\n";
  out += "d=" + std::to_string(cfg.d) + "\n";
  out += "t_max=" + std::to_string(cfg.max_length) + "\n";
  out += "clip_norm=" + num(cfg.clip_norm) + "\n";
  out += "threads=" + std::to_string(cfg.threads) + "\n";
  return out;
}

}  // namespace riattn
