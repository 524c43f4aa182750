#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pdan/common.hpp"
#include "pdan/schedule.hpp"

namespace pdan {

enum class Attention { kNone, kSe, kCbam, kJoint };

inline std::string to_string(Attention a) {
  switch (a) {
    case Attention::kNone: return "none";
    case Attention::kSe: return "se";
    case Attention::kCbam: return "cbam";
    case Attention::kJoint: return "joint";
  }
  return "?";
}

inline Attention attention_from_string(const std::string& s) {
  if (s == "none") return Attention::kNone;
  if (s == "se") return Attention::kSe;
  if (s == "cbam") return Attention::kCbam;
  if (s == "joint") return Attention::kJoint;
  throw ValidationError("unknown attention variant '" + s + "' (none|se|cbam|joint)");
}

namespace detail {

// "key = value" lines, '#' comments, blank lines ignored. Order preserved so
// files can be echoed verbatim.
inline std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(r);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Complete architecture description: scale, depth, growth arithmetic, group
/// schedule, and attention variant.
struct NetworkConfig {
  int scale = 4;  // 2, 3 or 4 (x4 runs as two x2 sub-pixel stages)
  int num_blocks = 16;
  int trunk_channels = 64;
  GrowthSchedule growth{};
  Attention attention = Attention::kJoint;
  int reduction_ratio = 16;
  bool global_skip = false;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    require(scale == 2 || scale == 3 || scale == 4, "scale must be 2, 3 or 4");
    require(num_blocks > 0, "num_blocks must be positive");
    require(trunk_channels > 0, "trunk_channels must be positive");
    growth.validate();
    require(reduction_ratio > 0, "reduction_ratio must be positive");
    const int width = growth.concat_width();
    if (attention != Attention::kNone && width % reduction_ratio != 0)
      throw ValidationError("attention width " + std::to_string(width) +
                            " not divisible by reduction ratio " +
                            std::to_string(reduction_ratio));
    require(bn_momentum > 0 && bn_momentum < 1, "bn momentum must be in (0,1)");
    require(bn_epsilon > 0, "bn epsilon must be positive");
  }

  /// Sub-pixel stages: one x2 or x3 stage, or two x2 stages for scale 4.
  std::vector<int> upsample_stages() const {
    if (scale == 4) return {2, 2};
    return {scale};
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "scale = " << scale << "\n"
       << "num_blocks = " << num_blocks << "\n"
       << "trunk_channels = " << trunk_channels << "\n"
       << "growth.c0 = " << growth.c0 << "\n"
       << "growth.g0 = " << growth.g0 << "\n"
       << "growth.g = " << growth.g << "\n"
       << "growth.layers = " << growth.layers << "\n"
       << "attention = " << to_string(attention) << "\n"
       << "reduction_ratio = " << reduction_ratio << "\n"
       << "global_skip = " << (global_skip ? "true" : "false") << "\n"
       << "bn.momentum = " << detail::fmt_double(bn_momentum) << "\n"
       << "bn.epsilon = " << detail::fmt_double(bn_epsilon) << "\n"
       << "seed = " << seed << "\n";
    return os.str();
  }

  /// Applies one key (config file entry or --set override). Unknown keys are
  /// hard errors; no silent defaults for misspelled options.
  bool apply_key(const std::string& key, const std::string& value) {
    if (key == "scale") scale = detail::parse_int(key, value);
    else if (key == "num_blocks") num_blocks = detail::parse_int(key, value);
    else if (key == "trunk_channels") trunk_channels = detail::parse_int(key, value);
    else if (key == "growth.c0") growth.c0 = detail::parse_int(key, value);
    else if (key == "growth.g0") growth.g0 = detail::parse_int(key, value);
    else if (key == "growth.g") growth.g = detail::parse_int(key, value);
    else if (key == "growth.layers") growth.layers = detail::parse_int(key, value);
    else if (key == "attention") attention = attention_from_string(value);
    else if (key == "reduction_ratio") reduction_ratio = detail::parse_int(key, value);
    else if (key == "global_skip") global_skip = detail::parse_bool(key, value);
    else if (key == "bn.momentum") bn_momentum = detail::parse_double(key, value);
    else if (key == "bn.epsilon") bn_epsilon = detail::parse_double(key, value);
    else if (key == "seed") seed = detail::parse_u64(key, value);
    else return false;
    return true;
  }

  /// Parses a key=value document containing only network keys.
  static NetworkConfig parse(const std::string& text) {
    NetworkConfig cfg;
    for (const auto& [k, v] : detail::parse_kv_text(text))
      if (!cfg.apply_key(k, v)) throw ValidationError("unknown config key '" + k + "'");
    cfg.validate();
    return cfg;
  }

  bool operator==(const NetworkConfig&) const = default;
};

}  // namespace pdan
