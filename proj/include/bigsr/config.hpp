#pragma once

// Run configuration shared by the command-line tool: defaults, a key=value
// file, and explicit overrides, applied in that order.

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bigsr/algorithms.hpp"
#include "bigsr/engine.hpp"
#include "bigsr/error.hpp"
#include "bigsr/storage.hpp"

namespace bigsr {

struct RunConfig {
  std::vector<std::string> store_dirs;
  std::uint64_t chunk_size = kDefaultChunkSize;
  std::uint64_t buffer_mb = 512;
  std::uint64_t sub_chunk_mb = 32;
  unsigned fan_in = 16;
  unsigned threads = 1;
  unsigned consolidate = 8;
  std::uint64_t superstep_cap = 1'000'000;
  VertexId root = 0;
  double eps = 1e-7;
  std::uint64_t max_iters = 100;
  SinkPolicy sink_policy = SinkPolicy::reject;
  std::uint64_t seed = 1;

  void validate() const {
    if (buffer_mb == 0) throw ConfigError("buffer-mb must be >= 1");
    if (fan_in < 2) throw ConfigError("fan-in must be >= 2");
    if (threads == 0) throw ConfigError("threads must be >= 1");
    if (consolidate == 0) throw ConfigError("consolidate must be >= 1");
    if (superstep_cap == 0) throw ConfigError("superstep-cap must be >= 1");
    if (max_iters == 0) throw ConfigError("max-iters must be >= 1");
    if (!(eps >= 0)) throw ConfigError("eps must be >= 0");
    store_config().validate();
    sort_config().validate();
  }

  StoreConfig store_config() const {
    StoreConfig c;
    for (const auto& d : store_dirs) c.device_dirs.emplace_back(d);
    c.chunk_size = chunk_size;
    return c;
  }

  SortReduceConfig sort_config() const {
    auto c = SortReduceConfig::scaled(buffer_mb * MiB, threads);
    c.sub_chunk_bytes = std::min(sub_chunk_mb * MiB, c.buffer_bytes / 2);
    c.fan_in = fan_in;
    return c;
  }

  EngineConfig engine_config() const {
    EngineConfig c;
    c.sort = sort_config();
    c.consolidation_threshold = consolidate;
    c.superstep_cap = superstep_cap;
    return c;
  }

  /// Applies one key=value setting; keys match the long flag names.
  void set(const std::string& key, const std::string& value) {
    if (key == "store-dir") {
      store_dirs.push_back(value);
    } else if (key == "chunk-size") {
      chunk_size = number<std::uint64_t>(key, value);
    } else if (key == "buffer-mb") {
      buffer_mb = number<std::uint64_t>(key, value);
    } else if (key == "sub-chunk-mb") {
      sub_chunk_mb = number<std::uint64_t>(key, value);
    } else if (key == "fan-in") {
      fan_in = number<unsigned>(key, value);
    } else if (key == "threads") {
      threads = number<unsigned>(key, value);
    } else if (key == "consolidate") {
      consolidate = number<unsigned>(key, value);
    } else if (key == "superstep-cap") {
      superstep_cap = number<std::uint64_t>(key, value);
    } else if (key == "root") {
      root = number<VertexId>(key, value);
    } else if (key == "eps") {
      eps = number<double>(key, value);
    } else if (key == "max-iters") {
      max_iters = number<std::uint64_t>(key, value);
    } else if (key == "seed") {
      seed = number<std::uint64_t>(key, value);
    } else if (key == "sink-policy") {
      sink_policy = parse_sink_policy(value);
    } else {
      throw ConfigError("unknown setting '" + key + "'");
    }
  }

  /// Reads `key = value` lines; '#' starts a comment line.
  void apply_file_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::uint64_t no = 0;
    bool dirs_from_file = false;
    while (std::getline(is, line)) {
      ++no;
      const auto l = trim(line);
      if (l.empty() || l[0] == '#') continue;
      const auto eq = l.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
      const auto key = trim(l.substr(0, eq));
      const auto value = trim(l.substr(eq + 1));
      try {
        if (key == "store-dir" && !dirs_from_file) {
          store_dirs.clear();
          dirs_from_file = true;
        }
        set(key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(no) + ": " + e.what());
      }
    }
  }

  static SinkPolicy parse_sink_policy(const std::string& s) {
    if (s == "reject") return SinkPolicy::reject;
    if (s == "redistribute") return SinkPolicy::redistribute;
    throw ConfigError("sink-policy must be 'reject' or 'redistribute', got '" + s + "'");
  }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <class T>
  static T number(const std::string& key, const std::string& s) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw ConfigError("bad value '" + s + "' for " + key);
    return v;
  }
};

}  // namespace bigsr
