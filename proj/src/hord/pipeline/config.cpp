#include "hord/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "hord/binary_io.hpp"
#include "hord/error.hpp"

namespace hord::pipeline {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>);
using Member = std::variant<double Config::*, std::size_t Config::*,
                            bool Config::*, Modules Config::*, relation::AdjacencyMode Config::*,
                            topology::MatchingMode Config::*>;

struct Field {
  const char* name;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"lambda_R", &Config::lambda_R},
      {"lambda_T", &Config::lambda_T},
      {"gamma", &Config::gamma},
      {"top_n", &Config::top_n},
      {"alpha", &Config::alpha},
      {"K", &Config::K},
      {"C", &Config::C},
      {"h", &Config::h},
      {"w", &Config::w},
      {"adgc_depth", &Config::adgc_depth},
      {"cgea_depth", &Config::cgea_depth},
      {"lr", &Config::lr},
      {"momentum", &Config::momentum},
      {"weight_decay", &Config::weight_decay},
      {"epochs", &Config::epochs},
      {"batch_p", &Config::batch_p},
      {"batch_k", &Config::batch_k},
      {"seed", &Config::seed},
      {"tau_init", &Config::tau_init},
      {"power_iters_train", &Config::power_iters_train},
      {"sinkhorn_iters_train", &Config::sinkhorn_iters_train},
      {"power_iters_eval", &Config::power_iters_eval},
      {"sinkhorn_iters_eval", &Config::sinkhorn_iters_eval},
      {"modules", &Config::modules},
      {"heatmap_norm", &Config::heatmap_norm},
      {"adjacency", &Config::adjacency},
      {"matching", &Config::matching},
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.name) return f;
  }
  throw UsageError("unknown config key '" + key + "'");
}

const char* const kModuleNames[] = {"global", "semantic", "relation", "full"};
const char* const kAdjacencyNames[] = {"adaptive", "fixed"};
const char* const kMatchingNames[] = {"learned", "uniform"};

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& value, const char* const (&names)[N]) {
  for (std::size_t i = 0; i < N; ++i) {
    if (value == names[i]) return static_cast<E>(i);
  }
  std::string options;
  for (std::size_t i = 0; i < N; ++i) options += (i ? "|" : "") + std::string(names[i]);
  throw UsageError("config key '" + key + "' expects one of " + options + ", got '" + value + "'");
}

template <typename E, std::size_t N>
E enum_from_number(const std::string& key, double v, const char* const (&)[N]) {
  if (!(v >= 0.0 && v < static_cast<double>(N)) || v != std::floor(v)) {
    throw FormatError("embedded config value for '" + key + "' out of range");
  }
  return static_cast<E>(static_cast<std::size_t>(v));
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + value +
                     "'");
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string to_string(Modules m) { return kModuleNames[static_cast<std::size_t>(m)]; }

void set_config_value(Config& config, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  std::visit(
      [&](auto member) {
        using T = std::remove_cvref_t<decltype(config.*member)>;
        if constexpr (std::is_same_v<T, double>) {
          config.*member = parse_real(key, value);
        } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
          config.*member = static_cast<T>(parse_unsigned(key, value));
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "1" || value == "true") {
            config.*member = true;
          } else if (value == "0" || value == "false") {
            config.*member = false;
          } else {
            throw UsageError("config key '" + key + "' expects true|false, got '" + value + "'");
          }
        } else if constexpr (std::is_same_v<T, Modules>) {
          config.*member = parse_enum<Modules>(key, value, kModuleNames);
        } else if constexpr (std::is_same_v<T, relation::AdjacencyMode>) {
          config.*member = parse_enum<relation::AdjacencyMode>(key, value, kAdjacencyNames);
        } else {
          config.*member = parse_enum<topology::MatchingMode>(key, value, kMatchingNames);
        }
      },
      f.member);
}

Config parse_config(std::string_view text) {
  Config config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto next = text.find('\n', pos);
    const auto line = trim(text.substr(pos, next == std::string_view::npos ? text.npos : next - pos));
    ++line_no;
    pos = next == std::string_view::npos ? text.size() + 1 : next + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) {
      throw UsageError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    set_config_value(config, key, value);
  }
  config.validate();
  return config;
}

Config load_config(const std::string& path) {
  const auto bytes = io::read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string serialize_config(const Config& config) {
  std::ostringstream out;
  for (const auto& f : fields()) {
    out << f.name << '=';
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(config.*member)>;
          const auto& v = config.*member;
          if constexpr (std::is_same_v<T, double>) {
            out << format_real(v);
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (v ? "true" : "false");
          } else if constexpr (std::is_same_v<T, Modules>) {
            out << kModuleNames[static_cast<std::size_t>(v)];
          } else if constexpr (std::is_same_v<T, relation::AdjacencyMode>) {
            out << kAdjacencyNames[static_cast<std::size_t>(v)];
          } else if constexpr (std::is_same_v<T, topology::MatchingMode>) {
            out << kMatchingNames[static_cast<std::size_t>(v)];
          } else {
            out << v;
          }
        },
        f.member);
    out << '\n';
  }
  return out.str();
}

std::map<std::string, double> config_numbers(const Config& config) {
  std::map<std::string, double> out;
  for (const auto& f : fields()) {
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(config.*member)>;
          if constexpr (std::is_enum_v<T>) {
            out[f.name] = static_cast<double>(static_cast<std::size_t>(config.*member));
          } else {
            out[f.name] = static_cast<double>(config.*member);
          }
        },
        f.member);
  }
  return out;
}

Config config_from_numbers(const std::map<std::string, double>& numbers) {
  Config config;
  for (const auto& f : fields()) {
    auto it = numbers.find(f.name);
    if (it == numbers.end()) {
      throw FormatError(std::string("embedded config lacks '") + f.name + "'");
    }
    const double v = it->second;
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(config.*member)>;
          if constexpr (std::is_same_v<T, double>) {
            config.*member = v;
          } else if constexpr (std::is_same_v<T, bool>) {
            config.*member = v != 0.0;
          } else if constexpr (std::is_same_v<T, Modules>) {
            config.*member = enum_from_number<Modules>(f.name, v, kModuleNames);
          } else if constexpr (std::is_same_v<T, relation::AdjacencyMode>) {
            config.*member = enum_from_number<relation::AdjacencyMode>(f.name, v, kAdjacencyNames);
          } else if constexpr (std::is_same_v<T, topology::MatchingMode>) {
            config.*member = enum_from_number<topology::MatchingMode>(f.name, v, kMatchingNames);
          } else {
            if (!(v >= 0.0) || v != std::floor(v)) {
              throw FormatError(std::string("embedded config value for '") + f.name +
                                "' is not a count");
            }
            config.*member = static_cast<T>(v);
          }
        },
        f.member);
  }
  try {
    config.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("embedded config invalid: ") + e.what());
  }
  return config;
}

void Config::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("invalid config: " + what);
  };
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(top_n >= 1, "top_n must be at least 1");
  require(batch_p >= 2, "batch_p must be at least 2");
  require(batch_k >= 2, "batch_k must be at least 2");
  require(alpha >= 0.0, "alpha must be non-negative");
  require(lambda_R >= 0.0 && lambda_T >= 0.0, "loss weights must be non-negative");
  require(K >= 2, "K must be at least 2");
  require(C >= 1 && h >= 1 && w >= 1, "dimensions must be positive");
  require(adgc_depth >= 1 && cgea_depth >= 1, "layer depths must be at least 1");
  require(lr >= 0.0, "lr must be non-negative");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(tau_init > 0.0, "tau_init must be positive");
  require(power_iters_train >= 1 && power_iters_eval >= 1, "power iterations must be at least 1");
  // Seeds round-trip through doubles inside checkpoints.
  require(seed < (std::uint64_t{1} << 53), "seed must be below 2^53");
}

relation::RelationOptions Config::relation_options() const { return {adgc_depth, adjacency}; }

topology::TopologyOptions Config::topology_options(bool training) const {
  topology::TopologyOptions o;
  o.depth = cgea_depth;
  o.mode = matching;
  o.matching = training ? topology::MatchingOptions{power_iters_train, sinkhorn_iters_train}
                        : topology::MatchingOptions{power_iters_eval, sinkhorn_iters_eval};
  return o;
}

}  // namespace hord::pipeline
