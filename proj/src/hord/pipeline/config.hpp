#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "hord/relation/relation.hpp"
#include "hord/topology/topology.hpp"

namespace hord::pipeline {

// Which parts of the model take part in training and retrieval.
enum class Modules { global, semantic, relation, full };

struct Config {
  // loss weights and retrieval mix
  double lambda_R = 1.0;
  double lambda_T = 0.1;
  double gamma = 0.5;
  std::size_t top_n = 8;
  double alpha = 0.3;

  // dimensions
  std::size_t K = 14;
  std::size_t C = 32;
  std::size_t h = 16;
  std::size_t w = 8;
  std::size_t adgc_depth = 2;
  std::size_t cgea_depth = 1;

  // optimizer schedule
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t epochs = 120;
  std::size_t batch_p = 4;
  std::size_t batch_k = 4;
  std::uint64_t seed = 1;

  // graph matching
  double tau_init = 20.0;
  std::size_t power_iters_train = topology::kTrainingMatching.power_iters;
  std::size_t sinkhorn_iters_train = topology::kTrainingMatching.sinkhorn_iters;
  std::size_t power_iters_eval = topology::kEvaluationMatching.power_iters;
  std::size_t sinkhorn_iters_eval = topology::kEvaluationMatching.sinkhorn_iters;

  // ablations
  Modules modules = Modules::full;
  bool heatmap_norm = true;
  relation::AdjacencyMode adjacency = relation::AdjacencyMode::adaptive;
  topology::MatchingMode matching = topology::MatchingMode::learned;

  void validate() const;

  relation::RelationOptions relation_options() const;
  topology::TopologyOptions topology_options(bool training) const;
};

// Flat key=value lines. Blank lines and lines starting with '#' are skipped;
// unknown keys, duplicates and malformed values are UsageError.
Config parse_config(std::string_view text);
Config load_config(const std::string& path);
std::string serialize_config(const Config& config);

// Assigns one key; the value is validated for type only.
void set_config_value(Config& config, const std::string& key, const std::string& value);

// Every key as a number, enums as their index. Used to embed the
// configuration into a checkpoint.
std::map<std::string, double> config_numbers(const Config& config);
Config config_from_numbers(const std::map<std::string, double>& numbers);

std::string to_string(Modules m);

}  // namespace hord::pipeline
