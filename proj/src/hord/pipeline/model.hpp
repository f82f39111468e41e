#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hord/numerics/checkpoint.hpp"
#include "hord/numerics/param_store.hpp"
#include "hord/pipeline/config.hpp"
#include "hord/pipeline/dataset.hpp"
#include "hord/relation/relation.hpp"
#include "hord/semantic/semantic.hpp"

namespace hord::pipeline {

using semantic::NodeFeatureSet;

struct Model {
  Config config;
  std::size_t classes = 0;
  num::ParamStore store;
  relation::SkeletonAdjacency skeleton;
};

// Registers the classifiers and layers the configured modules need, drawing
// initial values from config.seed.
Model make_model(const Config& config, std::size_t classes);

// The checkpoint holds the parameters, buffers, the class count and every
// config value (as one-element "config.<key>" tensors).
num::TensorMap model_checkpoint(const Model& model);
Model model_from_checkpoint(const num::TensorMap& entries);
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

// Semantic node features of one sample under the configured heatmap handling.
NodeFeatureSet semantic_features(const Sample& sample, const Config& config);

// The per-image representation used by stage-1 retrieval: semantic features
// for the global and semantic variants, relation features otherwise.
std::vector<NodeFeatureSet> retrieval_features(const Model& model,
                                               std::span<const NodeFeatureSet> semantic);

// One verification pair of a training batch, by position in the batch.
struct VerificationPair {
  std::size_t first, second;
  int same;
};

// For every anchor one positive and one negative partner, drawn uniformly.
std::vector<VerificationPair> sample_pairs(std::span<const std::uint32_t> labels,
                                           std::mt19937_64& rng);

struct LossParts {
  num::Tensor total;
  double semantic = 0.0, relation = 0.0, topology = 0.0;
};

// L_S + lambda_R L_R + lambda_T L_T over one identity-balanced batch. Labels
// are class indices below model.classes.
LossParts total_loss(const Model& model, std::span<const NodeFeatureSet> batch,
                     std::span<const std::uint32_t> labels,
                     std::span<const VerificationPair> pairs);

}  // namespace hord::pipeline
