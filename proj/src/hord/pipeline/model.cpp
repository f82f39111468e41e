#include "hord/pipeline/model.hpp"

#include "hord/error.hpp"
#include "hord/numerics/ops.hpp"
#include "hord/topology/topology.hpp"

namespace hord::pipeline {

using num::Tensor;

namespace {

relation::SkeletonAdjacency skeleton_for(std::size_t K) {
  return K == semantic::kDefaultKeypoints ? relation::build_skeleton(K)
                                          : relation::complete_graph(K);
}

const std::string kConfigPrefix = "config.";
const std::string kClassesEntry = "model.classes";

}  // namespace

Model make_model(const Config& config, std::size_t classes) {
  config.validate();
  if (classes < 2) throw UsageError("model needs at least 2 identity classes");
  Model m{config, classes, num::ParamStore(config.seed), skeleton_for(config.K)};
  if (config.modules == Modules::global) return m;
  semantic::register_classifiers(m.store, semantic::kClassifierPrefix, config.K + 1, config.C,
                                 classes);
  if (config.modules == Modules::semantic) return m;
  relation::register_relation(m.store, config.adgc_depth, config.C, config.K, classes);
  if (config.modules == Modules::relation) return m;
  topology::register_topology(m.store, config.cgea_depth, config.C, config.K, config.tau_init);
  return m;
}

num::TensorMap model_checkpoint(const Model& model) {
  auto entries = num::snapshot(model.store);
  for (const auto& [key, value] : config_numbers(model.config)) {
    entries[kConfigPrefix + key] = Tensor::vector({value});
  }
  entries[kClassesEntry] = Tensor::vector({static_cast<double>(model.classes)});
  return entries;
}

Model model_from_checkpoint(const num::TensorMap& entries) {
  std::map<std::string, double> numbers;
  num::TensorMap params;
  double classes = -1.0;
  for (const auto& [name, t] : entries) {
    if (name.starts_with(kConfigPrefix) || name == kClassesEntry) {
      if (t.size() != 1) throw FormatError("checkpoint entry '" + name + "' must be scalar");
      if (name == kClassesEntry) {
        classes = t.item();
      } else {
        numbers[name.substr(kConfigPrefix.size())] = t.item();
      }
    } else {
      params.emplace(name, t);
    }
  }
  if (classes < 2.0) throw FormatError("checkpoint lacks a valid class count");
  Model model = make_model(config_from_numbers(numbers), static_cast<std::size_t>(classes));
  if (params.size() != model.store.names().size()) {
    throw FormatError("checkpoint holds " + std::to_string(params.size()) +
                      " parameter entries, model expects " +
                      std::to_string(model.store.names().size()));
  }
  num::restore(model.store, params);
  return model;
}

void save_model(const std::string& path, const Model& model) {
  num::save_checkpoint(path, model_checkpoint(model));
}

Model load_model(const std::string& path) {
  return model_from_checkpoint(num::load_checkpoint(path));
}

NodeFeatureSet semantic_features(const Sample& sample, const Config& config) {
  if (sample.heatmaps.rank() != 3 || sample.heatmaps.shape()[0] != config.K ||
      sample.feature_map.rank() != 3 || sample.feature_map.shape()[0] != config.C) {
    throw ShapeError("sample " + num::to_string(sample.feature_map.shape()) + " / " +
                     num::to_string(sample.heatmaps.shape()) + " does not match K=" +
                     std::to_string(config.K) + ", C=" + std::to_string(config.C));
  }
  const semantic::HeatmapSet raw{sample.heatmaps, std::nullopt};
  const auto heat = config.heatmap_norm ? semantic::normalize_heatmaps(raw)
                                        : semantic::passthrough_heatmaps(raw);
  return semantic::extract_semantic_features({sample.feature_map}, heat);
}

std::vector<NodeFeatureSet> retrieval_features(const Model& model,
                                               std::span<const NodeFeatureSet> semantic) {
  if (model.config.modules == Modules::global || model.config.modules == Modules::semantic) {
    return {semantic.begin(), semantic.end()};
  }
  return relation::relation_module(semantic, model.skeleton, model.store,
                                   model.config.relation_options(), num::Mode::eval);
}

std::vector<VerificationPair> sample_pairs(std::span<const std::uint32_t> labels,
                                           std::mt19937_64& rng) {
  std::vector<VerificationPair> pairs;
  pairs.reserve(2 * labels.size());
  for (std::size_t a = 0; a < labels.size(); ++a) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) {
      throw UsageError("verification pairs need a positive and a negative for every anchor");
    }
    pairs.push_back({a, pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)], 1});
    pairs.push_back({a, neg[std::uniform_int_distribution<std::size_t>(0, neg.size() - 1)(rng)], 0});
  }
  return pairs;
}

LossParts total_loss(const Model& model, std::span<const NodeFeatureSet> batch,
                     std::span<const std::uint32_t> labels,
                     std::span<const VerificationPair> pairs) {
  const Config& cfg = model.config;
  if (cfg.modules == Modules::global) {
    throw UsageError("the global-only variant has no trainable loss");
  }
  LossParts parts;
  parts.total = semantic::semantic_loss(batch, labels, cfg.alpha, model.store, num::Mode::train);
  parts.semantic = parts.total.item();
  if (cfg.modules == Modules::semantic) return parts;

  auto rel = relation::relation_module(batch, model.skeleton, model.store, cfg.relation_options(),
                                       num::Mode::train);
  Tensor l_r = relation::relation_loss(rel, labels, cfg.alpha, model.store, num::Mode::train);
  parts.relation = l_r.item();
  parts.total = num::add(parts.total, num::scale(l_r, cfg.lambda_R));
  if (cfg.modules == Modules::relation) return parts;

  if (pairs.empty()) throw UsageError("topology loss needs verification pairs");
  const auto options = cfg.topology_options(true);
  std::vector<Tensor> terms;
  terms.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.first >= rel.size() || p.second >= rel.size()) {
      throw UsageError("verification pair outside the batch");
    }
    auto [x, y] = topology::topology_module(rel[p.first], rel[p.second], model.skeleton,
                                            model.store, options);
    terms.push_back(
        topology::verification_loss_from_logit(topology::similarity_logit(x, y, model.store),
                                               p.same));
  }
  Tensor l_t = num::mean(num::stack(terms));
  parts.topology = l_t.item();
  parts.total = num::add(parts.total, num::scale(l_t, cfg.lambda_T));
  return parts;
}

}  // namespace hord::pipeline
