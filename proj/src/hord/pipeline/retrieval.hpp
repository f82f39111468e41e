#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hord/pipeline/dataset.hpp"
#include "hord/pipeline/model.hpp"

namespace hord::pipeline {

struct RetrievalResult {
  // Per query: gallery indices, best first.
  std::vector<std::vector<std::size_t>> ranking;
  // Per query: s^R against every gallery item.
  std::vector<std::vector<double>> stage1;
  // Per query: s^T of the refined items, in gallery-index order of `refined`.
  std::vector<std::vector<std::size_t>> refined;
  std::vector<std::vector<double>> topology;
};

struct Metrics {
  std::vector<double> cmc;  // cmc[r-1] = hit rate within the top r
  double map = 0.0;
};

// Stage-1 order: descending score, lower index first on ties.
std::vector<std::size_t> stage1_order(std::span<const double> scores);

// Two-stage ranking of one query. The strict top n of the stage-1 order is
// re-sorted by gamma s^R + (1 - gamma) s^T (stage-1 position breaks ties);
// the rest keeps its stage-1 order. `topology_score` is only called for the
// refined items.
std::vector<std::size_t> two_stage_ranking(std::span<const double> stage1, std::size_t top_n,
                                           double gamma,
                                           const std::function<double(std::size_t)>& topology_score,
                                           std::vector<double>* refined_scores = nullptr);

// s^R for one pair under the model's variant: cosine of the global rows for
// the global variant, the confidence-weighted row cosine otherwise.
double stage1_similarity(const Model& model, const NodeFeatureSet& a, const NodeFeatureSet& b);

// s^T for one pair of retrieval features (full variant only).
double topology_similarity(const Model& model, const NodeFeatureSet& a, const NodeFeatureSet& b);

// Stage 2 runs only for the full variant; gamma and top_n come from the
// arguments so evaluation can sweep them without touching the model.
RetrievalResult retrieve(const Model& model, std::span<const NodeFeatureSet> queries,
                         std::span<const NodeFeatureSet> gallery, double gamma, std::size_t top_n);

Metrics evaluate(const RetrievalResult& result, std::span<const std::uint32_t> query_labels,
                 std::span<const std::uint32_t> gallery_labels);

// Average precision of one ranked relevance list.
double average_precision(const std::vector<bool>& relevant_in_rank_order);

// Test-split retrieval for one model. Features, s^R and every computed s^T
// are cached, so sweeping gamma and n only pays for new pairs.
class Evaluator {
 public:
  Evaluator(const Model& model, const Dataset& data);

  Metrics metrics(double gamma, std::size_t top_n);
  RetrievalResult retrieve(double gamma, std::size_t top_n);

  std::span<const std::uint32_t> query_labels() const { return query_labels_; }
  std::span<const std::uint32_t> gallery_labels() const { return gallery_labels_; }

 private:
  double topology_score(std::size_t q, std::size_t g);

  const Model& model_;
  std::vector<NodeFeatureSet> queries_, gallery_;
  std::vector<std::uint32_t> query_labels_, gallery_labels_;
  std::vector<std::vector<double>> stage1_;
  std::vector<std::vector<double>> cache_;  // NaN until computed
};

Metrics evaluate_model(const Model& model, const Dataset& data, double gamma, std::size_t top_n);

// `name<TAB>value` lines: rank-1, rank-5, rank-10 and mAP.
std::string format_metrics(const Metrics& metrics);

}  // namespace hord::pipeline
