#include "hord/pipeline/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

#include "hord/error.hpp"
#include "hord/numerics/ops.hpp"
#include "hord/topology/topology.hpp"

namespace hord::pipeline {

std::vector<std::size_t> stage1_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> two_stage_ranking(std::span<const double> stage1, std::size_t top_n,
                                           double gamma,
                                           const std::function<double(std::size_t)>& topology_score,
                                           std::vector<double>* refined_scores) {
  if (stage1.empty()) throw UsageError("retrieval needs a non-empty gallery");
  if (top_n == 0) throw UsageError("top_n must be at least 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
  auto order = stage1_order(stage1);
  const std::size_t n = std::min(top_n, order.size());
  std::vector<double> mixed(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t g = order[r];
    mixed[r] = gamma * stage1[g] + (1.0 - gamma) * topology_score(g);
  }
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), 0);
  std::stable_sort(pos.begin(), pos.end(),
                   [&](std::size_t a, std::size_t b) { return mixed[a] > mixed[b]; });
  std::vector<std::size_t> ranking;
  ranking.reserve(order.size());
  for (auto p : pos) ranking.push_back(order[p]);
  ranking.insert(ranking.end(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end());
  if (refined_scores) {
    refined_scores->clear();
    for (auto p : pos) refined_scores->push_back(mixed[p]);
  }
  return ranking;
}

namespace {

double row_cosine(std::span<const double> x, std::span<const double> y) {
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  return nx > 0.0 && ny > 0.0 ? dot / std::sqrt(nx * ny) : 0.0;
}

}  // namespace

double stage1_similarity(const Model& model, const NodeFeatureSet& a, const NodeFeatureSet& b) {
  if (model.config.modules == Modules::global) {
    if (a.features.shape() != b.features.shape()) {
      throw ShapeError("stage1_similarity: feature sets differ in shape");
    }
    const std::size_t k = a.keypoints(), c = a.width();
    return row_cosine(a.features.values().subspan(k * c, c), b.features.values().subspan(k * c, c));
  }
  return relation::relation_similarity(a, b);
}

double topology_similarity(const Model& model, const NodeFeatureSet& a, const NodeFeatureSet& b) {
  if (model.config.modules != Modules::full) {
    throw UsageError("topology similarity needs the full model");
  }
  num::NoRecord no_record;
  auto [x, y] = topology::topology_module(a, b, model.skeleton, model.store,
                                          model.config.topology_options(false));
  return topology::similarity_predict(x, y, model.store).item();
}

RetrievalResult retrieve(const Model& model, std::span<const NodeFeatureSet> queries,
                         std::span<const NodeFeatureSet> gallery, double gamma,
                         std::size_t top_n) {
  if (gallery.empty()) throw UsageError("retrieval needs a non-empty gallery");
  RetrievalResult result;
  for (const auto& q : queries) {
    std::vector<double> s(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) s[g] = stage1_similarity(model, q, gallery[g]);
    std::vector<std::size_t> refined;
    std::vector<double> topo;
    std::vector<std::size_t> ranking;
    if (model.config.modules == Modules::full) {
      ranking = two_stage_ranking(s, top_n, gamma, [&](std::size_t g) {
        const double t = topology_similarity(model, q, gallery[g]);
        refined.push_back(g);
        topo.push_back(t);
        return t;
      });
    } else {
      ranking = stage1_order(s);
    }
    result.ranking.push_back(std::move(ranking));
    result.stage1.push_back(std::move(s));
    result.refined.push_back(std::move(refined));
    result.topology.push_back(std::move(topo));
  }
  return result;
}

double average_precision(const std::vector<bool>& relevant_in_rank_order) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < relevant_in_rank_order.size(); ++r) {
    if (!relevant_in_rank_order[r]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(r + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

Metrics evaluate(const RetrievalResult& result, std::span<const std::uint32_t> query_labels,
                 std::span<const std::uint32_t> gallery_labels) {
  if (result.ranking.size() != query_labels.size()) {
    throw ShapeError("evaluate: " + std::to_string(result.ranking.size()) + " rankings for " +
                     std::to_string(query_labels.size()) + " queries");
  }
  if (query_labels.empty()) throw UsageError("evaluate: no queries");
  const std::size_t G = gallery_labels.size();
  Metrics m;
  m.cmc.assign(G, 0.0);
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < query_labels.size(); ++q) {
    const auto& ranking = result.ranking[q];
    if (ranking.size() != G) throw ShapeError("evaluate: ranking does not cover the gallery");
    std::vector<bool> seen(G, false), relevant(G, false);
    std::size_t first_hit = G;
    for (std::size_t r = 0; r < G; ++r) {
      const auto g = ranking[r];
      if (g >= G || seen[g]) throw UsageError("evaluate: ranking is not a permutation");
      seen[g] = true;
      relevant[r] = gallery_labels[g] == query_labels[q];
      if (relevant[r] && first_hit == G) first_hit = r;
    }
    if (first_hit == G) {
      throw UsageError("evaluate: query " + std::to_string(q) + " has no relevant gallery item");
    }
    for (std::size_t r = first_hit; r < G; ++r) m.cmc[r] += 1.0;
    ap_sum += average_precision(relevant);
  }
  const double nq = static_cast<double>(query_labels.size());
  for (auto& v : m.cmc) v /= nq;
  m.map = ap_sum / nq;
  return m;
}

Evaluator::Evaluator(const Model& model, const Dataset& data) : model_(model) {
  if (data.K != model.config.K || data.c != model.config.C) {
    throw UsageError("dataset K=" + std::to_string(data.K) + ", c=" + std::to_string(data.c) +
                     " does not match the model");
  }
  const Split split = split_dataset(data);
  std::vector<NodeFeatureSet> sem_q, sem_g;
  for (auto i : split.query) {
    sem_q.push_back(semantic_features(data.samples[i], model.config));
    query_labels_.push_back(data.samples[i].identity);
  }
  for (auto i : split.gallery) {
    sem_g.push_back(semantic_features(data.samples[i], model.config));
    gallery_labels_.push_back(data.samples[i].identity);
  }
  num::NoRecord no_record;
  queries_ = retrieval_features(model, sem_q);
  gallery_ = retrieval_features(model, sem_g);
  stage1_.assign(queries_.size(), std::vector<double>(gallery_.size()));
  for (std::size_t q = 0; q < queries_.size(); ++q)
    for (std::size_t g = 0; g < gallery_.size(); ++g)
      stage1_[q][g] = stage1_similarity(model, queries_[q], gallery_[g]);
  cache_.assign(queries_.size(),
                std::vector<double>(gallery_.size(), std::numeric_limits<double>::quiet_NaN()));
}

double Evaluator::topology_score(std::size_t q, std::size_t g) {
  if (std::isnan(cache_[q][g])) cache_[q][g] = topology_similarity(model_, queries_[q], gallery_[g]);
  return cache_[q][g];
}

RetrievalResult Evaluator::retrieve(double gamma, std::size_t top_n) {
  if (gallery_.empty()) throw UsageError("retrieval needs a non-empty gallery");
  const bool full = model_.config.modules == Modules::full;
  if (full) {
    // Fill the cache for every refined pair first, queries in parallel.
    std::vector<std::pair<std::size_t, std::size_t>> todo;
    for (std::size_t q = 0; q < queries_.size(); ++q) {
      const auto order = stage1_order(stage1_[q]);
      for (std::size_t r = 0; r < std::min(top_n, order.size()); ++r) {
        if (std::isnan(cache_[q][order[r]])) todo.emplace_back(q, order[r]);
      }
    }
    const std::size_t threads =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), 8));
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < todo.size(); i += threads) {
            const auto [q, g] = todo[i];
            cache_[q][g] = topology_similarity(model_, queries_[q], gallery_[g]);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  RetrievalResult result;
  for (std::size_t q = 0; q < queries_.size(); ++q) {
    std::vector<std::size_t> refined;
    std::vector<double> topo;
    if (full) {
      result.ranking.push_back(two_stage_ranking(stage1_[q], top_n, gamma, [&](std::size_t g) {
        const double t = topology_score(q, g);
        refined.push_back(g);
        topo.push_back(t);
        return t;
      }));
    } else {
      result.ranking.push_back(stage1_order(stage1_[q]));
    }
    result.stage1.push_back(stage1_[q]);
    result.refined.push_back(std::move(refined));
    result.topology.push_back(std::move(topo));
  }
  return result;
}

Metrics Evaluator::metrics(double gamma, std::size_t top_n) {
  return evaluate(retrieve(gamma, top_n), query_labels_, gallery_labels_);
}

Metrics evaluate_model(const Model& model, const Dataset& data, double gamma, std::size_t top_n) {
  Evaluator evaluator(model, data);
  return evaluator.metrics(gamma, top_n);
}

std::string format_metrics(const Metrics& metrics) {
  std::string out;
  char line[64];
  for (std::size_t r : {1, 5, 10}) {
    const double v = metrics.cmc.empty() ? 0.0 : metrics.cmc[std::min(r, metrics.cmc.size()) - 1];
    std::snprintf(line, sizeof line, "rank-%zu\t%.6f\n", r, v);
    out += line;
  }
  std::snprintf(line, sizeof line, "mAP\t%.6f\n", metrics.map);
  out += line;
  return out;
}

}  // namespace hord::pipeline
