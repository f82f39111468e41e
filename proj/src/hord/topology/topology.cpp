#include "hord/topology/topology.hpp"

#include <cmath>

#include "hord/error.hpp"
#include "hord/numerics/layers.hpp"
#include "hord/numerics/ops.hpp"

namespace hord::topology {

using num::Tensor;

namespace {

AffinityMatrix factored_affinity(const Tensor& v1, const Tensor& v2,
                                 const SkeletonAdjacency& skeleton, const Tensor& tau_node,
                                 const Tensor& tau_edge) {
  if (v1.rank() != 2 || v1.shape() != v2.shape()) {
    throw ShapeError("build_affinity: graph features " + num::to_string(v1.shape()) + " and " +
                     num::to_string(v2.shape()) + " differ");
  }
  const std::size_t k = v1.rows();
  if (skeleton.size() != k) {
    throw ShapeError("build_affinity: " + std::to_string(k) + " nodes, skeleton has " +
                     std::to_string(skeleton.size()));
  }
  AffinityMatrix out;
  out.nodes = k;
  out.node = num::exp(num::mul_scalar(
      num::matmul(num::normalize_rows(v1), num::transpose(num::normalize_rows(v2))), tau_node));

  const auto edges = skeleton.directed_edges();
  if (!edges.empty()) {
    const std::size_t m = edges.size();
    Tensor incidence({m, k}, 0.0);
    auto inc = incidence.data();
    for (std::size_t e = 0; e < m; ++e) {
      inc[e * k + edges[e].first] = 1.0;
      inc[e * k + edges[e].second] = -1.0;
    }
    Tensor d1 = num::normalize_rows(num::matmul(incidence, v1));
    Tensor d2 = num::normalize_rows(num::matmul(incidence, v2));
    out.edge = num::exp(num::mul_scalar(num::matmul(d1, num::transpose(d2)), tau_edge));
    out.edge_row.resize(m * m);
    out.edge_col.resize(m * m);
    for (std::size_t e1 = 0; e1 < m; ++e1) {
      const auto [i, j] = edges[e1];
      for (std::size_t e2 = 0; e2 < m; ++e2) {
        const auto [a, b] = edges[e2];
        out.edge_row[e1 * m + e2] = i * k + a;
        out.edge_col[e1 * m + e2] = j * k + b;
      }
    }
  }
  return out;
}

}  // namespace

AffinityMatrix build_affinity(const Tensor& v1, const Tensor& v2,
                              const SkeletonAdjacency& skeleton, const Tensor& tau_node,
                              const Tensor& tau_edge) {
  AffinityMatrix out = factored_affinity(v1, v2, skeleton, tau_node, tau_edge);
  const std::size_t n = out.nodes * out.nodes;
  std::vector<std::size_t> node_index(n);
  for (std::size_t p = 0; p < n; ++p) node_index[p] = p * n + p;
  out.M = num::scatter(out.node, node_index, {n, n});
  if (!out.edge_row.empty()) {
    std::vector<std::size_t> edge_index(out.edge_row.size());
    for (std::size_t e = 0; e < edge_index.size(); ++e) {
      edge_index[e] = out.edge_row[e] * n + out.edge_col[e];
    }
    out.M = num::add(out.M, num::scatter(out.edge, edge_index, {n, n}));
  }
  return out;
}

AffinityMatrix build_affinity(const Tensor& v1, const Tensor& v2,
                              const SkeletonAdjacency& skeleton, double tau_node,
                              double tau_edge) {
  return build_affinity(v1, v2, skeleton, Tensor::scalar(tau_node), Tensor::scalar(tau_edge));
}

Tensor power_iteration(const Tensor& M, std::size_t iters, std::vector<double>* rayleigh) {
  if (M.rank() != 2 || M.rows() != M.cols()) {
    throw ShapeError("power_iteration: matrix must be square, got " + num::to_string(M.shape()));
  }
  if (iters == 0) throw UsageError("power_iteration: at least one iteration required");
  bool nonzero = false;
  for (double v : M.values()) {
    if (v < 0.0) throw UsageError("power_iteration: matrix must be nonnegative");
    nonzero = nonzero || v != 0.0;
  }
  if (!nonzero) throw UsageError("power_iteration: zero matrix");

  const std::size_t n = M.rows();
  Tensor u({n, 1}, 1.0 / std::sqrt(static_cast<double>(n)));
  for (std::size_t t = 0; t < iters; ++t) {
    Tensor w = num::matmul(M, u);
    u = num::mul_scalar(w, num::reciprocal(num::l2_norm(w)));
    if (rayleigh) {
      auto m = M.values();
      auto x = u.values();
      double q = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < n; ++c) row += m[r * n + c] * x[c];
        q += x[r] * row;
      }
      rayleigh->push_back(q);
    }
  }
  return u;
}

Tensor power_iteration(const AffinityMatrix& affinity, std::size_t iters) {
  if (iters == 0) throw UsageError("power_iteration: at least one iteration required");
  const std::size_t n = affinity.nodes * affinity.nodes;
  if (affinity.node.size() != n) throw ShapeError("power_iteration: affinity lacks node scores");
  Tensor node = num::reshape(affinity.node, {n, 1});
  const bool has_edges = !affinity.edge_row.empty();
  Tensor edge = has_edges ? num::reshape(affinity.edge, {affinity.edge_row.size()}) : Tensor();
  Tensor u({n, 1}, 1.0 / std::sqrt(static_cast<double>(n)));
  for (std::size_t t = 0; t < iters; ++t) {
    Tensor w = num::mul(node, u);
    if (has_edges) {
      Tensor spread = num::mul(edge, num::gather(u, affinity.edge_col));
      w = num::add(w, num::scatter(spread, affinity.edge_row, {n, 1}));
    }
    u = num::mul_scalar(w, num::reciprocal(num::l2_norm(w)));
  }
  return u;
}

MatchingMatrix bistochastic(const Tensor& u_mat, std::size_t iters) {
  if (u_mat.rank() != 2 || u_mat.rows() != u_mat.cols()) {
    throw ShapeError("bistochastic: matrix must be square, got " + num::to_string(u_mat.shape()));
  }
  Tensor x = num::clamp_min(u_mat, kSinkhornFloor);
  for (std::size_t t = 0; t < iters; ++t) {
    x = num::scale_rows(x, num::reciprocal(num::row_sums(x)));
    x = num::scale_cols(x, num::reciprocal(num::col_sums(x)));
  }
  return {x};
}

namespace {

Tensor matching_scores(const Tensor& v1, const Tensor& v2, const SkeletonAdjacency& skeleton,
                       const Tensor& tau_node, const Tensor& tau_edge, MatchingOptions options) {
  const auto affinity = factored_affinity(v1, v2, skeleton, tau_node, tau_edge);
  const std::size_t k = affinity.nodes;
  return num::abs(num::reshape(power_iteration(affinity, options.power_iters), {k, k}));
}

}  // namespace

MatchingMatrix graph_matching(const Tensor& v1, const Tensor& v2,
                              const SkeletonAdjacency& skeleton, const Tensor& tau_node,
                              const Tensor& tau_edge, MatchingOptions options) {
  return bistochastic(matching_scores(v1, v2, skeleton, tau_node, tau_edge, options),
                      options.sinkhorn_iters);
}

MatchingMatrix graph_matching(const Tensor& v1, const Tensor& v2,
                              const SkeletonAdjacency& skeleton, double tau_node,
                              double tau_edge, MatchingOptions options) {
  return graph_matching(v1, v2, skeleton, Tensor::scalar(tau_node), Tensor::scalar(tau_edge),
                        options);
}

MatchingMatrix symmetric_matching(const Tensor& v1, const Tensor& v2,
                                  const SkeletonAdjacency& skeleton, const Tensor& tau_node,
                                  const Tensor& tau_edge, MatchingOptions options) {
  Tensor x = matching_scores(v1, v2, skeleton, tau_node, tau_edge, options);
  Tensor forward = bistochastic(x, options.sinkhorn_iters).U;
  Tensor backward = num::transpose(bistochastic(num::transpose(x), options.sinkhorn_iters).U);
  return {num::scale(num::add(forward, backward), 0.5)};
}

void register_cgea(num::ParamStore& store, const std::string& prefix, std::size_t width,
                   double tau_init, bool zero_f) {
  if (!(tau_init > 0.0)) throw UsageError("matching temperature must be positive");
  num::register_linear(store, prefix + ".embed", width, width);
  num::register_linear(store, prefix + ".f", 2 * width, width, zero_f);
  store.add(prefix + ".log_tau_node", {1}, num::Init::constant(std::log(tau_init)));
  store.add(prefix + ".log_tau_edge", {1}, num::Init::constant(std::log(tau_init)));
}

void register_topology(num::ParamStore& store, std::size_t depth, std::size_t width,
                       std::size_t keypoints, double tau_init) {
  if (depth == 0) throw UsageError("topology depth must be at least 1");
  for (std::size_t l = 0; l < depth; ++l) {
    register_cgea(store, kLayerPrefix + "." + std::to_string(l), width, tau_init);
  }
  num::register_linear(store, kSimilarityPrefix, (keypoints + 1) * width, 1, true);
}

Temperatures temperatures(const num::ParamStore& store, const std::string& prefix) {
  return {num::exp(store.get(prefix + ".log_tau_node")),
          num::exp(store.get(prefix + ".log_tau_edge"))};
}

CgeaOutput cgea_forward(const NodeFeatureSet& a, const NodeFeatureSet& b,
                        const SkeletonAdjacency& skeleton, const num::ParamStore& store,
                        const std::string& prefix, const TopologyOptions& options) {
  if (a.features.shape() != b.features.shape()) {
    throw ShapeError("cgea_forward: inputs " + num::to_string(a.features.shape()) + " and " +
                     num::to_string(b.features.shape()) + " differ");
  }
  const std::size_t k = a.keypoints();
  if (skeleton.size() != k) {
    throw ShapeError("cgea_forward: " + std::to_string(k) + " local nodes, skeleton has " +
                     std::to_string(skeleton.size()));
  }

  const Tensor inputs[] = {a.features, b.features};
  Tensor hidden = num::relu(num::linear(store, prefix + ".embed", num::concat_rows(inputs)));
  Tensor h1 = num::slice_rows(hidden, 0, k + 1);
  Tensor h2 = num::slice_rows(hidden, k + 1, 2 * k + 2);
  Tensor l1 = num::slice_rows(h1, 0, k);
  Tensor l2 = num::slice_rows(h2, 0, k);

  MatchingMatrix matching;
  if (options.mode == MatchingMode::uniform) {
    matching.U = Tensor({k, k}, 1.0 / static_cast<double>(k));
  } else {
    const auto tau = temperatures(store, prefix);
    matching = symmetric_matching(l1, l2, skeleton, tau.node, tau.edge, options.matching);
  }

  const Tensor routed1[] = {num::matmul(matching.U, l2), num::slice_rows(h2, k, k + 1)};
  const Tensor routed2[] = {num::matmul(num::transpose(matching.U), l1),
                            num::slice_rows(h1, k, k + 1)};
  const Tensor joined[] = {num::concat_cols(h1, num::concat_rows(routed1)),
                           num::concat_cols(h2, num::concat_rows(routed2))};
  Tensor out = num::add(num::linear(store, prefix + ".f", num::concat_rows(joined)), hidden);

  return {{num::slice_rows(out, 0, k + 1), a.beta, semantic::Stage::topology},
          {num::slice_rows(out, k + 1, 2 * k + 2), b.beta, semantic::Stage::topology},
          matching};
}

std::pair<NodeFeatureSet, NodeFeatureSet> topology_module(const NodeFeatureSet& a,
                                                          const NodeFeatureSet& b,
                                                          const SkeletonAdjacency& skeleton,
                                                          const num::ParamStore& store,
                                                          const TopologyOptions& options) {
  if (options.depth == 0) throw UsageError("topology depth must be at least 1");
  NodeFeatureSet x = a, y = b;
  for (std::size_t l = 0; l < options.depth; ++l) {
    auto out = cgea_forward(x, y, skeleton, store, kLayerPrefix + "." + std::to_string(l), options);
    x = std::move(out.first);
    y = std::move(out.second);
  }
  return {std::move(x), std::move(y)};
}

Tensor similarity_logit(const NodeFeatureSet& a, const NodeFeatureSet& b,
                        const num::ParamStore& store) {
  if (a.features.shape() != b.features.shape()) {
    throw ShapeError("similarity_predict: inputs " + num::to_string(a.features.shape()) +
                     " and " + num::to_string(b.features.shape()) + " differ");
  }
  const std::size_t n = a.features.size();
  Tensor diff = num::negate(num::abs(num::sub(num::reshape(a.features, {1, n}),
                                              num::reshape(b.features, {1, n}))));
  return num::reshape(num::linear(store, kSimilarityPrefix, diff), {1});
}

Tensor similarity_predict(const NodeFeatureSet& a, const NodeFeatureSet& b,
                          const num::ParamStore& store) {
  return num::sigmoid(similarity_logit(a, b, store));
}

namespace {

void require_label(int y) {
  if (y != 0 && y != 1) throw UsageError("verification label must be 0 or 1");
}

void require_probability(double s) {
  if (!(s > 0.0 && s < 1.0)) {
    throw UsageError("verification_loss: similarity " + std::to_string(s) + " outside (0, 1)");
  }
}

}  // namespace

double verification_loss(double s, int y) {
  require_label(y);
  require_probability(s);
  return y == 1 ? -std::log(s) : -std::log1p(-s);
}

Tensor verification_loss(const Tensor& s, int y) {
  require_label(y);
  if (s.size() != 1) throw ShapeError("verification_loss: expected one similarity");
  require_probability(s.item());
  return y == 1 ? num::negate(num::log(s))
                : num::negate(num::log(num::add_scalar(num::negate(s), 1.0)));
}

Tensor verification_loss_from_logit(const Tensor& z, int y) {
  require_label(y);
  return y == 1 ? num::softplus(num::negate(z)) : num::softplus(z);
}

}  // namespace hord::topology
