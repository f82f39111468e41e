#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hord/numerics/param_store.hpp"
#include "hord/numerics/tensor.hpp"
#include "hord/relation/relation.hpp"
#include "hord/semantic/semantic.hpp"

// High-order topology features: soft graph matching between two images'
// keypoint graphs and cross-graph embedded alignment on top of it.
namespace hord::topology {

using relation::SkeletonAdjacency;
using semantic::NodeFeatureSet;

// (K*K) x (K*K); row/column index i*K + a pairs node i of graph 1 with node a
// of graph 2.
struct AffinityMatrix {
  num::Tensor M;
  std::size_t nodes = 0;
  // The same matrix in factored form: K x K node scores, m x m edge scores
  // over directed skeleton edges, and for every edge entry the flat index of
  // its column (read from u) and row (written to M u).
  num::Tensor node, edge;
  std::vector<std::size_t> edge_col, edge_row;
};

// K x K soft correspondence, U[i, a].
struct MatchingMatrix {
  num::Tensor U;
};

struct MatchingOptions {
  std::size_t power_iters = 20;
  std::size_t sinkhorn_iters = 10;
};

inline constexpr MatchingOptions kTrainingMatching{20, 10};
inline constexpr MatchingOptions kEvaluationMatching{200, 100};

inline constexpr double kSinkhornFloor = 1e-12;

// Node score exp(tau_node cos(v1_i, v2_a)) on the diagonal, edge score
// exp(tau_edge cos(v1_i - v1_j, v2_a - v2_b)) for (i,j), (a,b) in E. The
// temperatures are one-element tensors so they can be learned.
AffinityMatrix build_affinity(const num::Tensor& v1, const num::Tensor& v2,
                              const SkeletonAdjacency& skeleton, const num::Tensor& tau_node,
                              const num::Tensor& tau_edge);
AffinityMatrix build_affinity(const num::Tensor& v1, const num::Tensor& v2,
                              const SkeletonAdjacency& skeleton, double tau_node,
                              double tau_edge);

// u <- M u / |M u| from the uniform unit vector; returns [n x 1]. When
// `rayleigh` is given, u^T M u is appended after every step.
num::Tensor power_iteration(const num::Tensor& M, std::size_t iters,
                            std::vector<double>* rayleigh = nullptr);
// Same iteration through the factored form; never touches the dense M, so it
// also accepts an affinity whose M was left empty.
num::Tensor power_iteration(const AffinityMatrix& affinity, std::size_t iters);

// Alternating row then column normalization after flooring at 1e-12.
MatchingMatrix bistochastic(const num::Tensor& u_mat, std::size_t iters);

MatchingMatrix graph_matching(const num::Tensor& v1, const num::Tensor& v2,
                              const SkeletonAdjacency& skeleton, const num::Tensor& tau_node,
                              const num::Tensor& tau_edge, MatchingOptions options = {});
MatchingMatrix graph_matching(const num::Tensor& v1, const num::Tensor& v2,
                              const SkeletonAdjacency& skeleton, double tau_node,
                              double tau_edge, MatchingOptions options = {});

// The order-invariant variant used inside CGEA: the mean of the projection of
// the power-iteration matrix X and the transposed projection of X^T. Swapping
// the graphs transposes the result.
MatchingMatrix symmetric_matching(const num::Tensor& v1, const num::Tensor& v2,
                                  const SkeletonAdjacency& skeleton, const num::Tensor& tau_node,
                                  const num::Tensor& tau_edge, MatchingOptions options = {});

enum class MatchingMode { learned, uniform };

struct TopologyOptions {
  std::size_t depth = 2;
  MatchingOptions matching = kTrainingMatching;
  MatchingMode mode = MatchingMode::learned;
};

inline const std::string kLayerPrefix = "topology.cgea";
inline const std::string kSimilarityPrefix = "topology.similarity";

// Per layer: `embed` (C -> C), `f` (2C -> C), `log_tau_node`, `log_tau_edge`.
void register_cgea(num::ParamStore& store, const std::string& prefix, std::size_t width,
                   double tau_init, bool zero_f = false);
// Cascade plus the similarity head over (K+1)*C inputs.
void register_topology(num::ParamStore& store, std::size_t depth, std::size_t width,
                       std::size_t keypoints, double tau_init);

struct Temperatures {
  num::Tensor node;
  num::Tensor edge;
};
Temperatures temperatures(const num::ParamStore& store, const std::string& prefix);

// Cross-graph update of both sides; the global rows route to each other with
// weight 1. Also returns the matching used.
struct CgeaOutput {
  NodeFeatureSet first;
  NodeFeatureSet second;
  MatchingMatrix matching;
};
CgeaOutput cgea_forward(const NodeFeatureSet& a, const NodeFeatureSet& b,
                        const SkeletonAdjacency& skeleton, const num::ParamStore& store,
                        const std::string& prefix, const TopologyOptions& options = {});

std::pair<NodeFeatureSet, NodeFeatureSet> topology_module(const NodeFeatureSet& a,
                                                          const NodeFeatureSet& b,
                                                          const SkeletonAdjacency& skeleton,
                                                          const num::ParamStore& store,
                                                          const TopologyOptions& options = {});

// f_s(-|V1 - V2|) over the flattened features, [1].
num::Tensor similarity_logit(const NodeFeatureSet& a, const NodeFeatureSet& b,
                             const num::ParamStore& store);
num::Tensor similarity_predict(const NodeFeatureSet& a, const NodeFeatureSet& b,
                               const num::ParamStore& store);

// Binary cross-entropy -[y log s + (1-y) log(1-s)]; s must lie in (0, 1).
double verification_loss(double s, int y);
num::Tensor verification_loss(const num::Tensor& s, int y);
// Same loss from the logit z, softplus(z) - y z.
num::Tensor verification_loss_from_logit(const num::Tensor& z, int y);

}  // namespace hord::topology
