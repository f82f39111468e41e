#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hord/numerics/param_store.hpp"
#include "hord/numerics/tensor.hpp"
#include "hord/semantic/semantic.hpp"

// High-order relation features: adaptive directed graph convolution over the
// keypoint skeleton, with the global node as the reference for edge gating.
namespace hord::relation {

using semantic::NodeFeatureSet;

// Keypoint order of the default 14-node skeleton.
enum Keypoint : std::size_t {
  kHead, kNeck,
  kLeftShoulder, kRightShoulder,
  kLeftElbow, kRightElbow,
  kLeftWrist, kRightWrist,
  kLeftHip, kRightHip,
  kLeftKnee, kRightKnee,
  kLeftAnkle, kRightAnkle,
};

const std::vector<std::string>& keypoint_names();

// Binary symmetric adjacency with zero diagonal over a connected graph.
class SkeletonAdjacency {
 public:
  // Validates symmetry, binary entries, zero diagonal and connectivity.
  static SkeletonAdjacency from_matrix(const num::Tensor& adjacency);

  std::size_t size() const { return matrix_.rows(); }
  const num::Tensor& matrix() const { return matrix_; }
  bool edge(std::size_t i, std::size_t j) const { return matrix_.at(i, j) != 0.0; }
  std::size_t degree(std::size_t i) const;
  // Ordered pairs (i, j), i != j, with an edge between them.
  std::vector<std::pair<std::size_t, std::size_t>> directed_edges() const;

 private:
  num::Tensor matrix_;
};

// The fixed 14-keypoint human skeleton. Other K need from_matrix().
SkeletonAdjacency build_skeleton(std::size_t keypoints = semantic::kDefaultKeypoints);
// Complete graph on n nodes; convenient for small matching problems.
SkeletonAdjacency complete_graph(std::size_t n);
bool is_connected(const num::Tensor& adjacency);

// Row-stochastic directed weights with support inside the skeleton.
struct AdaptiveAdjacency {
  num::Tensor weights;
};

enum class AdjacencyMode { adaptive, fixed };

struct RelationOptions {
  std::size_t depth = 2;
  AdjacencyMode adjacency = AdjacencyMode::adaptive;
};

inline const std::string kLayerPrefix = "relation.adgc";
inline const std::string kClassifierPrefix = "relation.classifier";

// `prefix.score.bn`, `prefix.score.fc` (C -> 1), `prefix.f1`, `prefix.f2`.
void register_adgc(num::ParamStore& store, const std::string& prefix, std::size_t width_in,
                   std::size_t width_out);
// Cascade of `depth` width-preserving layers plus the relation classifiers.
void register_relation(num::ParamStore& store, std::size_t depth, std::size_t width,
                       std::size_t keypoints, std::size_t classes);

// sigmoid(linear(standardize(|v_i - v_g|))) per local node, [K x 1] per image.
// Standardization statistics are taken over every node of the batch.
std::vector<num::Tensor> node_scores(std::span<const NodeFeatureSet> batch,
                                     const num::ParamStore& store, const std::string& prefix,
                                     num::Mode mode);
num::Tensor node_scores(const num::Tensor& local, const num::Tensor& global,
                        const num::ParamStore& store, const std::string& prefix,
                        num::Mode mode);

// Weight into j from i is A[j, i] * score_i, normalized over the in-neighbors of j.
AdaptiveAdjacency adaptive_adjacency(const SkeletonAdjacency& skeleton, const num::Tensor& scores);
// D^-1 A: the ungated baseline.
num::Tensor fixed_adjacency(const SkeletonAdjacency& skeleton);

// Local rows f1(A_adp V_l) + f2(V_l); the global row and beta pass through.
std::vector<NodeFeatureSet> adgc_forward(std::span<const NodeFeatureSet> batch,
                                         const SkeletonAdjacency& skeleton,
                                         const num::ParamStore& store, const std::string& prefix,
                                         num::Mode mode,
                                         AdjacencyMode adjacency = AdjacencyMode::adaptive);
NodeFeatureSet adgc_forward(const NodeFeatureSet& input, const SkeletonAdjacency& skeleton,
                            const num::ParamStore& store, const std::string& prefix,
                            num::Mode mode, AdjacencyMode adjacency = AdjacencyMode::adaptive);

std::vector<NodeFeatureSet> relation_module(std::span<const NodeFeatureSet> batch,
                                            const SkeletonAdjacency& skeleton,
                                            const num::ParamStore& store,
                                            const RelationOptions& options, num::Mode mode);

num::Tensor relation_loss(std::span<const NodeFeatureSet> batch,
                          std::span<const std::uint32_t> labels, double alpha,
                          const num::ParamStore& store, num::Mode mode = num::Mode::train);

// (1/(K+1)) sum_k sqrt(beta_1k beta_2k) cos(v_1k, v_2k); zero rows give cos 0.
double relation_similarity(const NodeFeatureSet& a, const NodeFeatureSet& b);

}  // namespace hord::relation
