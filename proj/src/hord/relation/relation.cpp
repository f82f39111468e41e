#include "hord/relation/relation.hpp"

#include <cmath>
#include <queue>

#include "hord/error.hpp"
#include "hord/numerics/layers.hpp"
#include "hord/numerics/ops.hpp"

namespace hord::relation {

using num::Tensor;

const std::vector<std::string>& keypoint_names() {
  static const std::vector<std::string> names = {
      "head",      "neck",       "l_shoulder", "r_shoulder", "l_elbow",
      "r_elbow",   "l_wrist",    "r_wrist",    "l_hip",      "r_hip",
      "l_knee",    "r_knee",     "l_ankle",    "r_ankle"};
  return names;
}

bool is_connected(const Tensor& adjacency) {
  const std::size_t n = adjacency.rows();
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t visited = 1;
  while (!frontier.empty()) {
    const auto i = frontier.front();
    frontier.pop();
    for (std::size_t j = 0; j < n; ++j) {
      if (!seen[j] && adjacency.at(i, j) != 0.0) {
        seen[j] = true;
        ++visited;
        frontier.push(j);
      }
    }
  }
  return visited == n;
}

SkeletonAdjacency SkeletonAdjacency::from_matrix(const Tensor& adjacency) {
  if (adjacency.rank() != 2 || adjacency.rows() != adjacency.cols()) {
    throw ShapeError("adjacency must be square, got " + num::to_string(adjacency.shape()));
  }
  const std::size_t n = adjacency.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency.at(i, i) != 0.0) throw UsageError("adjacency must have a zero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = adjacency.at(i, j);
      if (v != 0.0 && v != 1.0) throw UsageError("adjacency entries must be 0 or 1");
      if (v != adjacency.at(j, i)) throw UsageError("adjacency must be symmetric");
    }
  }
  if (!is_connected(adjacency)) throw UsageError("adjacency graph must be connected");
  SkeletonAdjacency s;
  s.matrix_ = adjacency.detach();
  return s;
}

std::size_t SkeletonAdjacency::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < size(); ++j) d += edge(i, j) ? 1 : 0;
  return d;
}

std::vector<std::pair<std::size_t, std::size_t>> SkeletonAdjacency::directed_edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < size(); ++j)
      if (edge(i, j)) out.emplace_back(i, j);
  return out;
}

SkeletonAdjacency build_skeleton(std::size_t keypoints) {
  if (keypoints != semantic::kDefaultKeypoints) {
    throw UsageError("the built-in skeleton has 14 keypoints; supply a custom adjacency for K=" +
                     std::to_string(keypoints));
  }
  const std::pair<Keypoint, Keypoint> edges[] = {
      {kHead, kLeftShoulder},       {kHead, kRightShoulder},
      {kLeftShoulder, kLeftElbow},  {kRightShoulder, kRightElbow},
      {kLeftElbow, kLeftWrist},     {kRightElbow, kRightWrist},
      {kLeftShoulder, kLeftHip},    {kRightShoulder, kRightHip},
      {kLeftHip, kRightHip},        {kLeftShoulder, kRightShoulder},
      {kLeftHip, kLeftKnee},        {kRightHip, kRightKnee},
      {kLeftKnee, kLeftAnkle},      {kRightKnee, kRightAnkle},
      {kNeck, kHead},               {kNeck, kLeftShoulder},
      {kNeck, kRightShoulder},
  };
  Tensor a({keypoints, keypoints}, 0.0);
  auto v = a.data();
  for (auto [i, j] : edges) {
    v[i * keypoints + j] = 1.0;
    v[j * keypoints + i] = 1.0;
  }
  return SkeletonAdjacency::from_matrix(a);
}

SkeletonAdjacency complete_graph(std::size_t n) {
  Tensor a({n, n}, 1.0);
  auto v = a.data();
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 0.0;
  return SkeletonAdjacency::from_matrix(a);
}

void register_adgc(num::ParamStore& store, const std::string& prefix, std::size_t width_in,
                   std::size_t width_out) {
  if (width_in != width_out) {
    throw UsageError("adgc layer must keep the width of the global row it passes through");
  }
  num::register_standardize(store, prefix + ".score.bn", width_in);
  num::register_linear(store, prefix + ".score.fc", width_in, 1);
  num::register_linear(store, prefix + ".f1", width_in, width_out);
  num::register_linear(store, prefix + ".f2", width_in, width_out);
}

void register_relation(num::ParamStore& store, std::size_t depth, std::size_t width,
                       std::size_t keypoints, std::size_t classes) {
  if (depth == 0) throw UsageError("relation depth must be at least 1");
  for (std::size_t l = 0; l < depth; ++l) {
    register_adgc(store, kLayerPrefix + "." + std::to_string(l), width, width);
  }
  semantic::register_classifiers(store, kClassifierPrefix, keypoints + 1, width, classes);
}

namespace {

// Repeats a [1 x C] row n times.
Tensor repeat_row(const Tensor& row, std::size_t n) {
  return num::matmul(Tensor({n, 1}, 1.0), row);
}

}  // namespace

std::vector<Tensor> node_scores(std::span<const NodeFeatureSet> batch,
                                const num::ParamStore& store, const std::string& prefix,
                                num::Mode mode) {
  std::vector<Tensor> diffs;
  diffs.reserve(batch.size());
  for (const auto& item : batch) {
    const std::size_t k = item.keypoints();
    Tensor local = num::slice_rows(item.features, 0, k);
    Tensor global = num::slice_rows(item.features, k, k + 1);
    diffs.push_back(num::abs(num::sub(local, repeat_row(global, k))));
  }
  Tensor x = num::standardize(store, prefix + ".score.bn", num::concat_rows(diffs), mode);
  Tensor s = num::sigmoid(num::linear(store, prefix + ".score.fc", x));
  std::vector<Tensor> out;
  out.reserve(batch.size());
  std::size_t row = 0;
  for (const auto& item : batch) {
    out.push_back(num::slice_rows(s, row, row + item.keypoints()));
    row += item.keypoints();
  }
  return out;
}

Tensor node_scores(const Tensor& local, const Tensor& global, const num::ParamStore& store,
                   const std::string& prefix, num::Mode mode) {
  if (global.rank() != 2 || global.rows() != 1 || global.cols() != local.cols()) {
    throw ShapeError("node_scores: global " + num::to_string(global.shape()) +
                     " does not match local " + num::to_string(local.shape()));
  }
  Tensor x = num::abs(num::sub(local, repeat_row(global, local.rows())));
  x = num::standardize(store, prefix + ".score.bn", x, mode);
  return num::sigmoid(num::linear(store, prefix + ".score.fc", x));
}

AdaptiveAdjacency adaptive_adjacency(const SkeletonAdjacency& skeleton, const Tensor& scores) {
  if (scores.size() != skeleton.size()) {
    throw ShapeError("adaptive_adjacency: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(skeleton.size()) + " nodes");
  }
  Tensor gated = num::scale_cols(skeleton.matrix(), scores);
  return {num::scale_rows(gated, num::reciprocal(num::row_sums(gated)))};
}

Tensor fixed_adjacency(const SkeletonAdjacency& skeleton) {
  num::NoRecord no_record;
  const Tensor& a = skeleton.matrix();
  return num::scale_rows(a, num::reciprocal(num::row_sums(a)));
}

std::vector<NodeFeatureSet> adgc_forward(std::span<const NodeFeatureSet> batch,
                                         const SkeletonAdjacency& skeleton,
                                         const num::ParamStore& store, const std::string& prefix,
                                         num::Mode mode, AdjacencyMode adjacency) {
  if (batch.empty()) return {};
  const std::size_t k = skeleton.size();
  if (k < 2) throw UsageError("graph convolution needs at least 2 nodes");
  for (const auto& item : batch) {
    if (item.keypoints() != k) {
      throw ShapeError("adgc_forward: features have " + std::to_string(item.keypoints()) +
                       " local nodes, skeleton has " + std::to_string(k));
    }
    if (item.stage == semantic::Stage::topology) {
      throw UsageError("adgc_forward expects semantic or relation features");
    }
  }

  std::vector<Tensor> scores;
  if (adjacency == AdjacencyMode::adaptive) scores = node_scores(batch, store, prefix, mode);
  const Tensor fixed = adjacency == AdjacencyMode::fixed ? fixed_adjacency(skeleton) : Tensor();

  std::vector<Tensor> locals, messages;
  locals.reserve(batch.size());
  messages.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tensor local = num::slice_rows(batch[b].features, 0, k);
    const Tensor adj =
        adjacency == AdjacencyMode::adaptive ? adaptive_adjacency(skeleton, scores[b]).weights : fixed;
    messages.push_back(num::matmul(adj, local));
    locals.push_back(std::move(local));
  }
  Tensor mixed = num::add(num::linear(store, prefix + ".f1", num::concat_rows(messages)),
                          num::linear(store, prefix + ".f2", num::concat_rows(locals)));

  std::vector<NodeFeatureSet> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor parts[] = {num::slice_rows(mixed, b * k, (b + 1) * k),
                            num::slice_rows(batch[b].features, k, k + 1)};
    out.push_back({num::concat_rows(parts), batch[b].beta, semantic::Stage::relation});
  }
  return out;
}

NodeFeatureSet adgc_forward(const NodeFeatureSet& input, const SkeletonAdjacency& skeleton,
                            const num::ParamStore& store, const std::string& prefix,
                            num::Mode mode, AdjacencyMode adjacency) {
  const NodeFeatureSet batch[] = {input};
  return adgc_forward(batch, skeleton, store, prefix, mode, adjacency).front();
}

std::vector<NodeFeatureSet> relation_module(std::span<const NodeFeatureSet> batch,
                                            const SkeletonAdjacency& skeleton,
                                            const num::ParamStore& store,
                                            const RelationOptions& options, num::Mode mode) {
  if (options.depth == 0) throw UsageError("relation depth must be at least 1");
  std::vector<NodeFeatureSet> current(batch.begin(), batch.end());
  for (std::size_t l = 0; l < options.depth; ++l) {
    current = adgc_forward(current, skeleton, store, kLayerPrefix + "." + std::to_string(l), mode,
                           options.adjacency);
  }
  return current;
}

Tensor relation_loss(std::span<const NodeFeatureSet> batch, std::span<const std::uint32_t> labels,
                     double alpha, const num::ParamStore& store, num::Mode mode) {
  return semantic::keypoint_loss(batch, labels, alpha, store, kClassifierPrefix, mode);
}

double relation_similarity(const NodeFeatureSet& a, const NodeFeatureSet& b) {
  if (a.features.shape() != b.features.shape() || a.beta.size() != b.beta.size()) {
    throw ShapeError("relation_similarity: feature sets differ in shape");
  }
  const std::size_t rows = a.features.rows(), c = a.features.cols();
  auto x = a.features.values();
  auto y = b.features.values();
  double total = 0.0;
  for (std::size_t k = 0; k < rows; ++k) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dot += x[k * c + j] * y[k * c + j];
      nx += x[k * c + j] * x[k * c + j];
      ny += y[k * c + j] * y[k * c + j];
    }
    const double cosine = (nx > 0.0 && ny > 0.0) ? dot / std::sqrt(nx * ny) : 0.0;
    total += std::sqrt(a.beta[k] * b.beta[k]) * cosine;
  }
  return total / static_cast<double>(rows);
}

}  // namespace hord::relation
