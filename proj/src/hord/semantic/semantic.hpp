#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hord/numerics/param_store.hpp"
#include "hord/numerics/tensor.hpp"

// One-order semantic features: keypoint-weighted pooling of a feature map,
// keypoint confidences, and the confidence-weighted classification + triplet
// objective used on every per-keypoint feature stage.
namespace hord::semantic {

inline constexpr std::size_t kDefaultKeypoints = 14;

enum class Stage { semantic, relation, topology };

// Backbone activations, [c x h x w].
struct FeatureMap {
  num::Tensor data;
};

// Keypoint score maps, [K x h x w]. `normalized` holds the per-slice spatial
// distributions the pooling consumes.
struct HeatmapSet {
  num::Tensor raw;
  std::optional<num::Tensor> normalized;
};

// K keypoint confidences in [0, 1] followed by the global slot, fixed at 1.
class Confidence {
 public:
  Confidence() = default;
  static Confidence from_keypoints(std::vector<double> keypoint_confidences);
  static Confidence ones(std::size_t keypoints);

  std::size_t size() const { return beta_.size(); }
  std::size_t keypoints() const { return beta_.empty() ? 0 : beta_.size() - 1; }
  double operator[](std::size_t i) const { return beta_[i]; }
  std::span<const double> values() const { return beta_; }

 private:
  std::vector<double> beta_;
};

// (K+1) x C node features; row K is the global feature.
struct NodeFeatureSet {
  num::Tensor features;
  Confidence beta;
  Stage stage = Stage::semantic;

  std::size_t keypoints() const { return features.rows() - 1; }
  std::size_t width() const { return features.cols(); }
};

// Softmax over the h*w scores of every slice.
HeatmapSet normalize_heatmaps(const HeatmapSet& heatmaps);
// Uses the raw scores as pooling weights (the no-normalization ablation).
HeatmapSet passthrough_heatmaps(const HeatmapSet& heatmaps);

// beta_k = spatial max of normalized slice k (clamped to [0, 1]); global slot 1.
Confidence extract_confidences(const HeatmapSet& heatmaps);

// Row k: spatial mean of m_cnn[:, i, j] * m_kp[k, i, j]; row K: spatial mean
// of m_cnn. Differentiable with respect to the feature map.
NodeFeatureSet extract_semantic_features(const FeatureMap& feature_map,
                                         const HeatmapSet& heatmaps);

// One unshared classifier (standardize -> linear -> softmax) per node row,
// named `prefix.<row>.bn` / `prefix.<row>.fc`.
void register_classifiers(num::ParamStore& store, const std::string& prefix, std::size_t rows,
                          std::size_t width, std::size_t classes);

// Per-row identity distributions, [(K+1) x classes].
num::Tensor classify(const NodeFeatureSet& features, const num::ParamStore& store,
                     const std::string& prefix, num::Mode mode = num::Mode::eval);

// Logits of classifier k for every image of the batch, [B x classes] each.
std::vector<num::Tensor> classifier_logits(std::span<const NodeFeatureSet> batch,
                                           const num::ParamStore& store,
                                           const std::string& prefix, num::Mode mode);

// |alpha + d(a, p) - d(a, n)|_+ with Euclidean d.
num::Tensor triplet_loss(const num::Tensor& anchor, const num::Tensor& positive,
                         const num::Tensor& negative, double alpha);

struct HardTriplet {
  std::size_t positive;
  std::size_t negative;
};

// Hardest positive (farthest, same label) and hardest negative (closest,
// other label) for every anchor row of `rows` [B x C].
std::vector<HardTriplet> mine_batch_hard(const num::Tensor& rows,
                                         std::span<const std::uint32_t> labels);

// Requires >= 2 identities with >= 2 images each.
void validate_batch(std::span<const std::uint32_t> labels);

// (1/(K+1)) sum_k beta_k [CE_k + Triplet_k], averaged over the batch, with the
// classifiers registered under `prefix`. Labels are class indices.
num::Tensor keypoint_loss(std::span<const NodeFeatureSet> batch,
                          std::span<const std::uint32_t> labels, double alpha,
                          const num::ParamStore& store, const std::string& prefix,
                          num::Mode mode);

inline const std::string kClassifierPrefix = "semantic.classifier";

num::Tensor semantic_loss(std::span<const NodeFeatureSet> batch,
                          std::span<const std::uint32_t> labels, double alpha,
                          const num::ParamStore& store, num::Mode mode = num::Mode::train);

}  // namespace hord::semantic
