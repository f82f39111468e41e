#include "hord/semantic/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hord/error.hpp"
#include "hord/numerics/layers.hpp"
#include "hord/numerics/ops.hpp"

namespace hord::semantic {

using num::Tensor;

Confidence Confidence::from_keypoints(std::vector<double> keypoint_confidences) {
  for (double b : keypoint_confidences) {
    if (!(b >= 0.0 && b <= 1.0)) throw UsageError("keypoint confidence outside [0, 1]");
  }
  Confidence c;
  c.beta_ = std::move(keypoint_confidences);
  c.beta_.push_back(1.0);
  return c;
}

Confidence Confidence::ones(std::size_t keypoints) {
  return from_keypoints(std::vector<double>(keypoints, 1.0));
}

namespace {

void require_heatmap_shape(const Tensor& t) {
  if (t.rank() != 3) {
    throw ShapeError("heatmaps must be [K x h x w], got " + num::to_string(t.shape()));
  }
}

}  // namespace

HeatmapSet normalize_heatmaps(const HeatmapSet& heatmaps) {
  require_heatmap_shape(heatmaps.raw);
  const auto& s = heatmaps.raw.shape();
  Tensor flat = num::reshape(heatmaps.raw, {s[0], s[1] * s[2]});
  return {heatmaps.raw, num::reshape(num::softmax(flat, 1), s)};
}

HeatmapSet passthrough_heatmaps(const HeatmapSet& heatmaps) {
  require_heatmap_shape(heatmaps.raw);
  return {heatmaps.raw, heatmaps.raw};
}

Confidence extract_confidences(const HeatmapSet& heatmaps) {
  if (!heatmaps.normalized) throw UsageError("extract_confidences needs normalized heatmaps");
  const Tensor& hm = *heatmaps.normalized;
  require_heatmap_shape(hm);
  const std::size_t k = hm.shape()[0], area = hm.shape()[1] * hm.shape()[2];
  std::vector<double> beta(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto slice = hm.values().subspan(i * area, area);
    beta[i] = std::clamp(*std::ranges::max_element(slice), 0.0, 1.0);
  }
  return Confidence::from_keypoints(std::move(beta));
}

NodeFeatureSet extract_semantic_features(const FeatureMap& feature_map,
                                         const HeatmapSet& heatmaps) {
  if (!heatmaps.normalized) throw UsageError("extract_semantic_features needs normalized heatmaps");
  const Tensor& m = feature_map.data;
  const Tensor& hm = *heatmaps.normalized;
  if (m.rank() != 3) {
    throw ShapeError("feature map must be [c x h x w], got " + num::to_string(m.shape()));
  }
  require_heatmap_shape(hm);
  if (m.shape()[1] != hm.shape()[1] || m.shape()[2] != hm.shape()[2]) {
    throw ShapeError("spatial mismatch between feature map " + num::to_string(m.shape()) +
                     " and heatmaps " + num::to_string(hm.shape()));
  }
  const std::size_t c = m.shape()[0], k = hm.shape()[0];
  const std::size_t area = m.shape()[1] * m.shape()[2];
  const double inv_area = 1.0 / static_cast<double>(area);

  Tensor flat_map = num::reshape(m, {c, area});
  Tensor flat_hm = num::reshape(hm, {k, area});
  Tensor local = num::scale(num::matmul(flat_hm, num::transpose(flat_map)), inv_area);
  Tensor global = num::scale(num::transpose(num::row_sums(flat_map)), inv_area);
  const Tensor parts[] = {local, global};
  return {num::concat_rows(parts), extract_confidences(heatmaps), Stage::semantic};
}

void register_classifiers(num::ParamStore& store, const std::string& prefix, std::size_t rows,
                          std::size_t width, std::size_t classes) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string base = prefix + "." + std::to_string(r);
    num::register_standardize(store, base + ".bn", width);
    store.add(base + ".fc.weight", {width, classes}, num::Init::normal(0.001));
    store.add(base + ".fc.bias", {classes}, num::Init::zeros());
  }
}

std::vector<Tensor> classifier_logits(std::span<const NodeFeatureSet> batch,
                                      const num::ParamStore& store, const std::string& prefix,
                                      num::Mode mode) {
  if (batch.empty()) throw UsageError("classifier_logits: empty batch");
  const std::size_t rows = batch.front().features.rows();
  std::vector<Tensor> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Tensor> stacked;
    stacked.reserve(batch.size());
    for (const auto& item : batch) {
      if (item.features.rows() != rows) throw ShapeError("classifier_logits: ragged batch");
      stacked.push_back(num::slice_rows(item.features, r, r + 1));
    }
    const std::string base = prefix + "." + std::to_string(r);
    Tensor x = num::standardize(store, base + ".bn", num::concat_rows(stacked), mode);
    out.push_back(num::linear(store, base + ".fc", x));
  }
  return out;
}

Tensor classify(const NodeFeatureSet& features, const num::ParamStore& store,
                const std::string& prefix, num::Mode mode) {
  const NodeFeatureSet batch[] = {features};
  auto logits = classifier_logits(batch, store, prefix, mode);
  return num::softmax(num::concat_rows(logits), 1);
}

Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    double alpha) {
  if (alpha < 0.0) throw UsageError("triplet margin must be non-negative");
  Tensor d_ap = num::l2_norm(num::sub(anchor, positive));
  Tensor d_an = num::l2_norm(num::sub(anchor, negative));
  return num::relu(num::add_scalar(num::sub(d_ap, d_an), alpha));
}

void validate_batch(std::span<const std::uint32_t> labels) {
  std::map<std::uint32_t, std::size_t> counts;
  for (auto l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw UsageError("batch needs at least 2 identities for the triplet term");
  }
  for (const auto& [label, n] : counts) {
    if (n < 2) {
      throw UsageError("identity " + std::to_string(label) +
                       " has a single image in the batch; triplets need 2 per identity");
    }
  }
}

std::vector<HardTriplet> mine_batch_hard(const Tensor& rows,
                                         std::span<const std::uint32_t> labels) {
  const std::size_t n = rows.rows(), c = rows.cols();
  if (labels.size() != n) throw ShapeError("mine_batch_hard: label count mismatch");
  auto v = rows.values();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < c; ++d) {
        const double diff = v[i * c + d] - v[j * c + d];
        acc += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(acc);
    }
  }
  std::vector<HardTriplet> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    double far = -1.0, near = std::numeric_limits<double>::infinity();
    std::size_t pos = n, neg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (dist[a * n + j] > far) far = dist[a * n + j], pos = j;
      } else if (dist[a * n + j] < near) {
        near = dist[a * n + j], neg = j;
      }
    }
    if (pos == n || neg == n) throw UsageError("mine_batch_hard: infeasible batch");
    out[a] = {pos, neg};
  }
  return out;
}

Tensor keypoint_loss(std::span<const NodeFeatureSet> batch,
                     std::span<const std::uint32_t> labels, double alpha,
                     const num::ParamStore& store, const std::string& prefix, num::Mode mode) {
  if (batch.size() != labels.size()) throw ShapeError("keypoint_loss: label count mismatch");
  validate_batch(labels);
  const std::size_t n = batch.size();
  const std::size_t rows = batch.front().features.rows();
  auto logits = classifier_logits(batch, store, prefix, mode);
  const std::size_t classes = logits.front().cols();
  for (auto l : labels) {
    if (l >= classes) {
      throw UsageError("label " + std::to_string(l) + " exceeds classifier width " +
                       std::to_string(classes));
    }
  }

  std::vector<Tensor> per_row;
  per_row.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::size_t> picks(n);
    for (std::size_t a = 0; a < n; ++a) picks[a] = a * classes + labels[a];
    Tensor nll = num::negate(num::gather(num::log_softmax(logits[r], 1), picks));

    std::vector<Tensor> feats;
    feats.reserve(n);
    for (const auto& item : batch) feats.push_back(num::slice_rows(item.features, r, r + 1));
    std::vector<HardTriplet> mined;
    {
      num::NoRecord no_record;
      mined = mine_batch_hard(num::concat_rows(feats), labels);
    }
    std::vector<Tensor> tri;
    tri.reserve(n);
    for (std::size_t a = 0; a < n; ++a) {
      tri.push_back(triplet_loss(feats[a], feats[mined[a].positive], feats[mined[a].negative],
                                 alpha));
    }

    std::vector<double> beta(n);
    for (std::size_t a = 0; a < n; ++a) beta[a] = batch[a].beta[r];
    per_row.push_back(num::sum(num::mul(num::add(nll, num::stack(tri)), Tensor::vector(beta))));
  }
  Tensor total = num::sum(num::stack(per_row));
  return num::scale(total, 1.0 / static_cast<double>(rows * n));
}

Tensor semantic_loss(std::span<const NodeFeatureSet> batch, std::span<const std::uint32_t> labels,
                     double alpha, const num::ParamStore& store, num::Mode mode) {
  return keypoint_loss(batch, labels, alpha, store, kClassifierPrefix, mode);
}

}  // namespace hord::semantic
