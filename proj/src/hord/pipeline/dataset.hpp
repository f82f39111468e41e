#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hord/numerics/tensor.hpp"

namespace hord::pipeline {

struct Sample {
  std::uint32_t identity = 0;
  std::uint32_t camera = 0;
  std::vector<bool> occluded;  // K flags
  num::Tensor feature_map;     // [c x h x w]
  num::Tensor heatmaps;        // raw scores, [K x h x w]
};

struct Dataset {
  std::size_t K = 0, c = 0, h = 0, w = 0;
  std::vector<Sample> samples;
};

// "HODS" container: magic | version u32 | sample count u32 | K c h w u32 |
// per sample: identity u32, camera u32, occlusion mask (K bits, u32 words,
// bit k of word k/32), feature map f32 [c*h*w], raw heatmaps f32 [K*h*w].
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

struct SyntheticSpec {
  std::size_t num_ids = 20;
  std::size_t samples_per_id = 8;
  double occlusion_rate = 0.5;
  double noise_sigma = 0.3;
  double heat_sharpness = 8.0;
  std::uint64_t seed = 7;

  std::size_t K = 14, C = 32, h = 16, w = 8;

  std::size_t num_cameras = 2;
  double camera_scale = 0.8;      // per-camera offset norm
  std::size_t identity_rank = 6;  // dimension of the identity subspace
  std::size_t nuisance_rank = 4;  // dimension of the per-sample nuisance subspace
  double nuisance_scale = 1.0;
  std::size_t part_rank = 8;      // dimension of the subspace holding identity-free part signatures
  double part_scale = 1.0;        // norm of each keypoint's part signature
  double shared_weight = 0.0;     // variance share of the part-independent identity component
  double swap_rate = 0.25;        // left/right heatmap confusion per sample
  double occluder_scale = 1.0;
  double background_sigma = 0.1;
  double clutter_scale = 0.0;     // norm of a per-sample scene vector added to every pixel
  double heat_offset = 3.0;       // raw heatmap scores carry a U(-a, a) offset
  std::size_t min_band = 3, max_band = 6;

  void validate() const;
};

// Deterministic in the spec. Values are rounded to single precision so the
// in-memory dataset equals its encoded form.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Identities sorted ascending; the first half trains, the rest is test. Each
// test identity contributes its first half of samples as queries and the
// remaining ones to the gallery.
struct Split {
  std::vector<std::size_t> train, query, gallery;
};
Split split_dataset(const Dataset& data);

}  // namespace hord::pipeline
