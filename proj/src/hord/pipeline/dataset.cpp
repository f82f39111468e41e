#include "hord/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "hord/binary_io.hpp"
#include "hord/error.hpp"

namespace hord::pipeline {

using num::Tensor;

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  io::ByteWriter out;
  out.magic("HODS");
  out.u32(kDatasetVersion);
  out.u32(static_cast<std::uint32_t>(data.samples.size()));
  for (auto d : {data.K, data.c, data.h, data.w}) out.u32(static_cast<std::uint32_t>(d));
  const std::size_t words = (data.K + 31) / 32;
  for (const auto& s : data.samples) {
    if (s.occluded.size() != data.K ||
        s.feature_map.shape() != num::Shape{data.c, data.h, data.w} ||
        s.heatmaps.shape() != num::Shape{data.K, data.h, data.w}) {
      throw ShapeError("encode_dataset: sample does not match the dataset dimensions");
    }
    out.u32(s.identity);
    out.u32(s.camera);
    for (std::size_t wd = 0; wd < words; ++wd) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 32 && wd * 32 + b < data.K; ++b) {
        if (s.occluded[wd * 32 + b]) bits |= std::uint32_t{1} << b;
      }
      out.u32(bits);
    }
    for (double v : s.feature_map.values()) out.f32(static_cast<float>(v));
    for (double v : s.heatmaps.values()) out.f32(static_cast<float>(v));
  }
  return out.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader in(bytes, "dataset");
  in.expect_magic("HODS");
  const auto version = in.u32();
  if (version != kDatasetVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  const std::size_t count = in.u32();
  Dataset data;
  data.K = in.u32();
  data.c = in.u32();
  data.h = in.u32();
  data.w = in.u32();
  if (data.K == 0 || data.c == 0 || data.h == 0 || data.w == 0) {
    throw FormatError("dataset: zero dimension in header");
  }
  const std::size_t words = (data.K + 31) / 32;
  const std::size_t map_size = data.c * data.h * data.w;
  const std::size_t heat_size = data.K * data.h * data.w;
  const std::size_t per_sample = 4 * (2 + words + map_size + heat_size);
  if (in.remaining() / per_sample < count) throw FormatError("dataset: truncated");
  data.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.identity = in.u32();
    s.camera = in.u32();
    s.occluded.assign(data.K, false);
    for (std::size_t wd = 0; wd < words; ++wd) {
      const auto bits = in.u32();
      for (std::size_t b = 0; b < 32; ++b) {
        if (!(bits >> b & 1u)) continue;
        if (wd * 32 + b >= data.K) throw FormatError("dataset: mask bit beyond K");
        s.occluded[wd * 32 + b] = true;
      }
    }
    std::vector<double> map(map_size), heat(heat_size);
    for (auto& v : map) v = in.f32();
    for (auto& v : heat) v = in.f32();
    for (double v : map) {
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite feature value");
    }
    for (double v : heat) {
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite heatmap value");
    }
    s.feature_map = Tensor({data.c, data.h, data.w}, std::move(map));
    s.heatmaps = Tensor({data.K, data.h, data.w}, std::move(heat));
    data.samples.push_back(std::move(s));
  }
  in.expect_end();
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  io::write_file(path, encode_dataset(data));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("invalid synthetic spec: " + what);
  };
  require(num_ids >= 2, "num_ids must be at least 2");
  require(samples_per_id >= 1, "samples_per_id must be at least 1");
  require(occlusion_rate >= 0.0 && occlusion_rate <= 1.0, "occlusion_rate must lie in [0, 1]");
  require(shared_weight >= 0.0 && shared_weight <= 1.0, "shared_weight must lie in [0, 1]");
  require(clutter_scale >= 0.0, "clutter_scale must be non-negative");
  require(swap_rate >= 0.0 && swap_rate <= 1.0, "swap_rate must lie in [0, 1]");
  require(noise_sigma >= 0.0 && background_sigma >= 0.0, "noise levels must be non-negative");
  require(heat_sharpness > 0.0, "heat_sharpness must be positive");
  require(K >= 2 && C >= 1 && h >= 1 && w >= 1, "dimensions must be positive, K >= 2");
  require(K <= h * w, "more keypoints than pixels");
  require(num_cameras >= 1, "num_cameras must be at least 1");
  require(identity_rank >= 1 && identity_rank + nuisance_rank + part_rank <= C,
          "identity_rank + nuisance_rank + part_rank must fit in C");
  require(part_scale >= 0.0, "part_scale must be non-negative");
  require(min_band >= 1 && min_band <= max_band && max_band <= K,
          "occlusion band must satisfy 1 <= min_band <= max_band <= K");
  require(heat_offset >= 0.0 && camera_scale >= 0.0 && nuisance_scale >= 0.0 &&
              occluder_scale >= 0.0,
          "scales must be non-negative");
}

namespace {

struct Site {
  std::size_t y, x;
};

// Canonical pixel of every keypoint, head to ankles.
std::vector<Site> canonical_sites(std::size_t K, std::size_t h, std::size_t w) {
  std::vector<Site> sites(K);
  auto place = [&](std::size_t k, double row, double col) {
    sites[k] = {std::min(h - 1, static_cast<std::size_t>(row * h)),
                std::min(w - 1, static_cast<std::size_t>(col * w))};
  };
  if (K == 14) {
    const double layout[14][2] = {
        {0.07, 0.5},  {0.19, 0.5},  {0.26, 0.25}, {0.26, 0.75}, {0.38, 0.13},
        {0.38, 0.88}, {0.5, 0.13},  {0.5, 0.88},  {0.57, 0.38}, {0.57, 0.63},
        {0.75, 0.38}, {0.75, 0.63}, {0.94, 0.38}, {0.94, 0.63}};
    for (std::size_t k = 0; k < 14; ++k) place(k, layout[k][0], layout[k][1]);
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      place(k, (k + 0.5) / static_cast<double>(K), k % 2 ? 0.7 : 0.3);
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> used;
  for (auto& s : sites) {
    // Dense layouts on tiny maps may collide; move to the next free pixel.
    while (!used.insert({s.y, s.x}).second) {
      s.x = (s.x + 1) % w;
      if (s.x == 0) s.y = (s.y + 1) % h;
    }
  }
  return sites;
}

// Left/right keypoint pairs of the 14-node layout.
const std::pair<std::size_t, std::size_t> kMirrorPairs[] = {
    {2, 3}, {4, 5}, {6, 7}, {8, 9}, {10, 11}, {12, 13}};

// Columns of an orthonormal basis from Gram-Schmidt on Gaussian vectors.
std::vector<std::vector<double>> orthonormal_basis(std::size_t dim, std::size_t count,
                                                   std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

std::vector<double> combine(const std::vector<std::vector<double>>& basis, std::size_t first,
                            std::size_t count, const std::vector<double>& coeffs,
                            std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t i = 0; i < dim; ++i) out[i] += coeffs[j] * basis[first + j][i];
  }
  return out;
}

std::vector<double> gaussian(std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t K = spec.K, C = spec.C, h = spec.h, w = spec.w, area = h * w;

  const std::size_t ir = spec.identity_rank, nr = spec.nuisance_rank, pr = spec.part_rank;
  const auto basis = orthonormal_basis(C, ir + nr + pr, rng);

  // Part signatures, shared by every identity.
  std::vector<std::vector<double>> parts;
  const double part_std = pr ? spec.part_scale / std::sqrt(static_cast<double>(pr)) : 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    parts.push_back(combine(basis, ir + nr, pr, gaussian(pr, part_std, rng), C));
  }

  // Identity prototypes: a shared identity component plus a per-part one.
  std::vector<std::vector<std::vector<double>>> prototypes(spec.num_ids);
  const double coeff_std = 1.0 / std::sqrt(static_cast<double>(ir));
  for (auto& id : prototypes) {
    const auto shared = gaussian(ir, coeff_std, rng);
    for (std::size_t k = 0; k < K; ++k) {
      auto part = gaussian(ir, coeff_std, rng);
      for (std::size_t j = 0; j < ir; ++j) {
        part[j] = std::sqrt(spec.shared_weight) * shared[j] +
                  std::sqrt(1.0 - spec.shared_weight) * part[j];
      }
      id.push_back(combine(basis, 0, ir, part, C));
    }
  }

  // Camera offsets, one per camera and keypoint, inside the nuisance subspace.
  std::vector<std::vector<std::vector<double>>> cameras(spec.num_cameras);
  const double cam_std = nr ? spec.camera_scale / std::sqrt(static_cast<double>(nr)) : 0.0;
  for (auto& cam : cameras) {
    for (std::size_t k = 0; k < K; ++k) cam.push_back(combine(basis, ir, nr, gaussian(nr, cam_std, rng), C));
  }

  constexpr std::size_t kOccluders = 4;
  std::vector<std::vector<double>> occluders;
  for (std::size_t o = 0; o < kOccluders; ++o) {
    occluders.push_back(gaussian(C, spec.occluder_scale / std::sqrt(static_cast<double>(C)), rng));
  }

  const auto canonical = canonical_sites(K, h, w);
  std::set<std::pair<std::size_t, std::size_t>> reserved;
  for (const auto& s : canonical) reserved.insert({s.y, s.x});

  Dataset data{K, C, h, w, {}};
  data.samples.reserve(spec.num_ids * spec.samples_per_id);
  const double noise_std = spec.noise_sigma / std::sqrt(static_cast<double>(C));
  const double nuisance_std = nr ? spec.nuisance_scale / std::sqrt(static_cast<double>(nr)) : 0.0;
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_real_distribution<double> offset(-spec.heat_offset, spec.heat_offset);
  std::uniform_int_distribution<std::size_t> band_len(spec.min_band, spec.max_band);
  std::uniform_int_distribution<std::size_t> occluder_pick(0, kOccluders - 1);

  for (std::size_t id = 0; id < spec.num_ids; ++id) {
    for (std::size_t n = 0; n < spec.samples_per_id; ++n) {
      Sample s;
      s.identity = static_cast<std::uint32_t>(id);
      s.camera = static_cast<std::uint32_t>(n % spec.num_cameras);
      s.occluded.assign(K, false);

      // Sites: canonical positions jittered onto free, non-canonical pixels.
      std::vector<Site> sites = canonical;
      std::set<std::pair<std::size_t, std::size_t>> taken;
      for (std::size_t k = 0; k < K; ++k) {
        const long y = static_cast<long>(sites[k].y) + jitter(rng);
        const long x = static_cast<long>(sites[k].x) + jitter(rng);
        if (y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w)) {
          const std::pair<std::size_t, std::size_t> p{static_cast<std::size_t>(y),
                                                      static_cast<std::size_t>(x)};
          if (!reserved.contains(p) && !taken.contains(p)) sites[k] = {p.first, p.second};
        }
        taken.insert({sites[k].y, sites[k].x});
      }

      std::vector<double> map = gaussian(C * area, spec.background_sigma, rng);
      const auto clutter = gaussian(C, spec.clutter_scale / std::sqrt(static_cast<double>(C)), rng);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < area; ++p) map[c * area + p] += clutter[c];
      for (std::size_t k = 0; k < K; ++k) {
        const auto nuisance = combine(basis, ir, nr, gaussian(nr, nuisance_std, rng), C);
        const auto eps = gaussian(C, noise_std, rng);
        const auto& proto = prototypes[id][k];
        const auto& cam = cameras[s.camera][k];
        const auto& part = parts[k];
        const std::size_t pixel = sites[k].y * w + sites[k].x;
        for (std::size_t c = 0; c < C; ++c) {
          map[c * area + pixel] += static_cast<double>(area) *
                                   (proto[c] + part[c] + cam[c] + nuisance[c] + eps[c]);
        }
      }

      std::vector<std::size_t> channel_site(K);
      for (std::size_t k = 0; k < K; ++k) channel_site[k] = k;
      if (K == 14 && unit(rng) < spec.swap_rate) {
        for (auto [l, r] : kMirrorPairs) std::swap(channel_site[l], channel_site[r]);
      }

      if (unit(rng) < spec.occlusion_rate) {
        const std::size_t len = band_len(rng);
        const std::size_t start =
            std::uniform_int_distribution<std::size_t>(0, K - len)(rng);
        std::size_t top = h, bottom = 0;
        for (std::size_t k = start; k < start + len; ++k) {
          s.occluded[k] = true;
          top = std::min(top, sites[k].y);
          bottom = std::max(bottom, sites[k].y);
        }
        const auto& occ = occluders[occluder_pick(rng)];
        for (std::size_t y = top; y <= bottom; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const auto texture = gaussian(C, spec.background_sigma, rng);
            for (std::size_t c = 0; c < C; ++c) {
              map[c * area + y * w + x] = static_cast<double>(h) * occ[c] + texture[c];
            }
          }
        }
      }

      std::vector<double> heat(K * area);
      constexpr double kBumpWidth = 0.5;
      for (std::size_t k = 0; k < K; ++k) {
        const double base = offset(rng);
        const Site site = sites[channel_site[k]];
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            double v = base;
            if (!s.occluded[k]) {
              const double dy = static_cast<double>(y) - static_cast<double>(site.y);
              const double dx = static_cast<double>(x) - static_cast<double>(site.x);
              v += spec.heat_sharpness *
                   std::exp(-(dy * dy + dx * dx) / (2.0 * kBumpWidth * kBumpWidth));
            }
            heat[k * area + y * w + x] = v;
          }
        }
      }

      for (auto& v : map) v = to_float(v);
      for (auto& v : heat) v = to_float(v);
      s.feature_map = Tensor({C, h, w}, std::move(map));
      s.heatmaps = Tensor({K, h, w}, std::move(heat));
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

Split split_dataset(const Dataset& data) {
  std::map<std::uint32_t, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    by_id[data.samples[i].identity].push_back(i);
  }
  if (by_id.size() < 4) {
    throw UsageError("dataset needs at least 4 identities for a train/test split, has " +
                     std::to_string(by_id.size()));
  }
  const std::size_t train_ids = by_id.size() / 2;
  Split split;
  std::size_t rank = 0;
  for (const auto& [id, members] : by_id) {
    if (rank++ < train_ids) {
      split.train.insert(split.train.end(), members.begin(), members.end());
      continue;
    }
    if (members.size() < 2) {
      throw UsageError("test identity " + std::to_string(id) +
                       " needs at least 2 samples (query and gallery)");
    }
    const std::size_t queries = members.size() / 2;
    split.query.insert(split.query.end(), members.begin(), members.begin() + queries);
    split.gallery.insert(split.gallery.end(), members.begin() + queries, members.end());
  }
  return split;
}

}  // namespace hord::pipeline
