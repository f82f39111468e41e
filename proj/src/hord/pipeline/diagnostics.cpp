#include "hord/pipeline/diagnostics.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include "hord/error.hpp"
#include "hord/numerics/gradient_check.hpp"
#include "hord/numerics/layers.hpp"
#include "hord/numerics/ops.hpp"
#include "hord/pipeline/model.hpp"
#include "hord/semantic/semantic.hpp"
#include "hord/topology/topology.hpp"

namespace hord::pipeline {

using num::Tensor;

namespace {

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  // Entries with magnitude in [lo, hi] and random sign.
  Tensor away_from_zero(num::Shape shape, double lo = 0.2, double hi = 1.0) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = sign(rng_) ? mag(rng_) : -mag(rng_);
    t.set_requires_grad(true);
    return t;
  }

  Tensor positive(num::Shape shape, double lo = 0.2, double hi = 1.5) {
    std::uniform_real_distribution<double> mag(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = mag(rng_);
    t.set_requires_grad(true);
    return t;
  }

  Tensor constant(num::Shape shape) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng_);
    return t;
  }

  // Random linear functional of y, so every output entry contributes.
  Tensor project(const Tensor& y, const Tensor& weights) {
    return num::sum(num::mul(num::reshape(y, weights.shape()), weights));
  }

  void check(const std::string& name, const std::function<Tensor()>& output,
             std::vector<Tensor> inputs, std::optional<std::size_t> samples = std::nullopt) {
    Tensor probe;
    {
      num::NoRecord no_record;
      probe = output();
    }
    const Tensor weights = constant(probe.shape());
    num::GradCheckOptions options;
    options.sample_count = samples;
    options.seed = rng_();
    const double err = num::gradient_check([&] { return project(output(), weights); }, inputs,
                                           options);
    entries_.push_back({name, err});
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<GradCheckEntry> take() { return std::move(entries_); }

 private:
  std::mt19937_64 rng_;
  std::vector<GradCheckEntry> entries_;
};

std::vector<Tensor> trainable(num::ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& name : store.trainable_names()) out.push_back(store.get(name));
  return out;
}

void elementwise_checks(Suite& s) {
  using Unary = Tensor (*)(const Tensor&);
  const std::pair<const char*, Unary> signed_unary[] = {
      {"abs", num::abs},       {"relu", num::relu},     {"sigmoid", num::sigmoid},
      {"negate", num::negate}, {"exp", num::exp},       {"softplus", num::softplus},
      {"reciprocal", num::reciprocal}};
  for (auto [name, fn] : signed_unary) {
    Tensor x = s.away_from_zero({3, 4});
    s.check(name, [x, fn] { return fn(x); }, {x});
  }
  const std::pair<const char*, Unary> positive_unary[] = {{"log", num::log}, {"sqrt", num::sqrt}};
  for (auto [name, fn] : positive_unary) {
    Tensor x = s.positive({3, 4});
    s.check(name, [x, fn] { return fn(x); }, {x});
  }
  {
    Tensor x = s.away_from_zero({3, 4});
    s.check("clamp_min", [x] { return num::clamp_min(x, 0.05); }, {x});
  }
  using Binary = Tensor (*)(const Tensor&, const Tensor&);
  const std::pair<const char*, Binary> binary[] = {
      {"add", num::add}, {"sub", num::sub}, {"mul", num::mul}};
  for (auto [name, fn] : binary) {
    Tensor a = s.away_from_zero({2, 5}), b = s.away_from_zero({2, 5});
    s.check(name, [a, b, fn] { return fn(a, b); }, {a, b});
  }
  Tensor x = s.away_from_zero({3, 4});
  s.check("scale", [x] { return num::scale(x, -1.7); }, {x});
  s.check("add_scalar", [x] { return num::add_scalar(x, 0.4); }, {x});
  Tensor k = s.away_from_zero({1});
  s.check("mul_scalar", [x, k] { return num::mul_scalar(x, k); }, {x, k});
}

void structural_checks(Suite& s) {
  Tensor x = s.away_from_zero({3, 4});
  s.check("sum", [x] { return num::sum(x); }, {x});
  s.check("mean", [x] { return num::mean(x); }, {x});
  s.check("row_sums", [x] { return num::row_sums(x); }, {x});
  s.check("col_sums", [x] { return num::col_sums(x); }, {x});
  Tensor r = s.away_from_zero({3}), c = s.away_from_zero({4});
  s.check("scale_rows", [x, r] { return num::scale_rows(x, r); }, {x, r});
  s.check("scale_cols", [x, c] { return num::scale_cols(x, c); }, {x, c});
  s.check("add_bias", [x, c] { return num::add_bias(x, c); }, {x, c});
  Tensor y = s.away_from_zero({4, 2});
  s.check("matmul", [x, y] { return num::matmul(x, y); }, {x, y});
  s.check("transpose", [x] { return num::transpose(x); }, {x});
  s.check("reshape", [x] { return num::reshape(x, {2, 6}); }, {x});
  Tensor z = s.away_from_zero({2, 4});
  s.check("concat_rows", [x, z] {
    const Tensor parts[] = {x, z};
    return num::concat_rows(parts);
  }, {x, z});
  Tensor u = s.away_from_zero({3, 2});
  s.check("concat_cols", [x, u] { return num::concat_cols(x, u); }, {x, u});
  s.check("slice_rows", [x] { return num::slice_rows(x, 1, 3); }, {x});
  Tensor p = s.away_from_zero({1}), q = s.away_from_zero({1});
  s.check("stack", [p, q] {
    const Tensor parts[] = {p, q, p};
    return num::stack(parts);
  }, {p, q});
  const std::vector<std::size_t> picks = {0, 5, 5, 11, 7};
  s.check("gather", [x, picks] { return num::gather(x, picks); }, {x});
  Tensor v = s.away_from_zero({3});
  const std::vector<std::size_t> slots = {2, 7, 9};
  s.check("scatter", [v, slots] { return num::scatter(v, slots, {3, 4}); }, {v});
}

void normalizer_checks(Suite& s) {
  Tensor x = s.away_from_zero({3, 4}, 0.1, 2.0);
  s.check("softmax", [x] { return num::softmax(x, 1); }, {x});
  s.check("softmax_axis0", [x] { return num::softmax(x, 0); }, {x});
  s.check("log_softmax", [x] { return num::log_softmax(x, 1); }, {x});
  s.check("l2_norm", [x] { return num::l2_norm(x); }, {x});
  s.check("normalize_rows", [x] { return num::normalize_rows(x); }, {x});
  Tensor batch = s.away_from_zero({5, 3});
  Tensor scale = s.positive({3}), shift = s.away_from_zero({3});
  Tensor mean({3}, 0.0), var({3}, 1.0);
  s.check("standardize", [=]() mutable {
    return num::standardize(batch, scale, shift, mean, var, num::Mode::train);
  }, {batch, scale, shift});
}

void semantic_checks(Suite& s) {
  const std::size_t K = 3, C = 4, h = 3, w = 2;
  Tensor map = s.away_from_zero({C, h, w});
  Tensor raw = s.away_from_zero({K, h, w}, 0.1, 2.0);
  s.check("semantic_features", [map, raw] {
    auto heat = semantic::normalize_heatmaps({raw, std::nullopt});
    return semantic::extract_semantic_features({map}, heat).features;
  }, {map, raw});

  Tensor a = s.away_from_zero({1, C}), p = s.away_from_zero({1, C}), n = s.away_from_zero({1, C});
  s.check("triplet_loss", [a, p, n] { return semantic::triplet_loss(a, p, n, 5.0); }, {a, p, n});

  num::ParamStore store(s.rng()());
  semantic::register_classifiers(store, "cls", K + 1, C, 2);
  std::vector<semantic::NodeFeatureSet> batch;
  std::vector<Tensor> inputs = trainable(store);
  for (int i = 0; i < 4; ++i) {
    Tensor f = s.away_from_zero({K + 1, C});
    inputs.push_back(f);
    batch.push_back({f, semantic::Confidence::from_keypoints({0.9, 0.3, 0.6}),
                     semantic::Stage::semantic});
  }
  const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
  s.check("semantic_loss", [&store, batch, labels] {
    return semantic::keypoint_loss(batch, labels, 0.3, store, "cls", num::Mode::train);
  }, inputs);
}

void relation_checks(Suite& s) {
  const auto skeleton = relation::build_skeleton();
  const std::size_t K = skeleton.size(), C = 3;
  num::ParamStore store(s.rng()());
  relation::register_relation(store, 2, C, K, 2);
  std::vector<semantic::NodeFeatureSet> batch;
  std::vector<Tensor> feats;
  for (int i = 0; i < 4; ++i) {
    Tensor f = s.away_from_zero({K + 1, C});
    feats.push_back(f);
    batch.push_back({f, semantic::Confidence::ones(K), semantic::Stage::semantic});
  }
  const std::string layer = relation::kLayerPrefix + ".0";
  auto params = trainable(store);
  auto with = [](std::vector<Tensor> a, const std::vector<Tensor>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  s.check("node_scores", [&store, batch, layer] {
    return num::concat_rows(relation::node_scores(batch, store, layer, num::Mode::train));
  }, with(feats, params));

  Tensor scores = s.positive({K}, 0.1, 0.9);
  s.check("adaptive_adjacency", [skeleton, scores] {
    return relation::adaptive_adjacency(skeleton, scores).weights;
  }, {scores});

  s.check("adgc_forward", [&store, batch, skeleton, layer] {
    std::vector<Tensor> rows;
    for (auto& o : relation::adgc_forward(batch, skeleton, store, layer, num::Mode::train)) {
      rows.push_back(o.features);
    }
    return num::concat_rows(rows);
  }, with(feats, params), 60);

  const std::vector<std::uint32_t> labels = {0, 0, 1, 1};
  s.check("relation_loss", [&store, batch, skeleton, labels] {
    auto rel = relation::relation_module(batch, skeleton, store, {}, num::Mode::train);
    return relation::relation_loss(rel, labels, 0.3, store);
  }, with(feats, params), 60);
}

void topology_checks(Suite& s) {
  const std::size_t K = 3, C = 3;
  const auto skeleton = relation::complete_graph(K);
  Tensor v1 = s.away_from_zero({K, C}), v2 = s.away_from_zero({K, C});
  Tensor tn = s.positive({1}, 0.5, 1.5), te = s.positive({1}, 0.5, 1.5);
  s.check("build_affinity", [=] {
    return topology::build_affinity(v1, v2, skeleton, tn, te).M;
  }, {v1, v2, tn, te});

  Tensor m = s.positive({6, 6});
  s.check("power_iteration", [m] { return topology::power_iteration(m, 20); }, {m});

  Tensor u = s.positive({4, 4});
  s.check("bistochastic", [u] { return topology::bistochastic(u, 10).U; }, {u});

  s.check("graph_matching", [=] {
    return topology::graph_matching(v1, v2, skeleton, tn, te, topology::kTrainingMatching).U;
  }, {v1, v2, tn, te});

  num::ParamStore store(s.rng()());
  topology::register_topology(store, 2, C, K, 2.0);
  semantic::NodeFeatureSet a{s.away_from_zero({K + 1, C}), semantic::Confidence::ones(K),
                             semantic::Stage::relation};
  semantic::NodeFeatureSet b{s.away_from_zero({K + 1, C}), semantic::Confidence::ones(K),
                             semantic::Stage::relation};
  std::vector<Tensor> inputs = trainable(store);
  inputs.push_back(a.features);
  inputs.push_back(b.features);
  s.check("cgea_forward", [&store, a, b, skeleton] {
    auto out = topology::cgea_forward(a, b, skeleton, store, topology::kLayerPrefix + ".0");
    const Tensor parts[] = {out.first.features, out.second.features};
    return num::concat_rows(parts);
  }, inputs);

  s.check("similarity_predict", [&store, a, b, skeleton] {
    auto [x, y] = topology::topology_module(a, b, skeleton, store);
    return topology::similarity_predict(x, y, store);
  }, inputs);

  Tensor prob = s.positive({1}, 0.2, 0.8);
  s.check("verification_loss", [prob] {
    const Tensor parts[] = {topology::verification_loss(prob, 1),
                            topology::verification_loss(prob, 0)};
    return num::stack(parts);
  }, {prob});
  Tensor logit = s.away_from_zero({1}, 0.1, 3.0);
  s.check("verification_loss_from_logit", [logit] {
    const Tensor parts[] = {topology::verification_loss_from_logit(logit, 1),
                            topology::verification_loss_from_logit(logit, 0)};
    return num::stack(parts);
  }, {logit});
}

void total_loss_check(Suite& s) {
  SyntheticSpec spec;
  spec.num_ids = 2;
  spec.samples_per_id = 2;
  spec.C = 6;
  spec.h = 8;
  spec.w = 4;
  spec.identity_rank = 3;
  spec.nuisance_rank = 2;
  spec.part_rank = 1;
  spec.seed = s.rng()();
  const Dataset data = generate_synthetic(spec);

  Config config;
  config.C = spec.C;
  config.h = spec.h;
  config.w = spec.w;
  config.seed = s.rng()() >> 12;
  Model model = make_model(config, 2);
  std::vector<NodeFeatureSet> batch;
  std::vector<std::uint32_t> labels;
  for (const auto& sample : data.samples) {
    batch.push_back(semantic_features(sample, config));
    labels.push_back(sample.identity);
  }
  const auto pairs = sample_pairs(labels, s.rng());
  s.check("total_loss", [&model, batch, labels, pairs] {
    return total_loss(model, batch, labels, pairs).total;
  }, trainable(model.store), 20);
}

}  // namespace

std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed) {
  Suite s(seed);
  elementwise_checks(s);
  structural_checks(s);
  normalizer_checks(s);
  semantic_checks(s);
  relation_checks(s);
  topology_checks(s);
  total_loss_check(s);
  return s.take();
}

std::vector<std::size_t> brute_force_matching(const Tensor& M, std::size_t K) {
  if (M.rank() != 2 || M.rows() != K * K || M.cols() != K * K) {
    throw ShapeError("brute_force_matching: affinity must be K^2 x K^2");
  }
  if (K > 8) throw UsageError("brute_force_matching: K! enumeration limited to K <= 8");
  std::vector<std::size_t> perm(K), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_score = -1.0;
  const std::size_t n = K * K;
  auto m = M.values();
  do {
    double score = 0.0;
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) score += m[(i * K + perm[i]) * n + (j * K + perm[j])];
    if (best.empty() || score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<std::size_t> rowwise_argmax(const Tensor& U) {
  std::vector<std::size_t> out(U.rows());
  for (std::size_t i = 0; i < U.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < U.cols(); ++j) {
      if (U.at(i, j) > U.at(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

MatchingDemo matching_demo(std::size_t K, std::uint64_t seed, double tau) {
  if (K < 1 || K > 4) throw UsageError("matching demo supports 1 <= K <= 4");
  constexpr std::size_t C = 4;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatchingDemo demo;
  demo.first = Tensor({K, C});
  for (auto& v : demo.first.data()) v = normal(rng);
  demo.truth.resize(K);
  std::iota(demo.truth.begin(), demo.truth.end(), 0);
  std::shuffle(demo.truth.begin(), demo.truth.end(), rng);
  demo.second = Tensor({K, C});
  auto src = demo.first.values();
  auto dst = demo.second.data();
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t c = 0; c < C; ++c)
      dst[demo.truth[i] * C + c] = src[i * C + c] + 0.01 * normal(rng);

  const auto skeleton = relation::complete_graph(K);
  demo.U = topology::graph_matching(demo.first, demo.second, skeleton, tau, tau,
                                    topology::kEvaluationMatching)
               .U;
  demo.argmax = rowwise_argmax(demo.U);
  demo.oracle = brute_force_matching(
      topology::build_affinity(demo.first, demo.second, skeleton, tau, tau).M, K);
  return demo;
}

std::string format_matching_demo(const MatchingDemo& demo) {
  std::string out = "U:\n";
  char cell[32];
  for (std::size_t i = 0; i < demo.U.rows(); ++i) {
    for (std::size_t j = 0; j < demo.U.cols(); ++j) {
      std::snprintf(cell, sizeof cell, "%s%.6f", j ? " " : "  ", demo.U.at(i, j));
      out += cell;
    }
    out += '\n';
  }
  auto list = [](const char* name, const std::vector<std::size_t>& v) {
    std::string s = name;
    for (auto x : v) s += " " + std::to_string(x);
    return s + '\n';
  };
  out += list("argmax:", demo.argmax);
  out += list("oracle:", demo.oracle);
  out += list("truth:", demo.truth);
  out += std::string("agree: ") + (demo.argmax == demo.oracle ? "yes" : "no") + '\n';
  return out;
}

}  // namespace hord::pipeline
