// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hord/numerics/checkpoint.hpp"
#include "hord/pipeline/config.hpp"
#include "hord/pipeline/dataset.hpp"
#include "hord/pipeline/diagnostics.hpp"
#include "hord/pipeline/model.hpp"
#include "hord/pipeline/retrieval.hpp"
#include "hord/pipeline/train.hpp"
#include "hord/relation/relation.hpp"
#include "hord/semantic/semantic.hpp"
#include "hord/topology/topology.hpp"

using namespace hord;
using namespace hord::pipeline;
using num::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + fmt("%.4f", x);
  return out;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& e : gradient_suite(seed)) {
      if (!(e.error <= worst)) {
        worst = e.error;
        where = e.name + fmt(" (seed %llu)", static_cast<unsigned long long>(seed));
      }
    }
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-4 && dt < 60.0,
          fmt("max relative error %.3g at %s, %.1f s", worst, where.c_str(), dt)};
}

// ---------------------------------------------------------------- 2

Outcome sinkhorn() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-3, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 13;
    Tensor x({k, k});
    for (auto& v : x.data()) v = u(rng);
    const Tensor p = topology::bistochastic(x, 100).U;
    for (std::size_t i = 0; i < k; ++i) {
      double row = 0.0, col = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        row += p.at(i, j);
        col += p.at(j, i);
      }
      worst = std::max({worst, std::abs(row - 1.0), std::abs(col - 1.0)});
    }
  }
  return {worst < 1e-6, fmt("max |margin - 1| %.3g over 100 matrices", worst)};
}

// ---------------------------------------------------------------- 3

Outcome power_iteration() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_align = 1.0, worst_drop = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 15;
    Eigen::MatrixXd a(n, n);
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        a(i, j) = a(j, i) = u(rng);
        m.data()[i * n + j] = m.data()[j * n + i] = a(i, j);
      }
    }
    std::vector<double> rayleigh;
    const Tensor x = topology::power_iteration(m, 200, &rayleigh);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    const Eigen::VectorXd top = solver.eigenvectors().col(static_cast<Eigen::Index>(n) - 1);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += top(static_cast<Eigen::Index>(i)) * x[i];
    worst_align = std::min(worst_align, std::abs(dot));
    for (std::size_t t = 1; t < rayleigh.size(); ++t) {
      worst_drop = std::max(worst_drop, (rayleigh[t - 1] - rayleigh[t]) / rayleigh[t - 1]);
    }
  }
  return {worst_align >= 1.0 - 1e-8 && worst_drop <= 1e-12,
          fmt("min |cos| %.12f, largest relative Rayleigh drop %.3g", worst_align, worst_drop)};
}

// ---------------------------------------------------------------- 4

Outcome matching_oracle() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  int agree = 0, total = 0, recovered = 0, self_total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + trial % 3;
    const auto g = relation::complete_graph(k);
    Tensor v({k, 6});
    for (auto& x : v.data()) x = n(rng);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor w({k, 6});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < 6; ++c) w.data()[perm[i] * 6 + c] = v.at(i, c);

    for (const Tensor* other : {&v, &w}) {
      const auto u = topology::graph_matching(v, *other, g, 5.0, 5.0, topology::kEvaluationMatching);
      const auto oracle =
          brute_force_matching(topology::build_affinity(v, *other, g, 5.0, 5.0).M, k);
      const auto argmax = rowwise_argmax(u.U);
      agree += argmax == oracle;
      ++total;
      if (other == &v) {
        std::vector<std::size_t> identity(k);
        std::iota(identity.begin(), identity.end(), 0);
        recovered += argmax == identity;
        ++self_total;
      }
    }
  }
  return {agree == total && recovered == self_total,
          fmt("argmax = brute force on %d/%d, self-match recovery %d/%d", agree, total, recovered,
              self_total)};
}

// ---------------------------------------------------------------- 5

Outcome closed_forms() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t k = 14, c = 8;
  Tensor f({k + 1, c});
  for (auto& x : f.data()) x = n(rng);
  const semantic::NodeFeatureSet a{f, semantic::Confidence::ones(k)};
  const double self = relation::relation_similarity(a, a);

  num::ParamStore store(1);
  topology::register_topology(store, 1, c, k, 5.0);
  for (auto& x : store.get(topology::kSimilarityPrefix + ".weight").data()) x = n(rng);
  store.get(topology::kSimilarityPrefix + ".bias").data()[0] = 0.0;
  const double half = topology::similarity_predict(a, a, store).item();

  const double bce = topology::verification_loss(0.5, 1);
  const bool pass =
      std::abs(self - 1.0) <= 1e-9 && half == 0.5 && std::abs(bce - std::log(2.0)) <= 1e-12;
  return {pass, fmt("self-similarity %.12f, s at identical inputs %.17g, loss at 0.5 %.15f", self,
                    half, bce)};
}

// ---------------------------------------------------------------- 6-9

struct Benchmark {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<Dataset> data;
  double build_seconds = 0.0;
  // per variant, per seed
  std::vector<std::vector<double>> map;
  std::vector<Model> full;  // per seed
};

enum Variant { kGlobal, kSemantic, kRelation, kFull, kNoNorm, kFixed, kUniform, kVariants };
const char* const kVariantNames[] = {"global", "+S", "+S+R", "full", "no-norm", "fixed-A", "uniform-U"};

Config variant_config(Variant v, std::uint64_t seed) {
  Config c;
  c.seed = seed;
  switch (v) {
    case kGlobal: c.modules = Modules::global; break;
    case kSemantic: c.modules = Modules::semantic; break;
    case kRelation: c.modules = Modules::relation; break;
    case kFull: break;
    case kNoNorm: c.heatmap_norm = false; break;
    case kFixed: c.adjacency = relation::AdjacencyMode::fixed; break;
    case kUniform: c.matching = topology::MatchingMode::uniform; break;
    default: break;
  }
  return c;
}

Dataset benchmark_data(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_ids = 20;
  spec.occlusion_rate = 0.5;
  spec.seed = seed;
  return generate_synthetic(spec);
}

Benchmark& benchmark() {
  static Benchmark b = [] {
    Benchmark b;
    b.map.assign(kVariants, {});
    for (std::uint64_t seed : b.seeds) b.data.push_back(benchmark_data(seed));
    return b;
  }();
  return b;
}

// Trains and scores the listed variants once; later calls reuse them.
void ensure(std::initializer_list<Variant> variants) {
  auto& b = benchmark();
  for (Variant v : variants) {
    if (!b.map[v].empty()) continue;
    const auto t0 = Clock::now();
    for (std::size_t s = 0; s < b.seeds.size(); ++s) {
      const Config c = variant_config(v, b.seeds[s]);
      auto result = train(b.data[s], c);
      b.map[v].push_back(evaluate_model(result.model, b.data[s], c.gamma, c.top_n).map);
      if (v == kFull) b.full.push_back(std::move(result.model));
    }
    const double dt = seconds_since(t0);
    b.build_seconds += dt;
    std::fprintf(stderr, "  %-9s mAP %s (%.0f s)\n", kVariantNames[v], list(b.map[v]).c_str(), dt);
  }
}

Outcome ablation_order() {
  const auto t0 = Clock::now();
  ensure({kGlobal, kSemantic, kRelation, kFull});
  const double dt = seconds_since(t0);
  auto& b = benchmark();
  std::vector<double> med;
  std::string detail = "median mAP";
  for (Variant v : {kGlobal, kSemantic, kRelation, kFull}) {
    med.push_back(median(b.map[v]));
    detail += fmt(" %s %.4f", kVariantNames[v], med.back());
  }
  bool increasing = true;
  for (std::size_t i = 1; i < med.size(); ++i) increasing = increasing && med[i] > med[i - 1];
  return {increasing && dt < 600.0, detail + fmt(", %.0f s", dt)};
}

Outcome layer_ablation() {
  ensure({kFull, kNoNorm, kFixed, kUniform});
  auto& b = benchmark();
  const double full = median(b.map[kFull]);
  bool pass = true;
  std::string detail = fmt("median mAP full %.4f", full);
  for (Variant v : {kNoNorm, kFixed, kUniform}) {
    const double m = median(b.map[v]);
    pass = pass && m < full;
    detail += fmt(", %s %.4f%s", kVariantNames[v], m, m < full ? "" : " (not below)");
  }
  return {pass, detail};
}

Outcome robustness() {
  ensure({kRelation, kFull});
  auto& b = benchmark();
  const double base = median(b.map[kRelation]);
  double worst = 1.0;
  std::string at, below;
  for (double gamma : {0.25, 0.5, 0.75}) {
    for (std::size_t n : {4, 8, 16}) {
      std::vector<double> maps;
      for (std::size_t s = 0; s < b.seeds.size(); ++s) {
        maps.push_back(evaluate_model(b.full[s], b.data[s], gamma, n).map);
      }
      const double m = median(maps);
      if (m < worst) {
        worst = m;
        at = fmt("gamma %.2f n %zu", gamma, n);
      }
      if (m < base) below += fmt(" (%.2f,%zu)=%.4f", gamma, n, m);
    }
  }
  return {below.empty(), fmt("+S+R median %.4f, lowest full median %.4f at %s", base, worst,
                             at.c_str()) +
                             (below.empty() ? "" : ", below baseline:" + below)};
}

struct Artifacts {
  std::vector<std::uint8_t> dataset, checkpoint;
  std::string trace, metrics;
};

Artifacts pipeline_once() {
  Artifacts a;
  a.dataset = encode_dataset(benchmark_data(7));
  const Dataset data = decode_dataset(a.dataset);
  const Config config;
  const auto result = train(data, config);
  a.checkpoint = num::encode_checkpoint(model_checkpoint(result.model));
  a.trace = format_loss_trace(result.epoch_loss);
  const Model loaded = model_from_checkpoint(num::decode_checkpoint(a.checkpoint));
  a.metrics = format_metrics(evaluate_model(loaded, data, config.gamma, config.top_n));
  return a;
}

Outcome determinism() {
  const auto first = pipeline_once();
  const auto second = pipeline_once();
  const bool d = first.dataset == second.dataset, c = first.checkpoint == second.checkpoint,
             t = first.trace == second.trace, m = first.metrics == second.metrics;
  return {d && c && t && m,
          fmt("dataset %s, checkpoint %s, loss trace %s, metrics %s", d ? "identical" : "differs",
              c ? "identical" : "differs", t ? "identical" : "differs",
              m ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradients},      {2, sinkhorn},       {3, power_iteration},
      {4, matching_oracle}, {5, closed_forms},  {6, ablation_order},
      {7, layer_ablation},  {8, robustness},    {9, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
