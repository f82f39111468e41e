#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hord/error.hpp"
#include "hord/pipeline/config.hpp"
#include "hord/pipeline/dataset.hpp"
#include "hord/pipeline/model.hpp"
#include "hord/pipeline/retrieval.hpp"
#include "hord/pipeline/train.hpp"
#include "hord/semantic/semantic.hpp"

using namespace hord;
using namespace hord::pipeline;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.num_ids = 6;
  s.samples_per_id = 4;
  s.C = 8;
  s.h = 8;
  s.w = 4;
  s.identity_rank = 3;
  s.nuisance_rank = 1;
  s.part_rank = 2;
  s.seed = seed;
  return s;
}

Config small_config(Modules m = Modules::full) {
  Config c;
  c.C = 8;
  c.h = 8;
  c.w = 4;
  c.epochs = 4;
  c.batch_p = 2;
  c.batch_k = 2;
  c.modules = m;
  c.cgea_depth = 1;
  c.adgc_depth = 1;
  return c;
}

// Precision at every hit, averaged; written without shared code.
double ap_oracle(const std::vector<bool>& rel) {
  std::vector<double> precisions;
  for (std::size_t r = 0; r < rel.size(); ++r) {
    if (!rel[r]) continue;
    const auto hits = std::count(rel.begin(), rel.begin() + r + 1, true);
    precisions.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
  }
  return std::accumulate(precisions.begin(), precisions.end(), 0.0) /
         static_cast<double>(precisions.size());
}

std::vector<NodeFeatureSet> features_of(const Model& model, const Dataset& data) {
  std::vector<NodeFeatureSet> sem;
  for (const auto& s : data.samples) sem.push_back(semantic_features(s, model.config));
  return retrieval_features(model, sem);
}

}  // namespace

TEST_CASE("config parse and serialize round trip") {
  Config c;
  c.gamma = 0.25;
  c.top_n = 3;
  c.lr = 0.0125;
  c.modules = Modules::relation;
  c.heatmap_norm = false;
  c.adjacency = relation::AdjacencyMode::fixed;
  c.matching = topology::MatchingMode::uniform;
  c.seed = 123456789012345ULL;
  const Config back = parse_config(serialize_config(c));
  CHECK(serialize_config(back) == serialize_config(c));
  CHECK(back.gamma == 0.25);
  CHECK(back.seed == 123456789012345ULL);
  CHECK(back.modules == Modules::relation);

  const Config parsed = parse_config("# comment\n\ngamma = 0.75\n top_n=4\nmodules=global\n");
  CHECK(parsed.gamma == 0.75);
  CHECK(parsed.top_n == 4);
  CHECK(parsed.modules == Modules::global);
  CHECK(config_from_numbers(config_numbers(c)).lr == c.lr);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("bogus=1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("gamma=0.5\ngamma=0.6\n"), UsageError);
  CHECK_THROWS_AS(parse_config("gamma\n"), UsageError);
  CHECK_THROWS_AS(parse_config("gamma=abc\n"), UsageError);
  CHECK_THROWS_AS(parse_config("top_n=-2\n"), UsageError);
  CHECK_THROWS_AS(parse_config("modules=everything\n"), UsageError);
  CHECK_THROWS_AS(parse_config("gamma=1.5\n"), UsageError);
  CHECK_THROWS_AS(parse_config("top_n=0\n"), UsageError);
  CHECK_THROWS_AS(parse_config("batch_k=1\n"), UsageError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), Error);
}

TEST_CASE("dataset container round trip and determinism") {
  const Dataset a = generate_synthetic(small_spec());
  const Dataset b = generate_synthetic(small_spec());
  const auto bytes = encode_dataset(a);
  CHECK(bytes == encode_dataset(b));
  CHECK(bytes != encode_dataset(generate_synthetic(small_spec(4))));
  CHECK(encode_dataset(decode_dataset(bytes)) == bytes);
  CHECK(a.samples.size() == 24);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_dataset(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  CHECK_THROWS_AS(decode_dataset(bad_magic), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/data.bin"), Error);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s = small_spec();
  s.num_ids = 1;
  CHECK_THROWS_AS(generate_synthetic(s), UsageError);
  s = small_spec();
  s.occlusion_rate = 1.5;
  CHECK_THROWS_AS(generate_synthetic(s), UsageError);
  s = small_spec();
  s.identity_rank = 8;
  CHECK_THROWS_AS(generate_synthetic(s), UsageError);
}

TEST_CASE("confidence under no and full occlusion") {
  const Config config;
  SyntheticSpec clear;
  clear.occlusion_rate = 0.0;
  clear.num_ids = 4;
  for (const auto& s : generate_synthetic(clear).samples) {
    const auto beta = semantic_features(s, config).beta;
    for (std::size_t k = 0; k < beta.keypoints(); ++k) CHECK(beta[k] > 0.5);
  }

  SyntheticSpec blocked = clear;
  blocked.occlusion_rate = 1.0;
  const double limit = 2.0 / static_cast<double>(blocked.h * blocked.w);
  for (const auto& s : generate_synthetic(blocked).samples) {
    const auto beta = semantic_features(s, config).beta;
    std::size_t low = 0;
    for (std::size_t k = 0; k < beta.keypoints(); ++k) low += beta[k] < limit;
    CHECK(low >= 1);
  }
}

TEST_CASE("split keeps identities disjoint") {
  const Dataset d = generate_synthetic(small_spec());
  const Split s = split_dataset(d);
  CHECK(s.train.size() == 12);
  CHECK(s.query.size() == 6);
  CHECK(s.gallery.size() == 6);
  for (std::size_t t : s.train)
    for (std::size_t q : s.query) CHECK(d.samples[t].identity != d.samples[q].identity);
  Dataset tiny = d;
  tiny.samples.resize(12);
  CHECK_THROWS_AS(split_dataset(tiny), UsageError);
}

TEST_CASE("two-stage ranking") {
  const std::vector<double> s1 = {0.9, 0.1, 0.5, 0.7, 0.3};
  const auto base = stage1_order(s1);
  CHECK(base == std::vector<std::size_t>{0, 3, 2, 4, 1});

  const std::vector<double> st = {0.0, 1.0, 1.0, 0.2, 0.9};
  auto topo = [&](std::size_t g) { return st[g]; };
  CHECK(two_stage_ranking(s1, 3, 1.0, topo) == base);
  // n = 3 refines {0, 3, 2} only: mixed 0.45, 0.45, 0.75
  CHECK(two_stage_ranking(s1, 3, 0.5, topo) == std::vector<std::size_t>{2, 0, 3, 4, 1});
  // n beyond the gallery refines every pair
  std::vector<double> mixed;
  const auto all = two_stage_ranking(s1, 50, 0.0, topo, &mixed);
  CHECK(mixed.size() == 5);
  CHECK(all == std::vector<std::size_t>{2, 1, 4, 3, 0});  // tie broken by stage-1 position
  CHECK_THROWS_AS(two_stage_ranking({}, 3, 0.5, topo), UsageError);
}

TEST_CASE("re-ranking keeps the top-n membership") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s1(20), st(20);
    for (auto& v : s1) v = u(rng);
    for (auto& v : st) v = u(rng);
    const std::size_t n = 1 + trial % 10;
    const auto base = stage1_order(s1);
    const auto ranked = two_stage_ranking(s1, n, u(rng), [&](std::size_t g) { return st[g]; });
    std::vector<std::size_t> a(base.begin(), base.begin() + n), b(ranked.begin(), ranked.begin() + n);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(std::equal(base.begin() + n, base.end(), ranked.begin() + n));
  }
}

TEST_CASE("average precision examples and oracle") {
  CHECK(average_precision({false, true}) == 0.5);
  CHECK(average_precision({true, false, false}) == 1.0);
  std::mt19937_64 rng(9);
  for (int q = 0; q < 20; ++q) {
    std::vector<bool> rel(15);
    for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = rng() % 3 == 0;
    rel[rng() % rel.size()] = true;
    CHECK(average_precision(rel) == doctest::Approx(ap_oracle(rel)).epsilon(1e-15));
  }
}

TEST_CASE("evaluate metrics") {
  RetrievalResult perfect;
  perfect.ranking = {{0, 1, 2}, {1, 0, 2}};
  const std::uint32_t ql[] = {5, 6}, gl[] = {5, 6, 7};
  const auto m = evaluate(perfect, ql, gl);
  CHECK(m.cmc[0] == 1.0);
  CHECK(m.map == 1.0);

  RetrievalResult late;
  late.ranking = {{2, 1, 0}, {1, 0, 2}};
  const auto n = evaluate(late, ql, gl);
  CHECK(n.cmc[0] == 0.5);
  CHECK(n.cmc[2] == 1.0);
  CHECK(n.map == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0));
  for (std::size_t r = 1; r < n.cmc.size(); ++r) CHECK(n.cmc[r] >= n.cmc[r - 1]);

  const std::uint32_t orphan[] = {5, 9};
  CHECK_THROWS_AS(evaluate(perfect, orphan, gl), UsageError);
  RetrievalResult broken;
  broken.ranking = {{0, 0, 2}, {1, 0, 2}};
  CHECK_THROWS_AS(evaluate(broken, ql, gl), UsageError);
}

TEST_CASE("retrieve follows the stage-1 order at gamma 1") {
  const Dataset d = generate_synthetic(small_spec());
  const Model model = make_model(small_config(), 3);
  const auto feats = features_of(model, d);
  const std::span<const NodeFeatureSet> all(feats);
  const auto queries = all.subspan(0, 4), gallery = all.subspan(4, 10);
  const auto r = retrieve(model, queries, gallery, 1.0, 4);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    CHECK(r.ranking[q] == stage1_order(r.stage1[q]));
    CHECK(r.refined[q].size() == 4);
  }
  const auto every = retrieve(model, queries, gallery, 0.5, 100);
  for (const auto& refined : every.refined) CHECK(refined.size() == gallery.size());
  CHECK_THROWS_AS(retrieve(model, queries, {}, 0.5, 4), UsageError);
}

TEST_CASE("pair similarities are symmetric") {
  const Dataset d = generate_synthetic(small_spec());
  Model model = make_model(small_config(), 3);
  for (auto& v : model.store.get(topology::kSimilarityPrefix + ".weight").data()) v = 0.01;
  const auto f = features_of(model, d);
  for (std::size_t i = 0; i + 1 < 6; ++i) {
    CHECK(stage1_similarity(model, f[i], f[i + 1]) == stage1_similarity(model, f[i + 1], f[i]));
    CHECK(topology_similarity(model, f[i], f[i + 1]) ==
          doctest::Approx(topology_similarity(model, f[i + 1], f[i])).epsilon(1e-12));
  }
}

TEST_CASE("total loss reduces to the semantic loss without the other terms") {
  const Dataset d = generate_synthetic(small_spec());
  Config c = small_config();
  c.lambda_R = 0.0;
  c.lambda_T = 0.0;
  const Model model = make_model(c, 3);
  std::vector<semantic::NodeFeatureSet> batch;
  std::vector<std::uint32_t> labels;
  for (std::size_t i : {0, 1, 4, 5}) {
    batch.push_back(semantic_features(d.samples[i], c));
    labels.push_back(d.samples[i].identity);
  }
  std::mt19937_64 rng(1);
  const auto pairs = sample_pairs(labels, rng);
  const auto parts = total_loss(model, batch, labels, pairs);
  const double sem =
      semantic::semantic_loss(batch, labels, c.alpha, model.store).item();
  CHECK(parts.total.item() == doctest::Approx(sem).epsilon(1e-12));
  CHECK(parts.semantic == doctest::Approx(sem).epsilon(1e-12));
}

TEST_CASE("verification pairs are balanced") {
  const std::uint32_t labels[] = {0, 0, 1, 1, 2, 2};
  std::mt19937_64 rng(2);
  const auto pairs = sample_pairs(labels, rng);
  CHECK(pairs.size() == 12);
  int same = 0;
  for (const auto& p : pairs) {
    same += p.same;
    CHECK(p.first != p.second);
    CHECK((labels[p.first] == labels[p.second]) == (p.same == 1));
  }
  CHECK(same == 6);
  const std::uint32_t lonely[] = {0, 1, 1};
  CHECK_THROWS_AS(sample_pairs(lonely, rng), UsageError);
}

TEST_CASE("learning rate schedule") {
  Config c;
  c.lr = 0.1;
  c.epochs = 12;
  CHECK(learning_rate(c, 1) == 0.1);
  CHECK(learning_rate(c, 3) == 0.1);
  CHECK(learning_rate(c, 4) == doctest::Approx(0.01));
  CHECK(learning_rate(c, 9) == doctest::Approx(0.001));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Dataset d = generate_synthetic(small_spec());
  Config c = small_config();
  c.lr = 0.0;
  c.epochs = 2;
  const auto before = model_checkpoint(make_model(c, 3));
  const auto after = model_checkpoint(train(d, c).model);
  for (const auto& [name, t] : before) {
    if (name.find("running") != std::string::npos) continue;
    const auto& u = after.at(name);
    REQUIRE(u.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(u[i] == t[i]);
  }
}

TEST_CASE("training is deterministic and lowers the loss") {
  const Dataset d = generate_synthetic(small_spec());
  Config c = small_config();
  c.lr = 0.03;
  c.epochs = 8;
  const auto a = train(d, c);
  const auto b = train(d, c);
  CHECK(a.epoch_loss == b.epoch_loss);
  REQUIRE(a.epoch_loss.size() == 8);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  CHECK(format_loss_trace(a.epoch_loss).starts_with("epoch,loss\n1,"));

  const auto global = train(d, small_config(Modules::global));
  CHECK(global.epoch_loss.empty());
}

TEST_CASE("checkpoint round trip keeps the model") {
  const Dataset d = generate_synthetic(small_spec());
  Config c = small_config();
  c.epochs = 2;
  c.lr = 0.01;
  c.gamma = 0.3;
  const Model m = train(d, c).model;
  const Model back = model_from_checkpoint(model_checkpoint(m));
  CHECK(back.classes == m.classes);
  CHECK(serialize_config(back.config) == serialize_config(c));
  CHECK(evaluate_model(back, d, 0.5, 4).map == evaluate_model(m, d, 0.5, 4).map);
}
