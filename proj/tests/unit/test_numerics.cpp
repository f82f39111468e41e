#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "hord/error.hpp"
#include "hord/numerics/checkpoint.hpp"
#include "hord/numerics/gradient_check.hpp"
#include "hord/numerics/layers.hpp"
#include "hord/numerics/ops.hpp"
#include "hord/numerics/param_store.hpp"

using namespace hord;
using namespace hord::num;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 1e-12) {
  REQUIRE(t.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(t[i] == doctest::Approx(expected[i]).epsilon(tol));
  }
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  check_values(matmul(Tensor::matrix({{1, 0}, {0, 1}}), a), {1, 2, 3, 4});
  const Tensor z = matmul(a, Tensor::matrix({{0}, {0}}));
  CHECK(z.shape() == Shape{2, 1});
  check_values(z, {0, 0});
}

TEST_CASE("matmul rejects mismatched inner extents and names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(to_string(Shape{2, 3})) != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(11);
  std::vector<Tensor> inputs = {leaf(random_tensor({3, 4}, rng)), leaf(random_tensor({4, 2}, rng))};
  const double err = gradient_check([&] { return sum(matmul(inputs[0], inputs[1])); }, inputs);
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise closed forms") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  check_values(abs(Tensor::vector({-1, 0, 2})), {1, 0, 2});
  check_values(elementwise(ElementwiseKind::negate, Tensor::vector({1, -2})), {-1, 2});
  check_values(elementwise(ElementwiseKind::sub, Tensor::vector({3, 1}), Tensor::vector({1, 1})),
               {2, 0});
  CHECK_THROWS_AS(add(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("abs has zero subgradient at zero") {
  Tensor x = leaf(Tensor::vector({0.0}));
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(abs(x)));
  }
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("relu gradient away from the kink") {
  Tensor x = leaf(Tensor::vector({-1.0, 2.0}));
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(relu(x)));
  }
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  std::vector<Tensor> inputs = {x};
  x.zero_grad();
  CHECK(gradient_check([&] { return sum(relu(inputs[0])); }, inputs) < 1e-9);
}

TEST_CASE("softmax examples") {
  check_values(softmax(Tensor::vector({4, 4, 4}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const Tensor s = softmax(Tensor::vector({10, 0}), 0);
  const double e = std::exp(10.0);
  CHECK(s[0] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(s[1] == doctest::Approx(0.0000454).epsilon(1e-2));
}

TEST_CASE("softmax is a distribution along either axis") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({5, 7}, rng, -50.0, 50.0);
    for (std::size_t axis : {0u, 1u}) {
      const Tensor s = softmax(a, axis);
      const std::size_t outer = axis == 0 ? 7 : 5, inner = axis == 0 ? 5 : 7;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = axis == 0 ? s.at(i, o) : s.at(o, i);
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(softmax(Tensor({3}), 1), ShapeError);
}

TEST_CASE("standardize examples") {
  Tensor scale({1}, 1.0), shift({1}, 0.0), rm({1}, 0.0), rv({1}, 1.0);
  const Tensor y = standardize(Tensor({2, 1}, {1.0, -1.0}), scale, shift, rm, rv, Mode::train);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-5));

  Tensor shift2({1}, 0.25);
  const Tensor c = standardize(Tensor({2, 1}, {5.0, 5.0}), scale, shift2, rm, rv, Mode::train);
  CHECK(c[0] == doctest::Approx(0.25));
  CHECK(c[1] == doctest::Approx(0.25));
}

TEST_CASE("standardize eval mode uses running statistics") {
  Tensor scale({1}, 1.0), shift({1}, 0.0), rm({1}, 0.0), rv({1}, 1.0);
  standardize(Tensor({2, 1}, {3.0, 5.0}), scale, shift, rm, rv, Mode::train);
  CHECK(rm[0] == doctest::Approx(0.4));  // 0.9 * 0 + 0.1 * 4
  const Tensor y = standardize(Tensor({1, 1}, {rm[0]}), scale, shift, rm, rv, Mode::eval);
  CHECK(y[0] == doctest::Approx(0.0));
}

TEST_CASE("standardize gradient on a random 4x3 batch") {
  std::mt19937_64 rng(5);
  std::vector<Tensor> inputs = {leaf(random_tensor({4, 3}, rng)), leaf(random_tensor({3}, rng)),
                                leaf(random_tensor({3}, rng))};
  Tensor w = random_tensor({4, 3}, rng);
  Tensor rm({3}, 0.0), rv({3}, 1.0);
  const double err = gradient_check(
      [&] {
        return sum(mul(standardize(inputs[0], inputs[1], inputs[2], rm, rv, Mode::train), w));
      },
      inputs);
  CHECK(err < 1e-5);
}

TEST_CASE("backward closed forms and accumulation") {
  Tensor x = leaf(Tensor({2, 3}, 0.7));
  for (int pass = 1; pass <= 2; ++pass) {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(x));
    for (double g : x.grad()) CHECK(g == static_cast<double>(pass));
  }

  Tensor w = leaf(Tensor::scalar(1.0));
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(mul(sigmoid(Tensor::scalar(0.0)), w));
  CHECK(w.grad()[0] == 0.5);
  CHECK_THROWS_AS(tape.backward(mul(Tensor({2}, 1.0), leaf(Tensor({2}, 1.0)))), UsageError);
}

TEST_CASE("gradient_check examples") {
  std::vector<Tensor> lin = {leaf(Tensor::scalar(2.0)), leaf(Tensor::scalar(3.0))};
  CHECK(gradient_check([&] { return mul(lin[0], lin[1]); }, lin) < 1e-10);

  std::vector<Tensor> sig = {leaf(Tensor::scalar(0.0))};
  GradCheckOptions opts;
  opts.eps = 1e-5;
  CHECK(gradient_check([&] { return sigmoid(sig[0]); }, sig, opts) < 1e-7);
  sig[0].zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sigmoid(sig[0]));
  }
  CHECK(sig[0].grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("non-finite outputs name the operation") {
  try {
    log(Tensor::vector({0.0}));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  std::vector<Tensor> in = {leaf(Tensor::scalar(0.0))};
  CHECK_THROWS_AS(gradient_check([&] { return reciprocal(in[0]); }, in), NumericalError);
}

TEST_CASE("every differentiable op passes the finite-difference check on 10 seeds") {
  using Fn = std::function<Tensor(std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    Fn fn;
    double lo = -1.0, hi = 1.0;
  };
  const std::vector<Case> cases = {
      {"add", {{3, 2}, {3, 2}}, [](auto& t) { return sum(add(t[0], t[1])); }},
      {"sub", {{3, 2}, {3, 2}}, [](auto& t) { return sum(mul(sub(t[0], t[1]), t[0])); }},
      {"mul", {{3, 2}, {3, 2}}, [](auto& t) { return sum(mul(t[0], t[1])); }},
      {"abs", {{6}}, [](auto& t) { return sum(abs(t[0])); }, 0.1, 1.0},
      {"relu", {{6}}, [](auto& t) { return sum(mul(relu(t[0]), t[0])); }, 0.1, 1.0},
      {"sigmoid", {{6}}, [](auto& t) { return sum(sigmoid(t[0])); }},
      {"negate", {{6}}, [](auto& t) { return sum(mul(negate(t[0]), t[0])); }},
      {"exp", {{6}}, [](auto& t) { return sum(exp(t[0])); }},
      {"log", {{6}}, [](auto& t) { return sum(log(t[0])); }, 0.5, 2.0},
      {"sqrt", {{6}}, [](auto& t) { return sum(sqrt(t[0])); }, 0.5, 2.0},
      {"reciprocal", {{6}}, [](auto& t) { return sum(reciprocal(t[0])); }, 0.5, 2.0},
      {"softplus", {{6}}, [](auto& t) { return sum(softplus(t[0])); }},
      {"mul_scalar", {{3, 2}, {1}}, [](auto& t) { return sum(mul(mul_scalar(t[0], t[1]), t[0])); }},
      {"mean", {{3, 2}}, [](auto& t) { return mul(mean(t[0]), mean(t[0])); }},
      {"row_sums", {{3, 2}}, [](auto& t) { auto r = row_sums(t[0]); return sum(mul(r, r)); }},
      {"col_sums", {{3, 2}}, [](auto& t) { auto r = col_sums(t[0]); return sum(mul(r, r)); }},
      {"scale_rows", {{3, 2}, {3}}, [](auto& t) { auto r = scale_rows(t[0], t[1]); return sum(mul(r, r)); }},
      {"scale_cols", {{3, 2}, {2}}, [](auto& t) { auto r = scale_cols(t[0], t[1]); return sum(mul(r, r)); }},
      {"add_bias", {{3, 2}, {2}}, [](auto& t) { auto r = add_bias(t[0], t[1]); return sum(mul(r, r)); }},
      {"matmul", {{3, 4}, {4, 2}}, [](auto& t) { auto r = matmul(t[0], t[1]); return sum(mul(r, r)); }},
      {"transpose", {{3, 2}, {2, 3}}, [](auto& t) { return sum(mul(transpose(t[0]), t[1])); }},
      {"reshape", {{3, 2}, {6}}, [](auto& t) { return sum(mul(reshape(t[0], {6}), t[1])); }},
      {"concat_rows", {{2, 2}, {1, 2}}, [](auto& t) {
         const Tensor parts[] = {t[0], t[1]};
         auto r = concat_rows(parts);
         return sum(mul(r, r));
       }},
      {"concat_cols", {{2, 2}, {2, 1}}, [](auto& t) { auto r = concat_cols(t[0], t[1]); return sum(mul(r, r)); }},
      {"slice_rows", {{4, 2}}, [](auto& t) { auto r = slice_rows(t[0], 1, 3); return sum(mul(r, r)); }},
      {"gather", {{6}}, [](auto& t) {
         const std::size_t idx[] = {0, 3, 3, 5};
         auto r = gather(t[0], idx);
         return sum(mul(r, r));
       }},
      {"scatter", {{3}}, [](auto& t) {
         const std::size_t idx[] = {4, 0, 2};
         auto r = scatter(t[0], idx, {2, 3});
         return sum(mul(r, r));
       }},
      {"softmax", {{3, 4}, {3, 4}}, [](auto& t) { return sum(mul(softmax(t[0], 1), t[1])); }},
      {"log_softmax", {{3, 4}, {3, 4}}, [](auto& t) { return sum(mul(log_softmax(t[0], 0), t[1])); }},
      {"l2_norm", {{3, 2}}, [](auto& t) { return l2_norm(t[0]); }},
      {"normalize_rows", {{3, 4}, {3, 4}}, [](auto& t) { return sum(mul(normalize_rows(t[0]), t[1])); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(c.name);
      CAPTURE(seed);
      std::mt19937_64 rng(seed);
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(leaf(random_tensor(s, rng, c.lo, c.hi)));
      const double err = gradient_check([&] { return c.fn(inputs); }, inputs);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("operations leave their inputs untouched") {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
  const std::vector<double> av(a.values().begin(), a.values().end());
  const std::vector<double> bv(b.values().begin(), b.values().end());
  softmax(a, 1);
  matmul(a, b);
  normalize_rows(a);
  relu(sub(a, b));
  CHECK(std::equal(av.begin(), av.end(), a.values().begin()));
  CHECK(std::equal(bv.begin(), bv.end(), b.values().begin()));
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    ParamStore store(42);
    register_linear(store, "fc", 5, 3);
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({4, 5}, rng);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = sum(sigmoid(linear(store, "fc", x)));
    tape.backward(y);
    std::vector<double> out = {y.item()};
    for (double g : store.get("fc.weight").grad()) out.push_back(g);
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("param store reproduces values for the same seed") {
  auto build = [](std::uint64_t seed) {
    ParamStore s(seed);
    s.add("a", {3, 2}, Init::normal(1.0));
    s.add("b", {4}, Init::uniform(0.5));
    s.add_buffer("c", {2}, 1.0);
    return s;
  };
  const auto s1 = build(7), s2 = build(7), s3 = build(8);
  for (const auto& name : s1.names()) {
    const auto v1 = s1.get(name).values(), v2 = s2.get(name).values();
    CHECK(std::equal(v1.begin(), v1.end(), v2.begin()));
  }
  const auto a1 = s1.get("a").values(), a3 = s3.get("a").values();
  CHECK_FALSE(std::equal(a1.begin(), a1.end(), a3.begin()));
  CHECK(s1.trainable("a"));
  CHECK_FALSE(s1.trainable("c"));
  CHECK(s1.parameter_count() == 10);

  ParamStore dup;
  dup.add("x", {1}, Init::zeros());
  CHECK_THROWS_AS(dup.add("x", {1}, Init::zeros()), UsageError);
  CHECK_THROWS_AS(dup.get("missing"), UsageError);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ParamStore store(3);
  store.add("layer.weight", {3, 4}, Init::normal(1.0));
  store.add_buffer("layer.running_var", {4}, 1.0);
  store.get("layer.weight").data()[0] = 1.0 / 3.0;
  const auto bytes = encode_checkpoint(snapshot(store));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HORD");
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);

  ParamStore other(99);
  other.add("layer.weight", {3, 4}, Init::zeros());
  other.add_buffer("layer.running_var", {4}, 0.0);
  restore(other, back);
  const auto w1 = store.get("layer.weight").values(), w2 = other.get("layer.weight").values();
  CHECK(std::equal(w1.begin(), w1.end(), w2.begin()));
}

TEST_CASE("checkpoint decoding rejects malformed input") {
  ParamStore store;
  store.add("w", {2}, Init::constant(1.0));
  auto bytes = encode_checkpoint(snapshot(store));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/file.ckpt"), FormatError);

  ParamStore wrong;
  wrong.add("w", {3}, Init::zeros());
  CHECK_THROWS_AS(restore(wrong, decode_checkpoint(bytes)), FormatError);
}
