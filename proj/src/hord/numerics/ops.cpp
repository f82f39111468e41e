#include "hord/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hord/error.hpp"

namespace hord::num {

namespace {

using ImplPtr = std::shared_ptr<Tensor::Impl>;

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->tracked()) return tape;
  }
  return nullptr;
}

Tape* recording_tape(std::span<const Tensor> inputs) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  for (const auto& t : inputs) {
    if (t.tracked()) return tape;
  }
  return nullptr;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
  }
  return Tensor(std::move(shape), std::move(values));
}

void attach(Tape* tape, Tensor& out, Tape::Backward fn) {
  out.impl()->tracked = true;
  tape->record(out.impl(), std::move(fn));
}

std::vector<double>& grad_of(const ImplPtr& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
  return impl->grad;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

// y = f(x) elementwise, dy/dx = df(x, y).
template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tensor y = make_result(op, a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), df] {
      auto& ga = grad_of(ai);
      const auto& gy = yi->grad;
      for (std::size_t i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i] * df(ai->values[i], yi->values[i]);
      }
    });
  }
  return y;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseKind::add:
    case ElementwiseKind::sub:
    case ElementwiseKind::mul: {
      if (!b.defined()) throw UsageError("binary elementwise operation needs two operands");
      const char* op = kind == ElementwiseKind::add   ? "add"
                       : kind == ElementwiseKind::sub ? "sub"
                                                      : "mul";
      require_same_shape(op, a, b);
      auto x = a.values();
      auto z = b.values();
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = kind == ElementwiseKind::add   ? x[i] + z[i]
                 : kind == ElementwiseKind::sub ? x[i] - z[i]
                                                : x[i] * z[i];
      }
      Tensor y = make_result(op, a.shape(), std::move(out));
      if (Tape* tape = recording_tape({&a, &b})) {
        attach(tape, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), kind] {
          const auto& gy = yi->grad;
          if (ai->tracked) {
            auto& ga = grad_of(ai);
            for (std::size_t i = 0; i < gy.size(); ++i) {
              ga[i] += kind == ElementwiseKind::mul ? gy[i] * bi->values[i] : gy[i];
            }
          }
          if (bi->tracked) {
            auto& gb = grad_of(bi);
            for (std::size_t i = 0; i < gy.size(); ++i) {
              gb[i] += kind == ElementwiseKind::add   ? gy[i]
                       : kind == ElementwiseKind::sub ? -gy[i]
                                                      : gy[i] * ai->values[i];
            }
          }
        });
      }
      return y;
    }
    case ElementwiseKind::abs:
      return unary(
          "abs", a, [](double x) { return std::abs(x); },
          [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    case ElementwiseKind::relu:
      return unary(
          "relu", a, [](double x) { return x > 0 ? x : 0.0; },
          [](double x, double) { return x > 0 ? 1.0 : 0.0; });
    case ElementwiseKind::sigmoid:
      return unary("sigmoid", a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
    case ElementwiseKind::negate:
      return unary(
          "negate", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
  }
  throw UsageError("unknown elementwise kind");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseKind::mul, a, b); }
Tensor abs(const Tensor& a) { return elementwise(ElementwiseKind::abs, a); }
Tensor relu(const Tensor& a) { return elementwise(ElementwiseKind::relu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(ElementwiseKind::sigmoid, a); }
Tensor negate(const Tensor& a) { return elementwise(ElementwiseKind::negate, a); }

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor reciprocal(const Tensor& a) {
  return unary(
      "reciprocal", a, [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      "clamp_min", a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return sigmoid_value(x); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw ShapeError("mul_scalar: expected a one-element scalar, got " + to_string(s.shape()));
  }
  const double k = s.item();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * k;
  Tensor y = make_result("mul_scalar", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a, &s})) {
    attach(tape, y, [ai = a.impl(), si = s.impl(), yi = y.impl()] {
      const auto& gy = yi->grad;
      const double kk = si->values[0];
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * kk;
      }
      if (si->tracked) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * ai->values[i];
        grad_of(si)[0] += acc;
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor y = make_result("sum", {1}, {acc});
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl()] {
      auto& ga = grad_of(ai);
      const double g = yi->grad[0];
      for (auto& v : ga) v += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor row_sums(const Tensor& a) {
  require_matrix("row_sums", a);
  const std::size_t n = a.rows(), c = a.cols();
  auto x = a.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x[i * c + j];
  Tensor y = make_result("row_sums", {n, 1}, std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), n, c] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yi->grad[i];
    });
  }
  return y;
}

Tensor col_sums(const Tensor& a) {
  require_matrix("col_sums", a);
  const std::size_t n = a.rows(), c = a.cols();
  auto x = a.values();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  Tensor y = make_result("col_sums", {1, c}, std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), n, c] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yi->grad[j];
    });
  }
  return y;
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
  require_matrix("scale_rows", a);
  const std::size_t n = a.rows(), c = a.cols();
  if (v.size() != n) {
    throw ShapeError("scale_rows: " + to_string(a.shape()) + " with factors " +
                     to_string(v.shape()));
  }
  auto x = a.values();
  auto s = v.values();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * s[i];
  Tensor y = make_result("scale_rows", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a, &v})) {
    attach(tape, y, [ai = a.impl(), vi = v.impl(), yi = y.impl(), n, c] {
      const auto& gy = yi->grad;
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[i * c + j] * vi->values[i];
      }
      if (vi->tracked) {
        auto& gv = grad_of(vi);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gv[i] += gy[i * c + j] * ai->values[i * c + j];
      }
    });
  }
  return y;
}

Tensor scale_cols(const Tensor& a, const Tensor& v) {
  require_matrix("scale_cols", a);
  const std::size_t n = a.rows(), c = a.cols();
  if (v.size() != c) {
    throw ShapeError("scale_cols: " + to_string(a.shape()) + " with factors " +
                     to_string(v.shape()));
  }
  auto x = a.values();
  auto s = v.values();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * s[j];
  Tensor y = make_result("scale_cols", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a, &v})) {
    attach(tape, y, [ai = a.impl(), vi = v.impl(), yi = y.impl(), n, c] {
      const auto& gy = yi->grad;
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[i * c + j] * vi->values[j];
      }
      if (vi->tracked) {
        auto& gv = grad_of(vi);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gv[j] += gy[i * c + j] * ai->values[i * c + j];
      }
    });
  }
  return y;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_matrix("add_bias", a);
  const std::size_t n = a.rows(), c = a.cols();
  if (bias.size() != c) {
    throw ShapeError("add_bias: " + to_string(a.shape()) + " with bias " +
                     to_string(bias.shape()));
  }
  auto x = a.values();
  auto b = bias.values();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + b[j];
  Tensor y = make_result("add_bias", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a, &bias})) {
    attach(tape, y, [ai = a.impl(), bi = bias.impl(), yi = y.impl(), n, c] {
      const auto& gy = yi->grad;
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        for (std::size_t i = 0; i < n * c; ++i) ga[i] += gy[i];
      }
      if (bi->tracked) {
        auto& gb = grad_of(bi);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
      }
    });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto x = a.values();
  auto z = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* zr = z.data() + p * n;
      double* o = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += xv * zr[j];
    }
  }
  Tensor y = make_result("matmul", {m, n}, std::move(out));
  if (Tape* tape = recording_tape({&a, &b})) {
    attach(tape, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), m, k, n] {
      const auto& gy = yi->grad;
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        const auto& bv = bi->values;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (bi->tracked) {
        auto& gb = grad_of(bi);
        const auto& av = ai->values;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double xv = av[i * k + p];
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * gy[i * n + j];
          }
        }
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t n = a.rows(), c = a.cols();
  auto x = a.values();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * n + i] = x[i * c + j];
  Tensor y = make_result("transpose", {c, n}, std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), n, c] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yi->grad[j * n + i];
    });
  }
  return y;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  Tensor y = make_result("reshape", std::move(shape), std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl()] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += yi->grad[i];
    });
  }
  return y;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows: nothing to concatenate");
  const std::size_t c = parts.front().cols();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw ShapeError("concat_rows: column mismatch " + to_string(parts.front().shape()) +
                       " vs " + to_string(p.shape()));
    }
    offsets.push_back(n * c);
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y = make_result("concat_rows", {n, c}, std::move(out));
  if (Tape* tape = recording_tape(parts)) {
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    attach(tape, y, [impls = std::move(impls), offsets = std::move(offsets), yi = y.impl()] {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (!impls[k]->tracked) continue;
        auto& g = grad_of(impls[k]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[offsets[k] + i];
      }
    });
  }
  return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix("concat_cols", a);
  require_matrix("concat_cols", b);
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = a.values()[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = b.values()[i * cb + j];
  }
  Tensor y = make_result("concat_cols", {n, c}, std::move(out));
  if (Tape* tape = recording_tape({&a, &b})) {
    attach(tape, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), n, ca, cb, c] {
      if (ai->tracked) {
        auto& ga = grad_of(ai);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += yi->grad[i * c + j];
      }
      if (bi->tracked) {
        auto& gb = grad_of(bi);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += yi->grad[i * c + ca + j];
      }
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix("slice_rows", a);
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") of " + to_string(a.shape()));
  }
  const std::size_t c = a.cols();
  std::vector<double> out(a.values().begin() + begin * c, a.values().begin() + end * c);
  Tensor y = make_result("slice_rows", {end - begin, c}, std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), offset = begin * c] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < yi->grad.size(); ++i) ga[offset + i] += yi->grad[i];
    });
  }
  return y;
}

Tensor stack(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw UsageError("stack: nothing to stack");
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.size() != 1) throw ShapeError("stack: expected scalars, got " + to_string(s.shape()));
    out.push_back(s.values()[0]);
  }
  Tensor y = make_result("stack", {scalars.size()}, std::move(out));
  if (Tape* tape = recording_tape(scalars)) {
    std::vector<ImplPtr> impls;
    for (const auto& s : scalars) impls.push_back(s.impl());
    attach(tape, y, [impls = std::move(impls), yi = y.impl()] {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (impls[k]->tracked) grad_of(impls[k])[0] += yi->grad[k];
      }
    });
  }
  return y;
}

Tensor gather(const Tensor& a, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("gather: no indices");
  std::vector<double> out(indices.size());
  const auto x = a.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) throw ShapeError("gather: index out of range");
    out[i] = x[indices[i]];
  }
  Tensor y = make_result("gather", {indices.size()}, std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    attach(tape, y, [ai = a.impl(), yi = y.impl(), idx = std::move(idx)] {
      auto& ga = grad_of(ai);
      for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += yi->grad[i];
    });
  }
  return y;
}

Tensor scatter(const Tensor& values, std::span<const std::size_t> indices, Shape shape) {
  if (values.size() != indices.size()) {
    throw ShapeError("scatter: " + std::to_string(values.size()) + " values for " +
                     std::to_string(indices.size()) + " indices");
  }
  const std::size_t total = element_count(shape);
  std::vector<double> out(total, 0.0);
  const auto x = values.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= total) throw ShapeError("scatter: index out of range");
    out[indices[i]] += x[i];
  }
  Tensor y = make_result("scatter", std::move(shape), std::move(out));
  if (Tape* tape = recording_tape({&values})) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    attach(tape, y, [vi = values.impl(), yi = y.impl(), idx = std::move(idx)] {
      auto& gv = grad_of(vi);
      for (std::size_t i = 0; i < idx.size(); ++i) gv[i] += yi->grad[idx[i]];
    });
  }
  return y;
}

namespace {

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout layout_for(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     to_string(a.shape()));
  }
  AxisLayout l;
  for (std::size_t d = 0; d < axis; ++d) l.outer *= a.shape()[d];
  l.extent = a.shape()[axis];
  for (std::size_t d = axis + 1; d < a.rank(); ++d) l.inner *= a.shape()[d];
  return l;
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto l = layout_for(a, axis, "softmax");
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < l.extent; ++e) mx = std::max(mx, x[base + e * l.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) {
        const double v = std::exp(x[base + e * l.inner] - mx);
        out[base + e * l.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < l.extent; ++e) out[base + e * l.inner] /= total;
    }
  }
  Tensor y = make_result("softmax", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), l] {
      auto& ga = grad_of(ai);
      const auto& p = yi->values;
      const auto& gy = yi->grad;
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
          const std::size_t base = o * l.extent * l.inner + in;
          double dot = 0.0;
          for (std::size_t e = 0; e < l.extent; ++e) {
            const std::size_t i = base + e * l.inner;
            dot += gy[i] * p[i];
          }
          for (std::size_t e = 0; e < l.extent; ++e) {
            const std::size_t i = base + e * l.inner;
            ga[i] += p[i] * (gy[i] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const auto l = layout_for(a, axis, "log_softmax");
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.extent * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < l.extent; ++e) mx = std::max(mx, x[base + e * l.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) total += std::exp(x[base + e * l.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < l.extent; ++e) {
        out[base + e * l.inner] = x[base + e * l.inner] - lse;
      }
    }
  }
  Tensor y = make_result("log_softmax", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), l] {
      auto& ga = grad_of(ai);
      const auto& lp = yi->values;
      const auto& gy = yi->grad;
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t in = 0; in < l.inner; ++in) {
          const std::size_t base = o * l.extent * l.inner + in;
          double total = 0.0;
          for (std::size_t e = 0; e < l.extent; ++e) total += gy[base + e * l.inner];
          for (std::size_t e = 0; e < l.extent; ++e) {
            const std::size_t i = base + e * l.inner;
            ga[i] += gy[i] - std::exp(lp[i]) * total;
          }
        }
      }
    });
  }
  return y;
}

Tensor l2_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  Tensor y = make_result("l2_norm", {1}, {std::sqrt(acc)});
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl()] {
      const double norm = yi->values[0];
      if (norm == 0.0) return;
      auto& ga = grad_of(ai);
      const double g = yi->grad[0] / norm;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * ai->values[i];
    });
  }
  return y;
}

Tensor normalize_rows(const Tensor& a) {
  require_matrix("normalize_rows", a);
  const std::size_t n = a.rows(), c = a.cols();
  auto x = a.values();
  std::vector<double> norms(n, 0.0);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += x[i * c + j] * x[i * c + j];
    norms[i] = std::sqrt(acc);
    if (norms[i] > 0.0) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / norms[i];
    }
  }
  Tensor y = make_result("normalize_rows", a.shape(), std::move(out));
  if (Tape* tape = recording_tape({&a})) {
    attach(tape, y, [ai = a.impl(), yi = y.impl(), norms = std::move(norms), n, c] {
      auto& ga = grad_of(ai);
      const auto& u = yi->values;
      const auto& gy = yi->grad;
      for (std::size_t i = 0; i < n; ++i) {
        if (norms[i] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[i * c + j] * u[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          ga[i * c + j] += (gy[i * c + j] - u[i * c + j] * dot) / norms[i];
        }
      }
    });
  }
  return y;
}

Tensor standardize(const Tensor& x, const Tensor& scale_param, const Tensor& shift,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   StandardizeOptions options) {
  require_matrix("standardize", x);
  const std::size_t n = x.rows(), c = x.cols();
  if (scale_param.size() != c || shift.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("standardize: parameters do not match " + to_string(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> mu(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mu[j] += xv[i * c + j];
    for (auto& m : mu) m /= static_cast<double>(n);
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xv[i * c + j] - mu[j];
        var[j] += d * d;
      }
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(n);
      inv_std[j] = 1.0 / std::sqrt(var[j] + options.epsilon);
      rm[j] = (1.0 - options.momentum) * rm[j] + options.momentum * mu[j];
      rv[j] = (1.0 - options.momentum) * rv[j] + options.momentum * var[j];
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = running_mean.values()[j];
      inv_std[j] = 1.0 / std::sqrt(running_var.values()[j] + options.epsilon);
    }
  }
  std::vector<double> xhat(n * c), out(n * c);
  auto gamma = scale_param.values();
  auto beta = shift.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu[j]) * inv_std[j];
      out[i * c + j] = gamma[j] * xhat[i * c + j] + beta[j];
    }
  Tensor y = make_result("standardize", x.shape(), std::move(out));
  if (Tape* tape = recording_tape({&x, &scale_param, &shift})) {
    attach(tape, y,
           [xi = x.impl(), gi = scale_param.impl(), bi = shift.impl(), yi = y.impl(),
            xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, mode] {
             const auto& gy = yi->grad;
             if (gi->tracked) {
               auto& gg = grad_of(gi);
               for (std::size_t i = 0; i < n; ++i)
                 for (std::size_t j = 0; j < c; ++j) gg[j] += gy[i * c + j] * xhat[i * c + j];
             }
             if (bi->tracked) {
               auto& gb = grad_of(bi);
               for (std::size_t i = 0; i < n; ++i)
                 for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
             }
             if (!xi->tracked) return;
             auto& gx = grad_of(xi);
             const auto& gamma_v = gi->values;
             if (mode == Mode::eval) {
               for (std::size_t i = 0; i < n; ++i)
                 for (std::size_t j = 0; j < c; ++j)
                   gx[i * c + j] += gy[i * c + j] * gamma_v[j] * inv_std[j];
               return;
             }
             const double nn = static_cast<double>(n);
             for (std::size_t j = 0; j < c; ++j) {
               double sum_g = 0.0, sum_gx = 0.0;
               for (std::size_t i = 0; i < n; ++i) {
                 const double g = gy[i * c + j] * gamma_v[j];
                 sum_g += g;
                 sum_gx += g * xhat[i * c + j];
               }
               for (std::size_t i = 0; i < n; ++i) {
                 const double g = gy[i * c + j] * gamma_v[j];
                 gx[i * c + j] += inv_std[j] / nn * (nn * g - sum_g - xhat[i * c + j] * sum_gx);
               }
             }
           });
  }
  return y;
}

}  // namespace hord::num
