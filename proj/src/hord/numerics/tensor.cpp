#include "hord/numerics/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hord/error.hpp"

namespace hord::num {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  impl_->values.assign(element_count(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (values.size() != element_count(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + to_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + to_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->values;
}

std::span<double> Tensor::data() {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->values;
}

double Tensor::at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw UsageError("use of an undefined tensor");
  impl_->requires_grad = on;
  impl_->tracked = on;
  return *this;
}

bool Tensor::tracked() const { return impl_ && impl_->tracked; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->grad;
}

std::span<double> Tensor::grad_data() {
  if (!impl_) throw UsageError("use of an undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = shape();
  out.impl_->values = impl_->values;
  return out;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

NoRecord::NoRecord() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoRecord::~NoRecord() { g_active_tape = previous_; }

void Tape::record(std::shared_ptr<Tensor::Impl> output, Backward fn) {
  entries_.push_back({std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& scalar_output) {
  if (scalar_output.size() != 1) {
    throw ShapeError("backward() needs a scalar output, got " +
                     to_string(scalar_output.shape()));
  }
  if (!scalar_output.tracked()) {
    throw UsageError("backward() on an output with no recorded dependence on parameters");
  }
  auto& impl = *scalar_output.impl();
  if (impl.grad.empty()) impl.grad.assign(1, 0.0);
  impl.grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->grad.empty()) it->fn();
  }
  clear();
}

void Tape::clear() { entries_.clear(); }

}  // namespace hord::num
