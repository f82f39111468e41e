#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hord::num {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major array of doubles with an optional gradient slot.
//
// A Tensor is a handle: copies share storage, the same way parameters are
// shared between the ParamStore and the computations that read them. Forward
// operations never write into their inputs; only the optimizer, the gradient
// checker and data loaders touch values in place through data().
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    bool tracked = false;  // leaf with requires_grad, or produced from one
  };

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const { return values().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> data();
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool tracked() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_data();  // allocates a zero gradient if absent
  void zero_grad();

  // Fresh storage with the same values and no gradient history.
  Tensor detach() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<Impl> impl_;
};

enum class Mode { train, eval };

// Records the backward closures of one forward pass.
//
// A tape is activated for the current thread with Tape::Scope; operations
// executed while no tape is active (or on untracked inputs) are not recorded.
// backward() replays the closures in reverse and clears the tape.
class Tape {
 public:
  using Backward = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::shared_ptr<Tensor::Impl> output, Backward fn);
  void backward(const Tensor& scalar_output);
  void clear();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<Tensor::Impl> output;
    Backward fn;
  };
  std::vector<Entry> entries_;
};

// Runs fn with no tape active on this thread.
class NoRecord {
 public:
  NoRecord();
  ~NoRecord();
  NoRecord(const NoRecord&) = delete;
  NoRecord& operator=(const NoRecord&) = delete;

 private:
  Tape* previous_;
};

}  // namespace hord::num
