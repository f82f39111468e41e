#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hord/numerics/tensor.hpp"

namespace hord::num {

struct Init {
  enum class Kind { constant, uniform, normal } kind = Kind::constant;
  double a = 0.0;  // constant value, uniform bound, or normal std

  static Init zeros() { return {Kind::constant, 0.0}; }
  static Init constant(double v) { return {Kind::constant, v}; }
  static Init uniform(double bound) { return {Kind::uniform, bound}; }
  static Init normal(double stddev) { return {Kind::normal, stddev}; }
};

// Named parameter and buffer storage.
//
// Entries are kept in name order so iteration, checkpoints and optimizer
// updates are deterministic. Values are drawn from a generator seeded once
// per store: registering the same entries in the same order with the same
// seed reproduces identical values.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0);

  // Trainable parameter; gradients are tracked.
  Tensor& add(const std::string& name, Shape shape, Init init);
  // Non-trainable state such as running statistics.
  Tensor& add_buffer(const std::string& name, Shape shape, double fill);

  bool contains(const std::string& name) const;
  bool trainable(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t parameter_count() const;  // trainable scalars

  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
  };
  Entry& insert(const std::string& name, Tensor tensor, bool trainable);

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, Entry> entries_;
};

}  // namespace hord::num
