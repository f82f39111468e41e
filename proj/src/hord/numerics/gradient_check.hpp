#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "hord/numerics/tensor.hpp"

namespace hord::num {

struct GradCheckOptions {
  double eps = 1e-4;
  // When set, only this many (input, entry) coordinates are probed, drawn
  // uniformly with the given seed. Otherwise every entry of every input is.
  std::optional<std::size_t> sample_count;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. `fn` must rebuild the computation from `inputs` on every call;
// the inputs must be leaves with requires_grad set.
//
// Returns max over probed coordinates of
//   |analytic - central| / max(1, |central|).
// Non-finite intermediates surface as NumericalError naming the operation.
double gradient_check(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                      const GradCheckOptions& options = {});

}  // namespace hord::num
