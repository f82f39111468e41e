#pragma once

#include <string>

#include "hord/numerics/ops.hpp"
#include "hord/numerics/param_store.hpp"

namespace hord::num {

// Fully-connected layer `prefix.weight` [in x out], `prefix.bias` [out].
void register_linear(ParamStore& store, const std::string& prefix, std::size_t in,
                     std::size_t out, bool zero_init = false);
Tensor linear(const ParamStore& store, const std::string& prefix, const Tensor& x);

// Batch normalization block `prefix.{scale,shift,running_mean,running_var}`.
void register_standardize(ParamStore& store, const std::string& prefix, std::size_t width);
Tensor standardize(const ParamStore& store, const std::string& prefix, const Tensor& x,
                   Mode mode);

}  // namespace hord::num
