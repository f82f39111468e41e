#include "hord/numerics/layers.hpp"

#include <cmath>

namespace hord::num {

void register_linear(ParamStore& store, const std::string& prefix, std::size_t in,
                     std::size_t out, bool zero_init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".weight", {in, out}, zero_init ? Init::zeros() : Init::uniform(bound));
  store.add(prefix + ".bias", {out}, Init::zeros());
}

Tensor linear(const ParamStore& store, const std::string& prefix, const Tensor& x) {
  return add_bias(matmul(x, store.get(prefix + ".weight")), store.get(prefix + ".bias"));
}

void register_standardize(ParamStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".scale", {width}, Init::constant(1.0));
  store.add(prefix + ".shift", {width}, Init::zeros());
  store.add_buffer(prefix + ".running_mean", {width}, 0.0);
  store.add_buffer(prefix + ".running_var", {width}, 1.0);
}

Tensor standardize(const ParamStore& store, const std::string& prefix, const Tensor& x,
                   Mode mode) {
  Tensor running_mean = store.get(prefix + ".running_mean");
  Tensor running_var = store.get(prefix + ".running_var");
  return standardize(x, store.get(prefix + ".scale"), store.get(prefix + ".shift"),
                     running_mean, running_var, mode);
}

}  // namespace hord::num
