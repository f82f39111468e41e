#include "hord/numerics/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "hord/error.hpp"

namespace hord::num {

double gradient_check(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                      const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw UsageError("gradient_check: eps must be positive");
  for (auto& t : inputs) {
    if (!t.requires_grad()) throw UsageError("gradient_check: inputs must require gradients");
    t.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = fn();
    if (y.size() != 1) throw ShapeError("gradient_check: function must return a scalar");
    tape.backward(y);
  }
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) coords.emplace_back(k, i);
  if (options.sample_count && *options.sample_count < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(*options.sample_count);
  }

  NoRecord no_record;
  double worst = 0.0;
  for (auto [k, i] : coords) {
    auto values = inputs[k].data();
    const double original = values[i];
    values[i] = original + options.eps;
    const double up = fn().item();
    values[i] = original - options.eps;
    const double down = fn().item();
    values[i] = original;
    const double central = (up - down) / (2.0 * options.eps);
    const double err = std::abs(analytic[k][i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hord::num
