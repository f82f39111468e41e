#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hord/numerics/tensor.hpp"
#include "hord/relation/relation.hpp"

namespace hord::pipeline {

struct GradCheckEntry {
  std::string name;
  double error = 0.0;  // max |analytic - fd| / max(1, |fd|)
};

// Central differences (eps 1e-4) for every differentiable operation, the
// module-level forward passes and the full training loss on random inputs
// drawn from `seed`.
std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed);

// Permutation p maximizing x^T M x for x = vec(P), P[i, p[i]] = 1, found by
// enumerating all K! candidates. Lowest permutation in lexicographic order
// wins ties.
std::vector<std::size_t> brute_force_matching(const num::Tensor& M, std::size_t K);

// Row-wise argmax of a K x K matrix, first maximum on ties.
std::vector<std::size_t> rowwise_argmax(const num::Tensor& U);

struct MatchingDemo {
  num::Tensor first, second;        // K x C node features
  std::vector<std::size_t> truth;   // second[truth[i]] is a noisy copy of first[i]
  num::Tensor U;
  std::vector<std::size_t> argmax;
  std::vector<std::size_t> oracle;
};

// A toy pair on the complete graph: the second graph is a permuted, slightly
// perturbed copy of the first. Matching uses the evaluation iteration counts.
MatchingDemo matching_demo(std::size_t K, std::uint64_t seed, double tau = 5.0);

std::string format_matching_demo(const MatchingDemo& demo);

}  // namespace hord::pipeline
