#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hord/numerics/tensor.hpp"

// Differentiable operations on Tensor.
//
// Every operation checks its output for non-finite values and raises
// NumericalError naming itself. Broadcasting is limited to scalar-tensor
// (mul_scalar); row/column-wise scaling is spelled out as named operations.
namespace hord::num {

enum class ElementwiseKind { add, sub, mul, abs, relu, sigmoid, negate };

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b = Tensor());

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);  // subgradient 0 at exactly 0
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor negate(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
Tensor softplus(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s has one element

Tensor sum(const Tensor& a);  // -> [1]
Tensor mean(const Tensor& a);
Tensor row_sums(const Tensor& a);  // [n x c] -> [n x 1]
Tensor col_sums(const Tensor& a);  // [n x c] -> [1 x c]
Tensor scale_rows(const Tensor& a, const Tensor& v);  // a[i,:] * v[i]
Tensor scale_cols(const Tensor& a, const Tensor& v);  // a[:,j] * v[j]
Tensor add_bias(const Tensor& a, const Tensor& bias);  // a[i,:] + bias

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor stack(std::span<const Tensor> scalars);  // n one-element tensors -> [n]

// Flat-index gather/scatter.
Tensor gather(const Tensor& a, std::span<const std::size_t> indices);
Tensor scatter(const Tensor& values, std::span<const std::size_t> indices, Shape shape);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

// Euclidean norm of all entries; subgradient 0 at the origin.
Tensor l2_norm(const Tensor& a);
// Rows scaled to unit length; zero rows stay zero.
Tensor normalize_rows(const Tensor& a);

struct StandardizeOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

// Per-column standardization with learned affine (batch normalization).
// Train mode normalizes with the batch statistics and folds them into the
// running buffers; eval mode uses the running buffers.
Tensor standardize(const Tensor& x, const Tensor& scale, const Tensor& shift,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   StandardizeOptions options = {});

}  // namespace hord::num
