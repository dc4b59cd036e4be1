#pragma once

// Differentiable building blocks. Each forward has a matching *_backward that
// maps the gradient of the output onto gradients of the inputs.

#include <span>

#include "cfr/matrix.hpp"

namespace cfr {

// Numerically stable softmax (max-subtracted). Throws ArgumentError on empty input.
Vector softmax_vec(std::span<const double> x);
// Given y = softmax(x) and dL/dy, returns dL/dx.
Vector softmax_vec_backward(std::span<const double> y, std::span<const double> dy);

// Softmax over every entry of the matrix jointly.
Matrix softmax_flat(const Matrix& x);
Matrix softmax_flat_backward(const Matrix& y, const Matrix& dy);

// Softmax applied to each row independently.
Matrix softmax_rows(const Matrix& x);
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// log(softmax(x))[index], computed without forming the softmax.
double log_softmax_at(std::span<const double> x, std::size_t index);

// y = x * weight (+ bias per row). `bias` is a 1 x d_out matrix or empty.
Matrix linear(const Matrix& x, const Matrix& weight, const Matrix& bias = {});

struct LinearGrads {
  Matrix dx;
  Matrix dweight;
  Matrix dbias;  // empty when the layer has no bias
};
LinearGrads linear_backward(const Matrix& x, const Matrix& weight, bool has_bias,
                            const Matrix& dy);

double sigmoid(double x);

}  // namespace cfr
