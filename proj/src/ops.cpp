#include "cfr/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cfr/errors.hpp"

namespace cfr {

Vector softmax_vec(std::span<const double> x) {
  if (x.empty()) throw ArgumentError("softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  Vector y(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (double& v : y) v /= z;
  return y;
}

Vector softmax_vec_backward(std::span<const double> y, std::span<const double> dy) {
  if (y.size() != dy.size()) throw ShapeError("softmax backward: length mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
  Vector dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - dot);
  return dx;
}

Matrix softmax_flat(const Matrix& x) {
  if (x.empty()) throw ArgumentError("softmax of an empty matrix");
  return Matrix(x.rows(), x.cols(), softmax_vec(x.data()));
}

Matrix softmax_flat_backward(const Matrix& y, const Matrix& dy) {
  if (y.shape() != dy.shape()) throw ShapeError("softmax_flat backward: shape mismatch");
  return Matrix(y.rows(), y.cols(), softmax_vec_backward(y.data(), dy.data()));
}

Matrix softmax_rows(const Matrix& x) {
  if (x.empty()) throw ArgumentError("softmax of an empty matrix");
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Vector r = softmax_vec(x.row(i));
    std::copy(r.begin(), r.end(), y.row(i).begin());
  }
  return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  if (y.shape() != dy.shape()) throw ShapeError("softmax_rows backward: shape mismatch");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const Vector r = softmax_vec_backward(y.row(i), dy.row(i));
    std::copy(r.begin(), r.end(), dx.row(i).begin());
  }
  return dx;
}

double log_softmax_at(std::span<const double> x, std::size_t index) {
  if (x.empty()) throw ArgumentError("log-softmax of an empty vector");
  if (index >= x.size()) throw ArgumentError("log-softmax index out of range");
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  return x[index] - mx - std::log(z);
}

Matrix linear(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("linear: input " + x.shape().str() + " does not match weight " +
                     weight.shape().str());
  }
  Matrix y = matmul(x, weight);
  if (!bias.empty()) {
    if (bias.rows() != 1 || bias.cols() != weight.cols()) {
      throw ShapeError("linear: bias " + bias.shape().str() + " does not match weight " +
                       weight.shape().str());
    }
    auto b = bias.row(0);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
    }
  }
  return y;
}

LinearGrads linear_backward(const Matrix& x, const Matrix& weight, bool has_bias,
                            const Matrix& dy) {
  if (dy.rows() != x.rows() || dy.cols() != weight.cols()) {
    throw ShapeError("linear backward: upstream gradient " + dy.shape().str() +
                     " does not match output " + Shape{x.rows(), weight.cols()}.str());
  }
  LinearGrads g;
  g.dx = matmul_nt(dy, weight);
  g.dweight = matmul_tn(x, dy);
  if (has_bias) g.dbias = Matrix::row_vector(column_sums(dy));
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace cfr
