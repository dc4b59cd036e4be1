#pragma once

// Bilinear attention fusion of a question-side matrix Xq (n_q x d_q) and an
// image-side matrix Xi (n_i x d_i):
//
//   A   = softmax( (Xq M'_q)(Xi M'_i)ᵀ )                     n_q x n_i
//   j_k = Σ_a Σ_b A[a][b] (Xq M_q)[a][k] (Xi M_i)[b][k]       k = 1..d
//
// The same block is instantiated twice: on raw features (coarse) and on
// filtered information (fine).

#include <concepts>
#include <string>
#include <type_traits>

#include "cfr/matrix.hpp"

namespace cfr {

enum class SoftmaxAxis { Flat, Rows };

const char* axis_name(SoftmaxAxis axis);
SoftmaxAxis axis_from_name(const std::string& name);

struct BilinearParams {
  Matrix Mq;      // d_q x d
  Matrix Mi;      // d_i x d
  Matrix Mq_att;  // d_q x d
  Matrix Mi_att;  // d_i x d

  static BilinearParams zeros(std::size_t d_q, std::size_t d_i, std::size_t d);
  std::size_t joint_dim() const { return Mq.cols(); }
  void validate() const;

  bool operator==(const BilinearParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, BilinearParams>
void for_each_tensor(P& p, F&& f, const std::string& prefix = "fusion.") {
  f(prefix + "Mq", p.Mq);
  f(prefix + "Mi", p.Mi);
  f(prefix + "Mq_att", p.Mq_att);
  f(prefix + "Mi_att", p.Mi_att);
}

Matrix attention_map(const Matrix& xq, const Matrix& xi, const BilinearParams& params,
                     SoftmaxAxis axis = SoftmaxAxis::Flat);

// Accepts any n_q x n_i map so callers can inject attention directly.
Vector joint_representation(const Matrix& xq, const Matrix& xi, const Matrix& attention,
                            const BilinearParams& params);

struct FusionOutput {
  Vector joint;
  Matrix attention;
};

FusionOutput fuse(const Matrix& xq, const Matrix& xi, const BilinearParams& params,
                  SoftmaxAxis axis = SoftmaxAxis::Flat);

struct FusionTrace {
  Matrix xq, xi;
  Matrix att_q, att_i;  // Xq M'_q, Xi M'_i
  Matrix val_q, val_i;  // Xq M_q,  Xi M_i
  Matrix attended;      // A (Xi M_i)
  SoftmaxAxis axis = SoftmaxAxis::Flat;
  FusionOutput out;
};

FusionTrace fusion_forward(const Matrix& xq, const Matrix& xi, const BilinearParams& params,
                           SoftmaxAxis axis = SoftmaxAxis::Flat);

struct FusionInputGrads {
  Matrix dxq;
  Matrix dxi;
};

FusionInputGrads fusion_backward(const FusionTrace& trace, const BilinearParams& params,
                                 std::span<const double> d_joint, BilinearParams& grads);

}  // namespace cfr
