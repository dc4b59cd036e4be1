#pragma once

#include <concepts>
#include <span>
#include <string>
#include <type_traits>

#include "cfr/matrix.hpp"
#include "cfr/text.hpp"

namespace cfr {

// Single-layer unidirectional GRU:
//   z_t = σ(x_t Wz + h_{t-1} Uz + bz)
//   r_t = σ(x_t Wr + h_{t-1} Ur + br)
//   n_t = tanh(x_t Wn + (r_t ⊙ h_{t-1}) Un + bn)
//   h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ n_t,   h_0 = 0
struct GruParams {
  Matrix Wz, Uz, bz;
  Matrix Wr, Ur, br;
  Matrix Wn, Un, bn;

  static GruParams zeros(std::size_t d_in, std::size_t d_hidden);
  std::size_t input_dim() const { return Wz.rows(); }
  std::size_t hidden_dim() const { return Wz.cols(); }
  void validate() const;

  bool operator==(const GruParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, GruParams>
void for_each_tensor(P& p, F&& f, const std::string& prefix = "gru.") {
  f(prefix + "Wz", p.Wz);
  f(prefix + "Uz", p.Uz);
  f(prefix + "bz", p.bz);
  f(prefix + "Wr", p.Wr);
  f(prefix + "Ur", p.Ur);
  f(prefix + "br", p.br);
  f(prefix + "Wn", p.Wn);
  f(prefix + "Un", p.Un);
  f(prefix + "bn", p.bn);
}

// Intermediates kept for the backward pass.
struct GruTrace {
  Matrix inputs;  // T x d_in
  Matrix hidden;  // T x d_h, row t = h_{t+1}
  Matrix update;  // z
  Matrix reset;   // r
  Matrix cand;    // n
};

GruTrace gru_forward(const Matrix& inputs, const GruParams& params);

// Accumulates parameter gradients into `grads` given dL/dH for every output
// state (T x d_h). Input embeddings are frozen so no input gradient is formed.
void gru_backward(const GruTrace& trace, const GruParams& params, const Matrix& d_hidden,
                  GruParams& grads);

// Embeds `tokens` (a single <unk> when empty) and returns the stacked hidden
// states, one row per token.
Matrix gru_encode(std::span<const std::string> tokens, const WordVectors& words,
                  const GruParams& params);

}  // namespace cfr
