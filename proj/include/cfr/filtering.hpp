#pragma once

// Predicate-guided information filtering.
//
//   f' = τ_f(f),  p' = τ_p(p)
//   Ψ̂  = softmax_j( Σ_i ⟨f'_j, p'_i⟩ )             (one weight per feature row)
//   Ψ  = (Ψ̂ 𝟙ᵀ) ⊙ f' + f'                           (row j scaled by 1 + Ψ̂_j)
//
// With a learnable channel scale c the 𝟙 above is replaced by c.

#include <concepts>
#include <string>
#include <type_traits>

#include "cfr/matrix.hpp"

namespace cfr {

struct FilterParams {
  Matrix tau_f_w;        // d_f x d_psi
  Matrix tau_f_b;        // 1 x d_psi, empty when projections are bias-free
  Matrix tau_p_w;        // d_p x d_psi
  Matrix tau_p_b;        // 1 x d_psi or empty
  Matrix channel_scale;  // 1 x d_psi when learnable, otherwise empty (constant ones)

  static FilterParams zeros(std::size_t d_f, std::size_t d_p, std::size_t d_psi, bool bias,
                            bool learnable_channel_scale);
  std::size_t out_dim() const { return tau_f_w.cols(); }
  void validate() const;

  bool operator==(const FilterParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, FilterParams>
void for_each_tensor(P& p, F&& f, const std::string& prefix = "filter.") {
  f(prefix + "tau_f.w", p.tau_f_w);
  if (!p.tau_f_b.empty()) f(prefix + "tau_f.b", p.tau_f_b);
  f(prefix + "tau_p.w", p.tau_p_w);
  if (!p.tau_p_b.empty()) f(prefix + "tau_p.b", p.tau_p_b);
  if (!p.channel_scale.empty()) f(prefix + "channel_scale", p.channel_scale);
}

struct FilterOutput {
  Vector psi_hat;  // n_f, sums to 1
  Matrix psi;      // n_f x d_psi
};

Vector weighting_map(const Matrix& f, const Matrix& p, const FilterParams& params);

// Takes Ψ̂ as given, so callers may inject arbitrary weights.
Matrix filter_info(const Matrix& f, std::span<const double> psi_hat, const FilterParams& params);

FilterOutput apply_filter(const Matrix& f, const Matrix& p, const FilterParams& params);

struct FilterTrace {
  Matrix f;
  Matrix p;
  Matrix f_proj;   // τ_f(f)
  Vector p_sum;    // Σ_i τ_p(p)_i
  FilterOutput out;
};

FilterTrace filter_forward(const Matrix& f, const Matrix& p, const FilterParams& params);

// Accumulates parameter gradients and returns dL/df for upstream layers.
Matrix filter_backward(const FilterTrace& trace, const FilterParams& params, const Matrix& d_psi,
                       FilterParams& grads);

}  // namespace cfr
