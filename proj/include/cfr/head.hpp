#pragma once

// Adaptive coarse/fine answer head:
//   (W_α, W'_α) = softmax(W_raw_α, W'_raw_α)          per answer α
//   ρ = softmax( W ⊙ τ(j_cg) + W' ⊙ τ'(j_fg) )

#include <concepts>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cfr/matrix.hpp"

namespace cfr {

// Which logit paths feed the answer distribution. CoarseOnly pins (W, W') to
// (1, 0) and FineOnly to (0, 1); Full uses the learned weights.
enum class HeadMode { Full, CoarseOnly, FineOnly };

const char* mode_name(HeadMode mode);
HeadMode mode_from_name(const std::string& name);

struct HeadParams {
  Matrix W_raw;   // 1 x |A|
  Matrix Wp_raw;  // 1 x |A|
  Matrix tau_w;   // d_cg x |A|
  Matrix tau_b;   // 1 x |A|
  Matrix taup_w;  // d_fg x |A|
  Matrix taup_b;  // 1 x |A|

  static HeadParams zeros(std::size_t d_cg, std::size_t d_fg, std::size_t n_answers);
  std::size_t n_answers() const { return W_raw.cols(); }
  void validate() const;

  bool operator==(const HeadParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, HeadParams>
void for_each_tensor(P& p, F&& f, const std::string& prefix = "head.") {
  f(prefix + "W_raw", p.W_raw);
  f(prefix + "Wp_raw", p.Wp_raw);
  f(prefix + "tau.w", p.tau_w);
  f(prefix + "tau.b", p.tau_b);
  f(prefix + "taup.w", p.taup_w);
  f(prefix + "taup.b", p.taup_b);
}

struct AdaptiveWeights {
  Vector coarse;  // W
  Vector fine;    // W'
};

AdaptiveWeights normalize_adaptive(std::span<const double> w_raw, std::span<const double> wp_raw);
AdaptiveWeights effective_weights(const HeadParams& params, HeadMode mode);

Vector answer_distribution(std::span<const double> j_cg, std::span<const double> j_fg,
                           const HeadParams& params, HeadMode mode = HeadMode::Full);

struct HeadTrace {
  Vector j_cg, j_fg;
  Vector z_cg, z_fg;  // τ(j_cg), τ'(j_fg); empty when the path is disabled
  AdaptiveWeights weights;
  Vector logits;
  Vector rho;
  HeadMode mode = HeadMode::Full;
};

// In CoarseOnly mode j_fg may be empty (and j_cg in FineOnly mode).
HeadTrace head_forward(std::span<const double> j_cg, std::span<const double> j_fg,
                       const HeadParams& params, HeadMode mode = HeadMode::Full);

struct HeadInputGrads {
  Vector dj_cg;
  Vector dj_fg;
};

HeadInputGrads head_backward(const HeadTrace& trace, const HeadParams& params,
                             std::span<const double> d_logits, HeadParams& grads);

// Index of the largest entry, lowest index on ties.
std::size_t predict(std::span<const double> rho);

struct Ranked {
  std::size_t answer;
  double confidence;
  bool operator==(const Ranked&) const = default;
};

// k highest entries in descending order, lower index first on ties.
std::vector<Ranked> top_k(std::span<const double> rho, std::size_t k);

}  // namespace cfr
