#include "cfr/head.hpp"

#include <algorithm>
#include <numeric>

#include "cfr/errors.hpp"
#include "cfr/ops.hpp"

namespace cfr {

const char* mode_name(HeadMode mode) {
  switch (mode) {
    case HeadMode::Full: return "full";
    case HeadMode::CoarseOnly: return "coarse_only";
    case HeadMode::FineOnly: return "fine_only";
  }
  return "?";
}

HeadMode mode_from_name(const std::string& name) {
  if (name == "full") return HeadMode::Full;
  if (name == "coarse_only") return HeadMode::CoarseOnly;
  if (name == "fine_only") return HeadMode::FineOnly;
  throw ArgumentError("head mode must be full, coarse_only or fine_only; got '" + name + "'");
}

HeadParams HeadParams::zeros(std::size_t d_cg, std::size_t d_fg, std::size_t n) {
  return {Matrix(1, n), Matrix(1, n), Matrix(d_cg, n), Matrix(1, n), Matrix(d_fg, n), Matrix(1, n)};
}

void HeadParams::validate() const {
  const std::size_t n = n_answers();
  const Shape vec{1, n};
  if (Wp_raw.shape() != vec || tau_b.shape() != vec || taup_b.shape() != vec ||
      tau_w.cols() != n || taup_w.cols() != n) {
    throw ShapeError("head: parameters disagree on answer count " + std::to_string(n));
  }
}

AdaptiveWeights normalize_adaptive(std::span<const double> w_raw, std::span<const double> wp_raw) {
  if (w_raw.size() != wp_raw.size()) {
    throw ShapeError("normalize_adaptive: lengths " + std::to_string(w_raw.size()) + " and " +
                     std::to_string(wp_raw.size()));
  }
  AdaptiveWeights w{Vector(w_raw.size()), Vector(w_raw.size())};
  for (std::size_t a = 0; a < w_raw.size(); ++a) {
    const double pair[2] = {w_raw[a], wp_raw[a]};
    const Vector s = softmax_vec(pair);
    w.coarse[a] = s[0];
    w.fine[a] = s[1];
  }
  return w;
}

AdaptiveWeights effective_weights(const HeadParams& p, HeadMode mode) {
  const std::size_t n = p.n_answers();
  switch (mode) {
    case HeadMode::CoarseOnly: return {Vector(n, 1.0), Vector(n, 0.0)};
    case HeadMode::FineOnly: return {Vector(n, 0.0), Vector(n, 1.0)};
    case HeadMode::Full: break;
  }
  return normalize_adaptive(p.W_raw.data(), p.Wp_raw.data());
}

HeadTrace head_forward(std::span<const double> j_cg, std::span<const double> j_fg,
                       const HeadParams& p, HeadMode mode) {
  p.validate();
  HeadTrace tr;
  tr.mode = mode;
  tr.j_cg.assign(j_cg.begin(), j_cg.end());
  tr.j_fg.assign(j_fg.begin(), j_fg.end());
  const std::size_t n = p.n_answers();
  if (mode != HeadMode::FineOnly) {
    if (j_cg.size() != p.tau_w.rows()) {
      throw ShapeError("head: coarse joint of length " + std::to_string(j_cg.size()) +
                       " vs tau " + p.tau_w.shape().str());
    }
    const Matrix z = linear(Matrix::row_vector(j_cg), p.tau_w, p.tau_b);
    tr.z_cg.assign(z.data().begin(), z.data().end());
  }
  if (mode != HeadMode::CoarseOnly) {
    if (j_fg.size() != p.taup_w.rows()) {
      throw ShapeError("head: fine joint of length " + std::to_string(j_fg.size()) +
                       " vs tau' " + p.taup_w.shape().str());
    }
    const Matrix z = linear(Matrix::row_vector(j_fg), p.taup_w, p.taup_b);
    tr.z_fg.assign(z.data().begin(), z.data().end());
  }
  tr.weights = effective_weights(p, mode);
  tr.logits.assign(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (!tr.z_cg.empty()) tr.logits[a] += tr.weights.coarse[a] * tr.z_cg[a];
    if (!tr.z_fg.empty()) tr.logits[a] += tr.weights.fine[a] * tr.z_fg[a];
  }
  tr.rho = softmax_vec(tr.logits);
  return tr;
}

Vector answer_distribution(std::span<const double> j_cg, std::span<const double> j_fg,
                           const HeadParams& p, HeadMode mode) {
  return head_forward(j_cg, j_fg, p, mode).rho;
}

HeadInputGrads head_backward(const HeadTrace& tr, const HeadParams& p,
                             std::span<const double> d_logits, HeadParams& g) {
  const std::size_t n = p.n_answers();
  if (d_logits.size() != n) throw ShapeError("head backward: logit gradient length mismatch");
  HeadInputGrads in;
  Vector d_w(n, 0.0), d_wp(n, 0.0);
  if (!tr.z_cg.empty()) {
    Matrix dz(1, n);
    for (std::size_t a = 0; a < n; ++a) {
      dz(0, a) = d_logits[a] * tr.weights.coarse[a];
      d_w[a] = d_logits[a] * tr.z_cg[a];
    }
    auto lg = linear_backward(Matrix::row_vector(tr.j_cg), p.tau_w, true, dz);
    g.tau_w += lg.dweight;
    g.tau_b += lg.dbias;
    in.dj_cg.assign(lg.dx.data().begin(), lg.dx.data().end());
  }
  if (!tr.z_fg.empty()) {
    Matrix dz(1, n);
    for (std::size_t a = 0; a < n; ++a) {
      dz(0, a) = d_logits[a] * tr.weights.fine[a];
      d_wp[a] = d_logits[a] * tr.z_fg[a];
    }
    auto lg = linear_backward(Matrix::row_vector(tr.j_fg), p.taup_w, true, dz);
    g.taup_w += lg.dweight;
    g.taup_b += lg.dbias;
    in.dj_fg.assign(lg.dx.data().begin(), lg.dx.data().end());
  }
  if (tr.mode == HeadMode::Full) {
    // two-way softmax per answer
    for (std::size_t a = 0; a < n; ++a) {
      const double w = tr.weights.coarse[a];
      const double wp = tr.weights.fine[a];
      const double dot = d_w[a] * w + d_wp[a] * wp;
      g.W_raw(0, a) += w * (d_w[a] - dot);
      g.Wp_raw(0, a) += wp * (d_wp[a] - dot);
    }
  }
  return in;
}

std::size_t predict(std::span<const double> rho) {
  if (rho.empty()) throw ArgumentError("predict: empty distribution");
  std::size_t best = 0;
  for (std::size_t a = 1; a < rho.size(); ++a) {
    if (rho[a] > rho[best]) best = a;
  }
  return best;
}

std::vector<Ranked> top_k(std::span<const double> rho, std::size_t k) {
  if (k < 1 || k > rho.size()) {
    throw ArgumentError("top_k: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(rho.size()) + "]");
  }
  std::vector<std::size_t> idx(rho.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rho[a] > rho[b]; });
  std::vector<Ranked> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({idx[i], rho[idx[i]]});
  return out;
}

}  // namespace cfr
