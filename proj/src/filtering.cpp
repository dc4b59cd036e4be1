#include "cfr/filtering.hpp"

#include "cfr/errors.hpp"
#include "cfr/ops.hpp"

namespace cfr {

FilterParams FilterParams::zeros(std::size_t d_f, std::size_t d_p, std::size_t d_psi, bool bias,
                                 bool learnable_channel_scale) {
  FilterParams p;
  p.tau_f_w = Matrix(d_f, d_psi);
  p.tau_p_w = Matrix(d_p, d_psi);
  if (bias) {
    p.tau_f_b = Matrix(1, d_psi);
    p.tau_p_b = Matrix(1, d_psi);
  }
  if (learnable_channel_scale) p.channel_scale = Matrix(1, d_psi, 1.0);
  return p;
}

void FilterParams::validate() const {
  const std::size_t d = out_dim();
  if (tau_p_w.cols() != d) {
    throw ShapeError("filter: tau_p output " + tau_p_w.shape().str() + " differs from tau_f " +
                     tau_f_w.shape().str());
  }
  for (const Matrix* v : {&tau_f_b, &tau_p_b, &channel_scale}) {
    if (!v->empty() && v->shape() != Shape{1, d}) {
      throw ShapeError("filter: vector parameter " + v->shape().str() + ", expected 1x" +
                       std::to_string(d));
    }
  }
}

namespace {

void check_inputs(const Matrix& f, const Matrix& p, const FilterParams& params) {
  params.validate();
  if (f.rows() == 0) throw ShapeError("filter: feature matrix has no rows");
  if (p.rows() == 0) throw ShapeError("filter: predicate matrix has no rows");
  if (f.cols() != params.tau_f_w.rows()) {
    throw ShapeError("filter: features " + f.shape().str() + " vs tau_f " +
                     params.tau_f_w.shape().str());
  }
  if (p.cols() != params.tau_p_w.rows()) {
    throw ShapeError("filter: predicates " + p.shape().str() + " vs tau_p " +
                     params.tau_p_w.shape().str());
  }
}

Vector logits_from(const Matrix& f_proj, const Vector& p_sum) {
  Vector l(f_proj.rows(), 0.0);
  for (std::size_t j = 0; j < f_proj.rows(); ++j) {
    auto r = f_proj.row(j);
    for (std::size_t k = 0; k < r.size(); ++k) l[j] += r[k] * p_sum[k];
  }
  return l;
}

Matrix scale_rows(const Matrix& f_proj, std::span<const double> psi_hat, const Matrix& channel) {
  Matrix psi = f_proj;
  for (std::size_t j = 0; j < psi.rows(); ++j) {
    auto r = psi.row(j);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double c = channel.empty() ? 1.0 : channel(0, k);
      r[k] *= 1.0 + psi_hat[j] * c;
    }
  }
  return psi;
}

}  // namespace

FilterTrace filter_forward(const Matrix& f, const Matrix& p, const FilterParams& params) {
  check_inputs(f, p, params);
  FilterTrace tr;
  tr.f = f;
  tr.p = p;
  tr.f_proj = linear(f, params.tau_f_w, params.tau_f_b);
  tr.p_sum = column_sums(linear(p, params.tau_p_w, params.tau_p_b));
  tr.out.psi_hat = softmax_vec(logits_from(tr.f_proj, tr.p_sum));
  tr.out.psi = scale_rows(tr.f_proj, tr.out.psi_hat, params.channel_scale);
  return tr;
}

Vector weighting_map(const Matrix& f, const Matrix& p, const FilterParams& params) {
  check_inputs(f, p, params);
  const Matrix f_proj = linear(f, params.tau_f_w, params.tau_f_b);
  const Vector p_sum = column_sums(linear(p, params.tau_p_w, params.tau_p_b));
  return softmax_vec(logits_from(f_proj, p_sum));
}

Matrix filter_info(const Matrix& f, std::span<const double> psi_hat, const FilterParams& params) {
  params.validate();
  if (psi_hat.size() != f.rows()) {
    throw ShapeError("filter_info: weighting map of length " + std::to_string(psi_hat.size()) +
                     " for " + std::to_string(f.rows()) + " feature rows");
  }
  return scale_rows(linear(f, params.tau_f_w, params.tau_f_b), psi_hat, params.channel_scale);
}

FilterOutput apply_filter(const Matrix& f, const Matrix& p, const FilterParams& params) {
  return filter_forward(f, p, params).out;
}

Matrix filter_backward(const FilterTrace& tr, const FilterParams& params, const Matrix& d_psi,
                       FilterParams& g) {
  const Matrix& fp = tr.f_proj;
  if (d_psi.shape() != fp.shape()) {
    throw ShapeError("filter backward: gradient " + d_psi.shape().str() + " vs output " +
                     fp.shape().str());
  }
  const auto& w = tr.out.psi_hat;
  const Matrix& c = params.channel_scale;
  const std::size_t n = fp.rows();
  const std::size_t d = fp.cols();

  Matrix d_fp(n, d);
  Vector d_w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      const double ck = c.empty() ? 1.0 : c(0, k);
      d_fp(j, k) = (1.0 + w[j] * ck) * d_psi(j, k);
      d_w[j] += d_psi(j, k) * ck * fp(j, k);
      if (!c.empty()) g.channel_scale(0, k) += d_psi(j, k) * w[j] * fp(j, k);
    }
  }

  const Vector d_logits = softmax_vec_backward(w, d_w);
  // logits_j = ⟨f'_j, s⟩ with s = Σ_i p'_i
  Vector d_s(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      d_fp(j, k) += d_logits[j] * tr.p_sum[k];
      d_s[k] += d_logits[j] * fp(j, k);
    }
  }

  // every predicate row receives the same gradient d_s
  Matrix d_pp(tr.p.rows(), d);
  for (std::size_t i = 0; i < d_pp.rows(); ++i) std::copy(d_s.begin(), d_s.end(), d_pp.row(i).begin());
  auto gp = linear_backward(tr.p, params.tau_p_w, !params.tau_p_b.empty(), d_pp);
  g.tau_p_w += gp.dweight;
  if (!params.tau_p_b.empty()) g.tau_p_b += gp.dbias;

  auto gf = linear_backward(tr.f, params.tau_f_w, !params.tau_f_b.empty(), d_fp);
  g.tau_f_w += gf.dweight;
  if (!params.tau_f_b.empty()) g.tau_f_b += gf.dbias;
  return gf.dx;
}

}  // namespace cfr
