#pragma once

// Central-difference verification of analytic gradients.
//
// A parameter type P participates by providing an ADL-visible
//   template <class F> void for_each_tensor(P&, F&&)
// (and the const overload) that calls f(name, Matrix&) for every learnable
// tensor in a fixed order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cfr/errors.hpp"
#include "cfr/matrix.hpp"

namespace cfr {

// Default finite-difference step and pass threshold, 64-bit.
inline constexpr double kGradEps = 1e-5;
inline constexpr double kGradTol = 1e-4;

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradReport {
  std::vector<TensorCheck> tensors;
  double eps = 0.0;
  double tolerance = 0.0;
  bool pass = true;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
    return m;
  }
};

// Ad-hoc named tensor list, handy for checking small standalone functions.
struct TensorList {
  std::vector<std::pair<std::string, Matrix>> items;
};

template <class F>
void for_each_tensor(TensorList& list, F&& f) {
  for (auto& [name, m] : list.items) f(name, m);
}
template <class F>
void for_each_tensor(const TensorList& list, F&& f) {
  for (const auto& [name, m] : list.items) f(name, m);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Returns a zero-valued copy of `params` with the same tensor shapes.
template <class P>
P zeros_like(const P& params) {
  P z = params;
  for_each_tensor(z, [](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

// `loss(params, grad)` returns the scalar loss and, when grad is non-null,
// writes the analytic gradient into it (grad arrives zero-initialised).
template <class P>
using LossWithGrad = std::function<double(const P&, P*)>;

template <class P>
GradReport grad_check(const LossWithGrad<P>& loss, P params, double eps, double tol) {
  if (!(eps > 0.0)) throw ArgumentError("grad_check: eps must be positive");
  if (tol < 0.0) throw ArgumentError("grad_check: tolerance must be non-negative");

  P analytic = zeros_like(params);
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite at the base point");

  std::vector<const Matrix*> grads;
  for_each_tensor(analytic, [&](const std::string&, const Matrix& m) { grads.push_back(&m); });

  GradReport report;
  report.eps = eps;
  report.tolerance = tol;
  std::size_t tensor_index = 0;
  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    const Matrix& g = *grads[tensor_index++];
    TensorCheck check;
    check.name = name;
    check.entries = m.size();
    auto values = m.data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + eps;
      const double up = loss(params, nullptr);
      values[k] = saved - eps;
      const double down = loss(params, nullptr);
      values[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss when perturbing " + name + "[" +
                           std::to_string(k) + "]");
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g.data()[k];
      const double rel = relative_error(a, numeric);
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
      if (rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = k;
      }
    }
    if (check.max_rel_error > tol) report.pass = false;
    report.tensors.push_back(std::move(check));
  });
  return report;
}

}  // namespace cfr
