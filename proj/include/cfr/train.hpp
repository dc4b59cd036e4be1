#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfr/errors.hpp"
#include "cfr/gradcheck.hpp"
#include "cfr/model.hpp"

namespace cfr {

// -log ρ[target], evaluated through log-softmax of the pre-softmax logits.
double cross_entropy(std::span<const double> logits, std::size_t target);
// d loss / d logits = softmax(logits) - onehot(target)
Vector cross_entropy_grad(std::span<const double> logits, std::size_t target);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 7;

  void validate() const;
};

template <class P>
struct AdamState {
  P m;
  P v;
  std::uint64_t step = 0;

  explicit AdamState(const P& params) : m(zeros_like(params)), v(zeros_like(params)) {}
};

// Bias-corrected Adam update, in place.
template <class P>
void adam_step(P& params, const P& grads, AdamState<P>& state, const TrainConfig& cfg) {
  std::vector<Matrix*> theta, m, v;
  std::vector<const Matrix*> g;
  for_each_tensor(params, [&](const std::string&, Matrix& t) { theta.push_back(&t); });
  for_each_tensor(grads, [&](const std::string&, const Matrix& t) { g.push_back(&t); });
  for_each_tensor(state.m, [&](const std::string&, Matrix& t) { m.push_back(&t); });
  for_each_tensor(state.v, [&](const std::string&, Matrix& t) { v.push_back(&t); });
  if (g.size() != theta.size() || m.size() != theta.size()) {
    throw ShapeError("adam_step: gradient registry does not match parameters");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (g[i]->shape() != theta[i]->shape() || m[i]->shape() != theta[i]->shape()) {
      throw ShapeError("adam_step: tensor " + std::to_string(i) + " has gradient " +
                       g[i]->shape().str() + " for parameter " + theta[i]->shape().str());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto th = theta[i]->data();
    auto gd = g[i]->data();
    auto md = m[i]->data();
    auto vd = v[i]->data();
    for (std::size_t k = 0; k < th.size(); ++k) {
      md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gd[k];
      vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
      const double m_hat = md[k] / c1;
      const double v_hat = vd[k] / c2;
      th[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// ---- metrics ------------------------------------------------------------

double accuracy_exact(std::span<const std::size_t> preds, std::span<const std::size_t> golds);
// Consensus score min(#humans agreeing / 3, 1), averaged over samples.
double accuracy_soft(std::span<const std::size_t> preds,
                     std::span<const std::vector<std::size_t>> human_answers);
// ρ restricted to the candidates and renormalised; returns the candidate position.
std::size_t mc_choice(std::span<const double> rho, std::span<const std::size_t> candidates);
double accuracy_mc(std::span<const Vector> rhos, std::span<const std::vector<std::size_t>> candidates,
                   std::span<const std::size_t> gold_positions);

struct EvalReport {
  std::size_t samples = 0;
  std::size_t ffoe_samples = 0;
  std::size_t mc_samples = 0;
  double acc = 0.0;       // exact match over free-form samples
  double acc_mc = 0.0;    // candidate-restricted accuracy over MC samples
  double acc_soft = 0.0;  // consensus accuracy over samples with human answers
  std::size_t soft_samples = 0;
  double overall = 0.0;   // per-sample correctness, MC samples judged by acc_mc rule
  std::vector<std::size_t> predictions;  // global argmax per sample
};

EvalReport evaluate(const Dataset& set, const CfrParams& params, const CfrConfig& config,
                    const WordTables& tables);

// ---- training -----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch
  double val_acc = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  CfrParams best;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_acc = 0.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Starts from init_params(model, model.seed). Returns the parameters with the
// highest validation accuracy (earliest epoch on ties); with an empty
// validation set the final parameters are returned.
TrainResult train_loop(const Dataset& train, const Dataset& val, const CfrConfig& model,
                       const TrainConfig& cfg, const WordTables& tables,
                       const EpochCallback& on_epoch = {});

// Same, continuing from given parameters.
TrainResult train_from(CfrParams start, const Dataset& train, const Dataset& val,
                       const CfrConfig& model, const TrainConfig& cfg, const WordTables& tables,
                       const EpochCallback& on_epoch = {});

std::string history_csv(std::span<const EpochRecord> history);

}  // namespace cfr
