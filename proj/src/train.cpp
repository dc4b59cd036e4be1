#include "cfr/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "cfr/ops.hpp"
#include "cfr/rng.hpp"

namespace cfr {

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw ArgumentError("cross_entropy: target " + std::to_string(target) + " outside " +
                        std::to_string(logits.size()) + " answers");
  }
  return -log_softmax_at(logits, target);
}

Vector cross_entropy_grad(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw ArgumentError("cross_entropy_grad: target out of range");
  Vector g = softmax_vec(logits);
  g[target] -= 1.0;
  return g;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ArgumentError("Adam epsilon must be positive");
}

double accuracy_exact(std::span<const std::size_t> preds, std::span<const std::size_t> golds) {
  if (preds.size() != golds.size()) {
    throw ArgumentError("accuracy_exact: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(golds.size()) + " labels");
  }
  if (preds.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double accuracy_soft(std::span<const std::size_t> preds,
                     std::span<const std::vector<std::size_t>> human_answers) {
  if (preds.size() != human_answers.size()) throw ArgumentError("accuracy_soft: length mismatch");
  if (preds.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& humans = human_answers[i];
    if (humans.empty()) throw ArgumentError("accuracy_soft: sample " + std::to_string(i) + " has no human answers");
    const auto agree = std::count(humans.begin(), humans.end(), preds[i]);
    total += std::min(static_cast<double>(agree) / 3.0, 1.0);
  }
  return total / static_cast<double>(preds.size());
}

std::size_t mc_choice(std::span<const double> rho, std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw ArgumentError("mc_choice: no candidates");
  Vector restricted;
  restricted.reserve(candidates.size());
  double z = 0.0;
  for (std::size_t c : candidates) {
    if (c >= rho.size()) throw ArgumentError("mc_choice: candidate " + std::to_string(c) + " outside the answer vocabulary");
    restricted.push_back(rho[c]);
    z += rho[c];
  }
  if (z > 0.0) {
    for (double& v : restricted) v /= z;
  }
  return predict(restricted);
}

double accuracy_mc(std::span<const Vector> rhos, std::span<const std::vector<std::size_t>> candidates,
                   std::span<const std::size_t> gold_positions) {
  if (rhos.size() != candidates.size() || rhos.size() != gold_positions.size()) {
    throw ArgumentError("accuracy_mc: length mismatch");
  }
  if (rhos.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (gold_positions[i] >= candidates[i].size()) {
      throw ArgumentError("accuracy_mc: gold position " + std::to_string(gold_positions[i]) +
                          " outside " + std::to_string(candidates[i].size()) + " candidates");
    }
    hit += mc_choice(rhos[i], candidates[i]) == gold_positions[i];
  }
  return static_cast<double>(hit) / static_cast<double>(rhos.size());
}

EvalReport evaluate(const Dataset& set, const CfrParams& params, const CfrConfig& config,
                    const WordTables& tables) {
  EvalReport r;
  r.samples = set.size();
  std::vector<std::size_t> ffoe_pred, ffoe_gold, soft_pred, mc_gold;
  std::vector<std::vector<std::size_t>> soft_humans, mc_cands;
  std::vector<Vector> mc_rhos;
  std::size_t correct = 0;
  for (const auto& s : set) {
    const Vector rho = forward(s, params, config, tables).rho;
    const std::size_t pred = predict(rho);
    r.predictions.push_back(pred);
    if (s.is_mc()) {
      mc_rhos.push_back(rho);
      mc_cands.push_back(s.candidates);
      mc_gold.push_back(s.gold);
      correct += mc_choice(rho, s.candidates) == s.gold;
    } else {
      ffoe_pred.push_back(pred);
      ffoe_gold.push_back(*s.answer);
      correct += pred == *s.answer;
    }
    if (!s.human_answers.empty()) {
      soft_pred.push_back(pred);
      soft_humans.push_back(s.human_answers);
    }
  }
  r.ffoe_samples = ffoe_pred.size();
  r.mc_samples = mc_rhos.size();
  r.soft_samples = soft_pred.size();
  r.acc = accuracy_exact(ffoe_pred, ffoe_gold);
  r.acc_mc = accuracy_mc(mc_rhos, mc_cands, mc_gold);
  r.acc_soft = accuracy_soft(soft_pred, soft_humans);
  r.overall = set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(set.size());
  return r;
}

TrainResult train_from(CfrParams params, const Dataset& train, const Dataset& val,
                       const CfrConfig& model, const TrainConfig& cfg, const WordTables& tables,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ArgumentError("train_loop: empty training set");

  TrainResult result;
  result.best = params;
  AdamState<CfrParams> adam(params);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const SampleBundle*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
      CfrParams grads = zeros_like(params);
      const double loss = batch_loss(batch, params, model, tables, &grads);
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(params, grads, adam, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(train.size());
    rec.val_acc = val.empty() ? 0.0 : evaluate(val, params, model, tables).overall;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val.empty() || !have_best || rec.val_acc > result.best_val_acc) {
      result.best = params;
      result.best_epoch = epoch;
      result.best_val_acc = rec.val_acc;
      have_best = true;
    }
  }
  return result;
}

TrainResult train_loop(const Dataset& train, const Dataset& val, const CfrConfig& model,
                       const TrainConfig& cfg, const WordTables& tables,
                       const EpochCallback& on_epoch) {
  return train_from(init_params(model, model.seed), train, val, model, cfg, tables, on_epoch);
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,loss,val_acc\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", r.epoch, r.loss, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace cfr
