// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <cstring>
#include <string>

#include "cfr/model.hpp"
#include "cfr/train.hpp"
#include "cfr/workflows.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cfr;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

Vector random_vector(Rng& rng, std::size_t n) {
  const Matrix m = oracle::random_matrix(rng, 1, n);
  return Vector(m.data().begin(), m.data().end());
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects the first few violations so a FAIL line says what went wrong.
struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void require(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (notes.size() < 5) notes.push_back(what);
  }
};

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    std::copy(m.row(perm[r]).begin(), m.row(perm[r]).end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p.begin(), p.end());
  return p;
}

double total(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// The default learning-check setup is shared by criteria 4, 6 and 7.
struct LearningRun {
  SyntheticData data;
  CfrConfig config;
  TrainConfig train;
  TrainResult result;
  double seconds = 0.0;
};

LearningRun learning_run() {
  LearningRun r;
  r.data = gen_synthetic(SynthConfig{});
  ModelOptions o;
  o.stop_words = r.data.stop_words;
  o.answers = r.data.answers;
  r.config = derive_config(r.data.train, r.data.words, o);
  r.train.epochs = 30;
  const auto t0 = Clock::now();
  r.result = train_loop(r.data.train, r.data.val, r.config, r.train, WordTables(r.data.words));
  r.seconds = seconds_since(t0);
  return r;
}

Verdict criterion_gradients(std::string& detail) {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  GradcheckOptions extended;
  extended.learnable_channel_scale = true;
  extended.softmax_axis = SoftmaxAxis::Rows;
  for (const auto& opts : {GradcheckOptions{}, extended}) {
    for (const auto& run : gradcheck_model(opts)) {
      checked += run.report.tensors.size();
      worst = std::max(worst, run.report.max_rel_error());
      for (const auto& t : run.report.tensors) {
        v.require(run.report.pass && t.max_rel_error <= kGradTol,
                  "seed " + std::to_string(run.seed) + " " + t.name + fmt(" rel %.3g", t.max_rel_error));
      }
    }
  }
  const double secs = seconds_since(t0);
  v.require(checked > 0, "no tensors checked");
  v.require(secs <= 120.0, fmt("took %.1f s", secs));
  detail = std::to_string(checked) + " tensor checks over seeds 1-3, max rel err " + fmt("%.3g", worst) + ", " +
           fmt("%.2f s", secs);
  return v;
}

Verdict criterion_oracles(std::string& detail) {
  Verdict v;
  Rng rng(2024);
  double worst = 0.0;
  auto dim = [&] { return 1 + static_cast<std::size_t>(rng.below(16)); };
  auto count = [&] { return 1 + static_cast<std::size_t>(rng.below(8)); };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_f = count(), n_p = count(), n_q = count();
    const std::size_t d_f = dim(), d_p = dim(), d_psi = dim(), d_q = dim(), d = dim(), n_a = 1 + rng.below(16);
    const bool bias = trial % 2 == 0, scale = trial % 3 == 0;
    const auto axis = trial % 4 == 0 ? SoftmaxAxis::Rows : SoftmaxAxis::Flat;

    const auto fp = oracle::random_filter(rng, d_f, d_p, d_psi, bias, scale);
    const Matrix f = oracle::random_matrix(rng, n_f, d_f), p = oracle::random_matrix(rng, n_p, d_p);
    const Vector w = weighting_map(f, p, fp);
    const Vector w_ref = oracle::weighting_map(f, p, fp);
    const Matrix psi = filter_info(f, w, fp);
    const Matrix psi_ref = oracle::filter_info(f, w_ref, fp);

    const auto bp = oracle::random_bilinear(rng, d_q, d_f, d);
    const Matrix xq = oracle::random_matrix(rng, n_q, d_q);
    const Matrix att = attention_map(xq, f, bp, axis);
    const Matrix att_ref = oracle::attention(xq, f, bp, axis);
    const Vector j = joint_representation(xq, f, att, bp);
    const Vector j_ref = oracle::joint(xq, f, att_ref, bp);

    const std::size_t d_fg = dim();
    const auto hp = oracle::random_head(rng, d, d_fg, n_a);
    const Vector j_fg = random_vector(rng, d_fg);
    const Vector rho = answer_distribution(j, j_fg, hp);
    const Vector rho_ref = oracle::head(j_ref, j_fg, hp);

    const double e = std::max({max_abs_diff(w, w_ref), max_abs_diff(psi, psi_ref), max_abs_diff(att, att_ref),
                               max_abs_diff(j, j_ref), max_abs_diff(rho, rho_ref)});
    worst = std::max(worst, e);
    v.require(e <= 1e-10, "trial " + std::to_string(trial) + fmt(" diff %.3g", e));
  }
  detail = "100 shapes, max abs diff " + fmt("%.3g", worst);
  return v;
}

Verdict criterion_invariants(std::string& detail) {
  Verdict v;
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_f = 1 + rng.below(8), n_p = 1 + rng.below(8), n_q = 1 + rng.below(8);
    const std::size_t n_a = 1 + rng.below(10);
    const auto fp = oracle::random_filter(rng, 6, 5, 4, trial % 2 == 0, trial % 3 == 0);
    const Matrix f = oracle::random_matrix(rng, n_f, 6), p = oracle::random_matrix(rng, n_p, 5);
    const FilterOutput out = apply_filter(f, p, fp);
    v.require(std::abs(total(out.psi_hat) - 1.0) <= 1e-12, "psi_hat sum");

    const auto perm = random_perm(rng, n_f);
    const FilterOutput moved = apply_filter(permute_rows(f, perm), p, fp);
    double eq = 0.0;
    for (std::size_t r = 0; r < n_f; ++r) eq = std::max(eq, std::abs(moved.psi_hat[r] - out.psi_hat[perm[r]]));
    eq = std::max(eq, max_abs_diff(moved.psi, permute_rows(out.psi, perm)));
    v.require(eq <= 1e-12, fmt("filter equivariance %.3g", eq));

    const auto bp = oracle::random_bilinear(rng, 3, 6, 5);
    const Matrix xq = oracle::random_matrix(rng, n_q, 3);
    for (const auto axis : {SoftmaxAxis::Flat, SoftmaxAxis::Rows}) {
      const FusionOutput fo = fuse(xq, f, bp, axis);
      const double want = axis == SoftmaxAxis::Flat ? 1.0 : static_cast<double>(n_q);
      v.require(std::abs(total(fo.attention.data()) - want) <= 1e-12, "attention sum");
      const FusionOutput fm = fuse(xq, permute_rows(f, perm), bp, axis);
      v.require(max_abs_diff(fm.joint, fo.joint) <= 1e-10, "fusion permutation invariance");
    }

    const auto hp = oracle::random_head(rng, 5, 4, n_a);
    const Vector j_cg = random_vector(rng, 5), j_fg = random_vector(rng, 4);
    for (const auto mode : {HeadMode::Full, HeadMode::CoarseOnly, HeadMode::FineOnly}) {
      const Vector rho = answer_distribution(j_cg, j_fg, hp, mode);
      v.require(std::abs(total(rho) - 1.0) <= 1e-12, "rho sum");
    }
    const AdaptiveWeights aw = normalize_adaptive(hp.W_raw.data(), hp.Wp_raw.data());
    for (std::size_t a = 0; a < n_a; ++a) v.require(std::abs(aw.coarse[a] + aw.fine[a] - 1.0) <= 1e-15, "W + W'");

    // Equal raw logits give an even split, whatever their common value.
    const double c = rng.uniform(-50.0, 50.0);
    const Vector same(n_a, c);
    const AdaptiveWeights even = normalize_adaptive(same, same);
    for (std::size_t a = 0; a < n_a; ++a) {
      v.require(std::abs(even.coarse[a] - 0.5) <= 1e-12 && std::abs(even.fine[a] - 0.5) <= 1e-12,
                "equal-logit weights");
    }
  }
  v.require(predict(Vector{0.2, 0.4, 0.4}) == 1, "tie goes to lowest index");
  v.require(predict(Vector{0.25, 0.25, 0.25, 0.25}) == 0, "flat rho picks index 0");
  for (int i = 0; i < 10; ++i) v.require(predict(Vector{0.1, 0.45, 0.45}) == 1, "tie-break stable");
  detail = "50 random cases per invariant";
  return v;
}

Verdict criterion_learning(const LearningRun& run, std::string& detail) {
  Verdict v;
  v.require(run.result.best_val_acc >= 0.95, fmt("best val acc %.4f", run.result.best_val_acc));
  v.require(run.seconds <= 300.0, fmt("took %.1f s", run.seconds));
  detail = "best val acc " + fmt("%.4f", run.result.best_val_acc) + " at epoch " +
           std::to_string(run.result.best_epoch) + ", " + fmt("%.1f s", run.seconds);
  return v;
}

Verdict criterion_ablation(std::string& detail) {
  Verdict v;
  SynthConfig sc;
  sc.noise = 0.6;
  sc.dropout = 0.05;
  sc.distractor_rate = 1.0;
  const SyntheticData data = gen_synthetic(sc);
  ModelOptions o;
  o.stop_words = data.stop_words;
  o.answers = data.answers;
  const auto t0 = Clock::now();
  const AblationReport r =
      run_ablation(data.train, data.val, data.words, o, TrainConfig{}, AblationStrategy::Retrain, {1, 2, 3});
  const double coarse = r.acc(HeadMode::CoarseOnly), fine = r.acc(HeadMode::FineOnly), full = r.acc(HeadMode::Full);
  v.require(full >= coarse + 0.05, fmt("full %.4f", full) + fmt(" < coarse %.4f + 0.05", coarse));
  v.require(fine >= coarse, fmt("fine %.4f", fine) + fmt(" < coarse %.4f", coarse));
  detail = "coarse " + fmt("%.4f", coarse) + ", fine " + fmt("%.4f", fine) + ", full " + fmt("%.4f", full) + ", " +
           fmt("%.1f s", seconds_since(t0));
  return v;
}

Verdict criterion_determinism(const LearningRun& run, std::string& detail) {
  Verdict v;
  const WordTables tables(run.data.words);
  const TrainResult again = train_loop(run.data.train, run.data.val, run.config, run.train, tables);
  v.require(again.history == run.result.history, "metric history differs between identical runs");
  v.require(again.best == run.result.best, "best parameters differ between identical runs");

  TempDir dir;
  const auto path = dir.path / "model.ckpt";
  save_checkpoint(run.result.best, run.config, path);
  const Checkpoint ck = load_checkpoint(path);
  v.require(ck.config == run.config, "config changed in round trip");
  v.require(ck.params == run.result.best, "parameters changed in round trip");
  for (const auto& s : run.data.val) {
    const Vector a = forward(s, run.result.best, run.config, tables).rho;
    const Vector b = forward(s, ck.params, ck.config, tables).rho;
    v.require(a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0,
              "forward differs after reload on " + s.id);
  }
  detail = std::to_string(run.result.history.size()) + " epochs replayed, " + std::to_string(run.data.val.size()) +
           " reloaded forwards bitwise equal";
  return v;
}

double sum_json(const json& a) {
  double s = 0.0;
  for (const auto& x : a) s += x.is_array() ? sum_json(x) : x.get<double>();
  return s;
}

Verdict criterion_explanations(const LearningRun& run, std::string& detail) {
  Verdict v;
  const WordTables tables(run.data.words);
  const EvalReport eval = evaluate(run.data.val, run.result.best, run.config, tables);
  const std::size_t n_a = run.config.n_answers;
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const std::size_t idx = rng.below(run.data.val.size());
    const SampleBundle& s = run.data.val[idx];
    const ForwardResult fr = forward(s, run.result.best, run.config, tables);
    const json j = json::parse(explanation_json(s, fr, run.config, n_a));
    const std::string where = " (" + s.id + ")";

    v.require(j.at("id") == s.id, "id" + where);
    const json& top = j.at("top_k");
    v.require(top.size() == n_a, "top_k length" + where);
    double conf = 0.0;
    for (std::size_t k = 0; k < top.size(); ++k) {
      conf += top[k].at("confidence").get<double>();
      if (k > 0) v.require(top[k - 1].at("confidence") >= top[k].at("confidence"), "top_k order" + where);
      v.require(top[k].at("index").get<std::size_t>() < n_a, "top_k index" + where);
    }
    v.require(conf <= 1.0 + 1e-9 && std::abs(conf - 1.0) <= 1e-9, "top_k confidences sum" + where);

    const json& ph = j.at("psi_hat_image");
    v.require(ph.size() == s.image_features.rows(), "psi_hat_image length" + where);
    v.require(std::abs(sum_json(ph) - 1.0) <= 1e-9, "psi_hat_image sum" + where);
    v.require(std::abs(sum_json(j.at("psi_hat_question")) - 1.0) <= 1e-9, "psi_hat_question sum" + where);
    v.require(j.at("psi_hat_question").size() == s.question.size(), "psi_hat_question length" + where);
    for (const char* key : {"A_cg", "A_fg"}) {
      const json& a = j.at(key);
      v.require(a.size() == s.question.size() && a.at(0).size() == s.image_features.rows(),
                std::string(key) + " shape" + where);
      v.require(std::abs(sum_json(a) - 1.0) <= 1e-9, std::string(key) + " sum" + where);
    }
    for (const auto& [label, w] : j.at("adaptive").items()) {
      const double cg = w.at("w_cg"), fg = w.at("w_fg");
      v.require(cg >= 0.0 && fg >= 0.0 && std::abs(cg + fg - 1.0) <= 1e-12, "w_cg + w_fg for " + label + where);
    }
    v.require(j.at("adaptive").size() == n_a, "adaptive entries" + where);
    v.require(top.at(0).at("index").get<std::size_t>() == eval.predictions[idx], "top-1 vs eval" + where);
  }
  detail = "100 samples checked against eval predictions";
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const std::function<Verdict(std::string&)>& body) {
    std::string detail;
    Verdict v;
    try {
      v = body(detail);
    } catch (const std::exception& e) {
      v.ok = false;
      v.notes.push_back(std::string("threw: ") + e.what());
    }
    std::string line = (v.ok ? "PASS" : "FAIL") + std::string(" criterion ") + std::to_string(n);
    if (!detail.empty()) line += ": " + detail;
    for (const auto& note : v.notes) line += " [" + note + "]";
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    failures += !v.ok;
  };

  report(1, criterion_gradients);
  report(2, criterion_oracles);
  report(3, criterion_invariants);

  std::optional<LearningRun> run;
  try {
    run = learning_run();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "learning run threw: %s\n", e.what());
  }
  auto with_run = [&](auto criterion) {
    return [&, criterion](std::string& d) {
      if (!run) throw std::runtime_error("learning run unavailable");
      return criterion(*run, d);
    };
  };
  report(4, with_run(criterion_learning));
  report(5, criterion_ablation);
  report(6, with_run(criterion_determinism));
  report(7, with_run(criterion_explanations));

  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
