#include "cfr/workflows.hpp"

#include <algorithm>
#include <cstdio>
#include <system_error>

#include <json.hpp>

namespace cfr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_synthetic(const SyntheticData& data, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  save_dataset(data.train, out_dir / layout::kTrain);
  save_dataset(data.val, out_dir / layout::kVal);
  save_embeddings(out_dir / layout::kEmbeddings, data.words);
  save_answers(out_dir / layout::kAnswers, data.answers);
  save_word_list(out_dir / layout::kStopWords, data.stop_words);
}

CfrConfig derive_config(const Dataset& train, const WordVectors& words, const ModelOptions& opts) {
  if (train.empty()) throw ArgumentError("cannot derive a model from an empty training set");
  CfrConfig c;
  c.d_word = words.dim();
  c.d_p = words.dim();
  c.d_q = opts.d_q;
  c.d_psi = opts.d_psi;
  c.d_cg = opts.d_cg;
  c.d_fg = opts.d_fg;
  c.d_i = train.front().image_features.cols();
  c.softmax_axis = opts.softmax_axis;
  c.learnable_channel_scale = opts.learnable_channel_scale;
  c.projection_bias = opts.projection_bias;
  c.head_mode = opts.head_mode;
  c.seed = opts.seed;

  std::size_t max_label = 0;
  std::vector<Tokens> questions;
  questions.reserve(train.size());
  for (const auto& s : train) {
    if (s.image_features.cols() != c.d_i) {
      throw ShapeError("sample '" + s.id + "' has " + std::to_string(s.image_features.cols()) +
                       "-dim region features, expected " + std::to_string(c.d_i));
    }
    max_label = std::max(max_label, s.target());
    for (std::size_t a : s.candidates) max_label = std::max(max_label, a);
    questions.push_back(s.question);
  }
  if (opts.answers.empty()) {
    c.n_answers = max_label + 1;
  } else {
    if (max_label >= opts.answers.size()) {
      throw ArgumentError("label " + std::to_string(max_label) + " outside the " +
                          std::to_string(opts.answers.size()) + "-entry answer list");
    }
    c.n_answers = opts.answers.size();
    c.answers = opts.answers;
  }
  c.question_filter = build_filter(opts.stop_words, Vocabulary::from_corpus(questions), opts.min_freq);
  c.validate();
  return c;
}

double AblationReport::acc(HeadMode mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return r.acc;
  }
  throw ArgumentError(std::string("no ablation row for ") + mode_name(mode));
}

AblationReport run_ablation(const Dataset& train, const Dataset& val, const WordVectors& words,
                            ModelOptions opts, TrainConfig cfg, AblationStrategy strategy,
                            const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ArgumentError("ablation needs at least one seed");
  if (val.empty()) throw ArgumentError("ablation needs a validation set");
  const HeadMode modes[] = {HeadMode::CoarseOnly, HeadMode::FineOnly, HeadMode::Full};
  AblationReport report;
  report.strategy = strategy;
  report.seeds = seeds;
  for (HeadMode m : modes) report.rows.push_back({m, 0.0, {}});

  const WordTables tables(words);
  for (std::uint64_t seed : seeds) {
    opts.seed = seed;
    cfg.seed = seed;
    if (strategy == AblationStrategy::Retrain) {
      for (auto& row : report.rows) {
        opts.head_mode = row.mode;
        const CfrConfig c = derive_config(train, words, opts);
        const TrainResult r = train_loop(train, val, c, cfg, tables);
        row.per_seed.push_back(evaluate(val, r.best, c, tables).overall);
      }
    } else {
      opts.head_mode = HeadMode::Full;
      CfrConfig c = derive_config(train, words, opts);
      const TrainResult r = train_loop(train, val, c, cfg, tables);
      for (auto& row : report.rows) {
        c.head_mode = row.mode;
        row.per_seed.push_back(evaluate(val, r.best, c, tables).overall);
      }
    }
  }
  for (auto& row : report.rows) {
    double sum = 0.0;
    for (double a : row.per_seed) sum += a;
    row.acc = sum / static_cast<double>(row.per_seed.size());
  }
  return report;
}

std::vector<SeededGradReport> gradcheck_model(const GradcheckOptions& opts) {
  if (opts.seeds.empty()) throw ArgumentError("gradcheck needs at least one seed");
  if (opts.batch < 1) throw ArgumentError("gradcheck batch must hold at least one sample");
  std::vector<SeededGradReport> out;
  for (std::uint64_t seed : opts.seeds) {
    SynthConfig sc;
    sc.objects = 4;
    sc.attrs = 3;
    sc.min_rois = 2;
    sc.max_rois = 3;
    sc.noise = 0.3;
    sc.dropout = 0.2;
    sc.train_n = opts.batch;
    sc.val_n = 0;
    sc.embed_dim = 5;
    sc.seed = seed;
    const SyntheticData data = gen_synthetic(sc);

    CfrConfig c;
    c.d_word = 5;
    c.d_q = 4;
    c.d_i = sc.objects + sc.attrs;
    c.d_p = 5;
    c.d_psi = 4;
    c.d_cg = 4;
    c.d_fg = 3;
    c.n_answers = sc.attrs;
    c.softmax_axis = opts.softmax_axis;
    c.learnable_channel_scale = opts.learnable_channel_scale;
    c.seed = seed;
    c.question_filter = data.stop_words;

    const WordTables tables(data.words);
    std::vector<const SampleBundle*> batch;
    for (const auto& s : data.train) batch.push_back(&s);
    const LossWithGrad<CfrParams> loss = [&](const CfrParams& p, CfrParams* g) {
      return batch_loss(batch, p, c, tables, g);
    };
    out.push_back({seed, grad_check(loss, init_params(c, seed), opts.eps, opts.tol)});
  }
  return out;
}

std::string answer_label(const CfrConfig& config, std::size_t index) {
  if (index < config.answers.size()) return config.answers[index];
  return std::to_string(index);
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

std::vector<Ranked> ranked(const ForwardResult& result, std::size_t k) {
  return top_k(result.rho, std::min(k, result.rho.size()));
}

}  // namespace

std::string explanation_json(const SampleBundle& sample, const ForwardResult& result,
                             const CfrConfig& config, std::size_t k) {
  if (k < 1) throw ArgumentError("top-k must be at least 1");
  const Explanation& ex = result.explanation;
  json top = json::array();
  json adaptive = json::object();
  for (const Ranked& r : ranked(result, k)) {
    const std::string label = answer_label(config, r.answer);
    top.push_back({{"answer", label}, {"index", r.answer}, {"confidence", r.confidence}});
    adaptive[label] = {{"w_cg", ex.adaptive.coarse[r.answer]}, {"w_fg", ex.adaptive.fine[r.answer]}};
  }
  json preds = json::array();
  for (const auto& p : ex.question_predicates) preds.push_back(p.words);

  json j;
  j["id"] = sample.id;
  j["head_mode"] = mode_name(config.head_mode);
  j["top_k"] = std::move(top);
  j["psi_hat_image"] = ex.psi_hat_image;
  j["psi_hat_question"] = ex.psi_hat_question;
  j["question_predicates"] = std::move(preds);
  j["A_cg"] = matrix_json(ex.attention_coarse);
  j["A_fg"] = matrix_json(ex.attention_fine);
  j["adaptive"] = std::move(adaptive);
  return j.dump(2) + "\n";
}

// Long format for plotting: one value per line.
std::string explanation_csv(const ForwardResult& result, std::size_t k) {
  const Explanation& ex = result.explanation;
  std::string out = "kind,row,col,value\n";
  char buf[128];
  auto put = [&](const char* kind, std::size_t r, std::size_t c, double v) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.17g\n", kind, r, c, v);
    out += buf;
  };
  std::size_t rank = 0;
  for (const Ranked& r : ranked(result, k)) put("top_k", rank++, r.answer, r.confidence);
  for (std::size_t i = 0; i < ex.psi_hat_image.size(); ++i) put("psi_hat_image", i, 0, ex.psi_hat_image[i]);
  for (std::size_t i = 0; i < ex.psi_hat_question.size(); ++i) {
    put("psi_hat_question", i, 0, ex.psi_hat_question[i]);
  }
  for (std::size_t r = 0; r < ex.attention_coarse.rows(); ++r) {
    for (std::size_t c = 0; c < ex.attention_coarse.cols(); ++c) put("A_cg", r, c, ex.attention_coarse(r, c));
  }
  for (std::size_t r = 0; r < ex.attention_fine.rows(); ++r) {
    for (std::size_t c = 0; c < ex.attention_fine.cols(); ++c) put("A_fg", r, c, ex.attention_fine(r, c));
  }
  for (std::size_t a = 0; a < ex.adaptive.coarse.size(); ++a) {
    put("w_cg", a, 0, ex.adaptive.coarse[a]);
    put("w_fg", a, 0, ex.adaptive.fine[a]);
  }
  return out;
}

std::string eval_report_json(const EvalReport& r) {
  json j;
  j["samples"] = r.samples;
  if (r.ffoe_samples > 0) j["acc"] = r.acc;
  if (r.mc_samples > 0) j["acc_mc"] = r.acc_mc;
  if (r.soft_samples > 0) j["acc_soft"] = r.acc_soft;
  j["overall"] = r.overall;
  j["predictions"] = r.predictions;
  return j.dump() + "\n";
}

std::string ablation_report_json(const AblationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"mode", mode_name(r.mode)}, {"acc", r.acc}, {"per_seed", r.per_seed}});
  }
  json j;
  j["strategy"] = report.strategy == AblationStrategy::Retrain ? "retrain" : "forced";
  j["seeds"] = report.seeds;
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string gradcheck_report_json(const std::vector<SeededGradReport>& reports) {
  json runs = json::array();
  bool pass = !reports.empty();
  double worst = 0.0;
  for (const auto& [seed, rep] : reports) {
    json tensors = json::array();
    for (const auto& t : rep.tensors) {
      tensors.push_back({{"name", t.name},
                         {"entries", t.entries},
                         {"max_rel_error", t.max_rel_error},
                         {"max_abs_error", t.max_abs_error},
                         {"worst_index", t.worst_index}});
    }
    runs.push_back({{"seed", seed},
                    {"pass", rep.pass},
                    {"eps", rep.eps},
                    {"tol", rep.tolerance},
                    {"max_rel_error", rep.max_rel_error()},
                    {"tensors", std::move(tensors)}});
    pass = pass && rep.pass;
    worst = std::max(worst, rep.max_rel_error());
  }
  json j;
  j["pass"] = pass;
  j["max_rel_error"] = worst;
  j["runs"] = std::move(runs);
  return j.dump(2) + "\n";
}

}  // namespace cfr
