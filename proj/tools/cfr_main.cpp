// cfr: command-line front end over the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfr/cfr.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kCheckFailed = 3 };

struct Failure {
  int code;
  std::string message;
};

int exit_code(cfr_status s) { return s == CFR_ERR_ARGUMENT ? kUsage : kData; }

void check(cfr_status s, const std::string& context) {
  if (s != CFR_OK) {
    throw Failure{exit_code(s), context + ": " + cfr_status_name(s) + ": " + cfr_last_error()};
  }
}

struct Deleter {
  void operator()(cfr_dataset* p) const { cfr_dataset_free(p); }
  void operator()(cfr_embeddings* p) const { cfr_embeddings_free(p); }
  void operator()(cfr_model* p) const { cfr_model_free(p); }
  void operator()(char* p) const { cfr_free_string(p); }
};
using DatasetPtr = std::unique_ptr<cfr_dataset, Deleter>;
using WordsPtr = std::unique_ptr<cfr_embeddings, Deleter>;
using ModelPtr = std::unique_ptr<cfr_model, Deleter>;
using StringPtr = std::unique_ptr<char, Deleter>;

DatasetPtr load_dataset(const std::string& path) {
  cfr_dataset* d = nullptr;
  check(cfr_dataset_load(path.c_str(), &d), "loading " + path);
  return DatasetPtr(d);
}

WordsPtr load_words(const std::string& path) {
  cfr_embeddings* w = nullptr;
  check(cfr_embeddings_load(path.c_str(), &w), "loading " + path);
  for (std::size_t i = 0; i < cfr_embeddings_warning_count(w); ++i) {
    std::cerr << "warning: " << path << ": " << cfr_embeddings_warning(w, i) << "\n";
  }
  return WordsPtr(w);
}

ModelPtr load_model(const std::string& path) {
  cfr_model* m = nullptr;
  check(cfr_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw Failure{kData, "cannot write " + path.string()};
}

// Paths resolved from --data DIR unless given one by one.
struct DataPaths {
  std::string dir;
  std::string train, val, embeddings, answers, stop_words;

  void add_to(CLI::App* cmd, bool with_train) {
    cmd->add_option("--data", dir, "Directory written by gen-synth");
    if (with_train) cmd->add_option("--train", train, "Training JSON-Lines file");
    cmd->add_option("--val", val, "Validation JSON-Lines file");
    cmd->add_option("--embeddings", embeddings, "Word vector text file");
    if (with_train) {
      cmd->add_option("--answers", answers, "Answer vocabulary, one per line");
      cmd->add_option("--stopwords", stop_words, "Stop-word list, one per line");
    }
  }

  static std::string pick(const std::string& given, const std::string& dir, const char* file,
                          bool optional_file) {
    if (!given.empty()) return given;
    if (dir.empty()) return {};
    const fs::path p = fs::path(dir) / file;
    if (optional_file && !fs::exists(p)) return {};
    return p.string();
  }

  void resolve() {
    train = pick(train, dir, "train.jsonl", false);
    val = pick(val, dir, "val.jsonl", false);
    embeddings = pick(embeddings, dir, "embeddings.txt", false);
    answers = pick(answers, dir, "answers.txt", true);
    stop_words = pick(stop_words, dir, "stopwords.txt", true);
  }

  static const std::string& need(const std::string& v, const char* flag) {
    if (v.empty()) throw Failure{kUsage, std::string("missing ") + flag + " (or --data)"};
    return v;
  }
};

struct TrainFlags {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 7;
  std::size_t d = 32;
  std::size_t min_freq = 10;
  std::string softmax_axis = "flat";
  std::string head_mode = "full";
  bool channel_scale = false;
  bool no_bias = false;

  void add_to(CLI::App* cmd, bool with_head_mode) {
    cmd->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--seed", seed, "Initialisation and shuffling seed")->capture_default_str();
    cmd->add_option("--d", d, "Hidden width of every learned projection")->capture_default_str();
    cmd->add_option("--min-freq", min_freq, "Question words rarer than this are filtered")
        ->capture_default_str();
    cmd->add_option("--softmax-axis", softmax_axis, "Attention normalisation")
        ->check(CLI::IsMember({"flat", "rows"}))
        ->capture_default_str();
    if (with_head_mode) {
      cmd->add_option("--head-mode", head_mode, "Answer head paths")
          ->check(CLI::IsMember({"full", "coarse_only", "fine_only"}))
          ->capture_default_str();
    }
    cmd->add_flag("--channel-scale", channel_scale, "Learn the filter channel scale");
    cmd->add_flag("--no-bias", no_bias, "Drop biases from the filter projections");
  }

  json options(const DataPaths& paths) const {
    json o = {{"epochs", epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"seed", seed},
              {"d", d},
              {"min_freq", min_freq},
              {"softmax_axis", softmax_axis},
              {"head_mode", head_mode},
              {"learnable_channel_scale", channel_scale},
              {"projection_bias", !no_bias}};
    if (!paths.answers.empty()) o["answers_file"] = paths.answers;
    if (!paths.stop_words.empty()) o["stop_words_file"] = paths.stop_words;
    return o;
  }
};

// ---- gen-synth -------------------------------------------------------------

struct GenSynth {
  std::size_t objects = 12, attrs = 6, min_rois = 2, max_rois = 5;
  double noise = 0.05, dropout = 0.1, distractors = 0.0;
  std::size_t train_n = 2000, val_n = 500, embed_dim = 32;
  std::uint64_t seed = 7;
  std::string out;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--objects", objects, "Object vocabulary size")->capture_default_str();
    cmd->add_option("--attrs", attrs, "Attribute vocabulary size = answer count")->capture_default_str();
    cmd->add_option("--min-rois", min_rois, "Fewest objects per scene")->capture_default_str();
    cmd->add_option("--max-rois", max_rois, "Most objects per scene")->capture_default_str();
    cmd->add_option("--noise", noise, "Std-dev of Gaussian feature noise")->capture_default_str();
    cmd->add_option("--dropout", dropout, "Probability a predicate is dropped")->capture_default_str();
    cmd->add_option("--distractors", distractors,
                    "Probability an object gets a same-class region with a wrong attribute")
        ->capture_default_str();
    cmd->add_option("--train-n", train_n, "Training samples")->capture_default_str();
    cmd->add_option("--val-n", val_n, "Validation samples")->capture_default_str();
    cmd->add_option("--embed-dim", embed_dim, "Word vector width")->capture_default_str();
    cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();
    cmd->add_option("--out", out, "Output directory")->required();
  }

  int run() const {
    const json o = {{"objects", objects},     {"attrs", attrs},     {"min_rois", min_rois},
                    {"max_rois", max_rois},   {"noise", noise},     {"dropout", dropout},
                    {"distractor_rate", distractors}, {"train_n", train_n}, {"val_n", val_n},
                    {"embed_dim", embed_dim}, {"seed", seed}};
    check(cfr_synth_generate(o.dump().c_str(), out.c_str()), "gen-synth");
    std::cerr << "wrote " << train_n << " train / " << val_n << " val samples to " << out << "\n";
    return kOk;
  }
};

// ---- train -----------------------------------------------------------------

struct Train {
  DataPaths paths;
  TrainFlags flags;
  std::string out = "run";
  std::string checkpoint, history;
  bool quiet = false;

  void add_to(CLI::App* cmd) {
    paths.add_to(cmd, true);
    flags.add_to(cmd, true);
    cmd->add_option("--out", out, "Run directory for model.ckpt and history.csv")->capture_default_str();
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint path (overrides --out)");
    cmd->add_option("--history", history, "History CSV path (overrides --out)");
    cmd->add_flag("--quiet", quiet, "No per-epoch progress on stderr");
  }

  static void progress(std::size_t epoch, double loss, double val_acc, void*) {
    std::fprintf(stderr, "epoch %3zu  loss %.6f  val_acc %.4f\n", epoch, loss, val_acc);
  }

  int run() {
    paths.resolve();
    auto train = load_dataset(DataPaths::need(paths.train, "--train"));
    DatasetPtr val;
    if (!paths.val.empty()) val = load_dataset(paths.val);
    auto words = load_words(DataPaths::need(paths.embeddings, "--embeddings"));

    if (checkpoint.empty() || history.empty()) {
      std::error_code ec;
      fs::create_directories(out, ec);
      if (ec) throw Failure{kData, "cannot create " + out + ": " + ec.message()};
    }
    const std::string ck = checkpoint.empty() ? (fs::path(out) / "model.ckpt").string() : checkpoint;
    const std::string hist = history.empty() ? (fs::path(out) / "history.csv").string() : history;

    cfr_model* model = nullptr;
    char* csv = nullptr;
    check(cfr_train(train.get(), val.get(), words.get(), flags.options(paths).dump().c_str(),
                    quiet ? nullptr : &Train::progress, nullptr, &model, &csv),
          "train");
    ModelPtr model_owner(model);
    StringPtr csv_owner(csv);
    check(cfr_model_save(model, ck.c_str()), "saving " + ck);
    write_file(hist, csv);
    std::cerr << "checkpoint " << ck << "\nhistory " << hist << "\n";
    return kOk;
  }
};

// ---- eval ------------------------------------------------------------------

struct Eval {
  std::string checkpoint, dataset, embeddings, data, head_mode;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    cmd->add_option("--dataset", dataset, "JSON-Lines file to score");
    cmd->add_option("--data", data, "Directory written by gen-synth (uses val.jsonl)");
    cmd->add_option("--embeddings", embeddings, "Word vector text file");
    cmd->add_option("--head-mode", head_mode, "Override the stored head mode")
        ->check(CLI::IsMember({"full", "coarse_only", "fine_only"}));
  }

  int run() {
    const std::string ds = DataPaths::need(DataPaths::pick(dataset, data, "val.jsonl", false), "--dataset");
    const std::string emb =
        DataPaths::need(DataPaths::pick(embeddings, data, "embeddings.txt", false), "--embeddings");
    auto model = load_model(checkpoint);
    if (!head_mode.empty()) check(cfr_model_set_head_mode(model.get(), head_mode.c_str()), "head mode");
    auto set = load_dataset(ds);
    auto words = load_words(emb);
    char* report = nullptr;
    check(cfr_evaluate(model.get(), set.get(), words.get(), &report), "eval");
    StringPtr owner(report);
    std::cout << report;
    return kOk;
  }
};

// ---- ablate ----------------------------------------------------------------

struct Ablate {
  DataPaths paths;
  TrainFlags flags;
  std::string mode = "retrain";
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  void add_to(CLI::App* cmd) {
    paths.add_to(cmd, true);
    flags.add_to(cmd, false);
    cmd->add_option("--mode", mode, "retrain: one model per row; forced: pin the weights of one model")
        ->check(CLI::IsMember({"retrain", "forced"}))
        ->capture_default_str();
    cmd->add_option("--seeds", seeds, "Seeds to average over")->capture_default_str();
  }

  int run() {
    paths.resolve();
    auto train = load_dataset(DataPaths::need(paths.train, "--train"));
    auto val = load_dataset(DataPaths::need(paths.val, "--val"));
    auto words = load_words(DataPaths::need(paths.embeddings, "--embeddings"));
    json o = flags.options(paths);
    o.erase("head_mode");
    o["strategy"] = mode;
    o["seeds"] = seeds;
    char* report = nullptr;
    check(cfr_ablate(train.get(), val.get(), words.get(), o.dump().c_str(), &report), "ablate");
    StringPtr owner(report);
    const json r = json::parse(report);
    for (const auto& row : r["rows"]) {
      std::fprintf(stderr, "%-12s %.4f\n", row["mode"].get<std::string>().c_str(), row["acc"].get<double>());
    }
    std::cout << report;
    return kOk;
  }
};

// ---- gradcheck -------------------------------------------------------------

struct Gradcheck {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double eps = 1e-5;
  double tol = 1e-4;
  std::size_t batch = 4;
  std::string softmax_axis = "flat";
  bool channel_scale = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seeds,--seed", seeds, "Random seeds, one check each")->capture_default_str();
    cmd->add_option("--eps", eps, "Central-difference step")->capture_default_str();
    cmd->add_option("--tol", tol, "Largest accepted relative error")->capture_default_str();
    cmd->add_option("--batch", batch, "Samples in the random batch")->capture_default_str();
    cmd->add_option("--softmax-axis", softmax_axis, "Attention normalisation")
        ->check(CLI::IsMember({"flat", "rows"}))
        ->capture_default_str();
    cmd->add_flag("--channel-scale", channel_scale, "Include a learnable filter channel scale");
  }

  int run() const {
    const json o = {{"seeds", seeds}, {"eps", eps}, {"tol", tol}, {"batch", batch},
                    {"softmax_axis", softmax_axis}, {"learnable_channel_scale", channel_scale}};
    int passed = 0;
    char* report = nullptr;
    check(cfr_gradcheck(o.dump().c_str(), &passed, &report), "gradcheck");
    StringPtr owner(report);
    std::cout << report;
    std::cerr << (passed ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return passed ? kOk : kCheckFailed;
  }
};

// ---- explain ---------------------------------------------------------------

struct Explain {
  std::string checkpoint, dataset, data, embeddings, id, out, csv;
  std::optional<std::size_t> index;
  std::size_t top_k = 5;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    cmd->add_option("--dataset", dataset, "JSON-Lines file holding the sample");
    cmd->add_option("--data", data, "Directory written by gen-synth (uses val.jsonl)");
    cmd->add_option("--embeddings", embeddings, "Word vector text file");
    auto* by_id = cmd->add_option("--id", id, "Sample id");
    auto* by_index = cmd->add_option("--index", index, "Sample position in the file");
    by_id->excludes(by_index);
    cmd->add_option("--top-k", top_k, "Answers listed")->capture_default_str();
    cmd->add_option("--out", out, "Write the JSON here instead of stdout");
    cmd->add_option("--csv", csv, "Also write a long-format CSV for plotting");
  }

  int run() {
    const std::string ds = DataPaths::need(DataPaths::pick(dataset, data, "val.jsonl", false), "--dataset");
    const std::string emb =
        DataPaths::need(DataPaths::pick(embeddings, data, "embeddings.txt", false), "--embeddings");
    if (id.empty() && !index) throw Failure{kUsage, "explain needs --id or --index"};
    auto model = load_model(checkpoint);
    auto set = load_dataset(ds);
    auto words = load_words(emb);
    std::size_t at = index.value_or(0);
    if (!id.empty()) check(cfr_dataset_find(set.get(), id.c_str(), &at), "explain");
    char* js = nullptr;
    char* table = nullptr;
    check(cfr_explain(model.get(), set.get(), at, words.get(), top_k, &js,
                      csv.empty() ? nullptr : &table),
          "explain");
    StringPtr js_owner(js);
    StringPtr table_owner(table);
    if (out.empty()) {
      std::cout << js;
    } else {
      write_file(out, js);
    }
    if (!csv.empty()) write_file(csv, table);
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine reasoning for visual question answering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cfr_version());

  GenSynth gen;
  Train train;
  Eval eval;
  Ablate ablate;
  Gradcheck grad;
  Explain explain;
  auto* c_gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  auto* c_train = app.add_subcommand("train", "Train a model");
  auto* c_eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  auto* c_ablate = app.add_subcommand("ablate", "Compare coarse-only, fine-only and full heads");
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  auto* c_explain = app.add_subcommand("explain", "Export the explanation of one prediction");
  gen.add_to(c_gen);
  train.add_to(c_train);
  eval.add_to(c_eval);
  ablate.add_to(c_ablate);
  grad.add_to(c_grad);
  explain.add_to(c_explain);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (c_gen->parsed()) return gen.run();
    if (c_train->parsed()) return train.run();
    if (c_eval->parsed()) return eval.run();
    if (c_ablate->parsed()) return ablate.run();
    if (c_grad->parsed()) return grad.run();
    if (c_explain->parsed()) return explain.run();
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
