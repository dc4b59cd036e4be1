#pragma once

// End-to-end operations behind the command-line tool and the C API.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfr/data.hpp"
#include "cfr/gradcheck.hpp"
#include "cfr/model.hpp"
#include "cfr/train.hpp"

namespace cfr {

// Dataset directory layout written by write_synthetic and read by the tools.
namespace layout {
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kVal = "val.jsonl";
inline constexpr const char* kEmbeddings = "embeddings.txt";
inline constexpr const char* kAnswers = "answers.txt";
inline constexpr const char* kStopWords = "stopwords.txt";
}  // namespace layout

void write_synthetic(const SyntheticData& data, const std::filesystem::path& out_dir);

// Model hyper-parameters a caller may override; everything else is derived
// from the data (d_i, n_answers) or the word table (d_word, d_p).
struct ModelOptions {
  std::size_t d_q = 32;
  std::size_t d_psi = 32;
  std::size_t d_cg = 32;
  std::size_t d_fg = 32;
  SoftmaxAxis softmax_axis = SoftmaxAxis::Flat;
  bool learnable_channel_scale = false;
  bool projection_bias = true;
  HeadMode head_mode = HeadMode::Full;
  std::uint64_t seed = 7;
  std::size_t min_freq = 10;
  WordSet stop_words;
  std::vector<std::string> answers;  // empty: n_answers = max label + 1
};

CfrConfig derive_config(const Dataset& train, const WordVectors& words, const ModelOptions& opts);

enum class AblationStrategy { Retrain, Forced };

struct AblationRow {
  HeadMode mode = HeadMode::Full;
  double acc = 0.0;  // mean over seeds
  std::vector<double> per_seed;
};

struct AblationReport {
  AblationStrategy strategy = AblationStrategy::Retrain;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // coarse_only, fine_only, full

  double acc(HeadMode mode) const;
};

// Retrain: one model per (seed, mode) with identical budgets. Forced: one
// full model per seed, evaluated with the adaptive weights pinned per mode.
AblationReport run_ablation(const Dataset& train, const Dataset& val, const WordVectors& words,
                            ModelOptions opts, TrainConfig cfg, AblationStrategy strategy,
                            const std::vector<std::uint64_t>& seeds);

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double eps = kGradEps;
  double tol = kGradTol;
  std::size_t batch = 4;
  SoftmaxAxis softmax_axis = SoftmaxAxis::Flat;
  bool learnable_channel_scale = false;
};

struct SeededGradReport {
  std::uint64_t seed = 0;
  GradReport report;
};

// Full-model check on a tiny synthetic batch per seed, 64-bit throughout.
std::vector<SeededGradReport> gradcheck_model(const GradcheckOptions& opts);

std::string answer_label(const CfrConfig& config, std::size_t index);
std::string explanation_json(const SampleBundle& sample, const ForwardResult& result,
                             const CfrConfig& config, std::size_t k);
std::string explanation_csv(const ForwardResult& result, std::size_t k);
std::string eval_report_json(const EvalReport& report);
std::string ablation_report_json(const AblationReport& report);
std::string gradcheck_report_json(const std::vector<SeededGradReport>& reports);

}  // namespace cfr
