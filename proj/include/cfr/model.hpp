#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "cfr/data.hpp"
#include "cfr/filtering.hpp"
#include "cfr/fusion.hpp"
#include "cfr/gru.hpp"
#include "cfr/head.hpp"
#include "cfr/text.hpp"

namespace cfr {

struct CfrConfig {
  std::size_t d_word = 32;  // question word-embedding dim (GRU input)
  std::size_t d_q = 32;     // GRU hidden size = question feature dim
  std::size_t d_i = 18;     // image region feature dim
  std::size_t d_p = 32;     // predicate embedding dim
  std::size_t d_psi = 32;   // filtered information dim
  std::size_t d_cg = 32;
  std::size_t d_fg = 32;
  std::size_t n_answers = 6;
  SoftmaxAxis softmax_axis = SoftmaxAxis::Flat;
  bool learnable_channel_scale = false;
  bool projection_bias = true;
  HeadMode head_mode = HeadMode::Full;
  std::uint64_t seed = 7;
  std::vector<std::string> answers;  // optional labels, empty or n_answers long
  WordSet question_filter;           // stop words ∪ rare words

  void validate() const;
  bool operator==(const CfrConfig&) const = default;
};

std::string config_to_json(const CfrConfig& config);
CfrConfig config_from_json(const std::string& text);

// Every learnable tensor of the model. Checkpoint names are produced by
// for_each_tensor: gru.*, filter.image.*, filter.question.*, fusion.cg.*,
// fusion.fg.*, head.*
struct CfrParams {
  GruParams gru;
  FilterParams image_filter;
  FilterParams question_filter;
  BilinearParams coarse;
  BilinearParams fine;
  HeadParams head;

  bool operator==(const CfrParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, CfrParams>
void for_each_tensor(P& p, F&& f) {
  for_each_tensor(p.gru, f, "gru.");
  for_each_tensor(p.image_filter, f, "filter.image.");
  for_each_tensor(p.question_filter, f, "filter.question.");
  for_each_tensor(p.coarse, f, "fusion.cg.");
  for_each_tensor(p.fine, f, "fusion.fg.");
  for_each_tensor(p.head, f, "head.");
}

std::vector<std::string> tensor_names(const CfrParams& params);
std::size_t parameter_count(const CfrParams& params);

// All-zero parameters shaped by `config`.
CfrParams zero_params(const CfrConfig& config);

// Glorot-uniform weights, a = sqrt(6 / (rows + cols)); biases zero; a
// learnable channel scale starts at ones. Deterministic in `seed`.
CfrParams init_params(const CfrConfig& config, std::uint64_t seed);
double glorot_bound(const Matrix& weight);
bool is_bias_tensor(const std::string& name);

// Word tables used to embed question tokens and predicates. The two may be
// the same table.
struct WordTables {
  const WordVectors* question = nullptr;
  const WordVectors* predicate = nullptr;

  WordTables() = default;
  explicit WordTables(const WordVectors& both) : question(&both), predicate(&both) {}
  WordTables(const WordVectors& q, const WordVectors& p) : question(&q), predicate(&p) {}
};

struct Explanation {
  Vector psi_hat_image;
  Vector psi_hat_question;
  std::vector<Predicate> question_predicates;
  Matrix attention_coarse;
  Matrix attention_fine;
  AdaptiveWeights adaptive;  // per answer, after normalisation
  std::vector<Ranked> top;   // up to 5
};

struct ForwardResult {
  Vector rho;
  Explanation explanation;
};

ForwardResult forward(const SampleBundle& sample, const CfrParams& params, const CfrConfig& config,
                      const WordTables& tables);

// Cross-entropy of the sample's target; gradients are added into `grads`
// when non-null.
double sample_loss(const SampleBundle& sample, const CfrParams& params, const CfrConfig& config,
                   const WordTables& tables, CfrParams* grads);

// Mean loss over `batch`, gradients averaged the same way.
double batch_loss(std::span<const SampleBundle* const> batch, const CfrParams& params,
                  const CfrConfig& config, const WordTables& tables, CfrParams* grads);

// Checkpoint: "CFRK" | u8 version | u32 len | config JSON | u32 count |
// count x (u32 len | name | CFRT tensor)
struct Checkpoint {
  CfrParams params;
  CfrConfig config;
};

void save_checkpoint(const CfrParams& params, const CfrConfig& config,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const CfrParams& params, const CfrConfig& config);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace cfr
