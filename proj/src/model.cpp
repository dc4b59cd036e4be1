#include "cfr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "cfr/errors.hpp"
#include "cfr/gradcheck.hpp"
#include "cfr/ops.hpp"
#include "cfr/rng.hpp"
#include "cfr/tensor_io.hpp"

namespace cfr {

using nlohmann::json;

void CfrConfig::validate() const {
  for (auto [name, v] : {std::pair{"d_word", d_word}, {"d_q", d_q}, {"d_i", d_i}, {"d_p", d_p},
                         {"d_psi", d_psi}, {"d_cg", d_cg}, {"d_fg", d_fg}, {"n_answers", n_answers}}) {
    if (v < 1) throw ArgumentError(std::string("config: ") + name + " must be at least 1");
  }
  if (!answers.empty() && answers.size() != n_answers) {
    throw ArgumentError("config: " + std::to_string(answers.size()) + " answer labels for " +
                        std::to_string(n_answers) + " answers");
  }
}

std::string config_to_json(const CfrConfig& c) {
  json j;
  j["d_word"] = c.d_word;
  j["d_q"] = c.d_q;
  j["d_i"] = c.d_i;
  j["d_p"] = c.d_p;
  j["d_psi"] = c.d_psi;
  j["d_cg"] = c.d_cg;
  j["d_fg"] = c.d_fg;
  j["n_answers"] = c.n_answers;
  j["softmax_axis"] = axis_name(c.softmax_axis);
  j["learnable_channel_scale"] = c.learnable_channel_scale;
  j["projection_bias"] = c.projection_bias;
  j["head_mode"] = mode_name(c.head_mode);
  j["seed"] = c.seed;
  j["answers"] = c.answers;
  j["question_filter"] = c.question_filter;
  return j.dump();
}

CfrConfig config_from_json(const std::string& text) {
  CfrConfig c;
  try {
    const json j = json::parse(text);
    c.d_word = j.at("d_word").get<std::size_t>();
    c.d_q = j.at("d_q").get<std::size_t>();
    c.d_i = j.at("d_i").get<std::size_t>();
    c.d_p = j.at("d_p").get<std::size_t>();
    c.d_psi = j.at("d_psi").get<std::size_t>();
    c.d_cg = j.at("d_cg").get<std::size_t>();
    c.d_fg = j.at("d_fg").get<std::size_t>();
    c.n_answers = j.at("n_answers").get<std::size_t>();
    c.softmax_axis = axis_from_name(j.value("softmax_axis", "flat"));
    c.learnable_channel_scale = j.value("learnable_channel_scale", false);
    c.projection_bias = j.value("projection_bias", true);
    c.head_mode = mode_from_name(j.value("head_mode", "full"));
    c.seed = j.value("seed", std::uint64_t{7});
    c.answers = j.value("answers", std::vector<std::string>{});
    c.question_filter = j.value("question_filter", WordSet{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return c;
}

std::vector<std::string> tensor_names(const CfrParams& params) {
  std::vector<std::string> names;
  for_each_tensor(params, [&](const std::string& n, const Matrix&) { names.push_back(n); });
  return names;
}

std::size_t parameter_count(const CfrParams& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

CfrParams zero_params(const CfrConfig& c) {
  c.validate();
  CfrParams p;
  p.gru = GruParams::zeros(c.d_word, c.d_q);
  p.image_filter =
      FilterParams::zeros(c.d_i, c.d_p, c.d_psi, c.projection_bias, c.learnable_channel_scale);
  p.question_filter =
      FilterParams::zeros(c.d_q, c.d_p, c.d_psi, c.projection_bias, c.learnable_channel_scale);
  p.coarse = BilinearParams::zeros(c.d_q, c.d_i, c.d_cg);
  p.fine = BilinearParams::zeros(c.d_psi, c.d_psi, c.d_fg);
  p.head = HeadParams::zeros(c.d_cg, c.d_fg, c.n_answers);
  return p;
}

bool is_bias_tensor(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "b" || leaf == "bz" || leaf == "br" || leaf == "bn";
}

double glorot_bound(const Matrix& w) {
  return std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
}

CfrParams init_params(const CfrConfig& config, std::uint64_t seed) {
  CfrParams p = zero_params(config);
  Rng rng(seed);
  for_each_tensor(p, [&](const std::string& name, Matrix& m) {
    if (is_bias_tensor(name)) return;
    if (name.ends_with("channel_scale")) {
      m.fill(1.0);
      return;
    }
    const double a = glorot_bound(m);
    for (double& v : m.data()) v = rng.uniform(-a, a);
  });
  return p;
}

namespace {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(name) + ": " + e.what());
  }
}

struct ForwardTrace {
  GruTrace gru;
  std::vector<Predicate> question_predicates;
  std::optional<FilterTrace> image;
  std::optional<FilterTrace> question;
  std::optional<FusionTrace> coarse;
  std::optional<FusionTrace> fine;
  HeadTrace head;
};

ForwardTrace run_forward(const SampleBundle& s, const CfrParams& p, const CfrConfig& c,
                         const WordTables& tables) {
  if (!tables.question || !tables.predicate) throw ArgumentError("forward: word tables not set");
  if (s.image_features.cols() != c.d_i) {
    throw ShapeError("input: sample '" + s.id + "' has image features " +
                     s.image_features.shape().str() + " but the model expects d_i=" +
                     std::to_string(c.d_i));
  }
  ForwardTrace tr;
  tr.gru = stage("question encoder", [&] {
    if (tables.question->dim() != p.gru.input_dim()) {
      throw ShapeError("embedding dim " + std::to_string(tables.question->dim()) +
                       " does not match GRU input dim " + std::to_string(p.gru.input_dim()));
    }
    return gru_forward(embed_tokens(s.question, *tables.question), p.gru);
  });
  const Matrix& f_q = tr.gru.hidden;
  const Matrix& f_i = s.image_features;

  if (c.head_mode != HeadMode::FineOnly) {
    tr.coarse = stage("coarse fusion", [&] { return fusion_forward(f_q, f_i, p.coarse, c.softmax_axis); });
  }
  if (c.head_mode != HeadMode::CoarseOnly) {
    const auto image_preds = s.image_predicates.empty()
                                 ? std::vector<Predicate>{Predicate::unknown()}
                                 : s.image_predicates;
    tr.question_predicates = question_predicates(s.question, c.question_filter);
    tr.image = stage("image filter", [&] {
      return filter_forward(f_i, embed_predicates(image_preds, *tables.predicate), p.image_filter);
    });
    tr.question = stage("question filter", [&] {
      return filter_forward(f_q, embed_predicates(tr.question_predicates, *tables.predicate),
                            p.question_filter);
    });
    tr.fine = stage("fine fusion", [&] {
      return fusion_forward(tr.question->out.psi, tr.image->out.psi, p.fine, c.softmax_axis);
    });
  }
  tr.head = stage("semantic reasoning", [&] {
    const Vector none;
    return head_forward(tr.coarse ? tr.coarse->out.joint : none,
                        tr.fine ? tr.fine->out.joint : none, p.head, c.head_mode);
  });
  return tr;
}

void run_backward(const ForwardTrace& tr, const CfrParams& p, std::span<const double> d_logits,
                  CfrParams& g) {
  const HeadInputGrads hg = head_backward(tr.head, p.head, d_logits, g.head);
  Matrix d_fq(tr.gru.hidden.rows(), tr.gru.hidden.cols());
  if (tr.coarse) {
    d_fq += fusion_backward(*tr.coarse, p.coarse, hg.dj_cg, g.coarse).dxq;
  }
  if (tr.fine) {
    const FusionInputGrads fg = fusion_backward(*tr.fine, p.fine, hg.dj_fg, g.fine);
    filter_backward(*tr.image, p.image_filter, fg.dxi, g.image_filter);
    d_fq += filter_backward(*tr.question, p.question_filter, fg.dxq, g.question_filter);
  }
  gru_backward(tr.gru, p.gru, d_fq, g.gru);
}

}  // namespace

ForwardResult forward(const SampleBundle& sample, const CfrParams& params, const CfrConfig& config,
                      const WordTables& tables) {
  ForwardTrace tr = run_forward(sample, params, config, tables);
  ForwardResult r;
  r.rho = tr.head.rho;
  Explanation& e = r.explanation;
  if (tr.image) e.psi_hat_image = tr.image->out.psi_hat;
  if (tr.question) e.psi_hat_question = tr.question->out.psi_hat;
  e.question_predicates = std::move(tr.question_predicates);
  if (tr.coarse) e.attention_coarse = std::move(tr.coarse->out.attention);
  if (tr.fine) e.attention_fine = std::move(tr.fine->out.attention);
  e.adaptive = tr.head.weights;
  e.top = top_k(r.rho, std::min<std::size_t>(5, r.rho.size()));
  return r;
}

double sample_loss(const SampleBundle& sample, const CfrParams& params, const CfrConfig& config,
                   const WordTables& tables, CfrParams* grads) {
  const std::size_t target = sample.target();
  if (target >= config.n_answers) {
    throw ArgumentError("sample '" + sample.id + "' target " + std::to_string(target) +
                        " outside " + std::to_string(config.n_answers) + " answers");
  }
  const ForwardTrace tr = run_forward(sample, params, config, tables);
  const double loss = -log_softmax_at(tr.head.logits, target);
  if (grads) {
    Vector d_logits = tr.head.rho;
    d_logits[target] -= 1.0;
    run_backward(tr, params, d_logits, *grads);
  }
  return loss;
}

double batch_loss(std::span<const SampleBundle* const> batch, const CfrParams& params,
                  const CfrConfig& config, const WordTables& tables, CfrParams* grads) {
  if (batch.empty()) throw ArgumentError("batch_loss: empty batch");
  std::optional<CfrParams> local;
  if (grads) local = zeros_like(params);
  double total = 0.0;
  for (const SampleBundle* s : batch) {
    total += sample_loss(*s, params, config, tables, local ? &*local : nullptr);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (grads) {
    std::vector<Matrix*> dst;
    for_each_tensor(*grads, [&](const std::string&, Matrix& m) { dst.push_back(&m); });
    std::size_t k = 0;
    for_each_tensor(*local, [&](const std::string&, Matrix& m) { *dst[k++] += m *= inv; });
  }
  return total * inv;
}

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'F', 'R', 'K'};
constexpr std::uint8_t kCheckpointVersion = 1;

void put_string(std::ostream& out, const std::string& s) {
  le::put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit) {
  const std::size_t n = le::get_u32(in);
  if (n > limit) throw FormatError("string field of " + std::to_string(n) + " bytes exceeds limit");
  std::string s(n, '\0');
  le::get_bytes(in, s.data(), n);
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const CfrParams& params, const CfrConfig& config) {
  out.write(kCheckpointMagic, 4);
  le::put_u8(out, kCheckpointVersion);
  put_string(out, config_to_json(config));
  const auto names = tensor_names(params);
  le::put_u32(out, static_cast<std::uint32_t>(names.size()));
  for_each_tensor(params, [&](const std::string& name, const Matrix& m) {
    put_string(out, name);
    write_matrix(out, m, DType::F64);
  });
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  le::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = le::get_u8(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = config_from_json(get_string(in, std::size_t{1} << 26));
  ck.params = zero_params(ck.config);

  std::vector<std::pair<std::string, Matrix*>> slots;
  for_each_tensor(ck.params, [&](const std::string& n, Matrix& m) { slots.emplace_back(n, &m); });
  std::vector<bool> seen(slots.size(), false);

  const std::size_t count = le::get_u32(in);
  for (std::size_t t = 0; t < count; ++t) {
    const std::string name = get_string(in, 4096);
    Matrix m = read_matrix(in);
    std::size_t k = 0;
    while (k < slots.size() && slots[k].first != name) ++k;
    if (k == slots.size()) throw IntegrityError("checkpoint contains unknown tensor '" + name + "'");
    if (seen[k]) throw IntegrityError("checkpoint repeats tensor '" + name + "'");
    if (m.shape() != slots[k].second->shape()) {
      throw IntegrityError("tensor '" + name + "' is " + m.shape().str() + " but the config implies " +
                           slots[k].second->shape().str());
    }
    *slots[k].second = std::move(m);
    seen[k] = true;
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (!seen[k]) throw IntegrityError("checkpoint is missing tensor '" + slots[k].first + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const CfrParams& params, const CfrConfig& config,
                     const std::filesystem::path& path) {
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(buf, params, config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace cfr
