#include "cfr/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cfr/errors.hpp"
#include "cfr/rng.hpp"

namespace cfr {

using nlohmann::json;

std::size_t SampleBundle::target() const {
  if (is_mc()) return candidates.at(gold);
  if (!answer) throw ArgumentError("sample '" + id + "' has no answer");
  return *answer;
}

void SampleBundle::validate() const {
  if (image_features.rows() < 1) throw ArgumentError("sample '" + id + "' has no image regions");
  if (answer.has_value() == is_mc()) {
    throw ArgumentError("sample '" + id + "' must carry either an answer or candidates, not both");
  }
  if (is_mc() && gold >= candidates.size()) {
    throw ArgumentError("sample '" + id + "' gold position " + std::to_string(gold) +
                        " outside " + std::to_string(candidates.size()) + " candidates");
  }
  for (const auto& p : image_predicates) {
    if (p.words.size() != word_count(p.form)) {
      throw ArgumentError("sample '" + id + "' has a malformed predicate");
    }
  }
}

namespace {

SampleBundle sample_from_json(const json& j) {
  SampleBundle s;
  s.id = j.at("id").get<std::string>();
  const auto& feats = j.at("features");
  if (!feats.is_array() || feats.empty()) throw FormatError("features must be a non-empty array");
  const std::size_t cols = feats.at(0).size();
  std::vector<double> data;
  data.reserve(feats.size() * cols);
  for (const auto& row : feats) {
    if (!row.is_array() || row.size() != cols) throw FormatError("ragged feature rows");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  s.image_features = Matrix(feats.size(), cols, std::move(data));
  for (const auto& p : j.at("predicates")) {
    const auto form = form_from_tag(p.at("form").get<std::string>());
    auto words = p.at("words").get<Tokens>();
    if (words.size() != word_count(form)) {
      throw FormatError(std::string("predicate form ") + form_tag(form) + " with " +
                        std::to_string(words.size()) + " words");
    }
    s.image_predicates.emplace_back(std::move(words), form);
  }
  s.question = j.at("question").get<Tokens>();
  const bool has_answer = j.contains("answer");
  const bool has_mc = j.contains("candidates") || j.contains("gold");
  if (has_answer == has_mc) throw FormatError("expected exactly one of 'answer' or 'candidates'+'gold'");
  if (has_answer) {
    s.answer = j.at("answer").get<std::size_t>();
  } else {
    s.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    s.gold = j.at("gold").get<std::size_t>();
    if (s.candidates.empty()) throw FormatError("empty candidate list");
  }
  if (j.contains("human_answers")) s.human_answers = j.at("human_answers").get<std::vector<std::size_t>>();
  try {
    s.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return s;
}

json sample_to_json(const SampleBundle& s) {
  json j;
  j["id"] = s.id;
  json feats = json::array();
  for (std::size_t r = 0; r < s.image_features.rows(); ++r) {
    auto row = s.image_features.row(r);
    feats.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["features"] = std::move(feats);
  json preds = json::array();
  for (const auto& p : s.image_predicates) {
    preds.push_back({{"words", p.words}, {"form", form_tag(p.form)}});
  }
  j["predicates"] = std::move(preds);
  j["question"] = s.question;
  if (s.is_mc()) {
    j["candidates"] = s.candidates;
    j["gold"] = s.gold;
  } else {
    j["answer"] = s.answer.value_or(0);
  }
  if (!s.human_answers.empty()) j["human_answers"] = s.human_answers;
  return j;
}

}  // namespace

std::string serialize_sample(const SampleBundle& s) { return sample_to_json(s).dump(); }

Dataset parse_dataset(const std::string& text, const std::string& source) {
  Dataset out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path.string());
}

void save_dataset(const Dataset& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& s : set) out << serialize_sample(s) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> load_answers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open answer list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void save_answers(const std::filesystem::path& path, const std::vector<std::string>& answers) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write answer list " + path.string());
  for (const auto& a : answers) out << a << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void SynthConfig::validate() const {
  if (objects < 2 || attrs < 2) throw ArgumentError("synthetic vocabularies need at least 2 words");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0)) {
    throw ArgumentError("distractor rate must lie in [0, 1]");
  }
  if (!(noise >= 0.0)) throw ArgumentError("noise must be non-negative");
  if (min_rois < 1 || max_rois < min_rois) throw ArgumentError("invalid region count range");
  if (max_rois > objects) throw ArgumentError("max_rois cannot exceed the object vocabulary");
  if (embed_dim < 1) throw ArgumentError("embedding dim must be positive");
}

namespace {

const char* const kObjectNames[] = {"cat",   "dog",   "car",  "tree", "cup",  "ball",
                                    "book",  "chair", "lamp", "shoe", "bird", "boat",
                                    "table", "kite",  "bag",  "bike"};
const char* const kAttrNames[] = {"red",    "blue",   "green", "yellow", "black", "white",
                                  "orange", "purple", "pink",  "brown",  "gray",  "silver"};
const char* const kTemplate[] = {"what", "color", "is", "the"};
const char* const kStopWords[] = {"a",   "an",  "and", "are", "does", "in", "is",  "it",
                                  "of",  "on",  "the", "there", "this", "to", "what", "which"};

template <std::size_t N>
std::vector<std::string> make_names(const char* const (&pool)[N], std::size_t n,
                                    const std::string& fallback) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(i < N ? std::string(pool[i]) : fallback + std::to_string(i));
  }
  return out;
}

// Unit vectors; the first min(|V|, dim) are mutually orthogonal.
Matrix orthogonalish(std::size_t n, std::size_t dim, Rng& rng) {
  Matrix m(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    for (double& v : r) v = rng.normal();
    if (i < dim) {
      for (std::size_t j = 0; j < i; ++j) {
        auto q = m.row(j);
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += r[k] * q[k];
        for (std::size_t k = 0; k < dim; ++k) r[k] -= dot * q[k];
      }
    }
    double norm = 0.0;
    for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : r) v /= norm;
  }
  return m;
}

void write_region(Matrix& features, std::size_t r, std::size_t obj, std::size_t attr,
                  const SynthConfig& cfg, Rng& rng) {
  auto row = features.row(r);
  row[obj] = 1.0;
  row[cfg.objects + attr] = 1.0;
  if (cfg.noise > 0.0) {
    for (double& v : row) v += cfg.noise * rng.normal();
  }
}

SampleBundle make_sample(const SynthConfig& cfg, const std::vector<std::string>& objects,
                         const std::vector<std::string>& attrs, const std::string& id, Rng& rng) {
  const std::size_t n_real = cfg.min_rois + rng.below(cfg.max_rois - cfg.min_rois + 1);
  std::vector<std::size_t> pool(cfg.objects);
  std::iota(pool.begin(), pool.end(), 0);
  rng.shuffle(pool.begin(), pool.end());

  struct Region {
    std::size_t obj, attr;
    bool real;
  };
  std::vector<Region> regions;
  std::vector<bool> attr_used(cfg.attrs, false);
  for (std::size_t r = 0; r < n_real; ++r) {
    const std::size_t attr = rng.below(cfg.attrs);
    regions.push_back({pool[r], attr, true});
    attr_used[attr] = true;
  }
  std::vector<std::size_t> unused;
  for (std::size_t a = 0; a < cfg.attrs; ++a) {
    if (!attr_used[a]) unused.push_back(a);
  }
  if (cfg.distractor_rate > 0.0 && !unused.empty()) {
    for (std::size_t r = 0; r < n_real; ++r) {
      if (rng.uniform() < cfg.distractor_rate) {
        regions.push_back({regions[r].obj, unused[rng.below(unused.size())], false});
      }
    }
  }
  const std::size_t asked = rng.below(n_real);
  const Region target = regions[asked];
  rng.shuffle(regions.begin(), regions.end());

  SampleBundle s;
  s.id = id;
  s.image_features = Matrix(regions.size(), cfg.objects + cfg.attrs);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    write_region(s.image_features, r, regions[r].obj, regions[r].attr, cfg, rng);
    if (regions[r].real && rng.uniform() >= cfg.dropout) {
      s.image_predicates.emplace_back(Tokens{attrs[regions[r].attr], objects[regions[r].obj]},
                                      PredicateForm::AttrObj);
    }
  }
  s.question = {kTemplate[0], kTemplate[1], kTemplate[2], kTemplate[3], objects[target.obj]};
  s.answer = target.attr;
  return s;
}

}  // namespace

SyntheticData gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticData d;
  d.objects = make_names(kObjectNames, cfg.objects, "object");
  d.answers = make_names(kAttrNames, cfg.attrs, "attr");
  d.stop_words = WordSet(std::begin(kStopWords), std::end(kStopWords));

  std::vector<std::string> vocab = d.objects;
  vocab.insert(vocab.end(), d.answers.begin(), d.answers.end());
  vocab.insert(vocab.end(), std::begin(kTemplate), std::end(kTemplate));
  d.words = make_word_vectors(vocab, orthogonalish(vocab.size(), cfg.embed_dim, rng));

  for (std::size_t i = 0; i < cfg.train_n; ++i) {
    d.train.push_back(make_sample(cfg, d.objects, d.answers, "train-" + std::to_string(i), rng));
  }
  for (std::size_t i = 0; i < cfg.val_n; ++i) {
    d.val.push_back(make_sample(cfg, d.objects, d.answers, "val-" + std::to_string(i), rng));
  }
  return d;
}

const std::string& synthetic_question_object(const SampleBundle& s) {
  if (s.question.size() != std::size(kTemplate) + 1) {
    throw ArgumentError("sample '" + s.id + "' is not a generated question");
  }
  return s.question.back();
}

}  // namespace cfr
