#include "cfr/text.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cfr/errors.hpp"

namespace cfr {

Vocabulary::Vocabulary() { add(kUnknownWord); }

Vocabulary Vocabulary::from_corpus(std::span<const Tokens> questions) {
  Vocabulary v;
  for (const auto& q : questions) {
    for (const auto& w : q) {
      v.add(w);
      v.count(w);
    }
  }
  return v;
}

std::size_t Vocabulary::add(const std::string& word) {
  auto [it, inserted] = index_.emplace(word, words_.size());
  if (inserted) words_.push_back(word);
  return it->second;
}

void Vocabulary::count(const std::string& word, std::size_t n) { freq_[word] += n; }

std::size_t Vocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? 0 : it->second;
}

std::size_t Vocabulary::frequency(const std::string& word) const {
  auto it = freq_.find(word);
  return it == freq_.end() ? 0 : it->second;
}

std::span<const double> WordVectors::lookup(const std::string& word) const {
  return table.vectors.row(vocab.index_of(word));
}

std::size_t word_count(PredicateForm form) {
  switch (form) {
    case PredicateForm::Obj: return 1;
    case PredicateForm::AttrObj: return 2;
    case PredicateForm::ObjRelObj: return 3;
  }
  return 0;
}

const char* form_tag(PredicateForm form) {
  switch (form) {
    case PredicateForm::Obj: return "obj";
    case PredicateForm::AttrObj: return "attr_obj";
    case PredicateForm::ObjRelObj: return "obj_rel_obj";
  }
  return "?";
}

PredicateForm form_from_tag(const std::string& tag) {
  if (tag == "obj") return PredicateForm::Obj;
  if (tag == "attr_obj") return PredicateForm::AttrObj;
  if (tag == "obj_rel_obj") return PredicateForm::ObjRelObj;
  throw FormatError("unknown predicate form '" + tag + "'");
}

Predicate::Predicate(Tokens w, PredicateForm f) : words(std::move(w)), form(f) {
  if (words.size() != word_count(form)) {
    throw ArgumentError(std::string("predicate form ") + form_tag(form) + " needs " +
                        std::to_string(word_count(form)) + " words, got " +
                        std::to_string(words.size()));
  }
}

Tokens tokenize(const std::string& question) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    // apostrophes only survive between word characters
    std::size_t b = cur.find_first_not_of('\'');
    std::size_t e = cur.find_last_not_of('\'');
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
    cur.clear();
  };
  for (unsigned char c : question) {
    if (std::isspace(c)) {
      flush();
    } else if (c == '\'') {
      cur.push_back('\'');
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

WordSet build_filter(const WordSet& stop_list, const Vocabulary& vocab, std::size_t min_freq) {
  WordSet out = stop_list;
  for (const auto& [word, n] : vocab.frequencies()) {
    if (n < min_freq) out.insert(word);
  }
  return out;
}

std::vector<Predicate> question_predicates(std::span<const std::string> tokens,
                                           const WordSet& filter) {
  std::vector<Predicate> preds;
  for (const auto& t : tokens) {
    if (!filter.count(t)) preds.emplace_back(Tokens{t}, PredicateForm::Obj);
  }
  if (preds.empty()) preds.push_back(Predicate::unknown());
  return preds;
}

Matrix embed_predicates(std::span<const Predicate> preds, const WordVectors& words) {
  if (preds.empty()) throw ArgumentError("embed_predicates: empty predicate list");
  Matrix out(preds.size(), words.dim());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto row = out.row(i);
    const double scale = 1.0 / static_cast<double>(preds[i].words.size());
    for (const auto& w : preds[i].words) {
      auto v = words.lookup(w);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += scale * v[k];
    }
  }
  return out;
}

Matrix embed_tokens(std::span<const std::string> tokens, const WordVectors& words) {
  if (tokens.empty()) return Matrix(1, words.dim());
  Matrix out(tokens.size(), words.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto v = words.lookup(tokens[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

namespace {

std::vector<double> parse_vector(const std::string& rest, std::size_t line_no,
                                 const std::filesystem::path& path) {
  std::vector<double> values;
  const char* p = rest.data();
  const char* end = rest.data() + rest.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p == end) break;
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    values.push_back(v);
    p = next;
  }
  return values;
}

}  // namespace

WordVectors load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file " + path.string());

  WordVectors wv;
  std::vector<std::vector<double>> rows;  // indexed by vocab index - 1
  std::size_t dim = 0;
  bool have_dim = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    const auto sep = line.find_first_of(" \t", start);
    const std::string word = line.substr(start, sep == std::string::npos ? sep : sep - start);
    auto values = parse_vector(sep == std::string::npos ? "" : line.substr(sep), line_no, path);
    if (values.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": word without a vector");
    }
    if (!have_dim) {
      dim = values.size();
      have_dim = true;
    } else if (values.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " + std::to_string(values.size()));
    }
    if (word == kUnknownWord) {
      wv.warnings.push_back("line " + std::to_string(line_no) + ": reserved word <unk> ignored");
      continue;
    }
    if (wv.vocab.contains(word)) {
      wv.warnings.push_back("line " + std::to_string(line_no) + ": duplicate word '" + word +
                            "', keeping the last vector");
      rows[wv.vocab.index_of(word) - 1] = std::move(values);
    } else {
      wv.vocab.add(word);
      rows.push_back(std::move(values));
    }
  }
  wv.table.dim = dim;
  wv.table.vectors = Matrix(wv.vocab.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), wv.table.vectors.row(i + 1).begin());
  }
  return wv;
}

void save_embeddings(const std::filesystem::path& path, const WordVectors& words) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embeddings file " + path.string());
  char buf[32];
  for (std::size_t i = 1; i < words.vocab.size(); ++i) {
    out << words.vocab.word(i);
    for (double v : words.table.vectors.row(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

WordVectors make_word_vectors(const std::vector<std::string>& words, const Matrix& vectors) {
  if (vectors.rows() != words.size()) {
    throw ShapeError("make_word_vectors: " + std::to_string(words.size()) + " words but " +
                     std::to_string(vectors.rows()) + " vectors");
  }
  WordVectors wv;
  wv.table.dim = vectors.cols();
  wv.table.vectors = Matrix(words.size() + 1, vectors.cols());
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == kUnknownWord || wv.vocab.contains(words[i])) {
      throw ArgumentError("make_word_vectors: duplicate or reserved word '" + words[i] + "'");
    }
    wv.vocab.add(words[i]);
    std::copy(vectors.row(i).begin(), vectors.row(i).end(), wv.table.vectors.row(i + 1).begin());
  }
  return wv;
}

WordSet load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word list " + path.string());
  WordSet words;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    words.insert(line.substr(b, e - b + 1));
  }
  return words;
}

void save_word_list(const std::filesystem::path& path, const WordSet& words) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write word list " + path.string());
  for (const auto& w : words) out << w << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cfr
