#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfr/matrix.hpp"

namespace cfr {

inline constexpr const char* kUnknownWord = "<unk>";

using WordSet = std::set<std::string>;
using Tokens = std::vector<std::string>;

// Bijective word <-> index map with index 0 reserved for <unk>, plus a
// corpus frequency table used for rare-word filtering.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary from_corpus(std::span<const Tokens> questions);

  // Returns the index of `word`, inserting it if absent.
  std::size_t add(const std::string& word);
  void count(const std::string& word, std::size_t n = 1);

  std::size_t index_of(const std::string& word) const;  // 0 when unknown
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  const std::string& word(std::size_t index) const { return words_.at(index); }
  std::size_t size() const { return words_.size(); }
  std::size_t frequency(const std::string& word) const;
  const std::map<std::string, std::size_t>& frequencies() const { return freq_; }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> freq_;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  Matrix vectors;  // |V| x dim, row 0 (<unk>) is zero
};

struct WordVectors {
  Vocabulary vocab;
  EmbeddingTable table;
  std::vector<std::string> warnings;  // non-fatal issues seen while loading

  std::size_t dim() const { return table.dim; }
  std::span<const double> lookup(const std::string& word) const;
};

enum class PredicateForm { Obj, AttrObj, ObjRelObj };

std::size_t word_count(PredicateForm form);
const char* form_tag(PredicateForm form);  // "obj" | "attr_obj" | "obj_rel_obj"
PredicateForm form_from_tag(const std::string& tag);  // throws FormatError

struct Predicate {
  Tokens words;
  PredicateForm form = PredicateForm::Obj;

  // Throws ArgumentError unless words.size() matches the form.
  Predicate(Tokens words, PredicateForm form);
  static Predicate unknown() { return Predicate({kUnknownWord}, PredicateForm::Obj); }

  bool operator==(const Predicate&) const = default;
};

// Lowercases, strips punctuation (apostrophes inside words survive) and
// splits on whitespace.
Tokens tokenize(const std::string& question);

// stop_list ∪ { w : freq(w) < min_freq }
WordSet build_filter(const WordSet& stop_list, const Vocabulary& vocab, std::size_t min_freq = 10);

// Surviving tokens in order, each as a one-word predicate; a lone <unk>
// predicate when nothing survives.
std::vector<Predicate> question_predicates(std::span<const std::string> tokens,
                                           const WordSet& filter);

// Row i = mean of the word vectors of predicate i.
Matrix embed_predicates(std::span<const Predicate> preds, const WordVectors& words);

// Row t = vector of token t; an empty token list becomes a single <unk> row.
Matrix embed_tokens(std::span<const std::string> tokens, const WordVectors& words);

// Text format: one `word v1 ... vd` entry per line.
WordVectors load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const WordVectors& words);
WordVectors make_word_vectors(const std::vector<std::string>& words, const Matrix& vectors);

// Newline-delimited word list; blank lines and surrounding whitespace ignored.
WordSet load_word_list(const std::filesystem::path& path);
void save_word_list(const std::filesystem::path& path, const WordSet& words);

}  // namespace cfr
