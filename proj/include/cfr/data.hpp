#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfr/matrix.hpp"
#include "cfr/text.hpp"

namespace cfr {

// One VQA instance. Exactly one of `answer` (free-form) or `candidates` +
// `gold` (multiple choice) is populated.
struct SampleBundle {
  std::string id;
  Matrix image_features;  // n_i x d_i
  std::vector<Predicate> image_predicates;
  Tokens question;
  std::optional<std::size_t> answer;
  std::vector<std::size_t> candidates;
  std::size_t gold = 0;
  std::vector<std::size_t> human_answers;  // optional, consensus scoring only

  bool is_mc() const { return !candidates.empty(); }
  // Global answer index the sample is labelled with.
  std::size_t target() const;
  // Throws ArgumentError when an invariant is broken.
  void validate() const;

  bool operator==(const SampleBundle&) const = default;
};

using Dataset = std::vector<SampleBundle>;

// JSON-Lines, one sample per line:
// {"id", "features": [[...]], "predicates": [{"words": [...], "form": "obj|attr_obj|obj_rel_obj"}],
//  "question": [...], "answer": idx}  or  {..., "candidates": [...], "gold": pos}
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& set, const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text, const std::string& source = "<memory>");
std::string serialize_sample(const SampleBundle& s);

std::vector<std::string> load_answers(const std::filesystem::path& path);
void save_answers(const std::filesystem::path& path, const std::vector<std::string>& answers);

// Scenes of distinct objects, each carrying one attribute; the question asks
// for the attribute of one object in the scene.
struct SynthConfig {
  std::size_t objects = 12;
  std::size_t attrs = 6;
  std::size_t min_rois = 2;
  std::size_t max_rois = 5;
  double noise = 0.05;
  double dropout = 0.1;
  // Probability that a real object also gets a hallucinated twin region: same
  // object class, an attribute no real object in the scene has, no predicate.
  double distractor_rate = 0.0;
  std::size_t train_n = 2000;
  std::size_t val_n = 500;
  std::size_t embed_dim = 32;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset val;
  std::vector<std::string> answers;   // attribute words, index = answer id
  std::vector<std::string> objects;   // object words
  WordVectors words;
  WordSet stop_words;
};

SyntheticData gen_synthetic(const SynthConfig& cfg);

// Reads the object word out of a generated question ("what color is the <obj>").
const std::string& synthetic_question_object(const SampleBundle& s);

}  // namespace cfr
