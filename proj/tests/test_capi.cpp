// Exercises libcfr through the C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstring>
#include <string>
#include <vector>

#include "cfr/cfr.h"
#include "test_util.hpp"

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  cfr_free_string(s);
  return out;
}

struct Corpus {
  TempDir dir;
  cfr_dataset* train = nullptr;
  cfr_dataset* val = nullptr;
  cfr_embeddings* words = nullptr;

  Corpus() {
    const std::string opts = R"({"train_n": 120, "val_n": 30, "embed_dim": 12, "seed": 4})";
    REQUIRE(cfr_synth_generate(opts.c_str(), dir.path.c_str()) == CFR_OK);
    REQUIRE(cfr_dataset_load((dir.path / "train.jsonl").c_str(), &train) == CFR_OK);
    REQUIRE(cfr_dataset_load((dir.path / "val.jsonl").c_str(), &val) == CFR_OK);
    REQUIRE(cfr_embeddings_load((dir.path / "embeddings.txt").c_str(), &words) == CFR_OK);
  }
  ~Corpus() {
    cfr_dataset_free(train);
    cfr_dataset_free(val);
    cfr_embeddings_free(words);
  }

  std::string train_options(int epochs = 2) const {
    return R"({"epochs": )" + std::to_string(epochs) + R"(, "d": 8, "seed": 3, "answers_file": ")" +
           (dir.path / "answers.txt").string() + R"(", "stop_words_file": ")" +
           (dir.path / "stopwords.txt").string() + "\"}";
  }
};

void count_epochs(size_t, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(cfr_version()) == "1.0.0");
  CHECK(std::string(cfr_status_name(CFR_OK)) == "ok");
  CHECK(std::string(cfr_status_name(CFR_ERR_INTEGRITY)) == "integrity error");

  cfr_dataset* set = nullptr;
  CHECK(cfr_dataset_load("/nonexistent/data.jsonl", &set) == CFR_ERR_IO);
  CHECK(set == nullptr);
  CHECK(std::strlen(cfr_last_error()) > 0);
  CHECK(cfr_dataset_load(nullptr, &set) == CFR_ERR_ARGUMENT);
  CHECK(cfr_dataset_size(nullptr) == 0);
  cfr_dataset_free(nullptr);
  cfr_model_free(nullptr);
  cfr_embeddings_free(nullptr);
  cfr_free_string(nullptr);

  TempDir dir;
  write_text(dir.path / "bad.jsonl", "{not json\n");
  CHECK(cfr_dataset_load((dir.path / "bad.jsonl").c_str(), &set) == CFR_ERR_FORMAT);
  CHECK(std::string(cfr_last_error()).find("bad.jsonl:1") != std::string::npos);

  CHECK(cfr_synth_generate(R"({"dropout": 1.0})", dir.path.c_str()) == CFR_ERR_ARGUMENT);
  CHECK(cfr_synth_generate(R"({"bogus": 1})", dir.path.c_str()) == CFR_ERR_ARGUMENT);
  CHECK(std::string(cfr_last_error()).find("bogus") != std::string::npos);
  CHECK(cfr_synth_generate(R"({"train_n": -3})", dir.path.c_str()) == CFR_ERR_ARGUMENT);
  CHECK(cfr_synth_generate("[1,2", dir.path.c_str()) == CFR_ERR_ARGUMENT);

  cfr_model* m = nullptr;
  write_text(dir.path / "junk.ckpt", "not a checkpoint");
  CHECK(cfr_model_load((dir.path / "junk.ckpt").c_str(), &m) == CFR_ERR_FORMAT);
  CHECK(m == nullptr);

  int passed = -1;
  char* report = nullptr;
  CHECK(cfr_gradcheck(R"({"seeds": []})", &passed, &report) == CFR_ERR_ARGUMENT);
}

TEST_CASE("dataset and embeddings accessors") {
  Corpus c;
  CHECK(cfr_dataset_size(c.train) == 120);
  CHECK(cfr_embeddings_dim(c.words) == 12);
  CHECK(cfr_embeddings_size(c.words) > 12);
  CHECK(cfr_embeddings_warning_count(c.words) == 0);
  CHECK(cfr_embeddings_warning(c.words, 0) == nullptr);

  char* id = nullptr;
  REQUIRE(cfr_dataset_sample_id(c.val, 7, &id) == CFR_OK);
  const std::string sid = take(id);
  size_t index = 0;
  CHECK(cfr_dataset_find(c.val, sid.c_str(), &index) == CFR_OK);
  CHECK(index == 7);
  CHECK(cfr_dataset_find(c.val, "no-such-id", &index) == CFR_ERR_ARGUMENT);
  CHECK(cfr_dataset_sample_id(c.val, 30, &id) == CFR_ERR_ARGUMENT);
}

TEST_CASE("train, save, load, forward, evaluate, explain") {
  Corpus c;
  cfr_model* model = nullptr;
  char* history = nullptr;
  int epochs_seen = 0;
  const std::string opts = c.train_options();
  REQUIRE(cfr_train(c.train, c.val, c.words, opts.c_str(), count_epochs, &epochs_seen, &model, &history) ==
          CFR_OK);
  CHECK(epochs_seen == 2);
  const std::string csv = take(history);
  CHECK(csv.rfind("epoch,loss,val_acc\n", 0) == 0);
  CHECK(cfr_model_num_answers(model) == 6);

  const auto config = nlohmann::json::parse(take([&] {
    char* s = nullptr;
    REQUIRE(cfr_model_config(model, &s) == CFR_OK);
    return s;
  }()));
  CHECK(config.at("d_q") == 8);
  CHECK(config.at("answers").size() == 6);

  const std::string path = (c.dir.path / "m.ckpt").string();
  REQUIRE(cfr_model_save(model, path.c_str()) == CFR_OK);
  cfr_model* loaded = nullptr;
  REQUIRE(cfr_model_load(path.c_str(), &loaded) == CFR_OK);

  std::vector<double> a(6), b(6);
  for (size_t i = 0; i < cfr_dataset_size(c.val); ++i) {
    REQUIRE(cfr_model_forward(model, c.val, i, c.words, a.data(), a.size()) == CFR_OK);
    REQUIRE(cfr_model_forward(loaded, c.val, i, c.words, b.data(), b.size()) == CFR_OK);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  CHECK(cfr_model_forward(model, c.val, 0, c.words, a.data(), 3) == CFR_ERR_ARGUMENT);
  CHECK(cfr_model_forward(model, c.val, 999, c.words, a.data(), a.size()) == CFR_ERR_ARGUMENT);

  char* report = nullptr;
  REQUIRE(cfr_evaluate(loaded, c.val, c.words, &report) == CFR_OK);
  const auto eval = nlohmann::json::parse(take(report));
  CHECK(eval.at("samples") == 30);
  CHECK(eval.at("predictions").size() == 30);

  char* json = nullptr;
  char* table = nullptr;
  REQUIRE(cfr_explain(loaded, c.val, 4, c.words, 3, &json, &table) == CFR_OK);
  const auto ex = nlohmann::json::parse(take(json));
  CHECK(ex.at("top_k").size() == 3);
  CHECK(ex.at("top_k")[0].at("index") == eval.at("predictions")[4]);
  CHECK(take(table).rfind("kind,row,col,value\n", 0) == 0);
  REQUIRE(cfr_explain(loaded, c.val, 4, c.words, 2, &json, nullptr) == CFR_OK);
  cfr_free_string(json);

  CHECK(cfr_model_set_head_mode(loaded, "sideways") == CFR_ERR_ARGUMENT);
  REQUIRE(cfr_model_set_head_mode(loaded, "coarse_only") == CFR_OK);
  REQUIRE(cfr_model_forward(loaded, c.val, 0, c.words, b.data(), b.size()) == CFR_OK);

  cfr_model_free(model);
  cfr_model_free(loaded);
}

TEST_CASE("train rejects bad options and mismatched data") {
  Corpus c;
  cfr_model* model = nullptr;
  CHECK(cfr_train(c.train, c.val, c.words, R"({"epochs": 1, "learning_rate": 0.1})", nullptr, nullptr, &model,
                  nullptr) == CFR_ERR_ARGUMENT);
  CHECK(std::string(cfr_last_error()).find("learning_rate") != std::string::npos);
  CHECK(cfr_train(c.train, c.val, c.words, R"({"softmax_axis": "diagonal"})", nullptr, nullptr, &model,
                  nullptr) == CFR_ERR_ARGUMENT);
  CHECK(model == nullptr);

  // A model trained on one feature width cannot read another.
  TempDir other;
  REQUIRE(cfr_synth_generate(R"({"objects": 5, "attrs": 3, "train_n": 10, "val_n": 5, "embed_dim": 12})",
                             other.path.c_str()) == CFR_OK);
  cfr_dataset* narrow = nullptr;
  REQUIRE(cfr_dataset_load((other.path / "val.jsonl").c_str(), &narrow) == CFR_OK);
  const std::string opts = c.train_options(0);
  REQUIRE(cfr_train(c.train, nullptr, c.words, opts.c_str(), nullptr, nullptr, &model, nullptr) == CFR_OK);
  std::vector<double> rho(6);
  CHECK(cfr_model_forward(model, narrow, 0, c.words, rho.data(), rho.size()) == CFR_ERR_SHAPE);
  cfr_dataset_free(narrow);
  cfr_model_free(model);
}

TEST_CASE("ablate and gradcheck") {
  Corpus c;
  char* report = nullptr;
  const std::string base = c.train_options(1);
  const std::string opts = base.substr(0, base.size() - 1) + R"(, "strategy": "forced", "seeds": [1, 2]})";
  REQUIRE(cfr_ablate(c.train, c.val, c.words, opts.c_str(), &report) == CFR_OK);
  const auto ab = nlohmann::json::parse(take(report));
  CHECK(ab.at("strategy") == "forced");
  CHECK(ab.at("rows").size() == 3);
  const std::string bad = base.substr(0, base.size() - 1) + R"(, "strategy": "random"})";
  CHECK(cfr_ablate(c.train, c.val, c.words, bad.c_str(), &report) == CFR_ERR_ARGUMENT);

  int passed = -1;
  REQUIRE(cfr_gradcheck(R"({"seeds": [1]})", &passed, &report) == CFR_OK);
  CHECK(passed == 1);
  CHECK(nlohmann::json::parse(take(report)).at("pass") == true);
  REQUIRE(cfr_gradcheck(R"({"seeds": [1], "tol": 0.0})", &passed, &report) == CFR_OK);
  CHECK(passed == 0);
  cfr_free_string(report);
}
