#include "cfr/cfr.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <set>
#include <string>

#include <json.hpp>

#include "cfr/workflows.hpp"

struct cfr_dataset {
  cfr::Dataset samples;
};

struct cfr_embeddings {
  cfr::WordVectors words;
};

struct cfr_model {
  cfr::CfrConfig config;
  cfr::CfrParams params;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

cfr_status code_for(cfr::ErrorKind kind) {
  switch (kind) {
    case cfr::ErrorKind::Argument: return CFR_ERR_ARGUMENT;
    case cfr::ErrorKind::Format: return CFR_ERR_FORMAT;
    case cfr::ErrorKind::Io: return CFR_ERR_IO;
    case cfr::ErrorKind::Shape: return CFR_ERR_SHAPE;
    case cfr::ErrorKind::Integrity: return CFR_ERR_INTEGRITY;
    case cfr::ErrorKind::Numeric: return CFR_ERR_NUMERIC;
  }
  return CFR_ERR_INTERNAL;
}

template <class Fn>
cfr_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return CFR_OK;
  } catch (const cfr::Error& e) {
    g_last_error = e.what();
    return code_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CFR_ERR_MEMORY;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CFR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CFR_ERR_INTERNAL;
  }
}

template <class T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw cfr::ArgumentError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// JSON option object with defaults; rejects keys nobody asked for.
class Options {
 public:
  Options(const char* text, std::set<std::string> allowed) {
    if (text != nullptr && *text != '\0') {
      try {
        j_ = json::parse(text);
      } catch (const json::exception& e) {
        throw cfr::ArgumentError(std::string("options are not valid JSON: ") + e.what());
      }
      if (!j_.is_object()) throw cfr::ArgumentError("options must be a JSON object");
      for (const auto& [key, value] : j_.items()) {
        if (!allowed.count(key)) throw cfr::ArgumentError("unknown option '" + key + "'");
      }
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw cfr::ArgumentError("option '" + key + "' has the wrong type");
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw cfr::ArgumentError("option '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

 private:
  json j_;
};

const std::set<std::string> kModelKeys = {
    "epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "seed", "d", "d_q", "d_psi",
    "d_cg", "d_fg", "softmax_axis", "learnable_channel_scale", "projection_bias", "head_mode",
    "min_freq", "answers", "answers_file", "stop_words", "stop_words_file"};

struct TrainSetup {
  cfr::ModelOptions model;
  cfr::TrainConfig train;
};

TrainSetup parse_train_options(const Options& o) {
  TrainSetup s;
  cfr::TrainConfig& t = s.train;
  t.epochs = o.count("epochs", t.epochs);
  t.batch_size = o.count("batch_size", t.batch_size);
  t.learning_rate = o.get("lr", t.learning_rate);
  t.beta1 = o.get("beta1", t.beta1);
  t.beta2 = o.get("beta2", t.beta2);
  t.eps = o.get("adam_eps", t.eps);
  t.seed = o.get<std::uint64_t>("seed", t.seed);
  t.validate();

  cfr::ModelOptions& m = s.model;
  m.seed = t.seed;
  const std::size_t d = o.count("d", 32);
  m.d_q = o.count("d_q", d);
  m.d_psi = o.count("d_psi", d);
  m.d_cg = o.count("d_cg", d);
  m.d_fg = o.count("d_fg", d);
  m.softmax_axis = cfr::axis_from_name(o.get<std::string>("softmax_axis", "flat"));
  m.learnable_channel_scale = o.get("learnable_channel_scale", m.learnable_channel_scale);
  m.projection_bias = o.get("projection_bias", m.projection_bias);
  m.head_mode = cfr::mode_from_name(o.get<std::string>("head_mode", "full"));
  m.min_freq = o.count("min_freq", m.min_freq);
  if (o.has("answers") && o.has("answers_file")) {
    throw cfr::ArgumentError("give either answers or answers_file");
  }
  if (o.has("answers")) m.answers = o.get<std::vector<std::string>>("answers", {});
  if (o.has("answers_file")) m.answers = cfr::load_answers(o.get<std::string>("answers_file", ""));
  if (o.has("stop_words") && o.has("stop_words_file")) {
    throw cfr::ArgumentError("give either stop_words or stop_words_file");
  }
  if (o.has("stop_words")) m.stop_words = o.get<cfr::WordSet>("stop_words", {});
  if (o.has("stop_words_file")) m.stop_words = cfr::load_word_list(o.get<std::string>("stop_words_file", ""));
  return s;
}

const cfr::SampleBundle& sample_at(const cfr_dataset* set, std::size_t index) {
  if (index >= set->samples.size()) {
    throw cfr::ArgumentError("sample index " + std::to_string(index) + " outside a dataset of " +
                             std::to_string(set->samples.size()));
  }
  return set->samples[index];
}

}  // namespace

extern "C" {

const char* cfr_version(void) { return "1.0.0"; }

const char* cfr_status_name(cfr_status status) {
  switch (status) {
    case CFR_OK: return "ok";
    case CFR_ERR_ARGUMENT: return "argument error";
    case CFR_ERR_FORMAT: return "format error";
    case CFR_ERR_IO: return "io error";
    case CFR_ERR_SHAPE: return "shape error";
    case CFR_ERR_INTEGRITY: return "integrity error";
    case CFR_ERR_NUMERIC: return "numeric error";
    case CFR_ERR_MEMORY: return "out of memory";
    case CFR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cfr_last_error(void) { return g_last_error.c_str(); }

void cfr_free_string(char* s) { std::free(s); }

cfr_status cfr_synth_generate(const char* options_json, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    const Options o(options_json, {"objects", "attrs", "min_rois", "max_rois", "noise", "dropout",
                                   "distractor_rate", "train_n", "val_n", "embed_dim", "seed"});
    cfr::SynthConfig c;
    c.objects = o.count("objects", c.objects);
    c.attrs = o.count("attrs", c.attrs);
    c.min_rois = o.count("min_rois", c.min_rois);
    c.max_rois = o.count("max_rois", c.max_rois);
    c.noise = o.get("noise", c.noise);
    c.dropout = o.get("dropout", c.dropout);
    c.distractor_rate = o.get("distractor_rate", c.distractor_rate);
    c.train_n = o.count("train_n", c.train_n);
    c.val_n = o.count("val_n", c.val_n);
    c.embed_dim = o.count("embed_dim", c.embed_dim);
    c.seed = o.get<std::uint64_t>("seed", c.seed);
    cfr::write_synthetic(cfr::gen_synthetic(c), out_dir);
  });
}

cfr_status cfr_dataset_load(const char* path, cfr_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto set = std::make_unique<cfr_dataset>();
    set->samples = cfr::load_dataset(path);
    *out = set.release();
  });
}

void cfr_dataset_free(cfr_dataset* set) { delete set; }

size_t cfr_dataset_size(const cfr_dataset* set) { return set ? set->samples.size() : 0; }

cfr_status cfr_dataset_find(const cfr_dataset* set, const char* id, size_t* index_out) {
  return guarded([&] {
    require(set, "dataset");
    require(id, "id");
    require(index_out, "index_out");
    for (std::size_t i = 0; i < set->samples.size(); ++i) {
      if (set->samples[i].id == id) {
        *index_out = i;
        return;
      }
    }
    throw cfr::ArgumentError(std::string("no sample with id '") + id + "'");
  });
}

cfr_status cfr_dataset_sample_id(const cfr_dataset* set, size_t index, char** id_out) {
  return guarded([&] {
    require(set, "dataset");
    require(id_out, "id_out");
    *id_out = dup_string(sample_at(set, index).id);
  });
}

cfr_status cfr_embeddings_load(const char* path, cfr_embeddings** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto w = std::make_unique<cfr_embeddings>();
    w->words = cfr::load_embeddings(path);
    *out = w.release();
  });
}

void cfr_embeddings_free(cfr_embeddings* words) { delete words; }

size_t cfr_embeddings_dim(const cfr_embeddings* words) { return words ? words->words.dim() : 0; }

size_t cfr_embeddings_size(const cfr_embeddings* words) {
  return words ? words->words.vocab.size() : 0;
}

size_t cfr_embeddings_warning_count(const cfr_embeddings* words) {
  return words ? words->words.warnings.size() : 0;
}

const char* cfr_embeddings_warning(const cfr_embeddings* words, size_t i) {
  if (words == nullptr || i >= words->words.warnings.size()) return nullptr;
  return words->words.warnings[i].c_str();
}

cfr_status cfr_model_load(const char* path, cfr_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    cfr::Checkpoint ck = cfr::load_checkpoint(path);
    *out = new cfr_model{std::move(ck.config), std::move(ck.params)};
  });
}

cfr_status cfr_model_save(const cfr_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    cfr::save_checkpoint(model->params, model->config, path);
  });
}

void cfr_model_free(cfr_model* model) { delete model; }

cfr_status cfr_model_config(const cfr_model* model, char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(json_out, "json_out");
    *json_out = dup_string(cfr::config_to_json(model->config));
  });
}

size_t cfr_model_num_answers(const cfr_model* model) { return model ? model->config.n_answers : 0; }

cfr_status cfr_model_set_head_mode(cfr_model* model, const char* mode) {
  return guarded([&] {
    require(model, "model");
    require(mode, "mode");
    model->config.head_mode = cfr::mode_from_name(mode);
  });
}

cfr_status cfr_model_forward(const cfr_model* model, const cfr_dataset* set, size_t index,
                             const cfr_embeddings* words, double* rho, size_t capacity) {
  return guarded([&] {
    require(model, "model");
    require(set, "dataset");
    require(words, "embeddings");
    require(rho, "rho");
    if (capacity < model->config.n_answers) {
      throw cfr::ArgumentError("rho buffer holds " + std::to_string(capacity) + " values, need " +
                               std::to_string(model->config.n_answers));
    }
    const auto r = cfr::forward(sample_at(set, index), model->params, model->config,
                                cfr::WordTables(words->words));
    std::copy(r.rho.begin(), r.rho.end(), rho);
  });
}

cfr_status cfr_train(const cfr_dataset* train, const cfr_dataset* val, const cfr_embeddings* words,
                     const char* options_json, cfr_epoch_fn on_epoch, void* user,
                     cfr_model** model_out, char** history_csv_out) {
  return guarded([&] {
    require(train, "train");
    require(words, "embeddings");
    require(model_out, "model_out");
    *model_out = nullptr;
    if (history_csv_out) *history_csv_out = nullptr;
    const TrainSetup s = parse_train_options(Options(options_json, kModelKeys));
    const cfr::Dataset no_val;
    const cfr::Dataset& v = val ? val->samples : no_val;
    const cfr::CfrConfig config = cfr::derive_config(train->samples, words->words, s.model);
    cfr::EpochCallback cb;
    if (on_epoch) {
      cb = [&](const cfr::EpochRecord& r) { on_epoch(r.epoch, r.loss, r.val_acc, user); };
    }
    cfr::TrainResult r =
        cfr::train_loop(train->samples, v, config, s.train, cfr::WordTables(words->words), cb);
    auto model = std::make_unique<cfr_model>(cfr_model{config, std::move(r.best)});
    if (history_csv_out) *history_csv_out = dup_string(cfr::history_csv(r.history));
    *model_out = model.release();
  });
}

cfr_status cfr_evaluate(const cfr_model* model, const cfr_dataset* set, const cfr_embeddings* words,
                        char** report_json_out) {
  return guarded([&] {
    require(model, "model");
    require(set, "dataset");
    require(words, "embeddings");
    require(report_json_out, "report_json_out");
    const auto r = cfr::evaluate(set->samples, model->params, model->config, cfr::WordTables(words->words));
    *report_json_out = dup_string(cfr::eval_report_json(r));
  });
}

cfr_status cfr_explain(const cfr_model* model, const cfr_dataset* set, size_t index,
                       const cfr_embeddings* words, size_t top_k, char** json_out, char** csv_out) {
  return guarded([&] {
    require(model, "model");
    require(set, "dataset");
    require(words, "embeddings");
    require(json_out, "json_out");
    *json_out = nullptr;
    if (csv_out) *csv_out = nullptr;
    const cfr::SampleBundle& s = sample_at(set, index);
    const auto r = cfr::forward(s, model->params, model->config, cfr::WordTables(words->words));
    std::string js = cfr::explanation_json(s, r, model->config, top_k);
    std::string csv = csv_out ? cfr::explanation_csv(r, top_k) : std::string();
    *json_out = dup_string(js);
    if (csv_out) *csv_out = dup_string(csv);
  });
}

cfr_status cfr_ablate(const cfr_dataset* train, const cfr_dataset* val, const cfr_embeddings* words,
                      const char* options_json, char** report_json_out) {
  return guarded([&] {
    require(train, "train");
    require(val, "val");
    require(words, "embeddings");
    require(report_json_out, "report_json_out");
    auto keys = kModelKeys;
    keys.insert({"strategy", "seeds"});
    const Options o(options_json, keys);
    const TrainSetup s = parse_train_options(o);
    const std::string strategy = o.get<std::string>("strategy", "retrain");
    cfr::AblationStrategy st;
    if (strategy == "retrain") {
      st = cfr::AblationStrategy::Retrain;
    } else if (strategy == "forced") {
      st = cfr::AblationStrategy::Forced;
    } else {
      throw cfr::ArgumentError("strategy must be 'retrain' or 'forced', got '" + strategy + "'");
    }
    const auto seeds = o.get<std::vector<std::uint64_t>>("seeds", {s.train.seed});
    const auto report = cfr::run_ablation(train->samples, val->samples, words->words, s.model,
                                          s.train, st, seeds);
    *report_json_out = dup_string(cfr::ablation_report_json(report));
  });
}

cfr_status cfr_gradcheck(const char* options_json, int* passed, char** report_json_out) {
  return guarded([&] {
    require(passed, "passed");
    require(report_json_out, "report_json_out");
    *passed = 0;
    *report_json_out = nullptr;
    const Options o(options_json,
                    {"seeds", "eps", "tol", "batch", "softmax_axis", "learnable_channel_scale"});
    cfr::GradcheckOptions g;
    g.seeds = o.get("seeds", g.seeds);
    g.eps = o.get("eps", g.eps);
    g.tol = o.get("tol", g.tol);
    g.batch = o.count("batch", g.batch);
    g.softmax_axis = cfr::axis_from_name(o.get<std::string>("softmax_axis", "flat"));
    g.learnable_channel_scale = o.get("learnable_channel_scale", g.learnable_channel_scale);
    const auto reports = cfr::gradcheck_model(g);
    bool ok = true;
    for (const auto& r : reports) ok = ok && r.report.pass;
    *report_json_out = dup_string(cfr::gradcheck_report_json(reports));
    *passed = ok ? 1 : 0;
  });
}

}  // extern "C"
