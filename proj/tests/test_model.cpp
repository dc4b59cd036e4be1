#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cfr/model.hpp"
#include "cfr/tensor_io.hpp"
#include "cfr/workflows.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cfr;

namespace {

struct Fixture {
  SyntheticData data;
  CfrConfig config;

  explicit Fixture(std::uint64_t seed = 5) {
    SynthConfig sc;
    sc.objects = 5;
    sc.attrs = 4;
    sc.min_rois = 2;
    sc.max_rois = 4;
    sc.noise = 0.2;
    sc.train_n = 12;
    sc.val_n = 6;
    sc.embed_dim = 6;
    sc.seed = seed;
    data = gen_synthetic(sc);
    ModelOptions o;
    o.d_q = o.d_psi = o.d_cg = o.d_fg = 5;
    o.stop_words = data.stop_words;
    o.answers = data.answers;
    o.min_freq = 2;
    config = derive_config(data.train, data.words, o);
  }
};

}  // namespace

TEST_CASE("derive_config reads dimensions from data") {
  Fixture fx;
  CHECK(fx.config.d_i == 9);
  CHECK(fx.config.d_word == 6);
  CHECK(fx.config.d_p == 6);
  CHECK(fx.config.n_answers == 4);
  CHECK(fx.config.answers == fx.data.answers);
  CHECK(fx.config.question_filter.count("what") == 1);
}

TEST_CASE("config json round trip and validation") {
  Fixture fx;
  fx.config.softmax_axis = SoftmaxAxis::Rows;
  fx.config.learnable_channel_scale = true;
  fx.config.head_mode = HeadMode::FineOnly;
  CHECK(config_from_json(config_to_json(fx.config)) == fx.config);
  CHECK_THROWS_AS(config_from_json("{not json"), FormatError);
  CHECK_THROWS_AS(config_from_json(R"({"d_q": "wide"})"), FormatError);
  CfrConfig bad = fx.config;
  bad.answers = {"only-one"};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("init_params") {
  Fixture fx;
  const CfrParams a = init_params(fx.config, 3);
  CHECK(a == init_params(fx.config, 3));
  CHECK_FALSE(a == init_params(fx.config, 4));

  for_each_tensor(a, [&](const std::string& name, const Matrix& m) {
    CAPTURE(name);
    if (is_bias_tensor(name)) {
      CHECK(m == Matrix(m.rows(), m.cols()));
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      CHECK(glorot_bound(m) == doctest::Approx(bound));
      for (double v : m.data()) CHECK(std::abs(v) < bound);
    }
  });
  CHECK(is_bias_tensor("gru.bz"));
  CHECK(is_bias_tensor("filter.image.tau_f.b"));
  CHECK_FALSE(is_bias_tensor("head.W_raw"));

  CfrConfig scaled = fx.config;
  scaled.learnable_channel_scale = true;
  const CfrParams s = init_params(scaled, 3);
  CHECK(s.image_filter.channel_scale == Matrix(1, scaled.d_psi, 1.0));

  const auto names = tensor_names(a);
  CHECK(names.size() == 31);
  CHECK(names.front() == "gru.Wz");
  CHECK(names.back() == "head.taup.b");
}

TEST_CASE("forward: normalisation, determinism, explanation consistency") {
  Fixture fx;
  const CfrParams p = init_params(fx.config, 9);
  const WordTables t(fx.data.words);
  for (const auto& s : fx.data.val) {
    const ForwardResult a = forward(s, p, fx.config, t);
    const ForwardResult b = forward(s, p, fx.config, t);
    CHECK(a.rho == b.rho);
    double sum = 0.0;
    for (double v : a.rho) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    const Explanation& e = a.explanation;
    CHECK(e.psi_hat_image.size() == s.image_features.rows());
    CHECK(e.attention_coarse.shape() == Shape{s.question.size(), s.image_features.rows()});
    CHECK(e.attention_fine.shape() == Shape{s.question.size(), s.image_features.rows()});

    // Ψ̂ in the explanation equals the filtering module's output on the same inputs.
    const Matrix fi_preds = embed_predicates(s.image_predicates.empty()
                                                 ? std::vector<Predicate>{Predicate::unknown()}
                                                 : s.image_predicates,
                                             fx.data.words);
    CHECK(e.psi_hat_image == weighting_map(s.image_features, fi_preds, p.image_filter));
    const Matrix fq = gru_encode(s.question, fx.data.words, p.gru);
    const Matrix q_preds = embed_predicates(e.question_predicates, fx.data.words);
    CHECK(e.psi_hat_question == weighting_map(fq, q_preds, p.question_filter));
    for (std::size_t k = 0; k < e.adaptive.coarse.size(); ++k) {
      CHECK(std::abs(e.adaptive.coarse[k] + e.adaptive.fine[k] - 1.0) <= 1e-12);
    }
    CHECK(e.top.front().answer == predict(a.rho));
  }
}

TEST_CASE("forward matches a composed scalar oracle") {
  // Hand-built 2-region, 3-word sample.
  const WordVectors words = make_word_vectors(
      {"what", "red", "cup", "blue", "ball"},
      Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.5, 0.5, 0}, {0, 0.5, 0.5}}));
  SampleBundle s;
  s.id = "hand";
  s.image_features = Matrix::from_rows({{1, 0, 0.5, 0}, {0, 1, 0, 0.5}});
  s.image_predicates = {Predicate({"red", "cup"}, PredicateForm::AttrObj),
                        Predicate({"blue", "ball"}, PredicateForm::AttrObj)};
  s.question = {"what", "red", "cup"};
  s.answer = 1;

  CfrConfig c;
  c.d_word = 3;
  c.d_q = 3;
  c.d_i = 4;
  c.d_p = 3;
  c.d_psi = 3;
  c.d_cg = 3;
  c.d_fg = 3;
  c.n_answers = 3;
  c.question_filter = {"what"};
  Rng rng(77);
  CfrParams p = init_params(c, 77);
  for_each_tensor(p, [&](const std::string&, Matrix& m) {
    for (double& v : m.data()) v = rng.uniform(-0.8, 0.8);
  });

  const ForwardResult got = forward(s, p, c, WordTables(words));

  const Matrix xq = embed_tokens(s.question, words);
  const Matrix fq = oracle::gru(xq, p.gru);
  const Matrix& fi = s.image_features;
  const Matrix pi = embed_predicates(s.image_predicates, words);
  const Matrix pq = Matrix::from_rows({{0, 1, 0}, {0, 0, 1}});  // "red", "cup"
  const Vector wi = oracle::weighting_map(fi, pi, p.image_filter);
  const Vector wq = oracle::weighting_map(fq, pq, p.question_filter);
  const Matrix psi_i = oracle::filter_info(fi, wi, p.image_filter);
  const Matrix psi_q = oracle::filter_info(fq, wq, p.question_filter);
  const Matrix a_cg = oracle::attention(fq, fi, p.coarse, SoftmaxAxis::Flat);
  const Matrix a_fg = oracle::attention(psi_q, psi_i, p.fine, SoftmaxAxis::Flat);
  const Vector j_cg = oracle::joint(fq, fi, a_cg, p.coarse);
  const Vector j_fg = oracle::joint(psi_q, psi_i, a_fg, p.fine);
  const Vector rho = oracle::head(j_cg, j_fg, p.head);

  CHECK(max_abs_diff(got.rho, rho) <= 1e-10);
  CHECK(max_abs_diff(got.explanation.psi_hat_image, wi) <= 1e-12);
  CHECK(max_abs_diff(got.explanation.psi_hat_question, wq) <= 1e-12);
  CHECK(max_abs_diff(got.explanation.attention_coarse, a_cg) <= 1e-12);
  CHECK(max_abs_diff(got.explanation.attention_fine, a_fg) <= 1e-12);
}

TEST_CASE("coarse_only never looks at predicates") {
  Fixture fx;
  fx.config.head_mode = HeadMode::CoarseOnly;
  const CfrParams p = init_params(fx.config, 2);
  const WordTables t(fx.data.words);
  // An empty predicate table would fail any lookup-based path.
  const WordVectors blank = make_word_vectors({}, Matrix(0, fx.data.words.dim()));
  for (const auto& s : fx.data.val) {
    SampleBundle garbled = s;
    garbled.image_predicates = {Predicate({"x", "y", "z"}, PredicateForm::ObjRelObj)};
    const ForwardResult a = forward(s, p, fx.config, t);
    const ForwardResult b = forward(garbled, p, fx.config, WordTables(fx.data.words, blank));
    CHECK(a.rho == b.rho);
    CHECK(a.explanation.psi_hat_image.empty());
    CHECK(a.explanation.attention_fine.empty());
  }
}

TEST_CASE("forward names the failing stage") {
  Fixture fx;
  const CfrParams p = init_params(fx.config, 2);
  SampleBundle s = fx.data.val.front();
  s.image_features = Matrix(2, 3);
  CHECK_THROWS_AS(forward(s, p, fx.config, WordTables(fx.data.words)), ShapeError);

  const WordVectors narrow = make_word_vectors({"what"}, Matrix(1, 2));
  try {
    forward(fx.data.val.front(), p, fx.config, WordTables(narrow));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("question encoder") != std::string::npos);
  }
}

TEST_CASE("samples without predicates still run") {
  Fixture fx;
  const CfrParams p = init_params(fx.config, 2);
  SampleBundle s = fx.data.val.front();
  s.image_predicates.clear();
  const ForwardResult r = forward(s, p, fx.config, WordTables(fx.data.words));
  CHECK(all_finite(r.rho));
  CHECK(r.explanation.psi_hat_image.size() == s.image_features.rows());
}

TEST_CASE("end-to-end gradients agree with central differences") {
  for (const bool scale : {false, true}) {
    for (SoftmaxAxis axis : {SoftmaxAxis::Flat, SoftmaxAxis::Rows}) {
      GradcheckOptions o;
      o.seeds = {1, 2, 3};
      o.learnable_channel_scale = scale;
      o.softmax_axis = axis;
      for (const auto& r : gradcheck_model(o)) {
        CAPTURE(r.seed);
        CHECK(r.report.pass);
        CHECK(r.report.tensors.size() == (scale ? 33u : 31u));
      }
    }
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  Fixture fx;
  const CfrParams p = init_params(fx.config, 8);
  TempDir dir;
  const auto path = dir.path / "m.ckpt";
  save_checkpoint(p, fx.config, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params == p);
  CHECK(back.config == fx.config);
  const WordTables t(fx.data.words);
  for (const auto& s : fx.data.val) {
    CHECK(forward(s, p, fx.config, t).rho == forward(s, back.params, back.config, t).rho);
  }
}

TEST_CASE("checkpoint errors") {
  Fixture fx;
  const CfrParams p = init_params(fx.config, 8);
  std::stringstream good;
  write_checkpoint(good, p, fx.config);
  const std::string bytes = good.str();
  CHECK(bytes.substr(0, 4) == "CFRK");

  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
      std::stringstream s(bytes.substr(0, cut));
      CHECK_THROWS_AS(read_checkpoint(s), FormatError);
    }
  }
  SUBCASE("bad magic and version") {
    std::string b = bytes;
    b[0] = 'X';
    std::stringstream s1(b);
    CHECK_THROWS_AS(read_checkpoint(s1), FormatError);
    b = bytes;
    b[4] = 9;
    std::stringstream s2(b);
    CHECK_THROWS_AS(read_checkpoint(s2), FormatError);
  }
  SUBCASE("trailing bytes") {
    std::stringstream s(bytes + "x");
    CHECK_THROWS_AS(read_checkpoint(s), FormatError);
  }
  SUBCASE("tensor shape disagrees with config") {
    CfrConfig wider = fx.config;
    wider.d_q += 1;
    std::stringstream s;
    write_checkpoint(s, init_params(wider, 1), fx.config);
    CHECK_THROWS_AS(read_checkpoint(s), IntegrityError);
  }
  SUBCASE("unknown tensor name is reported") {
    // Hand-assemble a file whose first tensor is renamed.
    std::stringstream s;
    s.write("CFRK", 4);
    le::put_u8(s, 1);
    const std::string cfg = config_to_json(fx.config);
    le::put_u32(s, static_cast<std::uint32_t>(cfg.size()));
    s.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto names = tensor_names(p);
    le::put_u32(s, static_cast<std::uint32_t>(names.size()));
    bool first = true;
    for_each_tensor(p, [&](const std::string& name, const Matrix& m) {
      const std::string n = first ? "gru.bogus" : name;
      first = false;
      le::put_u32(s, static_cast<std::uint32_t>(n.size()));
      s.write(n.data(), static_cast<std::streamsize>(n.size()));
      write_matrix(s, m);
    });
    try {
      read_checkpoint(s);
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("gru.bogus") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint("/nonexistent/m.ckpt"), IoError); }
}
