#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gsat/model.hpp"
#include "gsat/training.hpp"
#include "test_util.hpp"

using namespace gsat;

namespace {

struct Fixture {
  Ontology ontology = test::fixture_ontology();
  Dataset data = test::fixture_train(ontology);
  Vocabulary vocab = Vocabulary::build(data.dialogues, ontology);
  std::vector<Example> examples = make_examples(data.dialogues, vocab, ontology);

  GsatModel model(std::size_t d, std::size_t h, double dropout = 0.0, std::uint64_t seed = 1) const {
    ModelConfig cfg;
    cfg.embedding_dim = d;
    cfg.lstm_hidden = h;
    cfg.dropout_rate = dropout;
    cfg.init_seed = seed;
    return GsatModel(cfg, ontology, vocab);
  }

  Batch batch(std::vector<std::size_t> order, std::size_t pad_to = 0) const {
    return collate(examples, order, ontology.informable().size(), ontology.requestable().size(), pad_to);
  }
};

void fill(Tensor t, double value) {
  for (auto& v : t.mutable_data()) v = value;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("single-token encoding matches the LSTM cell by hand") {
  Fixture fx;
  auto model = fx.model(3, 2);
  auto& enc = model.encoder();
  for (auto* p : {&enc.forward, &enc.backward}) {
    fill(p->w_input, 0.0);
    fill(p->w_hidden, 0.0);
  }
  // gates i, f, g, o for each of the two hidden units
  std::vector<double> fb{0.5, -0.3, 2.0, 0.0, 0.7, 0.1, -1.0, 1.5};
  std::copy(fb.begin(), fb.end(), enc.forward.bias.mutable_data().begin());
  fill(enc.backward.bias, 0.0);

  std::vector<Example> ex(1);
  ex[0].token_ids = {fx.vocab.id("west")};
  ex[0].informable_targets = {0, 0, 0};
  ex[0].request_targets.assign(7, 0.0);
  const std::size_t order[] = {0};
  auto out = model.encode(collate(ex, order, 3, 7), false, nullptr);
  REQUIRE(out.states.shape() == Shape{1, 4});
  for (std::size_t u = 0; u < 2; ++u) {
    const double c = sig(fb[u]) * std::tanh(fb[4 + u]);
    const double h = sig(fb[6 + u]) * std::tanh(c);
    CHECK(out.states.at(0, u) == doctest::Approx(h).epsilon(1e-12));
  }
  // zero weights and zero bias: i = f = o = 0.5, g = 0, so the state stays zero
  CHECK(out.states.at(0, 2) == 0.0);
  CHECK(out.states.at(0, 3) == 0.0);
  CHECK(out.summary.at(0, 0) == out.states.at(0, 0));
}

TEST_CASE("summary joins the last forward state and the first backward state") {
  Fixture fx;
  auto model = fx.model(6, 3);
  auto b = fx.batch({1, 4, 0});
  auto out = model.encode(b, false, nullptr);
  for (std::size_t r = 0; r < b.size; ++r) {
    const std::size_t last = b.lengths[r] - 1;
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(out.summary.at(r, u) == out.states.at(r * b.max_len + last, u));
      CHECK(out.summary.at(r, 3 + u) == out.states.at(r * b.max_len, 3 + u));
    }
  }
}

TEST_CASE("extra padding leaves every output bit-identical") {
  Fixture fx;
  auto model = fx.model(8, 5);
  std::vector<std::size_t> order{0, 5, 9, 17};
  auto tight = model.forward(fx.batch(order), false);
  auto wide = model.forward(fx.batch(order, fx.batch(order).max_len + 9), false);
  for (std::size_t s = 0; s < tight.informable_logits.size(); ++s) {
    for (std::size_t i = 0; i < tight.informable_logits[s].numel(); ++i) {
      CHECK(tight.informable_logits[s][i] == wide.informable_logits[s][i]);
    }
  }
  for (std::size_t i = 0; i < tight.request_scores.numel(); ++i) {
    CHECK(tight.request_scores[i] == wide.request_scores[i]);
  }
}

TEST_CASE("value matrix shapes") {
  Fixture fx;
  auto model = fx.model(8, 5);
  CHECK(model.slot_value_matrix(0).shape() == Shape{10, 13});
  CHECK(model.slot_value_matrix(1).shape() == Shape{10, 4});
  CHECK(model.request_value_matrix().shape() == Shape{10, 7});
}

TEST_CASE("attention") {
  Fixture fx;
  auto model = fx.model(4, 1);
  SlotClassifierParams head = model.informable_heads()[0];
  EncoderOutput enc;
  enc.batch = 1;
  enc.steps = 3;
  enc.states = Tensor({3, 2}, {1, 4, 2, -2, 0, 7});
  enc.summary = Tensor({1, 2}, {0.3, -0.8});

  SUBCASE("zero attention weights average the real steps") {
    fill(head.w_attn, 0.0);
    auto c = model.attend(enc, Mask{1, 1, 0}, head);
    CHECK(c.at(0, 0) == doctest::Approx(1.5));
    CHECK(c.at(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("hand weights") {
    fill(head.w_attn, 0.0);
    fill(head.b_attn, 0.0);
    head.w_attn.mutable_data()[2] = 1.0;  // reads the first state unit
    auto c = model.attend(enc, Mask{1, 1, 1}, head);
    const double e0 = std::exp(std::tanh(1.0)), e1 = std::exp(std::tanh(2.0)), e2 = std::exp(std::tanh(0.0));
    const double z = e0 + e1 + e2;
    CHECK(c.at(0, 0) == doctest::Approx((1 * e0 + 2 * e1 + 0 * e2) / z));
    CHECK(c.at(0, 1) == doctest::Approx((4 * e0 - 2 * e1 + 7 * e2) / z));
  }
}

TEST_CASE("scoring heads") {
  Fixture fx;
  auto model = fx.model(6, 3);
  const Tensor zero({2, 6}, 0.0);

  SUBCASE("zero context gives probability one half for every request") {
    auto p = sigmoid(model.score_requestable(zero));
    for (double v : p.data()) CHECK(v == 0.5);
  }
  SUBCASE("zero context scores every value at zero next to the none score") {
    auto logits = model.score_informable(2, zero);
    CHECK(logits.shape() == Shape{2, 7});
    CHECK(logits.at(1, 0) == model.informable_heads()[2].score_none[0]);
    for (std::size_t v = 1; v < 7; ++v) CHECK(logits.at(0, v) == 0.0);
  }
  SUBCASE("moving the context toward a value raises its probability") {
    NoGradGuard guard;
    auto z = model.slot_value_matrix(0);  // [2H x |V|]
    const std::size_t target = 4;
    double previous = -1.0;
    for (double alpha : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      std::vector<double> c(6);
      for (std::size_t k = 0; k < 6; ++k) c[k] = alpha * z.at(k, target);
      auto p = softmax(model.score_informable(0, Tensor({1, 6}, c)));
      double others = 0.0;
      for (std::size_t v = 0; v < p.cols(); ++v) others = std::max(others, v == target + 1 ? 0.0 : p[v]);
      CHECK(p[target + 1] > previous);
      previous = p[target + 1];
      (void)others;
    }
  }
  SUBCASE("none wins a full tie") {
    std::vector<double> tied{0.25, 0.25, 0.25};
    CHECK(argmax(tied) == 0);
  }
}

TEST_CASE("hand-sized informable scoring") {
  Ontology ont({{"x", {"aa", "bb"}}}, {});
  auto vocab = Vocabulary::build(std::vector<Dialogue>{}, ont);
  ModelConfig cfg;
  cfg.embedding_dim = 2;
  cfg.lstm_hidden = 1;
  GsatModel model(cfg, ont, vocab);
  auto table = model.encoder().embedding.mutable_data();
  auto set_row = [&](const std::string& tok, double a, double b) {
    const auto r = static_cast<std::size_t>(vocab.id(tok));
    table[2 * r] = a;
    table[2 * r + 1] = b;
  };
  set_row("aa", 2, 0);
  set_row("bb", 0, 3);
  set_row("dontcare", 0, 0);
  auto& head = model.informable_heads()[0];
  std::vector<double> eye{1, 0, 0, 1};
  std::copy(eye.begin(), eye.end(), head.w_value.mutable_data().begin());
  head.score_none.mutable_data()[0] = 1.0;
  // Z = [[2, 0], [0, 3]] plus a zero column for the appended dontcare
  auto logits = model.score_informable(0, Tensor({1, 2}, {1, 0}));
  CHECK(logits.shape() == Shape{1, 4});
  CHECK(logits[0] == 1.0);
  CHECK(logits[1] == 2.0);
  CHECK(logits[2] == 0.0);
  CHECK(logits[3] == 0.0);
  CHECK(argmax(softmax(logits).data()) == 1);
}

TEST_CASE("scaling the context pushes request probabilities away from one half") {
  Fixture fx;
  auto model = fx.model(6, 3);
  std::mt19937_64 rng(4);
  auto c = test::random_tensor({1, 6}, rng, -1, 1, false);
  NoGradGuard guard;
  std::vector<double> prev(7, 0.0);
  for (double t : {1.0, 2.0, 4.0, 8.0}) {
    auto p = sigmoid(model.score_requestable(scale(c, t)));
    for (std::size_t r = 0; r < 7; ++r) {
      const double dist = std::abs(p[r] - 0.5);
      CHECK(dist >= prev[r]);
      prev[r] = dist;
    }
  }
}

TEST_CASE("softmax over shifted logits is unchanged") {
  Tensor a({1, 4}, {0.2, -1.0, 3.0, 0.0});
  Tensor b({1, 4}, {100.2, 99.0, 103.0, 100.0});
  auto pa = softmax(a), pb = softmax(b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
}

TEST_CASE("slot heads are independent") {
  Fixture fx;
  auto model = fx.model(6, 3);
  auto b = fx.batch({0, 1, 2});
  auto before = model.forward(b, false);
  for (auto& v : model.informable_heads()[1].w_query.mutable_data()) v += 0.3;
  fill(model.informable_heads()[1].score_none, 5.0);
  auto after = model.forward(b, false);
  for (std::size_t s : {0u, 2u}) {
    for (std::size_t i = 0; i < before.informable_logits[s].numel(); ++i) {
      CHECK(before.informable_logits[s][i] == after.informable_logits[s][i]);
    }
  }
  CHECK(before.informable_logits[1][0] != after.informable_logits[1][0]);

  SUBCASE("a loss on one slot only reaches that head and the shared encoder") {
    auto out = model.forward(b, false);
    std::vector<int> targets{1, 0, 2};
    backward(cross_entropy_logits(out.informable_logits[0], targets));
    for (auto& p : model.parameters()) {
      const bool own = p.name.rfind("informable.food.", 0) == 0;
      const bool shared = p.name.rfind("encoder.", 0) == 0 || p.name == "embedding";
      double norm = 0.0;
      for (double g : p.tensor.grad()) norm += g * g;
      if (own || shared) {
        CHECK_MESSAGE(norm > 0.0, p.name);
      } else {
        CHECK_MESSAGE(norm == 0.0, p.name);
      }
      p.tensor.zero_grad();
    }
  }
}

TEST_CASE("parameter count arithmetic") {
  Fixture fx;
  auto model = fx.model(128, 64);
  auto count = model.count_parameters();
  CHECK(count.encoder == 98816);
  REQUIRE(count.informable_heads.size() == 3);
  for (std::size_t h : count.informable_heads) CHECK(h == 33154);
  CHECK(count.request_head == 33153);
  CHECK(count.embedding == 128 * fx.vocab.size());
  CHECK(count.total == count.embedding + 98816 + 3 * 33154 + 33153);

  std::size_t actual = 0;
  for (auto& p : model.trainable_parameters()) actual += p.tensor.numel();
  CHECK(actual == count.total);
}

TEST_CASE("initialization") {
  Fixture fx;
  auto a = fx.model(8, 4, 0.0, 3);
  auto b = fx.model(8, 4, 0.0, 3);
  auto c = fx.model(8, 4, 0.0, 4);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
    differs = differs || !std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                                     pc[i].tensor.data().begin());
  }
  CHECK(differs);
  const auto emb = a.encoder().embedding;
  for (std::size_t k = 0; k < 8; ++k) CHECK(emb.at(0, k) == 0.0);
  // forget-gate bias starts near +1
  const auto bias = a.encoder().forward.bias;
  for (std::size_t u = 4; u < 8; ++u) CHECK(bias[u] > 0.4);
  for (std::size_t u = 0; u < 4; ++u) CHECK(std::abs(bias[u]) <= 0.5);

  ModelConfig bad;
  bad.vocab_size = fx.vocab.size() + 1;
  CHECK_THROWS_AS(GsatModel(bad, fx.ontology, fx.vocab), ConfigError);
}

TEST_CASE("clone is a deep copy") {
  Fixture fx;
  auto model = fx.model(4, 2);
  auto copy = model.clone();
  copy.encoder().embedding.mutable_data()[10] += 1.0;
  CHECK(copy.encoder().embedding[10] != model.encoder().embedding[10]);
}

TEST_CASE("predict_turn agrees with a batched forward") {
  Fixture fx;
  auto model = fx.model(6, 3);
  const auto& turn = fx.data.dialogues[0].turns[1];
  auto single = model.predict_turn(turn.system_actions, turn.user_utterance);
  auto batched = model.predict(fx.batch({1, 0}))[0];
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t v = 0; v < single.informable[s].size(); ++v) {
      CHECK(single.informable[s][v] == doctest::Approx(batched.informable[s][v]).epsilon(1e-12));
    }
  }
  CHECK(single.requestable.size() == 7);
}

TEST_CASE("full model loss passes finite differences") {
  auto tiny = test::tiny_setup();
  ModelConfig cfg;
  cfg.embedding_dim = 8;
  cfg.lstm_hidden = 4;
  cfg.dropout_rate = 0.0;
  GsatModel model(cfg, tiny.ontology, tiny.vocab);
  const std::size_t order[] = {0, 1};
  auto b = collate(tiny.examples, order, 2, 2);
  std::vector<Tensor> params;
  for (auto& p : model.trainable_parameters()) params.push_back(p.tensor);
  auto loss = [&] { return turn_loss(model.forward(b, false), b); };
  CHECK(test::gradient_check(loss, params) < 1e-4);
}
