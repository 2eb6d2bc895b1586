#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "gsat/benchmark.hpp"
#include "gsat/evaluation.hpp"
#include "metric_fixture.hpp"
#include "test_util.hpp"

using namespace gsat;

namespace {

TurnPrediction pick(const Ontology& ont, GoalMap values, std::set<std::string> requests = {}) {
  return test::hand_prediction(ont, {{}, {}, std::move(values), std::move(requests)});
}

std::vector<std::vector<double>> parameter_values(GsatModel& model) {
  std::vector<std::vector<double>> out;
  for (auto& p : model.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("belief accumulation") {
  auto ont = test::fixture_ontology();
  auto start = BeliefState::initial(ont);
  CHECK(start.goals.size() == 3);
  CHECK(start.constrained().empty());

  auto s1 = accumulate_belief(start, pick(ont, {{"food", "italian"}}), ont);
  CHECK(s1.constrained() == GoalMap{{"food", "italian"}});
  CHECK_FALSE(s1.goals.at("area").has_value());

  auto s2 = accumulate_belief(s1, pick(ont, {}), ont);  // none everywhere keeps the food constraint
  CHECK(s2.constrained() == GoalMap{{"food", "italian"}});

  auto s3 = accumulate_belief(accumulate_belief(start, pick(ont, {{"area", "west"}}), ont),
                              pick(ont, {{"area", "east"}}), ont);
  CHECK(s3.constrained() == GoalMap{{"area", "east"}});

  SUBCASE("requests are per turn and thresholded") {
    auto r1 = accumulate_belief(start, pick(ont, {}, {"phone", "address"}), ont);
    CHECK(r1.requests == std::set<std::string>{"address", "phone"});
    auto r2 = accumulate_belief(r1, pick(ont, {}), ont);
    CHECK(r2.requests.empty());
    auto p = pick(ont, {});
    p.requestable[0] = 0.5;
    CHECK(predicted_requests(p, ont) == std::set<std::string>{"address"});
    CHECK(predicted_requests(p, ont, 0.6).empty());
  }
  SUBCASE("a full tie keeps the previous value") {
    auto p = pick(ont, {});
    std::fill(p.informable[0].begin(), p.informable[0].end(), 1.0 / 14);
    CHECK(accumulate_belief(s1, p, ont).constrained() == GoalMap{{"food", "italian"}});
  }
}

TEST_CASE("hand-counted metrics") {
  auto fx = test::metric_fixture(test::fixture_ontology());
  auto report = score_predictions(fx.dialogues, fx.predictions, fx.ontology);
  CHECK(report.n_turns == 12);
  CHECK(report.joint_goal_accuracy == fx.joint_goal);
  CHECK(report.turn_request_accuracy == fx.turn_request);
  REQUIRE(report.per_slot.size() == 3);
  CHECK(report.per_slot[0] == std::pair<std::string, double>{"food", 9.0 / 12});
  CHECK(report.per_slot[1] == std::pair<std::string, double>{"price range", 11.0 / 12});
  CHECK(report.per_slot[2] == std::pair<std::string, double>{"area", 10.0 / 12});

  for (std::size_t d = 0; d < fx.dialogues.size(); ++d) {
    const std::vector<Dialogue> one{fx.dialogues[d]};
    const DialoguePredictions pred{fx.predictions[d]};
    CHECK_MESSAGE(joint_goal_accuracy(one, pred, fx.ontology) == fx.dialogue_joint_goal[d], d);
    CHECK_MESSAGE(turn_request_accuracy(one, pred, fx.ontology) == fx.dialogue_turn_request[d], d);
  }
}

TEST_CASE("perfect predictions score 1 and joint goal never beats a single slot") {
  auto ont = test::fixture_ontology();
  auto ds = test::fixture_train(ont);
  DialoguePredictions perfect;
  for (const auto& d : ds.dialogues) {
    std::vector<TurnPrediction> preds;
    for (const auto& t : d.turns) preds.push_back(pick(ont, t.gold_turn_goal, t.gold_requests));
    perfect.push_back(preds);
  }
  auto report = score_predictions(ds.dialogues, perfect, ont);
  CHECK(report.joint_goal_accuracy == 1.0);
  CHECK(report.turn_request_accuracy == 1.0);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto noisy = perfect;
    for (auto& d : noisy) {
      for (auto& p : d) {
        for (auto& slot : p.informable) std::shuffle(slot.begin(), slot.end(), rng);
        if (rng() % 3 == 0) std::shuffle(p.requestable.begin(), p.requestable.end(), rng);
      }
    }
    auto r = score_predictions(ds.dialogues, noisy, ont);
    double worst_slot = 1.0;
    for (const auto& [name, acc] : r.per_slot) worst_slot = std::min(worst_slot, acc);
    CHECK(r.joint_goal_accuracy <= worst_slot);

    // requests are scored independently of the informable outputs
    auto mixed = perfect;
    for (std::size_t d = 0; d < mixed.size(); ++d) {
      for (std::size_t t = 0; t < mixed[d].size(); ++t) mixed[d][t].informable = noisy[d][t].informable;
    }
    CHECK(turn_request_accuracy(ds.dialogues, mixed, ont) == 1.0);
  }
}

TEST_CASE("tracking is causal") {
  auto fx = test::metric_fixture(test::fixture_ontology());
  auto full = track_dialogues(fx.dialogues, fx.predictions, fx.ontology);
  auto cut = fx.dialogues;
  auto cut_pred = fx.predictions;
  cut[3].turns.resize(2);
  cut[3].gold_joint_goals.resize(2);
  cut_pred[3].resize(2);
  auto partial = track_dialogues(cut, cut_pred, fx.ontology);
  CHECK(partial[3][0] == full[3][0]);
  CHECK(partial[3][1] == full[3][1]);
}

TEST_CASE("report serialization") {
  auto fx = test::metric_fixture(test::fixture_ontology());
  auto report = score_predictions(fx.dialogues, fx.predictions, fx.ontology);
  auto j = report.to_json();
  CHECK(j["joint_goal"] == fx.joint_goal);
  CHECK(j["n_turns"] == 12);
  CHECK(j["per_slot"].contains("price range"));
  CHECK(report.table().find("joint goal") != std::string::npos);
}

TEST_CASE("mean and sample standard deviation") {
  const double values[] = {2, 4, 4, 4, 5, 5, 7, 9};
  auto m = mean_sd(values);
  CHECK(m.mean == 5.0);
  CHECK(m.sd == doctest::Approx(std::sqrt(32.0 / 7.0)));
  const double one[] = {3.5};
  CHECK(mean_sd(one).sd == 0.0);
}

TEST_CASE("evaluate runs a model end to end") {
  auto ont = test::fixture_ontology();
  auto ds = test::fixture_train(ont);
  auto vocab = Vocabulary::build(ds.dialogues, ont);
  ModelConfig cfg;
  cfg.embedding_dim = 8;
  cfg.lstm_hidden = 4;
  GsatModel model(cfg, ont, vocab);
  auto report = evaluate(model, ds.dialogues, 0.5, 7);
  CHECK(report.n_turns == 38);
  auto again = evaluate(model, ds.dialogues, 0.5, 50);
  CHECK(report.joint_goal_accuracy == again.joint_goal_accuracy);
  CHECK(report.turn_request_accuracy == again.turn_request_accuracy);
}

TEST_CASE("latency benchmark") {
  auto corpus = make_synthetic_corpus(3, 6, 4, 20, 1);
  CHECK(corpus.ontology.informable().size() == 3);
  CHECK(corpus.ontology.requestable().size() == 4);
  CHECK(corpus.dialogues.size() == 20);
  auto vocab = Vocabulary::build(corpus.dialogues, corpus.ontology);
  ModelConfig cfg;
  cfg.embedding_dim = 16;
  cfg.lstm_hidden = 8;
  GsatModel model(cfg, corpus.ontology, vocab);
  auto ex = make_examples(corpus.dialogues, vocab, corpus.ontology);
  auto batches = make_batches(ex, 10, std::nullopt, 3, 4);

  auto before = parameter_values(model);
  auto predict = benchmark_latency(model, batches, BenchMode::kPredict, 2, 20);
  auto train = benchmark_latency(model, batches, BenchMode::kTrain, 2, 20);
  CHECK(parameter_values(model) == before);  // neither mode touches the caller's model
  CHECK(predict.samples.size() == 20);
  CHECK(predict.mean_seconds > 0.0);
  CHECK(predict.mean_seconds < train.mean_seconds);
  auto heads = benchmark_latency(model, batches, BenchMode::kClassify, 2, 20);
  CHECK(heads.mean_seconds < predict.mean_seconds);
  CHECK(parameter_values(model) == before);
  auto j = predict.to_json();
  CHECK(j["mode"] == "predict");
  CHECK(j.contains("seconds_per_batch"));
  CHECK_THROWS_AS(benchmark_latency(model, batches, BenchMode::kPredict, 0, 19), ConfigError);
  CHECK(parse_bench_mode("train") == BenchMode::kTrain);
  CHECK_THROWS_AS(parse_bench_mode("sprint"), ConfigError);
}
