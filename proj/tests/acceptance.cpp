// Acceptance checks, one status line per criterion. Exit status is nonzero
// only when a criterion fails; parts that need the WOZ2.0 files report
// UNVERIFIED or WAIVED when GSAT_WOZ_DIR is unset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gsat/benchmark.hpp"
#include "gsat/cli.hpp"
#include "gsat/evaluation.hpp"
#include "gsat/training.hpp"
#include "metric_fixture.hpp"
#include "test_util.hpp"

using namespace gsat;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kUnverified, kWaived };

struct Outcome {
  Status status;
  std::string detail;
};

const char* label(Status s) {
  switch (s) {
    case Status::kPass: return "PASS";
    case Status::kFail: return "FAIL";
    case Status::kUnverified: return "UNVERIFIED";
    case Status::kWaived: return "WAIVED";
  }
  return "?";
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::optional<fs::path> woz_dir() {
  const char* env = std::getenv("GSAT_WOZ_DIR");
  if (!env || !*env) return std::nullopt;
  return fs::path(env);
}

Outcome gradient_correctness() {
  auto tiny = test::tiny_setup();
  ModelConfig cfg;
  cfg.embedding_dim = 8;
  cfg.lstm_hidden = 4;
  cfg.dropout_rate = 0.0;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    cfg.init_seed = seed;
    GsatModel model(cfg, tiny.ontology, tiny.vocab);
    const std::size_t order[] = {0, 1};
    const Batch batch = collate(tiny.examples, order, 2, 2);
    std::vector<Tensor> params;
    for (auto& p : model.trainable_parameters()) {
      params.push_back(p.tensor);
      checked += p.tensor.numel();
    }
    worst = std::max(worst, test::gradient_check([&] { return turn_loss(model.forward(batch, false), batch); }, params));
  }
  return {worst < 1e-4 ? Status::kPass : Status::kFail,
          fmt("max relative error %.2e over %.0f gradient entries, 3 initialisations (bound 1e-4)", worst,
              static_cast<double>(checked))};
}

Outcome padding_invariance() {
  auto ont = test::fixture_ontology();
  auto ds = test::fixture_train(ont);
  auto vocab = Vocabulary::build(ds.dialogues, ont);
  GsatModel model(ModelConfig{}, ont, vocab);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int32_t> token(2, static_cast<std::int32_t>(vocab.size()) - 1);
  std::uniform_int_distribution<std::size_t> length(1, 25), extra(1, 16);

  const std::size_t S = ont.informable().size(), R = ont.requestable().size();
  std::vector<Example> turns(50);
  for (auto& ex : turns) {
    ex.token_ids.resize(length(rng));
    for (auto& id : ex.token_ids) id = token(rng);
    ex.informable_targets.assign(S, 0);
    ex.request_targets.assign(R, 0.0);
  }
  double worst = 0.0;
  auto compare = [&](const std::vector<TurnPrediction>& a, const std::vector<TurnPrediction>& b) {
    for (std::size_t r = 0; r < a.size(); ++r) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t v = 0; v < a[r].informable[s].size(); ++v) {
          worst = std::max(worst, std::abs(a[r].informable[s][v] - b[r].informable[s][v]));
        }
      }
      for (std::size_t q = 0; q < R; ++q) worst = std::max(worst, std::abs(a[r].requestable[q] - b[r].requestable[q]));
    }
  };
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::size_t order[] = {i};
    const Batch plain = collate(turns, order, S, R);
    const Batch padded = collate(turns, order, S, R, plain.max_len + extra(rng));
    compare(model.predict(plain), model.predict(padded));
  }
  std::vector<std::size_t> all(turns.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Batch mixed = collate(turns, all, S, R);
  compare(model.predict(mixed), model.predict(collate(turns, all, S, R, mixed.max_len + 16)));
  return {worst < 1e-8 ? Status::kPass : Status::kFail,
          fmt("max probability difference %.1e over 50 turns padded by 1..16 and one mixed batch (bound 1e-8)", worst)};
}

Outcome metric_oracles() {
  auto fx = test::metric_fixture(test::fixture_ontology());
  const auto report = score_predictions(fx.dialogues, fx.predictions, fx.ontology);
  bool ok = report.joint_goal_accuracy == fx.joint_goal && report.turn_request_accuracy == fx.turn_request;
  for (std::size_t d = 0; d < fx.dialogues.size(); ++d) {
    const std::vector<Dialogue> one{fx.dialogues[d]};
    const DialoguePredictions pred{fx.predictions[d]};
    ok = ok && joint_goal_accuracy(one, pred, fx.ontology) == fx.dialogue_joint_goal[d];
    ok = ok && turn_request_accuracy(one, pred, fx.ontology) == fx.dialogue_turn_request[d];
  }
  return {ok ? Status::kPass : Status::kFail,
          fmt("5 dialogues: joint goal %.6f (expected 7/12), turn request %.6f (expected 10/12), per-dialogue values "
              "exact",
              report.joint_goal_accuracy, report.turn_request_accuracy)};
}

Outcome overfit() {
  auto ont = test::fixture_ontology();
  auto ds = test::fixture_train(ont);
  auto vocab = Vocabulary::build(ds.dialogues, ont);
  GsatModel model(ModelConfig{}, ont, vocab);
  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.patience = 150;
  cfg.batch_size = 10;
  std::size_t reached = 0;
  const auto start = std::chrono::steady_clock::now();
  const auto result = train(ds.dialogues, ds.dialogues, model, cfg, [&](const EpochRecord& r) {
    if (!reached && r.dev_joint_goal >= 0.99) reached = r.epoch;
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double jga = evaluate(model_from_checkpoint(result.best), ds.dialogues).joint_goal_accuracy;
  return {jga >= 0.99 && reached > 0 ? Status::kPass : Status::kFail,
          fmt("10 dialogues / 38 turns: joint goal %.3f, first reached 0.99 at epoch %.0f of 150, %.0f s", jga,
              static_cast<double>(reached), seconds)};
}

Outcome parameter_count() {
  auto ont = test::fixture_ontology();
  auto ds = test::fixture_train(ont);
  const auto vocab = Vocabulary::build(ds.dialogues, ont);
  const auto count = GsatModel(ModelConfig{}, ont, vocab).count_parameters();
  const std::size_t d = 128, H = 64;
  const std::size_t encoder = 2 * (4 * H * (d + H) + 4 * H);
  const std::size_t request = 2 * H * d + (2 * H * 2 * H + 2 * H) + (4 * H + 1);
  bool closed = count.encoder == encoder && encoder == 98816 && count.request_head == request;
  for (std::size_t h : count.informable_heads) closed = closed && h == request + 1;
  if (!closed) return {Status::kFail, "closed-form encoder or head counts differ"};
  std::string detail = "BiLSTM 98816, informable head 33154, request head 33153 exact; ";

  const auto dir = woz_dir();
  const fs::path ont_path = dir ? *dir / "ontology_en.json" : fs::path();
  if (!dir || !fs::exists(ont_path)) {
    return {Status::kUnverified,
            detail + "total is 231431 + 128*|v| and needs the WOZ2.0 English training vocabulary to compare with "
                     "~460K (set GSAT_WOZ_DIR)"};
  }
  const Ontology woz = Ontology::load(ont_path);
  const Dataset train = load_dataset(split_path(*dir, "train", "en"), woz);
  const auto full = GsatModel(ModelConfig{}, woz, Vocabulary::build(train.dialogues, woz)).count_parameters();
  const double ratio = static_cast<double>(full.total) / 460000.0;
  return {std::abs(ratio - 1.0) <= 0.15 ? Status::kPass : Status::kFail,
          detail + fmt("WOZ2.0 English total %.0f = %.3f x 460K (bound +-15%%)", static_cast<double>(full.total), ratio)};
}

Outcome full_reproduction() {
  const auto dir = woz_dir();
  if (!dir) return {Status::kWaived, "WOZ2.0 files not available (set GSAT_WOZ_DIR to run 10 seeds)"};
  const fs::path out = fs::temp_directory_path() / "gsat_acceptance_reproduction";
  const std::string data = dir->string(), ontology = (*dir / "ontology_en.json").string();
  const char* argv[] = {"gsat", "train", "--data", data.c_str(), "--ontology", ontology.c_str(), "--out",
                        out.c_str(), "--seeds", "1..10"};
  std::ostringstream sink;
  const int code = run_cli(10, argv, std::cin, sink, std::cerr);
  if (code != 0) return {Status::kFail, "training exited with code " + std::to_string(code)};
  std::ifstream in(out / "summary.json");
  const Json summary = Json::parse(in);
  const double jg = summary["joint_goal"]["mean"], jg_sd = summary["joint_goal"]["sd"];
  const double tr = summary["turn_request"]["mean"], tr_sd = summary["turn_request"]["sd"];
  const bool ok = summary["split"] == "test" && jg >= 0.856 && tr >= 0.962;
  return {ok ? Status::kPass : Status::kFail,
          fmt("test joint goal %.1f +- %.1f (need >= 85.6), turn request %.1f +- %.1f (need >= 96.2)", 100 * jg,
              100 * jg_sd, 100 * tr, 100 * tr_sd)};
}

struct BenchSetup {
  std::optional<GsatModel> model;
  std::vector<Batch> batches;
};

BenchSetup bench_setup(std::size_t slots) {
  BenchSetup s;
  const auto corpus = make_synthetic_corpus(slots, 10, 4, 40, 11);
  const auto vocab = Vocabulary::build(corpus.dialogues, corpus.ontology);
  s.model.emplace(ModelConfig{}, corpus.ontology, vocab);
  auto examples = make_examples(corpus.dialogues, vocab, corpus.ontology);
  examples.resize(examples.size() / 50 * 50);
  s.batches = make_batches(examples, 50, std::nullopt, slots, 4);
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Alternates short runs on the two setups so drift in machine load hits both
// equally, then compares the medians of all samples.
std::pair<double, double> interleaved_medians(const BenchSetup& a, const BenchSetup& b, BenchMode mode,
                                              std::size_t rounds) {
  std::vector<double> sa, sb;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto ra = benchmark_latency(*a.model, a.batches, mode, 2, 20);
    const auto rb = benchmark_latency(*b.model, b.batches, mode, 2, 20);
    sa.insert(sa.end(), ra.samples.begin(), ra.samples.end());
    sb.insert(sb.end(), rb.samples.begin(), rb.samples.end());
  }
  return {median(sa), median(sb)};
}

// Median over alternating pairs of the extra predict time of b over a on
// same-index batches; pairing cancels load drift at the scale of one batch.
double paired_predict_difference(const BenchSetup& a, const BenchSetup& b, std::size_t pairs) {
  auto time_one = [](const BenchSetup& s, std::size_t i) {
    const auto begin = std::chrono::steady_clock::now();
    s.model->predict(s.batches[i % s.batches.size()]);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  };
  std::vector<double> diffs;
  for (std::size_t i = 0; i < pairs; ++i) {
    double ta, tb;
    if (i % 2) {
      ta = time_one(a, i);
      tb = time_one(b, i);
    } else {
      tb = time_one(b, i);
      ta = time_one(a, i);
    }
    diffs.push_back(tb - ta);
  }
  return median(diffs);
}

Outcome latency() {
  const BenchSetup three = bench_setup(3), six = bench_setup(6);
  bool ordered = true;
  double worst_cv = 0.0;
  std::string detail = "batch 50";
  for (const auto* s : {&three, &six}) {
    const auto train = benchmark_latency(*s->model, s->batches, BenchMode::kTrain, 5, 20);
    const auto predict = benchmark_latency(*s->model, s->batches, BenchMode::kPredict, 5, 20);
    ordered = ordered && predict.mean_seconds < train.mean_seconds;
    worst_cv = std::max({worst_cv, train.sd_seconds / train.mean_seconds, predict.sd_seconds / predict.mean_seconds});
    detail += fmt(", %.0f slots: train %.4f s, predict %.4f s", static_cast<double>(s->model->ontology().informable().size()),
                  train.mean_seconds, predict.mean_seconds);
  }
  const double extra = paired_predict_difference(three, six, 100);
  const auto [heads3, heads6] = interleaved_medians(three, six, BenchMode::kClassify, 10);
  // one head per informable slot plus the shared request head
  const double expected = (6.0 + 1.0) / (3.0 + 1.0);
  const double ratio = heads6 / heads3;
  const bool ok = ordered && worst_cv < 0.25 && extra > 0.0 && std::abs(ratio / expected - 1.0) <= 0.30;
  detail += fmt("; max sd/mean %.3f; 6 slots add %.5f s per predict batch (paired median)", worst_cv, extra);
  detail += fmt("; classifier %.5f -> %.5f s, ratio %.2f vs %.2f expected (+-30%%)", heads3, heads6, ratio, expected);
  return {ok ? Status::kPass : Status::kFail, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"padding invariance", padding_invariance},
      {"metric oracles", metric_oracles},
      {"overfit memorization", overfit},
      {"parameter count", parameter_count},
      {"full reproduction", full_reproduction},
      {"latency methodology", latency},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    if (o.status == Status::kFail) ++failures;
    std::cout << "criterion " << i + 1 << " " << label(o.status) << "  " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failures ? "acceptance: FAIL" : "acceptance: no failures") << std::endl;
  return failures ? 1 : 0;
}
