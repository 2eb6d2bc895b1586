#include "gsat/benchmark.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include "gsat/evaluation.hpp"
#include "gsat/training.hpp"

namespace gsat {

std::string to_string(BenchMode mode) {
  switch (mode) {
    case BenchMode::kTrain: return "train";
    case BenchMode::kPredict: return "predict";
    case BenchMode::kEncode: return "encode";
    case BenchMode::kClassify: return "classify";
  }
  return "unknown";
}

BenchMode parse_bench_mode(const std::string& text) {
  if (text == "train") return BenchMode::kTrain;
  if (text == "predict") return BenchMode::kPredict;
  if (text == "encode") return BenchMode::kEncode;
  if (text == "classify") return BenchMode::kClassify;
  throw ConfigError("unknown benchmark mode '" + text + "' (expected train, predict, encode or classify)");
}

Json LatencyReport::to_json() const {
  return Json{{"mode", to_string(mode)},          {"batch_size", batch_size},
              {"warmup", warmup},                 {"iterations", iterations},
              {"seconds_per_batch", mean_seconds}, {"sd_seconds", sd_seconds},
              {"hardware", hardware}};
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return cpu + ", 1 thread (" + std::to_string(std::thread::hardware_concurrency()) + " available)";
}

LatencyReport benchmark_latency(const GsatModel& model, const std::vector<Batch>& batches, BenchMode mode,
                                std::size_t warmup, std::size_t iterations, double learning_rate) {
  if (iterations < 20) throw ConfigError("benchmark needs at least 20 timed iterations, got " + std::to_string(iterations));
  if (batches.empty()) throw ConfigError("benchmark needs at least one batch");

  LatencyReport report;
  report.mode = mode;
  report.batch_size = batches.front().size;
  report.warmup = warmup;
  report.iterations = iterations;
  report.hardware = hardware_descriptor();

  // Train mode mutates parameters, so it gets its own copy.
  std::optional<GsatModel> scratch;
  std::optional<Adam> optimizer;
  std::mt19937_64 rng(7);
  if (mode == BenchMode::kTrain) {
    scratch.emplace(model.clone());
    optimizer.emplace(scratch->trainable_parameters(), learning_rate);
  }
  std::vector<EncoderOutput> encodings;
  if (mode == BenchMode::kClassify) {
    NoGradGuard guard;
    for (const Batch& batch : batches) encodings.push_back(model.encode(batch, false, nullptr));
  }

  auto run = [&](std::size_t index) {
    const Batch& batch = batches[index];
    switch (mode) {
      case BenchMode::kTrain: {
        const Tensor loss = turn_loss(scratch->forward(batch, true, &rng), batch);
        backward(loss);
        optimizer->step();
        break;
      }
      case BenchMode::kPredict: {
        auto preds = model.predict(batch);
        if (preds.empty()) throw ContractError("benchmark: empty prediction");
        break;
      }
      case BenchMode::kEncode: {
        NoGradGuard guard;
        const EncoderOutput out = model.encode(batch, false, nullptr);
        if (!out.summary.defined()) throw ContractError("benchmark: empty encoding");
        break;
      }
      case BenchMode::kClassify: {
        NoGradGuard guard;
        const BatchOutput out = model.classify(encodings[index], batch.attention_mask);
        if (out.informable_logits.empty() && !out.request_scores.defined()) {
          throw ContractError("benchmark: model has no heads");
        }
        break;
      }
    }
  };

  for (std::size_t i = 0; i < warmup; ++i) run(i % batches.size());
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto begin = std::chrono::steady_clock::now();
    run(i % batches.size());
    const auto end = std::chrono::steady_clock::now();
    report.samples.push_back(std::chrono::duration<double>(end - begin).count());
  }
  const MeanSd stats = mean_sd(report.samples);
  report.mean_seconds = stats.mean;
  report.sd_seconds = stats.sd;
  return report;
}

SyntheticCorpus make_synthetic_corpus(std::size_t informable_slots, std::size_t values_per_slot,
                                      std::size_t requestable_slots, std::size_t dialogues, std::uint64_t seed) {
  if (values_per_slot == 0) throw ConfigError("synthetic slots need at least one value");
  std::vector<InformableSlot> informable;
  for (std::size_t s = 0; s < informable_slots; ++s) {
    InformableSlot slot{"attr" + std::to_string(s), {}};
    for (std::size_t v = 0; v < values_per_slot; ++v) {
      slot.values.push_back("val" + std::to_string(s) + "x" + std::to_string(v));
    }
    informable.push_back(std::move(slot));
  }
  std::vector<std::string> requestable;
  for (std::size_t r = 0; r < requestable_slots; ++r) requestable.push_back("info" + std::to_string(r));

  SyntheticCorpus corpus{Ontology(std::move(informable), std::move(requestable)), {}};
  const Ontology& ont = corpus.ontology;
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const std::vector<std::string> fillers = {"i", "would", "like", "a", "place", "please", "that", "is",
                                            "looking", "for", "the", "with", "and", "thanks", "serves", "in"};

  for (std::size_t d = 0; d < dialogues; ++d) {
    Dialogue dialogue;
    dialogue.id = "synthetic-" + std::to_string(d);
    GoalMap joint;
    const std::size_t turns = 3 + pick(4);
    for (std::size_t t = 0; t < turns; ++t) {
      Turn turn;
      if (t > 0 && !ont.informable().empty()) {
        turn.system_actions.push_back({"request", ont.informable()[pick(ont.informable().size())].name, ""});
      }
      std::string text;
      const std::size_t words = 6 + pick(10);
      for (std::size_t w = 0; w < words; ++w) text += fillers[pick(fillers.size())] + " ";
      if (!ont.informable().empty() && pick(3) != 0) {
        const auto& slot = ont.informable()[pick(ont.informable().size())];
        const auto& value = slot.values[pick(slot.values.size())];
        text += value + " " + slot.name + " ";
        turn.gold_turn_goal[slot.name] = value;
      }
      if (!ont.requestable().empty() && pick(3) == 0) {
        const auto& req = ont.requestable()[pick(ont.requestable().size())];
        text += "what is the " + req + " ";
        turn.gold_requests.insert(req);
      }
      turn.user_utterance = text;
      for (const auto& [slot, value] : turn.gold_turn_goal) joint[slot] = value;
      dialogue.gold_joint_goals.push_back(joint);
      dialogue.turns.push_back(std::move(turn));
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  return corpus;
}

}  // namespace gsat
