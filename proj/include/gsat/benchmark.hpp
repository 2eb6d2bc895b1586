#pragma once

#include <string>
#include <vector>

#include "gsat/data.hpp"
#include "gsat/model.hpp"

namespace gsat {

enum class BenchMode { kTrain, kPredict, kEncode, kClassify };

std::string to_string(BenchMode mode);
BenchMode parse_bench_mode(const std::string& text);

struct LatencyReport {
  BenchMode mode = BenchMode::kPredict;
  std::size_t batch_size = 0;
  std::size_t warmup = 0;
  std::size_t iterations = 0;
  double mean_seconds = 0.0;
  double sd_seconds = 0.0;
  std::vector<double> samples;  // one wall-clock sample per timed batch
  std::string hardware;

  Json to_json() const;
};

// Times model execution only: batches are prepared by the caller. Train mode
// runs forward, loss, backward and an Adam step on a private copy of the
// model; predict mode runs the inference forward pass; encode mode runs only
// the shared encoder; classify mode runs only the slot heads over encodings
// computed before timing starts. Batches are cycled when iterations exceed
// their count.
LatencyReport benchmark_latency(const GsatModel& model, const std::vector<Batch>& batches, BenchMode mode,
                                std::size_t warmup = 5, std::size_t iterations = 20, double learning_rate = 0.001);

std::string hardware_descriptor();

struct SyntheticCorpus {
  Ontology ontology;
  std::vector<Dialogue> dialogues;
};

// Restaurant-style dialogues over an ontology of generated slots. Utterances
// mention random slot values and requestable slot names.
SyntheticCorpus make_synthetic_corpus(std::size_t informable_slots, std::size_t values_per_slot,
                                      std::size_t requestable_slots, std::size_t dialogues, std::uint64_t seed);

}  // namespace gsat
