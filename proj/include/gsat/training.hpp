#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsat/data.hpp"
#include "gsat/evaluation.hpp"
#include "gsat/model.hpp"

namespace gsat {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 50;
  std::size_t max_epochs = 60;
  std::size_t patience = 15;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // global gradient norm cap, 0 disables
  double request_threshold = 0.5;

  void validate() const;
  Json to_json() const;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string parameter)
      : std::runtime_error("non-finite gradient in parameter " + parameter), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

class Adam {
 public:
  explicit Adam(std::vector<NamedParameter> params, double learning_rate = 0.001, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  // Bias-corrected update of every parameter; gradients are cleared
  // afterwards. Throws NonFiniteGradient before touching any parameter.
  void step();
  void zero_grad();
  std::size_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<NamedParameter> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t step_ = 0;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_gradients(std::span<NamedParameter> params, double max_norm);

// Mean over the batch of: per-slot cross-entropy (target 0 when the slot is
// not mentioned) plus per-requestable binary cross-entropy.
Tensor turn_loss(const BatchOutput& output, const Batch& batch);

struct ModelCheckpoint {
  struct Array {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  ModelConfig config;
  std::vector<std::string> vocabulary;
  Ontology ontology;
  std::vector<Array> arrays;
  Json metrics = Json::object();
};

inline constexpr int kCheckpointVersion = 1;

// Parameters are narrowed to 32-bit floats.
ModelCheckpoint make_checkpoint(GsatModel& model, Json metrics = Json::object());
GsatModel model_from_checkpoint(const ModelCheckpoint& checkpoint);

// Layout: "GSAT-CHECKPOINT\n", decimal header length + "\n", JSON header,
// then every array as little-endian IEEE-754 float32 in header order.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
void save_checkpoint(GsatModel& model, const std::filesystem::path& path, Json metrics = Json::object());
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_float32_le(std::span<const float> values);
std::vector<float> decode_float32_le(std::span<const std::uint8_t> bytes);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_joint_goal = 0.0;
  double dev_turn_request = 0.0;
  double wall_clock_seconds = 0.0;
  bool improved = false;
  std::string aborted;  // diagnostics when the epoch stopped on a bad gradient

  Json to_json() const;
};

struct TrainResult {
  ModelCheckpoint best;
  std::size_t best_epoch = 0;
  double best_dev_joint_goal = -1.0;
  std::vector<EpochRecord> log;
};

TrainResult train(const std::vector<Dialogue>& train_set, const std::vector<Dialogue>& dev_set, GsatModel& model,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace gsat
