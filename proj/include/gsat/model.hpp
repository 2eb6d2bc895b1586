#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gsat/data.hpp"
#include "gsat/tensor.hpp"

namespace gsat {

struct ModelConfig {
  std::size_t embedding_dim = 128;
  std::size_t lstm_hidden = 64;
  double dropout_rate = 0.2;
  std::size_t vocab_size = 0;
  bool embeddings_trainable = true;
  std::uint64_t init_seed = 1;

  void validate() const;
  Json to_json() const;
  static ModelConfig from_json(const Json& doc);
};

struct LstmParams {
  Tensor w_input;   // [4H x d], gate order i, f, g, o
  Tensor w_hidden;  // [4H x H]
  Tensor bias;      // [4H]
};

struct EncoderParams {
  Tensor embedding;  // [|v| x d]
  LstmParams forward;
  LstmParams backward;
};

// One per informable slot plus one for the request head.
struct SlotClassifierParams {
  Tensor w_value;     // W_s [2H x d]
  Tensor w_query;     // W_h [2H x 2H]
  Tensor b_query;     // [2H]
  Tensor w_attn;      // W_c [1 x 4H]
  Tensor b_attn;      // [1]
  Tensor score_none;  // [1], informable heads only
};

struct EncoderOutput {
  Tensor states;   // [B*T x 2H] batch-major
  Tensor summary;  // h_L [B x 2H]
  std::size_t batch = 0;
  std::size_t steps = 0;
};

struct TurnPrediction {
  std::vector<std::vector<double>> informable;  // per slot: [none, values...]
  std::vector<double> requestable;              // per requestable slot
};

struct BatchOutput {
  std::vector<Tensor> informable_logits;  // per slot [B x (|V_s|+1)]
  Tensor request_scores;                  // [B x |S_req|]
  std::vector<TurnPrediction> predictions() const;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct ParameterCount {
  std::size_t embedding = 0;
  std::size_t encoder = 0;
  std::vector<std::size_t> informable_heads;
  std::size_t request_head = 0;
  std::size_t total = 0;
};

// Lowest index wins ties, so "none" (index 0) wins on fully tied logits.
std::size_t argmax(std::span<const double> values);

class GsatModel {
 public:
  GsatModel(ModelConfig config, Ontology ontology, Vocabulary vocab);

  const ModelConfig& config() const { return config_; }
  const Ontology& ontology() const { return ontology_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  EncoderOutput encode(const Batch& batch, bool training, std::mt19937_64* rng) const;
  // Z_s [2H x |V_s|]: W_s times the summed value embeddings.
  Tensor slot_value_matrix(std::size_t slot) const;
  Tensor request_value_matrix() const;
  // Context vector C [B x 2H] for one head (informable index, or num_informable for requests).
  Tensor attend(const EncoderOutput& encoded, const Mask& mask, const SlotClassifierParams& head) const;
  Tensor score_informable(std::size_t slot, const Tensor& context) const;  // logits [B x |V|+1]
  Tensor score_requestable(const Tensor& context) const;                   // logits [B x |S_req|]

  // Every slot head over an existing encoding.
  BatchOutput classify(const EncoderOutput& encoded, const Mask& mask) const;
  BatchOutput forward(const Batch& batch, bool training, std::mt19937_64* rng = nullptr) const;
  std::vector<TurnPrediction> predict(const Batch& batch) const;
  TurnPrediction predict_turn(const std::vector<SystemAct>& system_actions, const std::string& utterance) const;

  ParameterCount count_parameters() const;
  std::vector<NamedParameter> parameters();
  std::vector<NamedParameter> trainable_parameters();

  EncoderParams& encoder() { return encoder_; }
  std::vector<SlotClassifierParams>& informable_heads() { return informable_heads_; }
  SlotClassifierParams& request_head() { return request_head_; }

  GsatModel clone() const;

 private:
  Tensor head_scores(const SlotClassifierParams& head, const std::vector<std::vector<std::int32_t>>& bags,
                     const Tensor& context) const;

  ModelConfig config_;
  Ontology ontology_;
  Vocabulary vocab_;
  EncoderParams encoder_;
  std::vector<SlotClassifierParams> informable_heads_;
  SlotClassifierParams request_head_;
  std::vector<std::vector<std::vector<std::int32_t>>> value_bags_;  // per slot, per value
  std::vector<std::vector<std::int32_t>> request_bags_;
};

}  // namespace gsat
