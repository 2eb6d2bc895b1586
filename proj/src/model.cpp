#include "gsat/model.hpp"

#include <cmath>

namespace gsat {

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(data));
}

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

LstmParams make_lstm(std::size_t d, std::size_t h, std::mt19937_64& rng) {
  LstmParams p;
  p.w_input = uniform_tensor({4 * h, d}, fan_in_bound(d), rng);
  p.w_hidden = uniform_tensor({4 * h, h}, fan_in_bound(h), rng);
  p.bias = uniform_tensor({4 * h}, fan_in_bound(h), rng);
  auto bias = p.bias.mutable_data();
  for (std::size_t k = h; k < 2 * h; ++k) bias[k] += 1.0;  // forget gate
  return p;
}

SlotClassifierParams make_head(std::size_t d, std::size_t h, bool informable, std::mt19937_64& rng) {
  const std::size_t h2 = 2 * h;
  SlotClassifierParams p;
  p.w_value = uniform_tensor({h2, d}, fan_in_bound(d), rng);
  p.w_query = uniform_tensor({h2, h2}, fan_in_bound(h2), rng);
  p.b_query = uniform_tensor({h2}, fan_in_bound(h2), rng);
  p.w_attn = uniform_tensor({1, 2 * h2}, fan_in_bound(2 * h2), rng);
  p.b_attn = uniform_tensor({1}, fan_in_bound(2 * h2), rng);
  if (informable) p.score_none = uniform_tensor({1}, 1.0, rng);
  return p;
}

std::vector<std::int32_t> bag_of(const std::string& text, const Vocabulary& vocab) {
  return vocab.ids(tokenize(text));
}

Tensor step_mask(const Batch& batch, std::size_t t, bool keep_new) {
  std::vector<double> m(batch.size);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const bool real = t < batch.lengths[b];
    m[b] = (real == keep_new) ? 1.0 : 0.0;
  }
  return Tensor(Shape{batch.size, 1}, std::move(m));
}

bool all_real(const Batch& batch, std::size_t t) {
  for (std::size_t len : batch.lengths) {
    if (t >= len) return false;
  }
  return true;
}

// Runs one direction over the time-major input projection. Padded steps
// carry the previous state through unchanged.
std::vector<Tensor> run_lstm(const LstmParams& p, const Tensor& projection, const Batch& batch, std::size_t hidden,
                             bool reverse) {
  const std::size_t B = batch.size, T = batch.max_len, H = hidden;
  std::vector<Tensor> outputs(T);
  Tensor h = Tensor::zeros({B, H});
  Tensor c = Tensor::zeros({B, H});
  bool first = true;
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = reverse ? T - 1 - k : k;
    Tensor gates = slice_rows(projection, t * B, B);
    if (!first) gates = add(gates, linear(h, p.w_hidden));
    const Tensor i = sigmoid(slice_cols(gates, 0, H));
    const Tensor f = sigmoid(slice_cols(gates, H, H));
    const Tensor g = tanh(slice_cols(gates, 2 * H, H));
    const Tensor o = sigmoid(slice_cols(gates, 3 * H, H));
    const Tensor c_new = add(mul(f, c), mul(i, g));
    const Tensor h_new = mul(o, tanh(c_new));
    if (all_real(batch, t)) {
      h = h_new;
      c = c_new;
      first = false;
    } else {
      const Tensor keep = step_mask(batch, t, true);
      const Tensor hold = step_mask(batch, t, false);
      h = add(mul(keep, h_new), mul(hold, h));
      c = add(mul(keep, c_new), mul(hold, c));
      // In the reverse pass all-padding steps leave h at exactly zero.
      first = false;
    }
    outputs[t] = h;
  }
  return outputs;
}

}  // namespace

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (lstm_hidden == 0) throw ConfigError("lstm_hidden must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (vocab_size < 2) throw ConfigError("vocab_size must include the reserved tokens");
}

Json ModelConfig::to_json() const {
  return Json{{"embedding_dim", embedding_dim}, {"lstm_hidden", lstm_hidden},
              {"dropout_rate", dropout_rate},   {"vocab_size", vocab_size},
              {"embeddings_trainable", embeddings_trainable}, {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const Json& doc) {
  ModelConfig c;
  c.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
  c.lstm_hidden = doc.at("lstm_hidden").get<std::size_t>();
  c.dropout_rate = doc.at("dropout_rate").get<double>();
  c.vocab_size = doc.at("vocab_size").get<std::size_t>();
  c.embeddings_trainable = doc.at("embeddings_trainable").get<bool>();
  c.init_seed = doc.at("init_seed").get<std::uint64_t>();
  return c;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<TurnPrediction> BatchOutput::predictions() const {
  NoGradGuard guard;
  std::size_t rows = 0;
  if (!informable_logits.empty()) rows = informable_logits[0].rows();
  if (request_scores.defined()) rows = request_scores.rows();
  std::vector<TurnPrediction> out(rows);
  for (const Tensor& logits : informable_logits) {
    const Tensor probs = softmax(logits);
    const std::size_t C = probs.cols();
    for (std::size_t b = 0; b < rows; ++b) {
      out[b].informable.emplace_back(probs.data().begin() + static_cast<std::ptrdiff_t>(b * C),
                                     probs.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * C));
    }
  }
  if (request_scores.defined()) {
    const Tensor probs = sigmoid(request_scores);
    const std::size_t C = probs.cols();
    for (std::size_t b = 0; b < rows; ++b) {
      out[b].requestable.assign(probs.data().begin() + static_cast<std::ptrdiff_t>(b * C),
                                probs.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * C));
    }
  }
  return out;
}

GsatModel::GsatModel(ModelConfig config, Ontology ontology, Vocabulary vocab)
    : config_(config), ontology_(std::move(ontology)), vocab_(std::move(vocab)) {
  if (config_.vocab_size == 0) config_.vocab_size = vocab_.size();
  if (config_.vocab_size != vocab_.size()) {
    throw ConfigError("config vocab_size " + std::to_string(config_.vocab_size) + " does not match vocabulary of " +
                      std::to_string(vocab_.size()));
  }
  config_.validate();
  const std::size_t d = config_.embedding_dim, h = config_.lstm_hidden;
  std::mt19937_64 rng(config_.init_seed);

  encoder_.embedding = uniform_tensor({vocab_.size(), d}, fan_in_bound(d), rng);
  std::fill_n(encoder_.embedding.mutable_data().begin(), d, 0.0);
  encoder_.embedding.set_requires_grad(config_.embeddings_trainable);
  encoder_.forward = make_lstm(d, h, rng);
  encoder_.backward = make_lstm(d, h, rng);

  for (const auto& slot : ontology_.informable()) {
    informable_heads_.push_back(make_head(d, h, true, rng));
    std::vector<std::vector<std::int32_t>> bags;
    for (const auto& v : slot.values) bags.push_back(bag_of(v, vocab_));
    value_bags_.push_back(std::move(bags));
  }
  if (!ontology_.requestable().empty()) {
    request_head_ = make_head(d, h, false, rng);
    for (const auto& r : ontology_.requestable()) request_bags_.push_back(bag_of(r, vocab_));
  }
}

EncoderOutput GsatModel::encode(const Batch& batch, bool training, std::mt19937_64* rng) const {
  if (batch.size == 0 || batch.max_len == 0) throw ContractError("encode: empty batch");
  for (std::size_t len : batch.lengths) {
    if (len == 0) throw ContractError("encode: empty sequence");
  }
  const std::size_t B = batch.size, T = batch.max_len, H = config_.lstm_hidden;
  std::vector<std::int32_t> time_major(B * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) time_major[t * B + b] = batch.token_ids[b * T + t];
  }
  Tensor x = embedding(encoder_.embedding, time_major, Vocabulary::kPadId);
  x = dropout(x, config_.dropout_rate, training, rng);

  const Tensor proj_f = linear(x, encoder_.forward.w_input, encoder_.forward.bias);
  const Tensor proj_b = linear(x, encoder_.backward.w_input, encoder_.backward.bias);
  const std::vector<Tensor> fwd = run_lstm(encoder_.forward, proj_f, batch, H, false);
  const std::vector<Tensor> bwd = run_lstm(encoder_.backward, proj_b, batch, H, true);

  std::vector<Tensor> steps(T);
  for (std::size_t t = 0; t < T; ++t) steps[t] = concat_cols(std::vector<Tensor>{fwd[t], bwd[t]});
  EncoderOutput out;
  out.batch = B;
  out.steps = T;
  out.states = dropout(stack_time(steps), config_.dropout_rate, training, rng);
  // Forward state past the last real token equals the state at it.
  out.summary = dropout(concat_cols(std::vector<Tensor>{fwd[T - 1], bwd[0]}), config_.dropout_rate, training, rng);
  return out;
}

Tensor GsatModel::slot_value_matrix(std::size_t slot) const {
  const Tensor values = embedding_bag_sum(encoder_.embedding, value_bags_.at(slot));
  return transpose(linear(values, informable_heads_.at(slot).w_value));
}

Tensor GsatModel::request_value_matrix() const {
  if (request_bags_.empty()) throw ContractError("ontology has no requestable slots");
  return transpose(linear(embedding_bag_sum(encoder_.embedding, request_bags_), request_head_.w_value));
}

Tensor GsatModel::attend(const EncoderOutput& encoded, const Mask& mask, const SlotClassifierParams& head) const {
  const std::size_t H2 = 2 * config_.lstm_hidden;
  const Tensor query = relu(linear(encoded.summary, head.w_query, head.b_query));
  const Tensor from_query = linear(query, slice_cols(head.w_attn, 0, H2));
  const Tensor from_states = reshape(linear(encoded.states, slice_cols(head.w_attn, H2, H2)),
                                     Shape{encoded.batch, encoded.steps});
  const Tensor logits = tanh(add(add(from_states, from_query), head.b_attn));
  return attention_pool(softmax_masked(logits, mask), encoded.states);
}

Tensor GsatModel::head_scores(const SlotClassifierParams& head, const std::vector<std::vector<std::int32_t>>& bags,
                              const Tensor& context) const {
  const Tensor values = embedding_bag_sum(encoder_.embedding, bags);
  const Tensor value_repr = linear(values, head.w_value);  // Z_s transposed
  return linear(context, value_repr);
}

Tensor GsatModel::score_informable(std::size_t slot, const Tensor& context) const {
  const SlotClassifierParams& head = informable_heads_.at(slot);
  const Tensor scores = head_scores(head, value_bags_.at(slot), context);
  const Tensor none = repeat_rows(head.score_none, context.rows());
  return concat_cols(std::vector<Tensor>{none, scores});
}

Tensor GsatModel::score_requestable(const Tensor& context) const {
  if (request_bags_.empty()) throw ContractError("ontology has no requestable slots");
  return head_scores(request_head_, request_bags_, context);
}

BatchOutput GsatModel::classify(const EncoderOutput& encoded, const Mask& mask) const {
  BatchOutput out;
  for (std::size_t s = 0; s < informable_heads_.size(); ++s) {
    out.informable_logits.push_back(score_informable(s, attend(encoded, mask, informable_heads_[s])));
  }
  if (!request_bags_.empty()) out.request_scores = score_requestable(attend(encoded, mask, request_head_));
  return out;
}

BatchOutput GsatModel::forward(const Batch& batch, bool training, std::mt19937_64* rng) const {
  return classify(encode(batch, training, rng), batch.attention_mask);
}

std::vector<TurnPrediction> GsatModel::predict(const Batch& batch) const {
  NoGradGuard guard;
  return forward(batch, false).predictions();
}

TurnPrediction GsatModel::predict_turn(const std::vector<SystemAct>& system_actions,
                                       const std::string& utterance) const {
  Turn turn;
  turn.system_actions = system_actions;
  turn.user_utterance = utterance;
  std::vector<Example> examples(1);
  examples[0].token_ids = build_input(turn, vocab_);
  const std::size_t order[] = {0};
  const Batch batch = collate(examples, order, ontology_.informable().size(), ontology_.requestable().size());
  return predict(batch).front();
}

ParameterCount GsatModel::count_parameters() const {
  const std::size_t d = config_.embedding_dim, h = config_.lstm_hidden;
  ParameterCount count;
  count.embedding = config_.embeddings_trainable ? vocab_.size() * d : 0;
  count.encoder = 2 * 4 * (h * (d + h) + h);
  const std::size_t head = 2 * h * d + (2 * h * 2 * h + 2 * h) + (4 * h + 1);
  count.informable_heads.assign(informable_heads_.size(), head + 1);
  count.request_head = request_bags_.empty() ? 0 : head;
  count.total = count.embedding + count.encoder + count.request_head;
  for (std::size_t n : count.informable_heads) count.total += n;
  return count;
}

namespace {

void add_head(std::vector<NamedParameter>& out, const std::string& prefix, const SlotClassifierParams& head) {
  out.push_back({prefix + ".w_value", head.w_value});
  out.push_back({prefix + ".w_query", head.w_query});
  out.push_back({prefix + ".b_query", head.b_query});
  out.push_back({prefix + ".w_attn", head.w_attn});
  out.push_back({prefix + ".b_attn", head.b_attn});
  if (head.score_none.defined()) out.push_back({prefix + ".score_none", head.score_none});
}

}  // namespace

std::vector<NamedParameter> GsatModel::parameters() {
  std::vector<NamedParameter> out;
  out.push_back({"embedding", encoder_.embedding});
  for (const auto& [name, lstm] : {std::pair{"forward", &encoder_.forward}, std::pair{"backward", &encoder_.backward}}) {
    const std::string prefix = std::string("encoder.") + name;
    out.push_back({prefix + ".w_input", lstm->w_input});
    out.push_back({prefix + ".w_hidden", lstm->w_hidden});
    out.push_back({prefix + ".bias", lstm->bias});
  }
  for (std::size_t s = 0; s < informable_heads_.size(); ++s) {
    add_head(out, "informable." + ontology_.informable()[s].name, informable_heads_[s]);
  }
  if (!request_bags_.empty()) add_head(out, "request", request_head_);
  return out;
}

std::vector<NamedParameter> GsatModel::trainable_parameters() {
  std::vector<NamedParameter> out;
  for (auto& p : parameters()) {
    if (p.tensor.requires_grad()) out.push_back(std::move(p));
  }
  return out;
}

GsatModel GsatModel::clone() const {
  GsatModel copy = *this;
  auto deep = [](Tensor& t) {
    if (t.defined()) t = t.clone();
  };
  deep(copy.encoder_.embedding);
  for (LstmParams* p : {&copy.encoder_.forward, &copy.encoder_.backward}) {
    deep(p->w_input);
    deep(p->w_hidden);
    deep(p->bias);
  }
  auto deep_head = [&deep](SlotClassifierParams& h) {
    deep(h.w_value);
    deep(h.w_query);
    deep(h.b_query);
    deep(h.w_attn);
    deep(h.b_attn);
    deep(h.score_none);
  };
  for (auto& h : copy.informable_heads_) deep_head(h);
  deep_head(copy.request_head_);
  return copy;
}

}  // namespace gsat
