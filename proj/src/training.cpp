#include "gsat/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace gsat {

namespace {

constexpr const char* kMagic = "GSAT-CHECKPOINT";

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

Json TrainConfig::to_json() const {
  return Json{{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"max_epochs", max_epochs},
              {"patience", patience},           {"seed", seed},             {"clip_norm", clip_norm},
              {"request_threshold", request_threshold}};
}

Adam::Adam(std::vector<NamedParameter> params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(lr_ > 0.0)) throw ConfigError("Adam learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  ++step_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& param = params_[i].tensor;
    if (!param.has_grad()) continue;
    const auto grad = param.grad();
    auto data = param.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad[k] * grad[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      data[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double clip_gradients(std::span<NamedParameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

Tensor turn_loss(const BatchOutput& output, const Batch& batch) {
  if (output.informable_logits.size() != batch.informable_targets.size()) {
    throw ContractError("turn_loss: output has " + std::to_string(output.informable_logits.size()) +
                        " informable heads, batch has targets for " + std::to_string(batch.informable_targets.size()));
  }
  std::vector<Tensor> terms;
  for (std::size_t s = 0; s < output.informable_logits.size(); ++s) {
    terms.push_back(cross_entropy_logits(output.informable_logits[s], batch.informable_targets[s]));
  }
  if (output.request_scores.defined()) terms.push_back(bce_with_logits(output.request_scores, batch.request_targets));
  if (terms.empty()) throw ContractError("turn_loss: model has no heads");
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(batch.size));
}

ModelCheckpoint make_checkpoint(GsatModel& model, Json metrics) {
  ModelCheckpoint ck;
  ck.config = model.config();
  ck.vocabulary = model.vocabulary().tokens();
  ck.ontology = model.ontology();
  ck.metrics = std::move(metrics);
  for (const auto& p : model.parameters()) {
    ModelCheckpoint::Array array{p.name, p.tensor.shape(), {}};
    array.values.reserve(p.tensor.numel());
    for (double v : p.tensor.data()) array.values.push_back(static_cast<float>(v));
    ck.arrays.push_back(std::move(array));
  }
  return ck;
}

GsatModel model_from_checkpoint(const ModelCheckpoint& checkpoint) {
  GsatModel model(checkpoint.config, checkpoint.ontology, Vocabulary::from_tokens(checkpoint.vocabulary));
  auto params = model.parameters();
  if (params.size() != checkpoint.arrays.size()) {
    throw CheckpointError("incompatible checkpoint: " + std::to_string(checkpoint.arrays.size()) +
                          " arrays, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& array = checkpoint.arrays[i];
    if (array.name != params[i].name || array.shape != params[i].tensor.shape()) {
      throw CheckpointError("incompatible checkpoint: array '" + array.name + "' " + shape_to_string(array.shape) +
                            " does not match model parameter '" + params[i].name + "' " +
                            shape_to_string(params[i].tensor.shape()));
    }
    auto data = params[i].tensor.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<double>(array.values[k]);
  }
  return model;
}

std::vector<std::uint8_t> encode_float32_le(std::span<const float> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>((bits >> shift) & 0xFFu));
  }
  return out;
}

std::vector<float> decode_float32_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw CheckpointError("float32 payload length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  Json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = checkpoint.config.to_json();
  header["vocabulary"] = checkpoint.vocabulary;
  header["ontology"] = checkpoint.ontology.to_json();
  header["metrics"] = checkpoint.metrics;
  Json arrays = Json::array();
  std::size_t count = 0;
  for (const auto& a : checkpoint.arrays) {
    arrays.push_back(Json{{"name", a.name}, {"shape", a.shape}, {"offset", count}, {"count", a.values.size()}});
    count += a.values.size();
  }
  header["arrays"] = arrays;
  header["payload_bytes"] = count * 4;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << kMagic << '\n' << text.size() << '\n' << text;
  for (const auto& a : checkpoint.arrays) {
    const auto bytes = encode_float32_le(a.values);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw CheckpointError("failed while writing checkpoint " + path.string());
}

void save_checkpoint(GsatModel& model, const std::filesystem::path& path, Json metrics) {
  save_checkpoint(make_checkpoint(model, std::move(metrics)), path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string magic_line = std::string(kMagic) + "\n";
  if (blob.compare(0, magic_line.size(), magic_line) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  const std::size_t length_end = blob.find('\n', magic_line.size());
  if (length_end == std::string::npos) throw CheckpointError(path.string() + ": truncated header length");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(blob.substr(magic_line.size(), length_end - magic_line.size()));
  } catch (const std::exception&) {
    throw CheckpointError(path.string() + ": unreadable header length");
  }
  const std::size_t header_start = length_end + 1;
  if (blob.size() < header_start + header_len) throw CheckpointError(path.string() + ": truncated header");

  Json header;
  try {
    header = Json::parse(blob.substr(header_start, header_len));
  } catch (const Json::parse_error& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": incompatible checkpoint version " +
                          header.value("format_version", Json(nullptr)).dump() + ", expected " +
                          std::to_string(kCheckpointVersion));
  }

  ModelCheckpoint ck;
  try {
    ck.config = ModelConfig::from_json(header.at("config"));
    ck.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ck.ontology = Ontology::from_json(header.at("ontology"));
    ck.metrics = header.value("metrics", Json::object());
    const std::size_t payload = header.at("payload_bytes").get<std::size_t>();
    const std::size_t payload_start = header_start + header_len;
    if (blob.size() != payload_start + payload) {
      throw CheckpointError(path.string() + ": payload is " + std::to_string(blob.size() - payload_start) +
                            " bytes, header declares " + std::to_string(payload));
    }
    const auto* base = reinterpret_cast<const std::uint8_t*>(blob.data()) + payload_start;
    for (const Json& a : header.at("arrays")) {
      ModelCheckpoint::Array array;
      array.name = a.at("name").get<std::string>();
      array.shape = a.at("shape").get<Shape>();
      const std::size_t offset = a.at("offset").get<std::size_t>();
      const std::size_t count = a.at("count").get<std::size_t>();
      if (count != shape_numel(array.shape) || (offset + count) * 4 > payload) {
        throw CheckpointError(path.string() + ": array '" + array.name + "' has inconsistent extent");
      }
      array.values = decode_float32_le(std::span<const std::uint8_t>(base + offset * 4, count * 4));
      ck.arrays.push_back(std::move(array));
    }
  } catch (const Json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  } catch (const DataError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (ck.config.vocab_size != ck.vocabulary.size()) {
    throw CheckpointError(path.string() + ": config vocab_size disagrees with stored vocabulary");
  }
  return ck;
}

Json EpochRecord::to_json() const {
  Json j{{"epoch", epoch},
         {"train_loss", train_loss},
         {"dev_joint_goal", dev_joint_goal},
         {"dev_turn_request", dev_turn_request},
         {"wall_clock", wall_clock_seconds},
         {"improved", improved}};
  if (!aborted.empty()) j["aborted"] = aborted;
  return j;
}

TrainResult train(const std::vector<Dialogue>& train_set, const std::vector<Dialogue>& dev_set, GsatModel& model,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  const Ontology& ontology = model.ontology();
  const auto examples = make_examples(train_set, model.vocabulary(), ontology);
  if (examples.empty()) throw ConfigError("training set has no turns");
  if (dev_set.empty()) throw ConfigError("development set is empty");

  auto params = model.trainable_parameters();
  Adam optimizer(params, config.learning_rate);
  std::mt19937_64 dropout_rng(config.seed);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ull);

  TrainResult result;
  std::size_t since_improvement = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    const auto batches = make_batches(examples, config.batch_size, shuffle_rng(), ontology.informable().size(),
                                      ontology.requestable().size());
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const Batch& batch : batches) {
      const Tensor loss = turn_loss(model.forward(batch, true, &dropout_rng), batch);
      backward(loss);
      if (config.clip_norm > 0.0) clip_gradients(params, config.clip_norm);
      try {
        optimizer.step();
      } catch (const NonFiniteGradient& e) {
        optimizer.zero_grad();
        record.aborted = e.what();
        break;
      }
      loss_sum += loss.item() * static_cast<double>(batch.size);
      seen += batch.size;
    }
    record.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;

    const EvalReport dev = evaluate(model, dev_set, config.request_threshold, config.batch_size);
    record.dev_joint_goal = dev.joint_goal_accuracy;
    record.dev_turn_request = dev.turn_request_accuracy;
    record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (dev.joint_goal_accuracy > result.best_dev_joint_goal) {
      record.improved = true;
      result.best_dev_joint_goal = dev.joint_goal_accuracy;
      result.best_epoch = epoch;
      Json metrics = dev.to_json();
      metrics["epoch"] = epoch;
      result.best = make_checkpoint(model, std::move(metrics));
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (since_improvement >= config.patience) break;
  }
  return result;
}

}  // namespace gsat
