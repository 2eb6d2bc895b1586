#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gsat/tensor.hpp"

namespace gsat {

using Json = nlohmann::ordered_json;

inline constexpr const char* kDontCare = "dontcare";
inline constexpr const char* kNone = "none";

struct InformableSlot {
  std::string name;
  std::vector<std::string> values;  // file order, "dontcare" appended
};

class Ontology {
 public:
  Ontology() = default;
  Ontology(std::vector<InformableSlot> informable, std::vector<std::string> requestable);

  // {"informable": {slot: [values...]}, "requestable": [slots...]}
  static Ontology from_json(const Json& doc);
  static Ontology load(const std::filesystem::path& path);
  Json to_json() const;

  const std::vector<InformableSlot>& informable() const { return informable_; }
  const std::vector<std::string>& requestable() const { return requestable_; }

  std::optional<std::size_t> informable_index(const std::string& slot) const;
  std::optional<std::size_t> requestable_index(const std::string& slot) const;
  std::optional<std::size_t> value_index(std::size_t slot, const std::string& value) const;

  bool operator==(const Ontology& other) const;

 private:
  std::vector<InformableSlot> informable_;
  std::vector<std::string> requestable_;
};

struct SystemAct {
  std::string act;
  std::string slot;   // empty when absent
  std::string value;  // empty when absent
  bool operator==(const SystemAct&) const = default;
};

// Informable slot -> value. Slots without a constraint are absent.
using GoalMap = std::map<std::string, std::string>;

struct Turn {
  std::vector<SystemAct> system_actions;
  std::string user_utterance;
  GoalMap gold_turn_goal;
  std::set<std::string> gold_requests;
  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::vector<GoalMap> gold_joint_goals;  // one per turn, accumulated
};

struct Dataset {
  std::vector<Dialogue> dialogues;
  std::vector<std::string> warnings;
  std::size_t turn_count() const;
};

std::vector<std::string> tokenize(const std::string& text);
std::vector<std::string> flatten_system_action(std::span<const SystemAct> actions);

// Parses the WOZ2.0 JSON layout. system_acts entries may be a bare string
// (request of that slot), a [slot, value] pair (confirm), or an object
// {"act", "slot", "value"}.
Dataset parse_dataset(const Json& doc, const Ontology& ontology);
Dataset load_dataset(const std::filesystem::path& path, const Ontology& ontology);

// File for a split in a WOZ2.0 data directory; split is train, dev or test.
std::filesystem::path split_path(const std::filesystem::path& data_dir, const std::string& split,
                                 const std::string& lang);

class Vocabulary {
 public:
  static constexpr std::int32_t kPadId = 0;
  static constexpr std::int32_t kUnknownId = 1;

  Vocabulary();
  // Ontology tokens first, then training tokens in order of first occurrence.
  static Vocabulary build(std::span<const Dialogue> training, const Ontology& ontology);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::int32_t add(const std::string& token);

  std::vector<std::int32_t> ids(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

std::vector<std::int32_t> build_input(const Turn& turn, const Vocabulary& vocab);

// A turn converted to model inputs and index-aligned targets.
struct Example {
  std::vector<std::int32_t> token_ids;
  std::vector<int> informable_targets;  // per slot: 0 = none, 1 + value index, -1 = skip
  std::vector<double> request_targets;  // per requestable slot, 0 or 1
  std::size_t dialogue = 0;
  std::size_t turn = 0;
};

std::vector<Example> make_examples(std::span<const Dialogue> dialogues, const Vocabulary& vocab,
                                   const Ontology& ontology, std::vector<std::string>* warnings = nullptr);

struct Batch {
  std::size_t size = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> token_ids;  // [size x max_len], 0 past each length
  std::vector<std::size_t> lengths;
  Mask attention_mask;                  // [size x max_len]
  std::vector<std::vector<int>> informable_targets;  // [slot][row]
  std::vector<double> request_targets;               // [size x requestable]
  std::vector<std::size_t> example_index;

  std::span<const std::int32_t> row(std::size_t b) const {
    return std::span<const std::int32_t>(token_ids).subspan(b * max_len, lengths[b]);
  }
};

// Pads a set of examples into one batch. pad_to widens past the natural max length.
Batch collate(std::span<const Example> examples, std::span<const std::size_t> order, std::size_t num_slots,
              std::size_t num_requestable, std::size_t pad_to = 0);

// Shuffles when shuffle_seed is set; otherwise keeps example order.
std::vector<Batch> make_batches(std::span<const Example> examples, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed, std::size_t num_slots,
                                std::size_t num_requestable);

struct PretrainedEmbeddings {
  std::vector<double> matrix;  // [vocab x dim]
  std::size_t matched = 0;
  double coverage = 0.0;       // matched / vocab size
};

// Fills rows from a "token f1 f2 ... fd" text file; rows absent from the file
// keep their values from init. Row 0 (padding) is zeroed.
PretrainedEmbeddings load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                                std::size_t dim, std::span<const double> init);

}  // namespace gsat
