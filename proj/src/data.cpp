#include "gsat/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace gsat {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

// ASCII plus the Latin-1 uppercase block encoded in UTF-8 (C3 80..9E, minus the x sign).
std::string lowercase(const std::string& text) {
  std::string out = text;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto c = static_cast<unsigned char>(out[i]);
    if (c < 0x80) {
      out[i] = static_cast<char>(std::tolower(c));
    } else if (c == 0xC3 && i + 1 < out.size()) {
      const auto next = static_cast<unsigned char>(out[i + 1]);
      if (next >= 0x80 && next <= 0x9E && next != 0x97) out[i + 1] = static_cast<char>(next + 0x20);
      ++i;
    }
  }
  return out;
}

std::string json_id(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  return value.dump();
}

[[noreturn]] void malformed(const std::string& dialogue, std::size_t turn, const std::string& what) {
  throw DataError("malformed record in dialogue " + dialogue + ", turn " + std::to_string(turn) + ": " + what);
}

std::vector<SystemAct> parse_system_acts(const Json& acts, const std::string& dialogue, std::size_t turn) {
  std::vector<SystemAct> out;
  if (acts.is_null()) return out;
  if (!acts.is_array()) malformed(dialogue, turn, "system_acts is not a list");
  for (const Json& act : acts) {
    if (act.is_string()) {
      out.push_back({"request", act.get<std::string>(), ""});
    } else if (act.is_array() && act.size() == 2 && act[0].is_string() && act[1].is_string()) {
      out.push_back({"confirm", act[0].get<std::string>(), act[1].get<std::string>()});
    } else if (act.is_object() && act.contains("act") && act["act"].is_string()) {
      SystemAct parsed{act["act"].get<std::string>(), "", ""};
      if (act.contains("slot")) parsed.slot = act["slot"].get<std::string>();
      if (act.contains("value")) parsed.value = act["value"].get<std::string>();
      out.push_back(std::move(parsed));
    } else {
      malformed(dialogue, turn, "unrecognised system act " + act.dump());
    }
  }
  return out;
}

// Reads a [[slot, value], ...] list.
std::vector<std::pair<std::string, std::string>> parse_pairs(const Json& pairs, const std::string& dialogue,
                                                             std::size_t turn, const char* field) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!pairs.is_array()) malformed(dialogue, turn, std::string(field) + " is not a list");
  for (const Json& pair : pairs) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
      malformed(dialogue, turn, std::string(field) + " entry " + pair.dump() + " is not a [slot, value] pair");
    }
    out.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
  }
  return out;
}

}  // namespace

Ontology::Ontology(std::vector<InformableSlot> informable, std::vector<std::string> requestable)
    : informable_(std::move(informable)), requestable_(std::move(requestable)) {
  std::set<std::string> names;
  for (auto& slot : informable_) {
    if (!names.insert(slot.name).second) throw DataError("duplicate informable slot '" + slot.name + "'");
    if (slot.values.empty()) throw DataError("informable slot '" + slot.name + "' has no values");
    std::set<std::string> seen;
    for (const auto& v : slot.values) {
      if (v == kNone) throw DataError("slot '" + slot.name + "' lists 'none' as a value");
      if (!seen.insert(v).second) throw DataError("slot '" + slot.name + "' repeats value '" + v + "'");
      if (tokenize(v).empty()) throw DataError("slot '" + slot.name + "' has a value without tokens");
    }
    if (!seen.count(kDontCare)) slot.values.emplace_back(kDontCare);
  }
  std::set<std::string> seen;
  for (const auto& r : requestable_) {
    if (!seen.insert(r).second) throw DataError("duplicate requestable slot '" + r + "'");
    if (tokenize(r).empty()) throw DataError("requestable slot name without tokens");
  }
}

Ontology Ontology::from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("informable") || !doc["informable"].is_object()) {
    throw DataError("ontology: expected an object with an 'informable' map");
  }
  std::vector<InformableSlot> informable;
  for (const auto& [name, values] : doc["informable"].items()) {
    if (!values.is_array()) throw DataError("ontology: values of '" + name + "' are not a list");
    InformableSlot slot{name, {}};
    for (const Json& v : values) slot.values.push_back(v.get<std::string>());
    informable.push_back(std::move(slot));
  }
  std::vector<std::string> requestable;
  if (doc.contains("requestable")) {
    for (const Json& r : doc["requestable"]) requestable.push_back(r.get<std::string>());
  }
  return Ontology(std::move(informable), std::move(requestable));
}

Ontology Ontology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ontology file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("ontology " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

Json Ontology::to_json() const {
  Json doc;
  doc["informable"] = Json::object();
  for (const auto& slot : informable_) doc["informable"][slot.name] = slot.values;
  doc["requestable"] = requestable_;
  return doc;
}

std::optional<std::size_t> Ontology::informable_index(const std::string& slot) const {
  for (std::size_t i = 0; i < informable_.size(); ++i) {
    if (informable_[i].name == slot) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Ontology::requestable_index(const std::string& slot) const {
  for (std::size_t i = 0; i < requestable_.size(); ++i) {
    if (requestable_[i] == slot) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Ontology::value_index(std::size_t slot, const std::string& value) const {
  const auto& values = informable_.at(slot).values;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return i;
  }
  return std::nullopt;
}

bool Ontology::operator==(const Ontology& other) const {
  if (requestable_ != other.requestable_ || informable_.size() != other.informable_.size()) return false;
  for (std::size_t i = 0; i < informable_.size(); ++i) {
    if (informable_[i].name != other.informable_[i].name || informable_[i].values != other.informable_[i].values) {
      return false;
    }
  }
  return true;
}

std::size_t Dataset::turn_count() const {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.turns.size();
  return n;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  const std::string lower = lowercase(text);
  std::size_t i = 0;
  while (i < lower.size()) {
    while (i < lower.size() && is_space(static_cast<unsigned char>(lower[i]))) ++i;
    std::size_t end = i;
    while (end < lower.size() && !is_space(static_cast<unsigned char>(lower[end]))) ++end;
    if (end == i) break;
    std::size_t lo = i, hi = end;
    while (lo < hi && is_punct(static_cast<unsigned char>(lower[lo]))) {
      tokens.emplace_back(1, lower[lo]);
      ++lo;
    }
    std::vector<std::string> trailing;
    while (hi > lo && is_punct(static_cast<unsigned char>(lower[hi - 1]))) {
      trailing.emplace_back(1, lower[hi - 1]);
      --hi;
    }
    if (hi > lo) tokens.push_back(lower.substr(lo, hi - lo));
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
    i = end;
  }
  return tokens;
}

std::vector<std::string> flatten_system_action(std::span<const SystemAct> actions) {
  std::vector<std::string> tokens;
  for (const auto& act : actions) {
    for (const std::string* part : {&act.act, &act.slot, &act.value}) {
      auto pieces = tokenize(*part);
      tokens.insert(tokens.end(), pieces.begin(), pieces.end());
    }
  }
  return tokens;
}

Dataset parse_dataset(const Json& doc, const Ontology& ontology) {
  if (!doc.is_array()) throw DataError("dataset: top level must be a list of dialogues");
  Dataset out;
  for (std::size_t d = 0; d < doc.size(); ++d) {
    const Json& record = doc[d];
    const std::string id = record.contains("dialogue_idx") ? json_id(record["dialogue_idx"]) : std::to_string(d);
    if (!record.is_object() || !record.contains("dialogue") || !record["dialogue"].is_array()) {
      malformed(id, 0, "missing 'dialogue' turn list");
    }
    Dialogue dialogue;
    dialogue.id = id;
    GoalMap accumulated;
    for (std::size_t t = 0; t < record["dialogue"].size(); ++t) {
      const Json& raw = record["dialogue"][t];
      if (!raw.is_object()) malformed(id, t, "turn is not an object");
      if (!raw.contains("transcript") || !raw["transcript"].is_string()) malformed(id, t, "missing transcript");
      Turn turn;
      turn.user_utterance = raw["transcript"].get<std::string>();
      if (raw.contains("system_acts")) turn.system_actions = parse_system_acts(raw["system_acts"], id, t);
      if (raw.contains("turn_label")) {
        for (const auto& [slot, value] : parse_pairs(raw["turn_label"], id, t, "turn_label")) {
          if (slot == "request") {
            if (!ontology.requestable_index(value)) {
              out.warnings.push_back("dialogue " + id + ", turn " + std::to_string(t) +
                                     ": unknown requestable slot '" + value + "' dropped");
              continue;
            }
            turn.gold_requests.insert(value);
            continue;
          }
          const auto slot_index = ontology.informable_index(slot);
          if (!slot_index) {
            out.warnings.push_back("dialogue " + id + ", turn " + std::to_string(t) + ": unknown informable slot '" +
                                   slot + "' dropped");
            continue;
          }
          if (!ontology.value_index(*slot_index, value)) {
            out.warnings.push_back("dialogue " + id + ", turn " + std::to_string(t) + ": value '" + value +
                                   "' not in ontology for slot '" + slot + "', kept as literal");
          }
          turn.gold_turn_goal[slot] = value;
        }
      }
      for (const auto& [slot, value] : turn.gold_turn_goal) accumulated[slot] = value;

      GoalMap joint = accumulated;
      if (raw.contains("belief_state")) {
        if (!raw["belief_state"].is_array()) malformed(id, t, "belief_state is not a list");
        GoalMap from_file;
        for (const Json& entry : raw["belief_state"]) {
          if (!entry.is_object() || !entry.contains("slots")) malformed(id, t, "belief_state entry without slots");
          if (entry.value("act", std::string("inform")) != "inform") continue;
          for (const auto& [slot, value] : parse_pairs(entry["slots"], id, t, "belief_state slots")) {
            if (ontology.informable_index(slot)) from_file[slot] = value;
          }
        }
        if (from_file != accumulated) {
          out.warnings.push_back("dialogue " + id + ", turn " + std::to_string(t) +
                                 ": belief_state disagrees with accumulated turn labels, using belief_state");
        }
        joint = std::move(from_file);
      }
      dialogue.gold_joint_goals.push_back(std::move(joint));
      dialogue.turns.push_back(std::move(turn));
    }
    out.dialogues.push_back(std::move(dialogue));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const Ontology& ontology) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("dataset " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_dataset(doc, ontology);
}

std::filesystem::path split_path(const std::filesystem::path& data_dir, const std::string& split,
                                 const std::string& lang) {
  const std::string woz_split = split == "dev" ? "validate" : split;
  const std::filesystem::path woz = data_dir / ("woz_" + woz_split + "_" + lang + ".json");
  if (std::filesystem::exists(woz)) return woz;
  const std::filesystem::path plain = data_dir / (split + ".json");
  if (std::filesystem::exists(plain)) return plain;
  return woz;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

std::int32_t Vocabulary::add(const std::string& token) {
  const auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

Vocabulary Vocabulary::build(std::span<const Dialogue> training, const Ontology& ontology) {
  Vocabulary vocab;
  auto add_text = [&vocab](const std::string& text) {
    for (const auto& tok : tokenize(text)) vocab.add(tok);
  };
  for (const char* act : {"inform", "request", "confirm"}) vocab.add(act);
  for (const auto& slot : ontology.informable()) {
    add_text(slot.name);
    for (const auto& v : slot.values) add_text(v);
  }
  for (const auto& r : ontology.requestable()) add_text(r);
  for (const auto& dialogue : training) {
    for (const auto& turn : dialogue.turns) {
      for (const auto& tok : flatten_system_action(turn.system_actions)) vocab.add(tok);
      add_text(turn.user_utterance);
    }
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw DataError("vocabulary must start with the reserved <pad> and <unk> entries");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw DataError("vocabulary repeats token '" + tokens[i] + "'");
    vocab.add(tokens[i]);
  }
  return vocab;
}

std::int32_t Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnknownId : it->second;
}

std::vector<std::int32_t> Vocabulary::ids(std::span<const std::string> tokens) const {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::int32_t> build_input(const Turn& turn, const Vocabulary& vocab) {
  auto tokens = flatten_system_action(turn.system_actions);
  auto utterance = tokenize(turn.user_utterance);
  tokens.insert(tokens.end(), utterance.begin(), utterance.end());
  auto ids = vocab.ids(tokens);
  if (ids.empty()) ids.push_back(Vocabulary::kUnknownId);
  return ids;
}

std::vector<Example> make_examples(std::span<const Dialogue> dialogues, const Vocabulary& vocab,
                                   const Ontology& ontology, std::vector<std::string>* warnings) {
  std::vector<Example> out;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    for (std::size_t t = 0; t < dialogues[d].turns.size(); ++t) {
      const Turn& turn = dialogues[d].turns[t];
      Example ex;
      ex.dialogue = d;
      ex.turn = t;
      ex.token_ids = build_input(turn, vocab);
      for (std::size_t s = 0; s < ontology.informable().size(); ++s) {
        const auto it = turn.gold_turn_goal.find(ontology.informable()[s].name);
        if (it == turn.gold_turn_goal.end()) {
          ex.informable_targets.push_back(0);
          continue;
        }
        const auto value = ontology.value_index(s, it->second);
        if (!value) {
          if (warnings) {
            warnings->push_back("dialogue " + dialogues[d].id + ", turn " + std::to_string(t) + ": skipping slot '" +
                                it->first + "' with out-of-ontology value '" + it->second + "'");
          }
          ex.informable_targets.push_back(-1);
          continue;
        }
        ex.informable_targets.push_back(static_cast<int>(*value) + 1);
      }
      for (const auto& r : ontology.requestable()) ex.request_targets.push_back(turn.gold_requests.count(r) ? 1.0 : 0.0);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

Batch collate(std::span<const Example> examples, std::span<const std::size_t> order, std::size_t num_slots,
              std::size_t num_requestable, std::size_t pad_to) {
  if (order.empty()) throw ContractError("collate: empty batch");
  Batch batch;
  batch.size = order.size();
  batch.max_len = pad_to;
  for (std::size_t idx : order) batch.max_len = std::max(batch.max_len, examples[idx].token_ids.size());
  batch.token_ids.assign(batch.size * batch.max_len, Vocabulary::kPadId);
  batch.attention_mask.assign(batch.size * batch.max_len, 0);
  batch.informable_targets.assign(num_slots, std::vector<int>(batch.size, 0));
  batch.request_targets.assign(batch.size * num_requestable, 0.0);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const Example& ex = examples[order[b]];
    if (ex.token_ids.empty()) throw ContractError("collate: example without tokens");
    batch.lengths.push_back(ex.token_ids.size());
    batch.example_index.push_back(order[b]);
    for (std::size_t t = 0; t < ex.token_ids.size(); ++t) {
      batch.token_ids[b * batch.max_len + t] = ex.token_ids[t];
      batch.attention_mask[b * batch.max_len + t] = 1;
    }
    for (std::size_t s = 0; s < num_slots && s < ex.informable_targets.size(); ++s) {
      batch.informable_targets[s][b] = ex.informable_targets[s];
    }
    for (std::size_t r = 0; r < num_requestable && r < ex.request_targets.size(); ++r) {
      batch.request_targets[b * num_requestable + r] = ex.request_targets[r];
    }
  }
  return batch;
}

std::vector<Batch> make_batches(std::span<const Example> examples, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed, std::size_t num_slots,
                                std::size_t num_requestable) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    batches.push_back(collate(examples, std::span<const std::size_t>(order).subspan(start, count), num_slots,
                              num_requestable));
  }
  return batches;
}

PretrainedEmbeddings load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                                std::size_t dim, std::span<const double> init) {
  if (init.size() != vocab.size() * dim) {
    throw ConfigError("embedding init matrix has " + std::to_string(init.size()) + " entries, expected " +
                      std::to_string(vocab.size() * dim));
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  PretrainedEmbeddings out;
  out.matrix.assign(init.begin(), init.end());
  std::vector<char> seen(vocab.size(), 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    // word2vec-style "count dim" header
    if (line_no == 1 && values.size() == 1 && std::all_of(token.begin(), token.end(), ::isdigit)) continue;
    if (values.size() != dim) {
      throw ConfigError("embedding file " + path.string() + " line " + std::to_string(line_no) + " has " +
                        std::to_string(values.size()) + " values, configured dimension is " + std::to_string(dim));
    }
    if (!vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.id(token));
    std::copy(values.begin(), values.end(), out.matrix.begin() + static_cast<std::ptrdiff_t>(id * dim));
    if (!seen[id]) {
      seen[id] = 1;
      ++out.matched;
    }
  }
  std::fill_n(out.matrix.begin(), dim, 0.0);
  out.coverage = static_cast<double>(out.matched) / static_cast<double>(vocab.size());
  return out;
}

}  // namespace gsat
