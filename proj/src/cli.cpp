#include "gsat/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "gsat/benchmark.hpp"
#include "gsat/training.hpp"

namespace gsat {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t as_size(const Json& v, const std::string& key) {
  try {
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) return v.get<std::size_t>();
    if (v.is_string()) {
      const std::string s = trim(v.get<std::string>());
      std::size_t pos = 0;
      const auto n = std::stoull(s, &pos);
      if (pos == s.size() && s.find('-') == std::string::npos) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a non-negative integer, got " + v.dump());
}

double as_double(const Json& v, const std::string& key) {
  try {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = trim(v.get<std::string>());
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos == s.size()) return d;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got " + v.dump());
}

std::string as_string(const Json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("'" + key + "' expects a string, got " + v.dump());
}

std::string env_name(const std::string& key) {
  std::string name = "GSAT_";
  for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const std::vector<FlagSpec>& flag_specs() {
  static const std::vector<FlagSpec> specs = {
      {"--data", "data", "directory holding the WOZ2.0 split files"},
      {"--ontology", "ontology", "ontology JSON file"},
      {"--lang", "lang", "language tag of the split files: en, it or de"},
      {"--out", "out", "output directory for checkpoints and logs"},
      {"--checkpoint", "checkpoint", "model checkpoint file"},
      {"--embeddings", "embeddings", "pre-trained vector file (token followed by floats)"},
      {"--split", "split", "evaluation split: dev or test"},
      {"--mode", "mode", "benchmark mode: train, predict, encode, classify or both"},
      {"--seed", "seeds", "random seed"},
      {"--seeds", "seeds", "seed list: 3, 1,2,5 or 1..10"},
      {"--batch-size", "batch_size", "turns per batch"},
      {"--iters", "iters", "timed benchmark iterations (>= 20)"},
      {"--warmup", "warmup", "untimed benchmark iterations"},
      {"--embedding-dim", "embedding_dim", "embedding dimension"},
      {"--hidden", "lstm_hidden", "LSTM hidden units per direction"},
      {"--dropout", "dropout", "dropout rate"},
      {"--lr", "learning_rate", "Adam learning rate"},
      {"--max-epochs", "max_epochs", "epoch budget"},
      {"--patience", "patience", "epochs without dev joint-goal gain before stopping"},
      {"--clip-norm", "clip_norm", "global gradient norm cap (0 disables)"},
      {"--threshold", "threshold", "request probability threshold"},
      {"--synthetic-slots", "synthetic_slots", "informable slots of the synthetic bench ontology"},
  };
  return specs;
}

Json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    Json doc = Json::parse(in);
    if (!doc.is_object()) throw ConfigError("config file " + path + " must hold an object");
    return doc;
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

void require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::is_directory(path)) throw ConfigError(std::string(what) + " directory does not exist: " + path);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file does not exist: " + path);
}

void check_lang(const std::string& lang) {
  if (lang != "en" && lang != "it" && lang != "de") throw ConfigError("--lang must be en, it or de");
}

fs::path require_split(const RunConfig& cfg, const std::string& split) {
  const fs::path p = split_path(cfg.data, split, cfg.lang);
  if (!fs::is_regular_file(p)) throw ConfigError("split file not found: " + p.string());
  return p;
}

Dataset load_split(const fs::path& path, const Ontology& ontology, std::ostream& err) {
  Dataset ds = load_dataset(path, ontology);
  for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
  err << "loaded " << ds.dialogues.size() << " dialogues (" << ds.turn_count() << " turns) from " << path.string()
      << "\n";
  return ds;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_dir(cfg.data, "data");
  require_file(cfg.ontology, "ontology");
  if (cfg.out.empty()) throw ConfigError("missing --out");
  if (!cfg.embeddings.empty()) require_file(cfg.embeddings, "embeddings");
  check_lang(cfg.lang);
  const fs::path train_path = require_split(cfg, "train");
  const fs::path dev_path = require_split(cfg, "dev");
  const fs::path test_path = split_path(cfg.data, "test", cfg.lang);

  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.clip_norm = cfg.clip_norm;
  tc.request_threshold = cfg.threshold;
  tc.validate();
  if (cfg.seeds.empty()) throw ConfigError("no seeds given");

  const Ontology ontology = Ontology::load(cfg.ontology);
  const Dataset train_set = load_split(train_path, ontology, err);
  const Dataset dev_set = load_split(dev_path, ontology, err);
  std::optional<Dataset> test_set;
  if (fs::is_regular_file(test_path)) test_set = load_split(test_path, ontology, err);
  const Vocabulary vocab = Vocabulary::build(train_set.dialogues, ontology);

  ModelConfig mc;
  mc.embedding_dim = cfg.embedding_dim;
  mc.lstm_hidden = cfg.lstm_hidden;
  mc.dropout_rate = cfg.dropout;
  mc.vocab_size = vocab.size();
  mc.validate();

  fs::create_directories(cfg.out);
  std::vector<double> joint, request;
  Json per_seed = Json::array();
  const std::string eval_split = test_set ? "test" : "dev";
  for (std::uint64_t seed : cfg.seeds) {
    mc.init_seed = seed;
    tc.seed = seed;
    GsatModel model(mc, ontology, vocab);
    if (!cfg.embeddings.empty()) {
      auto& table = model.encoder().embedding;
      const auto loaded = load_pretrained_embeddings(cfg.embeddings, vocab, mc.embedding_dim, table.data());
      std::copy(loaded.matrix.begin(), loaded.matrix.end(), table.mutable_data().begin());
      err << "embedding coverage " << std::fixed << std::setprecision(4) << loaded.coverage << " (" << loaded.matched
          << "/" << vocab.size() << ")\n";
    }
    const fs::path run_dir = fs::path(cfg.out) / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);
    std::ofstream log(run_dir / "train_log.jsonl");
    const TrainResult result = train(train_set.dialogues, dev_set.dialogues, model, tc, [&](const EpochRecord& r) {
      Json rec = r.to_json();
      rec["seed"] = seed;
      log << rec.dump() << "\n";
      log.flush();
      err << "seed " << seed << " epoch " << r.epoch << " loss " << r.train_loss << " dev joint " << r.dev_joint_goal
          << "\n";
    });
    save_checkpoint(result.best, run_dir / "model.ckpt");
    const GsatModel best = model_from_checkpoint(result.best);
    const EvalReport report = evaluate(best, test_set ? test_set->dialogues : dev_set.dialogues, cfg.threshold);
    joint.push_back(report.joint_goal_accuracy);
    request.push_back(report.turn_request_accuracy);
    Json entry = report.to_json();
    entry["seed"] = seed;
    entry["best_epoch"] = result.best_epoch;
    entry["best_dev_joint_goal"] = result.best_dev_joint_goal;
    per_seed.push_back(entry);
  }
  const MeanSd jg = mean_sd(joint);
  const MeanSd tr = mean_sd(request);
  Json summary{{"split", eval_split},
               {"seeds", cfg.seeds},
               {"joint_goal", {{"mean", jg.mean}, {"sd", jg.sd}}},
               {"turn_request", {{"mean", tr.mean}, {"sd", tr.sd}}},
               {"runs", per_seed}};
  std::ofstream(fs::path(cfg.out) / "summary.json") << summary.dump(2) << "\n";
  out << summary.dump() << "\n";
  out << std::fixed << std::setprecision(1) << eval_split << " joint goal " << 100.0 * jg.mean << " +- "
      << 100.0 * jg.sd << ", turn request " << 100.0 * tr.mean << " +- " << 100.0 * tr.sd << " over "
      << cfg.seeds.size() << " seed(s)\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_file(cfg.checkpoint, "checkpoint");
  require_dir(cfg.data, "data");
  check_lang(cfg.lang);
  if (cfg.split != "dev" && cfg.split != "test") throw ConfigError("--split must be dev or test");
  const fs::path split = require_split(cfg, cfg.split);
  std::optional<Ontology> override_ontology;
  if (!cfg.ontology.empty()) {
    require_file(cfg.ontology, "ontology");
    override_ontology = Ontology::load(cfg.ontology);
  }
  const ModelCheckpoint ck = load_checkpoint(cfg.checkpoint);
  if (override_ontology && !(*override_ontology == ck.ontology)) {
    throw ConfigError("ontology " + cfg.ontology + " does not match the ontology stored in checkpoint " +
                      cfg.checkpoint);
  }
  const GsatModel model = model_from_checkpoint(ck);
  const Dataset ds = load_split(split, model.ontology(), err);
  const EvalReport report = evaluate(model, ds.dialogues, cfg.threshold, cfg.batch_size);
  out << report.to_json().dump() << "\n" << report.table();
  return kExitOk;
}

std::vector<Batch> bench_batches(const GsatModel& model, const std::vector<Dialogue>& dialogues, std::size_t batch_size) {
  auto examples = make_examples(dialogues, model.vocabulary(), model.ontology());
  if (examples.empty()) throw ConfigError("no turns available for benchmarking");
  // Repeat short corpora so every batch is full.
  const std::size_t original = examples.size();
  while (examples.size() < batch_size) examples.push_back(examples[examples.size() % original]);
  const std::size_t usable = examples.size() / batch_size * batch_size;
  examples.resize(usable);
  return make_batches(examples, batch_size, std::nullopt, model.ontology().informable().size(),
                      model.ontology().requestable().size());
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.mode != "both" && cfg.mode != "train" && cfg.mode != "predict" && cfg.mode != "encode" &&
      cfg.mode != "classify") {
    throw ConfigError("--mode must be train, predict, encode, classify or both");
  }
  if (cfg.iters < 20) throw ConfigError("--iters must be at least 20");
  if (cfg.batch_size < 1) throw ConfigError("--batch-size must be at least 1");
  std::optional<GsatModel> model;
  std::vector<Dialogue> dialogues;
  if (!cfg.checkpoint.empty()) {
    require_file(cfg.checkpoint, "checkpoint");
    model.emplace(model_from_checkpoint(load_checkpoint(cfg.checkpoint)));
    if (!cfg.data.empty()) {
      require_dir(cfg.data, "data");
      dialogues = load_split(require_split(cfg, cfg.split), model->ontology(), err).dialogues;
    }
  }
  if (!model || dialogues.empty()) {
    SyntheticCorpus corpus = make_synthetic_corpus(cfg.synthetic_slots, 10, 4, 40, 11);
    if (!model) {
      ModelConfig mc;
      mc.embedding_dim = cfg.embedding_dim;
      mc.lstm_hidden = cfg.lstm_hidden;
      mc.dropout_rate = cfg.dropout;
      const Vocabulary vocab = Vocabulary::build(corpus.dialogues, corpus.ontology);
      mc.vocab_size = vocab.size();
      model.emplace(mc, corpus.ontology, vocab);
      err << "benchmarking a freshly initialised model on a synthetic ontology with " << cfg.synthetic_slots
          << " informable slots\n";
    }
    // Labels for slots outside the model's ontology are ignored by make_examples.
    if (dialogues.empty()) dialogues = std::move(corpus.dialogues);
  }
  const auto batches = bench_batches(*model, dialogues, cfg.batch_size);
  std::vector<BenchMode> modes;
  if (cfg.mode == "both") {
    modes = {BenchMode::kTrain, BenchMode::kPredict};
  } else {
    modes = {parse_bench_mode(cfg.mode)};
  }
  std::vector<LatencyReport> reports;
  for (BenchMode m : modes) {
    reports.push_back(benchmark_latency(*model, batches, m, cfg.warmup, cfg.iters, cfg.learning_rate));
    out << reports.back().to_json().dump() << "\n";
  }
  out << std::fixed << std::setprecision(4);
  out << "mode      seconds/batch   sd        batch  iters\n";
  for (const auto& r : reports) {
    std::string name = to_string(r.mode);
    name.resize(10, ' ');
    out << name << std::setw(10) << r.mean_seconds << "      " << std::setw(8) << r.sd_seconds << "  " << std::setw(5)
        << r.batch_size << "  " << r.iterations << "\n";
  }
  out << "reference (GPU, batch 50): train 0.06 s, predict 0.03 s\n";
  out << "hardware: " << reports.front().hardware << "\n";
  return kExitOk;
}

int cmd_track(const RunConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  require_file(cfg.checkpoint, "checkpoint");
  const GsatModel model = model_from_checkpoint(load_checkpoint(cfg.checkpoint));
  TrackSession session(model, cfg.threshold);
  err << "enter an optional system action such as confirm(food=italian), then the user utterance; "
         ":reset clears the state, :quit exits\n";
  std::string line;
  out << "> " << std::flush;
  while (!session.finished() && std::getline(in, line)) {
    out << session.handle_line(line);
    if (!session.finished()) out << "> " << std::flush;
  }
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "data",          "ontology",   "lang",      "out",          "checkpoint",  "embeddings",
      "split",         "mode",       "seeds",     "batch_size",   "iters",       "warmup",
      "embedding_dim", "lstm_hidden", "dropout",  "learning_rate", "max_epochs", "patience",
      "clip_norm",     "threshold",  "synthetic_slots"};
  return k;
}

void RunConfig::apply(const Json& layer) {
  if (!layer.is_object()) throw ConfigError("configuration layer must be an object");
  for (const auto& [key, v] : layer.items()) {
    if (key == "data") data = as_string(v, key);
    else if (key == "ontology") ontology = as_string(v, key);
    else if (key == "lang") lang = as_string(v, key);
    else if (key == "out") out = as_string(v, key);
    else if (key == "checkpoint") checkpoint = as_string(v, key);
    else if (key == "embeddings") embeddings = as_string(v, key);
    else if (key == "split") split = as_string(v, key);
    else if (key == "mode") mode = as_string(v, key);
    else if (key == "seeds") {
      if (v.is_array()) {
        seeds.clear();
        for (const Json& s : v) seeds.push_back(as_size(s, key));
      } else if (v.is_number()) {
        seeds = {as_size(v, key)};
      } else {
        seeds = parse_seed_list(as_string(v, key));
      }
    } else if (key == "batch_size") batch_size = as_size(v, key);
    else if (key == "iters") iters = as_size(v, key);
    else if (key == "warmup") warmup = as_size(v, key);
    else if (key == "embedding_dim") embedding_dim = as_size(v, key);
    else if (key == "lstm_hidden") lstm_hidden = as_size(v, key);
    else if (key == "dropout") dropout = as_double(v, key);
    else if (key == "learning_rate") learning_rate = as_double(v, key);
    else if (key == "max_epochs") max_epochs = as_size(v, key);
    else if (key == "patience") patience = as_size(v, key);
    else if (key == "clip_norm") clip_norm = as_double(v, key);
    else if (key == "threshold") threshold = as_double(v, key);
    else if (key == "synthetic_slots") synthetic_slots = as_size(v, key);
    else throw ConfigError("unknown configuration key '" + key + "'");
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  const std::string s = trim(text);
  auto number = [&s](const std::string& part) -> std::uint64_t {
    const std::string t = trim(part);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw ConfigError("invalid seed list '" + s + "'");
    }
    return std::stoull(t);
  };
  std::vector<std::uint64_t> seeds;
  if (const auto dots = s.find(".."); dots != std::string::npos) {
    const auto lo = number(s.substr(0, dots));
    const auto hi = number(s.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty seed range '" + s + "'");
    for (auto v = lo; v <= hi; ++v) seeds.push_back(v);
    return seeds;
  }
  std::stringstream parts(s);
  std::string part;
  while (std::getline(parts, part, ',')) seeds.push_back(number(part));
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::optional<std::vector<SystemAct>> parse_system_actions(const std::string& text) {
  std::vector<SystemAct> acts;
  const std::string s = text;
  std::size_t i = 0;
  auto skip_separators = [&] {
    while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == ',')) ++i;
  };
  skip_separators();
  while (i < s.size()) {
    std::size_t start = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    if (i == start) return std::nullopt;
    const std::string act = s.substr(start, i - start);
    while (i < s.size() && s[i] == ' ') ++i;
    if (i < s.size() && s[i] == '(') {
      const auto close = s.find(')', i);
      if (close == std::string::npos) return std::nullopt;
      const std::string inner = s.substr(i + 1, close - i - 1);
      if (inner.find('(') != std::string::npos) return std::nullopt;
      i = close + 1;
      if (trim(inner).empty()) {
        acts.push_back({act, "", ""});
      } else {
        std::stringstream args(inner);
        std::string arg;
        while (std::getline(args, arg, ',')) {
          const auto eq = arg.find('=');
          const std::string slot = trim(eq == std::string::npos ? arg : arg.substr(0, eq));
          const std::string value = eq == std::string::npos ? "" : trim(arg.substr(eq + 1));
          if (slot.empty()) return std::nullopt;
          acts.push_back({act, slot, value});
        }
      }
    } else {
      acts.push_back({act, "", ""});
    }
    skip_separators();
  }
  return acts;
}

TrackSession::TrackSession(const GsatModel& model, double threshold)
    : model_(model), threshold_(threshold), state_(BeliefState::initial(model.ontology())) {}

void TrackSession::reset() {
  state_ = BeliefState::initial(model_.ontology());
  turn_ = 0;
  pending_actions_.clear();
}

std::string TrackSession::describe(const TurnPrediction& prediction) const {
  const Ontology& ont = model_.ontology();
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "turn " << turn_ << "\n  goals:";
  for (std::size_t s = 0; s < ont.informable().size(); ++s) {
    const auto& slot = ont.informable()[s];
    const auto& value = state_.goals.at(slot.name);
    const std::size_t best = argmax(prediction.informable[s]);
    out << " " << slot.name << "=" << (value ? *value : std::string(kNone)) << " (" << prediction.informable[s][best]
        << ")";
    if (s + 1 < ont.informable().size()) out << ";";
  }
  out << "\n  requests:";
  if (state_.requests.empty()) out << " none";
  for (std::size_t r = 0; r < ont.requestable().size(); ++r) {
    if (state_.requests.count(ont.requestable()[r])) {
      out << " " << ont.requestable()[r] << " (" << prediction.requestable[r] << ")";
    }
  }
  out << "\n";
  return out.str();
}

std::string TrackSession::handle_line(const std::string& raw) {
  const std::string line = trim(raw);
  if (line.empty()) return "";
  if (line == ":quit") {
    finished_ = true;
    return "";
  }
  if (line == ":reset") {
    reset();
    return "state reset\n";
  }
  std::string action_text;
  bool is_action = false;
  if (line.rfind("sys:", 0) == 0) {
    action_text = line.substr(4);
    is_action = true;
  } else {
    std::size_t i = 0;
    while (i < line.size() && (std::isalpha(static_cast<unsigned char>(line[i])) || line[i] == '_')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] == ' ') ++j;
    if (i > 0 && j < line.size() && line[j] == '(') {
      action_text = line;
      is_action = true;
    }
  }
  if (is_action) {
    const auto parsed = parse_system_actions(action_text);
    if (!parsed) {
      pending_actions_.clear();
      return "warning: could not parse system action '" + action_text + "', using no action\n";
    }
    pending_actions_ = *parsed;
    return "";
  }
  const TurnPrediction prediction = model_.predict_turn(pending_actions_, line);
  pending_actions_.clear();
  state_ = accumulate_belief(state_, prediction, model_.ontology(), threshold_);
  ++turn_;
  return describe(prediction);
}

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"G-SAT dialogue state tracker"};
  app.require_subcommand(1);
  std::map<std::string, std::string> flag_values;
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::vector<CLI::App*> commands;
  for (const char* name : {"train", "evaluate", "bench", "track"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file (overrides GSAT_CONFIG)");
    for (const auto& spec : flag_specs()) {
      auto* opt = sub->add_option(spec.flag, flag_values[std::string(name) + spec.flag], spec.help);
      options.emplace_back(opt, spec.key);
    }
    commands.push_back(sub);
  }
  commands[0]->description("train one model per seed and summarise");
  commands[1]->description("joint goal and turn request accuracy on a split");
  commands[2]->description("seconds per batch for training and prediction");
  commands[3]->description("interactive turn-by-turn belief tracking");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    app.exit(e, msg, msg);
    err << msg.str();
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg;
    if (config_path.empty()) {
      if (const char* env = std::getenv("GSAT_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) cfg.apply(read_config_file(config_path));
    Json env_layer = Json::object();
    for (const auto& key : RunConfig::keys()) {
      if (const char* v = std::getenv(env_name(key).c_str())) env_layer[key] = std::string(v);
    }
    cfg.apply(env_layer);
    Json flag_layer = Json::object();
    for (const auto& [opt, key] : options) {
      if (opt->count() > 0) flag_layer[key] = opt->as<std::string>();
    }
    cfg.apply(flag_layer);

    if (commands[0]->parsed()) return cmd_train(cfg, out, err);
    if (commands[1]->parsed()) return cmd_evaluate(cfg, out, err);
    if (commands[2]->parsed()) return cmd_bench(cfg, out, err);
    return cmd_track(cfg, in, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace gsat
