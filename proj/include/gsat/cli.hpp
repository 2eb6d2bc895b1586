#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsat/data.hpp"
#include "gsat/evaluation.hpp"
#include "gsat/model.hpp"

namespace gsat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Merged model, training and path settings. Layers apply in order: config
// file, GSAT_<KEY> environment variables, then command-line flags.
struct RunConfig {
  std::string data;
  std::string ontology;
  std::string lang = "en";
  std::string out;
  std::string checkpoint;
  std::string embeddings;
  std::string split = "test";
  std::string mode = "both";
  std::vector<std::uint64_t> seeds = {1};
  std::size_t batch_size = 50;
  std::size_t iters = 100;
  std::size_t warmup = 5;
  std::size_t embedding_dim = 128;
  std::size_t lstm_hidden = 64;
  double dropout = 0.2;
  double learning_rate = 0.001;
  std::size_t max_epochs = 60;
  std::size_t patience = 15;
  double clip_norm = 0.0;
  double threshold = 0.5;
  std::size_t synthetic_slots = 3;

  // Rejects unknown keys and ill-typed values.
  void apply(const Json& layer);
  static const std::vector<std::string>& keys();
};

// "7", "1,3,5" or "1..10".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// "confirm(food=italian) request(area, phone)"; nullopt when unparseable.
std::optional<std::vector<SystemAct>> parse_system_actions(const std::string& text);

// Interactive turn-by-turn tracking over a loaded model.
class TrackSession {
 public:
  explicit TrackSession(const GsatModel& model, double threshold = 0.5);

  // Feeds one input line; returns the text to print.
  std::string handle_line(const std::string& line);
  bool finished() const { return finished_; }
  const BeliefState& state() const { return state_; }
  std::size_t turn() const { return turn_; }
  void reset();

 private:
  std::string describe(const TurnPrediction& prediction) const;

  const GsatModel& model_;
  double threshold_;
  BeliefState state_;
  std::size_t turn_ = 0;
  std::vector<SystemAct> pending_actions_;
  bool finished_ = false;
};

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace gsat
