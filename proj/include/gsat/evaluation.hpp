#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gsat/data.hpp"
#include "gsat/model.hpp"

namespace gsat {

struct BeliefState {
  std::map<std::string, std::optional<std::string>> goals;  // every informable slot
  std::set<std::string> requests;                            // this turn only

  static BeliefState initial(const Ontology& ontology);
  // Drops unconstrained slots, for comparison against gold joint goals.
  GoalMap constrained() const;
  bool operator==(const BeliefState&) const = default;
};

// Argmax value overwrites the slot; an argmax of "none" keeps the previous
// value. Requests are recomputed from scratch each turn.
BeliefState accumulate_belief(const BeliefState& previous, const TurnPrediction& prediction, const Ontology& ontology,
                              double threshold = 0.5);

std::set<std::string> predicted_requests(const TurnPrediction& prediction, const Ontology& ontology,
                                         double threshold = 0.5);

// predictions[d][t] is the turn-level prediction for dialogues[d].turns[t].
using DialoguePredictions = std::vector<std::vector<TurnPrediction>>;

std::vector<std::vector<BeliefState>> track_dialogues(const std::vector<Dialogue>& dialogues,
                                                      const DialoguePredictions& predictions,
                                                      const Ontology& ontology, double threshold = 0.5);

struct EvalReport {
  double joint_goal_accuracy = 0.0;
  double turn_request_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> per_slot;  // ontology order
  std::size_t n_turns = 0;

  Json to_json() const;
  std::string table() const;
};

EvalReport score_predictions(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                             const Ontology& ontology, double threshold = 0.5);
double joint_goal_accuracy(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                           const Ontology& ontology);
double turn_request_accuracy(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                             const Ontology& ontology, double threshold = 0.5);

DialoguePredictions predict_dialogues(const GsatModel& model, const std::vector<Dialogue>& dialogues,
                                      std::size_t batch_size = 50);
EvalReport evaluate(const GsatModel& model, const std::vector<Dialogue>& dialogues, double threshold = 0.5,
                    std::size_t batch_size = 50);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
};
MeanSd mean_sd(std::span<const double> values);

}  // namespace gsat
