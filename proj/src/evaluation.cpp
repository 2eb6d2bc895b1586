#include "gsat/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace gsat {

namespace {

void check_alignment(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions) {
  if (predictions.size() != dialogues.size()) {
    throw ContractError("predictions cover " + std::to_string(predictions.size()) + " dialogues, expected " +
                        std::to_string(dialogues.size()));
  }
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    if (predictions[d].size() != dialogues[d].turns.size()) {
      throw ContractError("dialogue " + dialogues[d].id + ": prediction count does not match turn count");
    }
  }
}

}  // namespace

BeliefState BeliefState::initial(const Ontology& ontology) {
  BeliefState state;
  for (const auto& slot : ontology.informable()) state.goals[slot.name] = std::nullopt;
  return state;
}

GoalMap BeliefState::constrained() const {
  GoalMap out;
  for (const auto& [slot, value] : goals) {
    if (value) out[slot] = *value;
  }
  return out;
}

std::set<std::string> predicted_requests(const TurnPrediction& prediction, const Ontology& ontology,
                                         double threshold) {
  std::set<std::string> out;
  for (std::size_t r = 0; r < ontology.requestable().size() && r < prediction.requestable.size(); ++r) {
    if (prediction.requestable[r] >= threshold) out.insert(ontology.requestable()[r]);
  }
  return out;
}

BeliefState accumulate_belief(const BeliefState& previous, const TurnPrediction& prediction, const Ontology& ontology,
                              double threshold) {
  if (prediction.informable.size() != ontology.informable().size()) {
    throw ContractError("prediction covers " + std::to_string(prediction.informable.size()) +
                        " informable slots, ontology has " + std::to_string(ontology.informable().size()));
  }
  BeliefState next;
  next.goals = previous.goals;
  for (std::size_t s = 0; s < ontology.informable().size(); ++s) {
    const auto& slot = ontology.informable()[s];
    const std::size_t best = argmax(prediction.informable[s]);
    auto& goal = next.goals[slot.name];
    if (best > 0) goal = slot.values.at(best - 1);
  }
  next.requests = predicted_requests(prediction, ontology, threshold);
  return next;
}

std::vector<std::vector<BeliefState>> track_dialogues(const std::vector<Dialogue>& dialogues,
                                                      const DialoguePredictions& predictions,
                                                      const Ontology& ontology, double threshold) {
  check_alignment(dialogues, predictions);
  std::vector<std::vector<BeliefState>> out(dialogues.size());
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    BeliefState state = BeliefState::initial(ontology);
    for (const auto& pred : predictions[d]) {
      state = accumulate_belief(state, pred, ontology, threshold);
      out[d].push_back(state);
    }
  }
  return out;
}

EvalReport score_predictions(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                             const Ontology& ontology, double threshold) {
  const auto beliefs = track_dialogues(dialogues, predictions, ontology, threshold);
  EvalReport report;
  std::size_t joint_correct = 0, request_correct = 0;
  std::vector<std::size_t> slot_correct(ontology.informable().size(), 0);
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    for (std::size_t t = 0; t < dialogues[d].turns.size(); ++t) {
      ++report.n_turns;
      const BeliefState& state = beliefs[d][t];
      const GoalMap& gold = dialogues[d].gold_joint_goals.at(t);
      if (state.constrained() == gold) ++joint_correct;
      for (std::size_t s = 0; s < ontology.informable().size(); ++s) {
        const std::string& name = ontology.informable()[s].name;
        const auto it = gold.find(name);
        const std::optional<std::string> want =
            it == gold.end() ? std::nullopt : std::optional<std::string>(it->second);
        if (state.goals.at(name) == want) ++slot_correct[s];
      }
      if (state.requests == dialogues[d].turns[t].gold_requests) ++request_correct;
    }
  }
  const double n = report.n_turns ? static_cast<double>(report.n_turns) : 1.0;
  report.joint_goal_accuracy = static_cast<double>(joint_correct) / n;
  report.turn_request_accuracy = static_cast<double>(request_correct) / n;
  for (std::size_t s = 0; s < ontology.informable().size(); ++s) {
    report.per_slot.emplace_back(ontology.informable()[s].name, static_cast<double>(slot_correct[s]) / n);
  }
  return report;
}

double joint_goal_accuracy(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                           const Ontology& ontology) {
  return score_predictions(dialogues, predictions, ontology).joint_goal_accuracy;
}

double turn_request_accuracy(const std::vector<Dialogue>& dialogues, const DialoguePredictions& predictions,
                             const Ontology& ontology, double threshold) {
  return score_predictions(dialogues, predictions, ontology, threshold).turn_request_accuracy;
}

DialoguePredictions predict_dialogues(const GsatModel& model, const std::vector<Dialogue>& dialogues,
                                      std::size_t batch_size) {
  const auto& ontology = model.ontology();
  const auto examples = make_examples(dialogues, model.vocabulary(), ontology);
  DialoguePredictions out(dialogues.size());
  for (std::size_t d = 0; d < dialogues.size(); ++d) out[d].resize(dialogues[d].turns.size());
  for (const Batch& batch :
       make_batches(examples, batch_size, std::nullopt, ontology.informable().size(), ontology.requestable().size())) {
    auto preds = model.predict(batch);
    for (std::size_t b = 0; b < batch.size; ++b) {
      const Example& ex = examples[batch.example_index[b]];
      out[ex.dialogue][ex.turn] = std::move(preds[b]);
    }
  }
  return out;
}

EvalReport evaluate(const GsatModel& model, const std::vector<Dialogue>& dialogues, double threshold,
                    std::size_t batch_size) {
  return score_predictions(dialogues, predict_dialogues(model, dialogues, batch_size), model.ontology(), threshold);
}

Json EvalReport::to_json() const {
  Json slots = Json::object();
  for (const auto& [name, acc] : per_slot) slots[name] = acc;
  return Json{{"joint_goal", joint_goal_accuracy},
              {"turn_request", turn_request_accuracy},
              {"per_slot", slots},
              {"n_turns", n_turns}};
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "metric              accuracy(%)\n";
  out << "joint goal          " << std::setw(8) << 100.0 * joint_goal_accuracy << "\n";
  out << "turn request        " << std::setw(8) << 100.0 * turn_request_accuracy << "\n";
  for (const auto& [name, acc] : per_slot) {
    std::string label = "slot " + name;
    label.resize(std::max<std::size_t>(label.size() + 1, 20), ' ');
    out << label << std::setw(8) << 100.0 * acc << "\n";
  }
  out << "turns               " << std::setw(8) << n_turns << "\n";
  return out.str();
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace gsat
