#pragma once

#include <optional>
#include <vector>

#include "dfa/counterfactual.hpp"

namespace dfa {

/// Configuration of a simulated user. `true_shift` is the concept slot the
/// task generator actually changed; it grounds counterfactual verification.
struct UserModel {
  RewardSpec reward;
  double relevance_accuracy = 1.0;       // p
  double identification_accuracy = 1.0;  // q
  std::uint64_t seed = 0;
  std::optional<ConceptSlot> true_shift;

  void validate() const;
};

Json to_json(const UserModel& user);
UserModel user_model_from_json(const Json& j);

/// Scripted expert. nav2d: capped straight-line pursuit of the goal with a
/// perpendicular waypoint around avoided objects, zero actions after arrival.
/// doorkey: breadth-first shortest plan avoiding hazards, padded with no-ops.
/// Throws Error(kNoSatisfyingGoal) when the reward cannot be met.
Trajectory expert_demo(const SceneDescriptor& scene, const RewardSpec& reward);

/// Stateful simulated user with its own seeded stream. Every answer is
/// recorded with its ground truth.
class SimulatedUser {
 public:
  explicit SimulatedUser(UserModel model);

  const UserModel& model() const { return model_; }

  /// Noiseless.
  bool judge_success(const Trajectory& trajectory);
  Trajectory provide_demo(const SceneDescriptor& scene);
  /// Ground truth: the counterfactual succeeds under the user's reward and
  /// the edit touches the true shift. Flipped with probability 1 - p.
  bool verify_counterfactual(const CounterfactualResult& result);
  /// Ground truth from the reward's specificity (TR if any slot is TR).
  /// Flipped with probability 1 - p.
  Relevance label_relevance(const ConceptEdit& edit);
  /// The true slot with probability q; otherwise uniform over the remaining
  /// slots and "none".
  std::optional<ConceptSlot> behaviour_only_guess(const SceneDescriptor& test_scene, const ConceptSchema& schema);

  const std::vector<Json>& audit() const { return audit_; }

 private:
  bool keep(double accuracy);

  UserModel model_;
  Rng rng_;
  std::vector<Json> audit_;
};

}  // namespace dfa
