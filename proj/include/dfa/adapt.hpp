#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfa/oracle.hpp"
#include "dfa/policy.hpp"
#include "dfa/task.hpp"

namespace dfa {

struct AugmentedDemo {
  Trajectory trajectory;
  ConceptEdit edit;  // applied to the demo's initial scene

  bool operator==(const AugmentedDemo&) const = default;
};

/// The demo plus its augmentations.
struct FinetuneSet {
  Trajectory demo;
  std::vector<AugmentedDemo> augmented;

  std::size_t size() const { return 1 + augmented.size(); }
  std::vector<Trajectory> trajectories() const;
};

/// One replayed copy of the demo per instantiation of the slot: every value
/// of an (object, concept) slot; for a presence slot every full assignment
/// plus the absent variant. Concept slots of schema distractors also get the
/// absent variant. Actions are the demo's; states are regenerated by replay.
std::vector<AugmentedDemo> augment(const Trajectory& demo, const ConceptSlot& slot, const ConceptSchema& schema);

enum class Phase { kAwaitingVerdict, kAwaitingDemo, kAwaitingFeedback, kFinetuning, kEvaluated };

std::string_view to_string(Phase phase);

struct LoopConfig {
  SearchConfig search;
  TrainConfig train;
  int max_rounds = 3;
};

Json to_json(const LoopConfig& cfg);

/// Default search settings with the domain's tuned finetune schedule.
LoopConfig default_loop_config(Domain domain, std::uint64_t seed = 0);

struct RoundRecord {
  int round = 0;
  std::vector<Action> rollout;
  bool verdict = false;
  std::optional<Trajectory> demo;
  std::optional<CounterfactualResult> counterfactual;
  std::optional<bool> valid;
  std::optional<Relevance> relevance;
  std::vector<ConceptSlot> augmented_slots;
  std::size_t finetune_size = 0;
  std::vector<double> loss_history;
  std::optional<bool> post_verdict;
};

struct SessionLog {
  std::vector<RoundRecord> rounds;
  std::string status;  // running | success | budget_exhausted

  Json to_json(const ConceptSchema& schema) const;
};

/// Algorithm state machine shared by the headless driver and the service:
/// rollout -> verdict -> demo -> counterfactual -> feedback -> finetune ->
/// new rollout, bounded by max_rounds.
class DfaLoop {
 public:
  DfaLoop(PolicyParams policy, SceneDescriptor test_scene, LoopConfig cfg);

  Phase phase() const { return phase_; }
  const PolicyParams& policy() const { return *policy_; }
  std::shared_ptr<const PolicyParams> shared_policy() const { return policy_; }
  const SceneDescriptor& test_scene() const { return scene_; }
  const Trajectory& rollout() const { return rollout_; }
  const SessionLog& log() const { return log_; }
  const LoopConfig& config() const { return cfg_; }
  int rounds() const { return static_cast<int>(log_.rounds.size()); }

  void submit_verdict(bool success);
  const CounterfactualResult& submit_demo(Trajectory demo);
  /// Augments when the counterfactual is valid and labelled TI.
  const FinetuneSet& submit_feedback(bool valid, std::optional<Relevance> relevance);
  const FinetuneSet& pending() const { return pending_; }
  /// Trains on the pending set and rolls the new policy out.
  void run_finetune();

  /// Inputs of the pending finetune, for callers training off the loop's
  /// thread; complete_finetune installs the result.
  struct FinetuneJob {
    std::shared_ptr<const PolicyParams> policy;
    std::vector<Trajectory> data;
    TrainConfig train;
  };
  FinetuneJob finetune_job() const;
  void complete_finetune(TrainResult result);

 private:
  void require(Phase expected, std::string_view action) const;

  std::shared_ptr<const PolicyParams> policy_;
  SceneDescriptor scene_;
  LoopConfig cfg_;
  Phase phase_ = Phase::kAwaitingVerdict;
  Trajectory rollout_;
  FinetuneSet pending_;
  SessionLog log_;
};

struct AdaptResult {
  PolicyParams policy;
  SessionLog log;
};

/// Headless run of the loop against a simulated user.
AdaptResult run_dfa(const PolicyParams& policy, const TaskSpec& task, SimulatedUser& user, const LoopConfig& cfg);

}  // namespace dfa
