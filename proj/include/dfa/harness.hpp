#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dfa/adapt.hpp"

namespace dfa {

inline constexpr std::size_t kTrainDemos = 10;

struct TrainTask {
  Domain domain = Domain::kNav2d;
  std::uint64_t seed = 0;
  SceneDescriptor scene;
  RewardSpec reward;
  std::vector<Trajectory> demos;  // demos[0] starts at `scene`; the rest vary the agent start
};

TrainTask gen_train_task(Domain domain, std::uint64_t seed);
TaskSpec gen_shift_task(const TrainTask& train, ShiftType shift, std::uint64_t seed);

/// Reward-irrelevant resamples of the test scene: the shifted TI slot gets
/// a uniformly drawn instantiation, geometry stays fixed. Non-TI tasks
/// repeat the test scene.
std::vector<SceneDescriptor> eval_scenes(const TaskSpec& task, std::size_t count);

double success_rate(const PolicyParams& policy, std::span<const SceneDescriptor> scenes, const RewardSpec& reward);

enum class ConditionKind { kNHRandom, kBaselineH, kCFH, kOracleFB };

std::string_view to_string(ConditionKind kind);
ConditionKind parse_condition(std::string_view name);

struct Condition {
  ConditionKind kind = ConditionKind::kOracleFB;
  double accuracy = 1.0;  // probability of augmenting the true concept

  static Condition standard(ConditionKind kind, double q_baseline = 0.3, double q_cf = 0.8);
};

struct RunConfig {
  TrainConfig finetune;
  std::size_t eval_count = 10;
  // NHRandom augments every joint instantiation of the demo scene's concepts
  // instead of one random slot under the budget; recorded as NHRandomFull.
  bool full_product = false;
};

/// Defaults: per-domain finetune settings and 10 evaluation scenes.
RunConfig default_run_config(Domain domain);

struct ResultRecord {
  std::string task_id;
  Domain domain = Domain::kNav2d;
  ShiftType shift = ShiftType::kConceptTI;
  std::string condition;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  double pre_success = 0.0;
  double post_success = 0.0;
  std::size_t eval_count = 0;
  std::size_t demos_used = 0;
  std::size_t augmented = 0;
  std::optional<ConceptSlot> augmented_slot;
  bool augmented_true_concept = false;
  std::string error;
  double wall_time_ms = 0.0;

  /// Equality on every field except the wall time.
  bool same_result(const ResultRecord& other) const;
};

Json to_json(const ResultRecord& record);
ResultRecord result_from_json(const Json& j);

/// Slot an augmentation condition picks for a task: the true slot when the
/// task's shared draw u falls below the accuracy, else the task's shared
/// uniformly drawn slot. Conditions of one task share both draws.
ConceptSlot condition_slot(const TaskSpec& task, double accuracy);

/// One replay of the demo per joint instantiation of every concept of the
/// objects present in its scene.
std::vector<Trajectory> full_product_augment(const Trajectory& demo, const ConceptSchema& schema);

ResultRecord run_condition(const PolicyParams& policy, const TaskSpec& task, const Condition& condition,
                           const RunConfig& cfg);

/// Trains (domain, seed) base policies once and shares them.
class PolicyCache {
 public:
  std::shared_ptr<const PolicyParams> get(Domain domain, std::uint64_t seed);

 private:
  std::mutex mutex_;
  std::map<std::pair<Domain, std::uint64_t>, std::shared_ptr<const PolicyParams>> cache_;
};

/// Trains the base policy of a train task with the domain defaults.
TrainResult train_base_policy(const TrainTask& train);

struct ExperimentConfig {
  std::vector<Domain> domains{Domain::kNav2d, Domain::kDoorKey};
  std::vector<ShiftType> shifts{ShiftType::kConceptTI, ShiftType::kDistractorTI};
  std::vector<Condition> conditions;
  std::vector<std::uint64_t> seeds;
  std::size_t eval_count = 10;
  std::size_t workers = 0;  // 0: hardware concurrency
  bool csv = false;
  bool full_product = false;
};

/// Four standard conditions with q_baseline 0.3, q_cf 0.8 and seeds 0..19.
ExperimentConfig default_experiment_config();
ExperimentConfig experiment_config_from_json(const Json& j);

struct SummaryRow {
  Domain domain = Domain::kNav2d;
  ShiftType shift = ShiftType::kConceptTI;
  std::string condition;
  double accuracy = 0.0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double pre_mean = 0.0;
  double post_mean = 0.0;
  double post_stderr = 0.0;
};

Json to_json(const SummaryRow& row);
std::vector<SummaryRow> summarize(std::span<const ResultRecord> records);

/// Runs the sweep, appending records to `<out>/records.jsonl`, skipping
/// records already present there, and writing `<out>/summary.json` (plus
/// `<out>/summary.csv` when requested). The DFA_OUTPUT_DIR environment
/// variable overrides `out`.
std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                         PolicyCache* cache = nullptr);

}  // namespace dfa
