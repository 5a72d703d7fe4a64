#include <doctest.h>

#include <cmath>
#include <set>

#include "dfa/harness.hpp"

using namespace dfa;

namespace {

UserModel oracle_user(const TaskSpec& task, std::uint64_t seed = 0) {
  UserModel m;
  m.reward = task.reward;
  m.seed = seed;
  m.true_shift = task.shifted;
  return m;
}

const PolicyParams& base_policy(Domain d, std::uint64_t seed) {
  static std::map<std::pair<Domain, std::uint64_t>, PolicyParams> cache;
  auto it = cache.find({d, seed});
  if (it == cache.end()) it = cache.emplace(std::pair{d, seed}, train_base_policy(gen_train_task(d, seed)).params).first;
  return it->second;
}

bool base_fails(const TaskSpec& task) {
  const PolicyParams& p = base_policy(task.domain, task.seed);
  return !success(rollout([&](const Observation& o) { return predict(p, o); }, task.test_scene), task.reward);
}

// Seeds whose base policy fails the test scene of the given shift.
std::vector<std::uint64_t> failing_seeds(Domain d, ShiftType shift, std::size_t want) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t seed = 0; out.size() < want && seed < 40; ++seed) {
    if (base_fails(gen_shift_task(gen_train_task(d, seed), shift, seed))) out.push_back(seed);
  }
  return out;
}

// Pixels (row, col) that differ anywhere between two trajectories' frames.
std::set<std::pair<int, int>> differing_pixels(const Trajectory& a, const Trajectory& b) {
  std::set<std::pair<int, int>> out;
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    for (int r = 0; r < Observation::kHeight; ++r) {
      for (int c = 0; c < Observation::kWidth; ++c) {
        for (int ch = 0; ch < Observation::kChannels; ++ch) {
          if (a.steps[t].obs.at(r, c, ch) != b.steps[t].obs.at(r, c, ch)) out.insert({r, c});
        }
      }
    }
  }
  return out;
}

// Pixel span covered by a nav2d object square centred at `v`.
std::pair<int, int> span_of(double v, double half) {
  return {static_cast<int>(std::floor((v - half) * 36.0)), static_cast<int>(std::ceil((v + half) * 36.0)) - 1};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("augmenting a color slot replays the demo once per color") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  const ConceptSchema& schema = schema_for(Domain::kNav2d);
  const std::vector<AugmentedDemo> aug = augment(demo, ConceptSlot{nav2d::kGoal, 0}, schema);
  REQUIRE(aug.size() == 4);

  std::set<std::size_t> colors;
  const auto [lo, hi] = span_of(0.9, nav2d::kObjectHalf);
  for (const AugmentedDemo& a : aug) {
    CHECK(a.trajectory.provenance == Provenance::kAugmented);
    CHECK(a.trajectory.actions() == demo.actions());
    colors.insert(a.trajectory.initial.objects[nav2d::kGoal].values[0]);
    for (const auto& [r, c] : differing_pixels(a.trajectory, demo)) {
      CHECK(r >= lo);
      CHECK(r <= hi);
      CHECK(c >= lo);
      CHECK(c <= hi);
    }
  }
  CHECK(colors.size() == 4);
  // The unchanged color is the demo itself under an empty edit.
  const std::size_t own = task.test_scene.objects[nav2d::kGoal].values[0];
  CHECK(aug[own].edit.empty());
  CHECK(aug[own].trajectory.steps == demo.steps);
}

TEST_CASE("augmenting distractor presence covers every color and absence") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 1);
  const TaskSpec task = gen_shift_task(train, ShiftType::kDistractorTI, 1);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  const ConceptSchema& schema = schema_for(Domain::kNav2d);
  const std::vector<AugmentedDemo> aug = augment(demo, ConceptSlot{nav2d::kDistractor, std::nullopt}, schema);
  REQUIRE(aug.size() == 5);
  std::size_t absent = 0;
  const Point at = task.test_scene.objects[nav2d::kDistractor].pos;
  const auto [rlo, rhi] = span_of(at.y, nav2d::kObjectHalf);
  const auto [clo, chi] = span_of(at.x, nav2d::kObjectHalf);
  for (const AugmentedDemo& a : aug) {
    CHECK(a.trajectory.actions() == demo.actions());
    const ObjectState& obj = a.trajectory.initial.objects[nav2d::kDistractor];
    absent += obj.present ? 0 : 1;
    if (obj.present) CHECK(obj.pos == at);
    for (const auto& [r, c] : differing_pixels(a.trajectory, demo)) {
      CHECK(r >= rlo);
      CHECK(r <= rhi);
      CHECK(c >= clo);
      CHECK(c <= chi);
    }
  }
  CHECK(absent == 1);

  // The same count when the distractor is absent from the demo scene.
  const Trajectory plain = expert_demo(train.scene, train.reward);
  CHECK(augment(plain, ConceptSlot{nav2d::kDistractor, std::nullopt}, schema).size() == 5);
}

TEST_CASE("augmentation needs a human demonstration and a concept") {
  const TrainTask train = gen_train_task(Domain::kDoorKey, 0);
  const ConceptSchema& schema = schema_for(Domain::kDoorKey);
  Trajectory demo = expert_demo(train.scene, train.reward);
  CHECK(code_of([&] { augment(demo, ConceptSlot{doorkey::kAgent, std::nullopt}, schema); }) ==
        ErrorCode::kInvalidArgument);
  demo.provenance = Provenance::kRollout;
  CHECK(code_of([&] { augment(demo, ConceptSlot{doorkey::kKey, 0}, schema); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("oracle feedback on a recolored goal augments once and repairs the policy") {
  const std::vector<std::uint64_t> seeds = failing_seeds(Domain::kNav2d, ShiftType::kConceptTI, 2);
  REQUIRE(!seeds.empty());
  for (std::uint64_t seed : seeds) {
    CAPTURE(seed);
    const TaskSpec task = gen_shift_task(gen_train_task(Domain::kNav2d, seed), ShiftType::kConceptTI, seed);
    SimulatedUser user(oracle_user(task));
    const AdaptResult r = run_dfa(base_policy(Domain::kNav2d, seed), task, user, default_loop_config(Domain::kNav2d));
    REQUIRE(r.log.rounds.size() >= 1);
    const RoundRecord& first = r.log.rounds.front();
    CHECK_FALSE(first.verdict);
    REQUIRE(first.counterfactual);
    CHECK(first.counterfactual->found());
    CHECK(first.valid == true);
    CHECK(first.relevance == Relevance::kIrrelevant);
    CHECK(first.augmented_slots == std::vector<ConceptSlot>{ConceptSlot{nav2d::kGoal, 0}});
    CHECK(first.finetune_size == 5);
    CHECK(first.loss_history.size() == 300);
    CHECK(r.log.rounds.size() == 1);
    CHECK(r.log.status == "success");
    CHECK(first.post_verdict == true);
  }
}

TEST_CASE("relevant shifts finetune on the demonstration alone") {
  const std::vector<std::uint64_t> seeds = failing_seeds(Domain::kNav2d, ShiftType::kConceptTR, 1);
  REQUIRE(!seeds.empty());
  const std::uint64_t seed = seeds.front();
  const TaskSpec task = gen_shift_task(gen_train_task(Domain::kNav2d, seed), ShiftType::kConceptTR, seed);
  SimulatedUser user(oracle_user(task));
  LoopConfig cfg = default_loop_config(Domain::kNav2d);
  cfg.max_rounds = 1;
  const AdaptResult r = run_dfa(base_policy(Domain::kNav2d, seed), task, user, cfg);
  REQUIRE(r.log.rounds.size() == 1);
  const RoundRecord& first = r.log.rounds.front();
  CHECK(first.augmented_slots.empty());
  CHECK(first.finetune_size == 1);
  if (first.counterfactual->found()) CHECK(first.valid == false);
}

TEST_CASE("other shifts skip feedback") {
  const std::vector<std::uint64_t> seeds = failing_seeds(Domain::kDoorKey, ShiftType::kOther, 1);
  REQUIRE(!seeds.empty());
  const std::uint64_t seed = seeds.front();
  const TaskSpec task = gen_shift_task(gen_train_task(Domain::kDoorKey, seed), ShiftType::kOther, seed);
  DfaLoop loop(base_policy(Domain::kDoorKey, seed), task.test_scene, default_loop_config(Domain::kDoorKey));
  loop.submit_verdict(false);
  CHECK_FALSE(loop.submit_demo(expert_demo(task.test_scene, task.reward)).found());
  CHECK(loop.phase() == Phase::kFinetuning);
  CHECK(loop.pending().size() == 1);
  CHECK(loop.log().rounds.back().finetune_size == 1);
}

TEST_CASE("a successful first rollout ends without rounds") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  DfaLoop loop(base_policy(Domain::kNav2d, 0), train.scene, default_loop_config(Domain::kNav2d));
  REQUIRE(success(loop.rollout(), train.reward));
  loop.submit_verdict(true);
  CHECK(loop.phase() == Phase::kEvaluated);
  CHECK(loop.rounds() == 0);
  CHECK(loop.log().status == "success");

  // The same through the headless driver on a task the base policy solves.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TaskSpec task = gen_shift_task(gen_train_task(Domain::kNav2d, seed), ShiftType::kConceptTI, seed);
    if (base_fails(task)) continue;
    SimulatedUser user(oracle_user(task));
    const AdaptResult r = run_dfa(base_policy(Domain::kNav2d, seed), task, user, default_loop_config(Domain::kNav2d));
    CHECK(r.log.rounds.empty());
    CHECK(r.log.status == "success");
    CHECK(r.policy == base_policy(Domain::kNav2d, seed));
    break;
  }
}

TEST_CASE("loop actions outside their phase are rejected") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  DfaLoop loop(base_policy(Domain::kNav2d, 0), task.test_scene, default_loop_config(Domain::kNav2d));
  CHECK(code_of([&] { loop.submit_demo(demo); }) == ErrorCode::kPhaseViolation);
  CHECK(code_of([&] { loop.submit_feedback(true, Relevance::kIrrelevant); }) == ErrorCode::kPhaseViolation);
  CHECK(code_of([&] { loop.finetune_job(); }) == ErrorCode::kPhaseViolation);
  loop.submit_verdict(false);
  CHECK(loop.phase() == Phase::kAwaitingDemo);
  CHECK(code_of([&] { loop.submit_verdict(false); }) == ErrorCode::kPhaseViolation);
  CHECK(code_of([&] { loop.submit_demo(expert_demo(train.scene, train.reward)); }) == ErrorCode::kInvalidArgument);
  CHECK(loop.phase() == Phase::kAwaitingDemo);

  CHECK(code_of([] {
          DfaLoop(base_policy(Domain::kNav2d, 0), gen_train_task(Domain::kDoorKey, 0).scene,
                  default_loop_config(Domain::kNav2d));
        }) == ErrorCode::kDomainMismatch);
  LoopConfig zero = default_loop_config(Domain::kNav2d);
  zero.max_rounds = 0;
  CHECK(code_of([&] { DfaLoop(base_policy(Domain::kNav2d, 0), task.test_scene, zero); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("the round budget bounds the loop") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kOther, 0);
  LoopConfig cfg = default_loop_config(Domain::kNav2d);
  cfg.train.epochs = 1;
  cfg.max_rounds = 2;
  DfaLoop loop(base_policy(Domain::kNav2d, 0), task.test_scene, cfg);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  for (int round = 1; round <= 2; ++round) {
    loop.submit_verdict(false);
    loop.submit_demo(demo);
    if (loop.phase() == Phase::kAwaitingFeedback) loop.submit_feedback(false, std::nullopt);
    const DfaLoop::FinetuneJob job = loop.finetune_job();
    CHECK(job.data.size() == 1);
    loop.complete_finetune(finetune(*job.policy, job.data, job.train));
    CHECK(loop.rounds() == round);
  }
  loop.submit_verdict(false);
  CHECK(loop.phase() == Phase::kEvaluated);
  CHECK(loop.log().status == "budget_exhausted");
  CHECK(loop.log().rounds.back().post_verdict == false);
}

TEST_CASE("finetune results must keep the architecture") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kOther, 0);
  DfaLoop loop(base_policy(Domain::kNav2d, 0), task.test_scene, default_loop_config(Domain::kNav2d));
  loop.submit_verdict(false);
  loop.submit_demo(expert_demo(task.test_scene, task.reward));
  REQUIRE(loop.phase() == Phase::kFinetuning);
  TrainResult other{init_policy(architecture_for(Domain::kDoorKey), 0), {}};
  CHECK(code_of([&] { loop.complete_finetune(other); }) == ErrorCode::kShapeMismatch);
  CHECK(loop.phase() == Phase::kFinetuning);
}

TEST_CASE("headless sessions are deterministic") {
  const std::vector<std::uint64_t> seeds = failing_seeds(Domain::kDoorKey, ShiftType::kConceptTI, 1);
  REQUIRE(!seeds.empty());
  const std::uint64_t seed = seeds.front();
  const TaskSpec task = gen_shift_task(gen_train_task(Domain::kDoorKey, seed), ShiftType::kConceptTI, seed);
  UserModel m = oracle_user(task, 4);
  m.relevance_accuracy = 0.7;
  const ConceptSchema& schema = schema_for(Domain::kDoorKey);
  SimulatedUser u1(m);
  SimulatedUser u2(m);
  const AdaptResult a = run_dfa(base_policy(Domain::kDoorKey, seed), task, u1, default_loop_config(Domain::kDoorKey));
  const AdaptResult b = run_dfa(base_policy(Domain::kDoorKey, seed), task, u2, default_loop_config(Domain::kDoorKey));
  CHECK(a.policy == b.policy);
  CHECK(a.log.to_json(schema) == b.log.to_json(schema));
  CHECK(u1.audit() == u2.audit());

  TaskSpec other_reward = task;
  other_reward.reward.text += "!";
  SimulatedUser u3(m);
  CHECK(code_of([&] {
          run_dfa(base_policy(Domain::kDoorKey, seed), other_reward, u3, default_loop_config(Domain::kDoorKey));
        }) == ErrorCode::kInvalidArgument);
}
