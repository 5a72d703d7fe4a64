#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "dfa/harness.hpp"

using namespace dfa;

namespace {

UserModel user_for(const TaskSpec& task, double p, double q, std::uint64_t seed) {
  UserModel m;
  m.reward = task.reward;
  m.relevance_accuracy = p;
  m.identification_accuracy = q;
  m.seed = seed;
  m.true_shift = task.shifted;
  return m;
}

std::size_t first_goal_step(const Trajectory& t, std::size_t goal) {
  const std::vector<const WorldState*> states = t.states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Point a = states[i]->scene.agent().pos;
    const Point g = states[i]->scene.objects[goal].pos;
    if (std::lround(a.x) == std::lround(g.x) && std::lround(a.y) == std::lround(g.y)) return i;
  }
  return states.size();
}

std::size_t count_answers_matching_truth(const SimulatedUser& user) {
  std::size_t n = 0;
  for (const Json& entry : user.audit()) n += entry.at("answer") == entry.at("truth") ? 1 : 0;
  return n;
}

ConceptEdit set_edit(std::size_t object, std::size_t concept_index, std::size_t value) {
  return ConceptEdit{{SetInstantiation{object, concept_index, value}}};
}

}  // namespace

TEST_CASE("nav2d expert pursues the goal in capped straight steps") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const Trajectory demo = expert_demo(train.scene, train.reward);
  const std::vector<Action> actions = demo.actions();
  REQUIRE(actions.size() == 20);
  // Start (0.1, 0.1) to goal (0.9, 0.9): 0.8*sqrt(2) = 1.131, so eleven full
  // steps of length 0.1 and one remainder step, then zeros.
  const double diag = 0.1 / std::sqrt(2.0);
  double sx = 0.0, sy = 0.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const Move m = std::get<Move>(actions[t]);
    sx += m.dx;
    sy += m.dy;
    if (t < 11) {
      CHECK(m.dx == doctest::Approx(diag));
      CHECK(m.dy == doctest::Approx(diag));
    } else if (t == 11) {
      CHECK(std::hypot(m.dx, m.dy) == doctest::Approx(0.8 * std::sqrt(2.0) - 1.1));
    } else {
      CHECK(m.dx == doctest::Approx(0.0));
      CHECK(m.dy == doctest::Approx(0.0));
    }
  }
  CHECK(sx == doctest::Approx(0.8));
  CHECK(sy == doctest::Approx(0.8));
  CHECK(success(demo, train.reward));
}

TEST_CASE("doorkey expert takes the hand-counted shortest plan") {
  const TrainTask train = gen_train_task(Domain::kDoorKey, 0);
  const Trajectory demo = expert_demo(train.scene, train.reward);
  // (1,1) -> (2,4): 4 moves, pickup, -> (3,3): 2 moves, use,
  // -> (4,3) -> (6,6): 6 moves.
  const std::size_t reach = first_goal_step(demo, doorkey::kGoal);
  CHECK(reach == 14);
  const std::vector<Action> actions = demo.actions();
  REQUIRE(actions.size() == 35);
  std::map<GridAction, int> counts;
  for (std::size_t t = 0; t < reach; ++t) ++counts[std::get<GridAction>(actions[t])];
  CHECK(counts[GridAction::kPickup] == 1);
  CHECK(counts[GridAction::kUse] == 1);
  for (std::size_t t = reach; t < actions.size(); ++t) CHECK(actions[t] == idle_action(Domain::kDoorKey));
}

TEST_CASE("expert demonstrations succeed on every generated task") {
  for (Domain d : {Domain::kNav2d, Domain::kDoorKey}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const TrainTask train = gen_train_task(d, seed);
      for (const Trajectory& t : train.demos) CHECK(success(t, train.reward));
      for (ShiftType shift : kAllShifts) {
        CAPTURE(to_string(shift));
        const TaskSpec task = gen_shift_task(train, shift, seed);
        const Trajectory demo = expert_demo(task.test_scene, task.reward);
        CHECK(demo.provenance == Provenance::kHumanDemo);
        CHECK(success(demo, task.reward));
        CHECK(demo == replay(task.test_scene, demo.actions(), Provenance::kHumanDemo));
      }
    }
  }
}

TEST_CASE("expert refuses scenes without a satisfying goal") {
  // The recolored-goal requirement is not met by the original goal color.
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTR, 0);
  try {
    expert_demo(train.scene, task.reward);
    FAIL("expected no satisfying goal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoSatisfyingGoal);
  }
}

TEST_CASE("verification is grounded in the true shift") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const PolicyParams policy = train_base_policy(train).params;
  const auto shared = std::make_shared<const PolicyParams>(policy);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  const ConceptSchema& schema = schema_for(Domain::kNav2d);
  const CounterfactualResult cf = search_min_edit(policy_fn(shared), task.test_scene, demo, schema, {});
  REQUIRE(cf.found());

  SimulatedUser user(user_for(task, 1.0, 1.0, 0));
  CHECK(user.verify_counterfactual(cf));
  CHECK(user.label_relevance(cf.edit) == Relevance::kIrrelevant);

  // Same counterfactual, but the user believes a different slot changed.
  UserModel wrong = user_for(task, 1.0, 1.0, 0);
  wrong.true_shift = ConceptSlot{nav2d::kDistractor, std::nullopt};
  SimulatedUser misled(wrong);
  CHECK_FALSE(misled.verify_counterfactual(cf));

  CHECK_THROWS_AS(user.verify_counterfactual(CounterfactualResult{}), Error);
  CHECK_THROWS_AS(user.label_relevance(ConceptEdit{}), Error);
}

TEST_CASE("relevance labels follow the reward specificity") {
  for (Domain d : {Domain::kNav2d, Domain::kDoorKey}) {
    const TrainTask train = gen_train_task(d, 2);
    for (ShiftType shift : kAllShifts) {
      const TaskSpec task = gen_shift_task(train, shift, 2);
      if (!task.shifted) continue;
      CAPTURE(to_string(d));
      CAPTURE(to_string(shift));
      SimulatedUser user(user_for(task, 1.0, 1.0, 0));
      ConceptEdit edit;
      if (task.shifted->concept_index) {
        edit = set_edit(task.shifted->object, *task.shifted->concept_index, 0);
      } else {
        edit = ConceptEdit{{RemoveObject{task.shifted->object}}};
      }
      CHECK(user.label_relevance(edit) == (is_ti(shift) ? Relevance::kIrrelevant : Relevance::kRelevant));
    }
  }
}

TEST_CASE("zero accuracy flips every noisy answer") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  SimulatedUser user(user_for(task, 0.0, 1.0, 5));
  const ConceptEdit edit = set_edit(nav2d::kGoal, 0, 1);
  for (int i = 0; i < 50; ++i) user.label_relevance(edit);
  CHECK(count_answers_matching_truth(user) == 0);
  CHECK(user.audit().size() == 50);
}

TEST_CASE("relevance noise matches the configured accuracy") {
  const TrainTask train = gen_train_task(Domain::kDoorKey, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  for (double p : {0.6, 0.9}) {
    SimulatedUser user(user_for(task, p, 1.0, 17));
    const ConceptEdit edit = set_edit(doorkey::kGoal, 0, 1);
    constexpr int kDraws = 10000;
    for (int i = 0; i < kDraws; ++i) user.label_relevance(edit);
    const double rate = static_cast<double>(count_answers_matching_truth(user)) / kDraws;
    CHECK(std::abs(rate - p) < 0.02);
  }
}

TEST_CASE("behaviour-only guesses") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  const ConceptSchema& schema = schema_for(Domain::kNav2d);
  const std::size_t k = concept_slots(schema).size();

  SimulatedUser sure(user_for(task, 1.0, 1.0, 1));
  for (int i = 0; i < 100; ++i) CHECK(sure.behaviour_only_guess(task.test_scene, schema) == task.shifted);

  // q = 0: uniform over the other slots and "none".
  SimulatedUser never(user_for(task, 1.0, 0.0, 2));
  std::map<std::optional<ConceptSlot>, int> freq;
  constexpr int kDraws = 8000;
  for (int i = 0; i < kDraws; ++i) ++freq[never.behaviour_only_guess(task.test_scene, schema)];
  CHECK(freq.count(task.shifted) == 0);
  CHECK(freq.size() == k);
  for (const auto& [slot, n] : freq) CHECK(std::abs(static_cast<double>(n) / kDraws - 1.0 / k) < 0.02);

  SimulatedUser half(user_for(task, 1.0, 0.5, 3));
  int hits = 0;
  for (int i = 0; i < kDraws; ++i) hits += half.behaviour_only_guess(task.test_scene, schema) == task.shifted ? 1 : 0;
  CHECK(std::abs(static_cast<double>(hits) / kDraws - 0.5) < 0.02);

  CHECK_THROWS_AS(sure.behaviour_only_guess(gen_train_task(Domain::kDoorKey, 0).scene, schema), Error);
}

TEST_CASE("user streams are seeded") {
  const TrainTask train = gen_train_task(Domain::kNav2d, 0);
  const TaskSpec task = gen_shift_task(train, ShiftType::kConceptTI, 0);
  const ConceptSchema& schema = schema_for(Domain::kNav2d);
  SimulatedUser a(user_for(task, 0.5, 0.5, 9));
  SimulatedUser b(user_for(task, 0.5, 0.5, 9));
  for (int i = 0; i < 30; ++i) {
    CHECK(a.behaviour_only_guess(task.test_scene, schema) == b.behaviour_only_guess(task.test_scene, schema));
    CHECK(a.label_relevance(set_edit(nav2d::kGoal, 0, 2)) == b.label_relevance(set_edit(nav2d::kGoal, 0, 2)));
  }
  CHECK(a.audit() == b.audit());
}

TEST_CASE("user models validate and round-trip") {
  const TrainTask train = gen_train_task(Domain::kDoorKey, 1);
  const TaskSpec task = gen_shift_task(train, ShiftType::kDistractorTI, 1);
  const UserModel m = user_for(task, 0.7, 0.4, 12);
  const UserModel back = user_model_from_json(to_json(m));
  CHECK(back.reward == m.reward);
  CHECK(back.relevance_accuracy == m.relevance_accuracy);
  CHECK(back.identification_accuracy == m.identification_accuracy);
  CHECK(back.seed == m.seed);
  CHECK(back.true_shift == m.true_shift);
  UserModel bad = m;
  bad.relevance_accuracy = 1.5;
  CHECK_THROWS_AS(SimulatedUser{bad}, Error);
}
