#include "dfa/oracle.hpp"

#include <cmath>
#include <map>
#include <queue>
#include <tuple>

namespace dfa {

void UserModel::validate() const {
  if (!(relevance_accuracy >= 0.0 && relevance_accuracy <= 1.0) ||
      !(identification_accuracy >= 0.0 && identification_accuracy <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "user accuracies must lie in [0, 1]");
  }
  reward.validate();
}

Json to_json(const UserModel& user) {
  const ConceptSchema& schema = schema_for(user.reward.domain);
  return {{"reward", to_json(user.reward)},
          {"relevance_accuracy", user.relevance_accuracy},
          {"identification_accuracy", user.identification_accuracy},
          {"seed", user.seed},
          {"true_shift", user.true_shift ? to_json(*user.true_shift, schema) : Json(nullptr)}};
}

UserModel user_model_from_json(const Json& j) {
  UserModel user;
  user.reward = reward_from_json(j.at("reward"));
  user.relevance_accuracy = j.value("relevance_accuracy", 1.0);
  user.identification_accuracy = j.value("identification_accuracy", 1.0);
  user.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("true_shift") && !j.at("true_shift").is_null()) {
    user.true_shift = concept_slot_from_json(j.at("true_shift"), schema_for(user.reward.domain));
  }
  user.validate();
  return user;
}

namespace {

// --- nav2d expert ----------------------------------------------------------

constexpr double kContact = nav2d::kAgentHalf + nav2d::kObjectHalf;
// Extra clearance the expert keeps from avoided objects.
constexpr double kSafety = 0.02;

Move toward(Point from, Point to) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double len = std::hypot(dx, dy);
  if (len <= nav2d::kMaxStep) return {dx, dy};
  return {nav2d::kMaxStep * dx / len, nav2d::kMaxStep * dy / len};
}

bool leg_clear(Point from, Point to, const std::vector<Point>& hazards) {
  constexpr int kSamples = 200;
  for (int s = 0; s <= kSamples; ++s) {
    const double u = static_cast<double>(s) / kSamples;
    const Point p{from.x + u * (to.x - from.x), from.y + u * (to.y - from.y)};
    for (const Point& h : hazards) {
      if (std::abs(p.x - h.x) < kContact + kSafety && std::abs(p.y - h.y) < kContact + kSafety) return false;
    }
  }
  return true;
}

std::vector<Point> nav_route(Point start, Point goal, const std::vector<Point>& hazards) {
  if (leg_clear(start, goal, hazards)) return {goal};
  const double dx = goal.x - start.x;
  const double dy = goal.y - start.y;
  const double len = std::hypot(dx, dy);
  const Point normal{-dy / len, dx / len};
  for (const Point& h : hazards) {
    if (leg_clear(start, goal, {h})) continue;
    for (double sign : {1.0, -1.0}) {
      const Point w{h.x + sign * nav2d::kDetourClearance * normal.x, h.y + sign * nav2d::kDetourClearance * normal.y};
      if (w.x < 0.0 || w.x > 1.0 || w.y < 0.0 || w.y > 1.0) continue;
      if (leg_clear(start, w, hazards) && leg_clear(w, goal, hazards)) return {w, goal};
    }
  }
  throw Error(ErrorCode::kNoSatisfyingGoal, "no detour around the avoided objects reaches the goal");
}

std::vector<Action> nav_plan(const SceneDescriptor& scene, const std::vector<Point>& hazards) {
  Point pos = scene.agent().pos;
  const Point goal = scene.objects[nav2d::kGoal].pos;
  std::vector<Point> route = nav_route(pos, goal, hazards);
  std::vector<Action> actions;
  std::size_t leg = 0;
  for (int t = 0; t < nav2d::kHorizon; ++t) {
    while (leg + 1 < route.size() && std::hypot(route[leg].x - pos.x, route[leg].y - pos.y) < 1e-12) ++leg;
    const Move m = toward(pos, route[leg]);
    actions.push_back(m);
    pos = {std::clamp(pos.x + m.dx, 0.0, 1.0), std::clamp(pos.y + m.dy, 0.0, 1.0)};
  }
  return actions;
}

// --- doorkey expert --------------------------------------------------------

using GridKey = std::tuple<int, int, bool, bool>;

GridKey key_of(const WorldState& s) {
  const Point p = s.scene.agent().pos;
  return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)), s.scene.key_held, s.scene.door_open};
}

bool on(const ObjectState& obj, const WorldState& s) {
  const Point p = s.scene.agent().pos;
  return obj.present && std::lround(obj.pos.x) == std::lround(p.x) && std::lround(obj.pos.y) == std::lround(p.y);
}

std::vector<Action> grid_plan(const SceneDescriptor& scene, const std::vector<std::size_t>& hazards) {
  const ObjectState& goal = scene.objects[doorkey::kGoal];
  WorldState start{scene, 0};
  std::map<GridKey, std::pair<GridKey, GridAction>> parent;
  std::queue<WorldState> frontier;
  parent.emplace(key_of(start), std::pair{key_of(start), GridAction::kUp});
  frontier.push(start);
  std::optional<GridKey> reached;
  if (on(goal, start)) reached = key_of(start);
  while (!reached && !frontier.empty()) {
    WorldState s = std::move(frontier.front());
    frontier.pop();
    for (std::size_t a = 0; a < kGridActionCount && !reached; ++a) {
      WorldState next = step(s, static_cast<GridAction>(a)).state;
      bool unsafe = false;
      for (std::size_t h : hazards) unsafe = unsafe || on(scene.objects[h], next);
      if (unsafe) continue;
      const GridKey k = key_of(next);
      if (!parent.emplace(k, std::pair{key_of(s), static_cast<GridAction>(a)}).second) continue;
      if (on(goal, next)) reached = k;
      frontier.push(std::move(next));
    }
  }
  if (!reached) throw Error(ErrorCode::kNoSatisfyingGoal, "the goal is unreachable in this layout");
  std::vector<Action> reversed;
  for (GridKey k = *reached; k != key_of(start); k = parent.at(k).first) reversed.push_back(parent.at(k).second);
  if (reversed.size() > static_cast<std::size_t>(doorkey::kHorizon)) {
    throw Error(ErrorCode::kNoSatisfyingGoal, "the shortest plan exceeds the horizon");
  }
  std::vector<Action> actions(reversed.rbegin(), reversed.rend());
  actions.resize(static_cast<std::size_t>(doorkey::kHorizon), idle_action(Domain::kDoorKey));
  return actions;
}

}  // namespace

Trajectory expert_demo(const SceneDescriptor& scene, const RewardSpec& reward) {
  validate_scene(scene);
  if (scene.domain != reward.domain) throw Error(ErrorCode::kDomainMismatch, "scene and reward domains differ");
  const ConceptSchema& schema = schema_for(scene.domain);
  const ConceptVector cv = abstract(scene, schema);
  if (!reward.satisfied_by(cv)) {
    throw Error(ErrorCode::kNoSatisfyingGoal, "no goal in the scene satisfies the reward");
  }
  std::vector<std::size_t> hazards;
  for (std::size_t i = 1; i < scene.objects.size(); ++i) {
    if (reward.must_avoid(cv, i)) hazards.push_back(i);
  }
  std::vector<Action> actions;
  if (scene.domain == Domain::kNav2d) {
    std::vector<Point> points;
    for (std::size_t h : hazards) points.push_back(scene.objects[h].pos);
    actions = nav_plan(scene, points);
  } else {
    actions = grid_plan(scene, hazards);
  }
  Trajectory demo = replay(scene, actions, Provenance::kHumanDemo);
  if (!success(demo, reward)) throw Error(ErrorCode::kNoSatisfyingGoal, "the scripted plan does not reach the goal");
  return demo;
}

SimulatedUser::SimulatedUser(UserModel model)
    : model_(std::move(model)), rng_(derive_seed(model_.seed, {tag("simulated-user")})) {
  model_.validate();
}

bool SimulatedUser::keep(double accuracy) { return uniform_unit(rng_) < accuracy; }

bool SimulatedUser::judge_success(const Trajectory& trajectory) {
  const bool verdict = success(trajectory, model_.reward);
  audit_.push_back({{"query", "judge_success"}, {"answer", verdict}, {"truth", verdict}});
  return verdict;
}

Trajectory SimulatedUser::provide_demo(const SceneDescriptor& scene) {
  Trajectory demo = expert_demo(scene, model_.reward);
  Json actions = Json::array();
  for (const Action& a : demo.actions()) actions.push_back(to_json(a));
  audit_.push_back({{"query", "provide_demo"}, {"answer", actions}, {"truth", true}});
  return demo;
}

bool SimulatedUser::verify_counterfactual(const CounterfactualResult& result) {
  if (!result.found()) throw Error(ErrorCode::kInvalidArgument, "only found counterfactuals can be verified");
  bool grounded = false;
  if (model_.true_shift) {
    for (const ConceptSlot& s : slots_of(result.edit)) grounded = grounded || slots_overlap(s, *model_.true_shift);
  }
  const bool truth = grounded && success(result.trajectory, model_.reward);
  const bool answer = keep(model_.relevance_accuracy) ? truth : !truth;
  audit_.push_back({{"query", "verify_counterfactual"}, {"answer", answer}, {"truth", truth}});
  return answer;
}

Relevance SimulatedUser::label_relevance(const ConceptEdit& edit) {
  if (edit.empty()) throw Error(ErrorCode::kInvalidArgument, "relevance needs a concrete edit");
  Relevance truth = Relevance::kIrrelevant;
  for (const ConceptSlot& s : slots_of(edit)) {
    if (model_.reward.relevance(s) == Relevance::kRelevant) truth = Relevance::kRelevant;
  }
  Relevance answer = truth;
  if (!keep(model_.relevance_accuracy)) {
    answer = truth == Relevance::kRelevant ? Relevance::kIrrelevant : Relevance::kRelevant;
  }
  audit_.push_back({{"query", "label_relevance"}, {"answer", to_string(answer)}, {"truth", to_string(truth)}});
  return answer;
}

std::optional<ConceptSlot> SimulatedUser::behaviour_only_guess(const SceneDescriptor& test_scene,
                                                               const ConceptSchema& schema) {
  if (test_scene.domain != model_.reward.domain) throw Error(ErrorCode::kDomainMismatch, "scene domain differs");
  std::optional<ConceptSlot> answer;
  if (model_.true_shift && keep(model_.identification_accuracy)) {
    answer = model_.true_shift;
  } else {
    std::vector<std::optional<ConceptSlot>> others;
    for (const ConceptSlot& s : concept_slots(schema)) {
      if (s != model_.true_shift) others.emplace_back(s);
    }
    others.emplace_back(std::nullopt);
    answer = others[uniform_index(rng_, others.size())];
  }
  auto slot_json = [&](const std::optional<ConceptSlot>& s) { return s ? to_json(*s, schema) : Json(nullptr); };
  audit_.push_back(
      {{"query", "behaviour_only_guess"}, {"answer", slot_json(answer)}, {"truth", slot_json(model_.true_shift)}});
  return answer;
}

}  // namespace dfa
