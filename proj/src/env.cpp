#include "dfa/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dfa {

Observation::Observation(std::vector<std::uint8_t> raster) : raster_(std::move(raster)) {
  if (raster_.size() != kSize) {
    throw Error(ErrorCode::kShapeMismatch, "observation must be 36x36x3, got " + std::to_string(raster_.size()) +
                                               " values");
  }
}

void Observation::set(int row, int col, Rgb color) {
  raster_[index(row, col, 0)] = color.r;
  raster_[index(row, col, 1)] = color.g;
  raster_[index(row, col, 2)] = color.b;
}

std::string_view to_string(GridAction action) {
  switch (action) {
    case GridAction::kUp: return "up";
    case GridAction::kDown: return "down";
    case GridAction::kLeft: return "left";
    case GridAction::kRight: return "right";
    case GridAction::kPickup: return "pickup";
    case GridAction::kUse: return "use";
  }
  return "unknown";
}

GridAction parse_grid_action(std::string_view name) {
  for (std::size_t i = 0; i < kGridActionCount; ++i) {
    const auto a = static_cast<GridAction>(i);
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorCode::kMalformedAction,
              "unknown action '" + std::string(name) + "' (allowed: up, down, left, right, pickup, use)");
}

Action sanitize(const Action& action, Domain domain) {
  if (domain == Domain::kNav2d) {
    const auto* move = std::get_if<Move>(&action);
    if (move == nullptr) throw Error(ErrorCode::kMalformedAction, "nav2d expects a continuous (dx, dy) action");
    if (!std::isfinite(move->dx) || !std::isfinite(move->dy)) {
      throw Error(ErrorCode::kMalformedAction, "nav2d action has non-finite components");
    }
    return Move{std::clamp(move->dx, -nav2d::kMaxStep, nav2d::kMaxStep),
                std::clamp(move->dy, -nav2d::kMaxStep, nav2d::kMaxStep)};
  }
  const auto* token = std::get_if<GridAction>(&action);
  if (token == nullptr) throw Error(ErrorCode::kMalformedAction, "doorkey expects a discrete action token");
  if (static_cast<std::size_t>(*token) >= kGridActionCount) {
    throw Error(ErrorCode::kMalformedAction, "doorkey action token out of range");
  }
  return *token;
}

Action idle_action(Domain domain) {
  if (domain == Domain::kNav2d) return Move{};
  return GridAction::kPickup;
}

Json to_json(const Action& action) {
  if (const auto* move = std::get_if<Move>(&action)) return Json::array({move->dx, move->dy});
  return std::string(to_string(std::get<GridAction>(action)));
}

Action action_from_json(const Json& j, Domain domain) {
  if (domain == Domain::kNav2d) {
    if (!j.is_array() || j.size() != 2 || !j.at(0).is_number() || !j.at(1).is_number()) {
      throw Error(ErrorCode::kMalformedAction, "nav2d action must be a [dx, dy] pair");
    }
    return Move{j.at(0).get<double>(), j.at(1).get<double>()};
  }
  if (!j.is_string()) throw Error(ErrorCode::kMalformedAction, "doorkey action must be a token string");
  return parse_grid_action(j.get<std::string>());
}

namespace {

int cell(double v) { return static_cast<int>(std::lround(v)); }

// --- nav2d rendering -------------------------------------------------------

using Canvas = std::array<float, Observation::kSize>;

template <class Visit>
void for_square_pixels(Point center, double half, Visit&& visit) {
  const double scale = Observation::kWidth;
  const double x0 = (center.x - half) * scale;
  const double x1 = (center.x + half) * scale;
  const double y0 = (center.y - half) * scale;
  const double y1 = (center.y + half) * scale;
  const int c0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int c1 = std::min(Observation::kWidth - 1, static_cast<int>(std::ceil(x1)) - 1);
  const int r0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int r1 = std::min(Observation::kHeight - 1, static_cast<int>(std::ceil(y1)) - 1);
  for (int r = r0; r <= r1; ++r) {
    const double oy = std::min(y1, r + 1.0) - std::max(y0, static_cast<double>(r));
    if (oy <= 0.0) continue;
    for (int c = c0; c <= c1; ++c) {
      const double ox = std::min(x1, c + 1.0) - std::max(x0, static_cast<double>(c));
      if (ox <= 0.0) continue;
      visit(r, c, ox * oy);
    }
  }
}

void paint_square(Canvas& canvas, Point center, double half, Rgb color) {
  const std::array<float, 3> rgb{static_cast<float>(color.r), static_cast<float>(color.g), static_cast<float>(color.b)};
  for_square_pixels(center, half, [&](int r, int c, double coverage) {
    const float a = static_cast<float>(coverage);
    for (int ch = 0; ch < 3; ++ch) {
      float& v = canvas[Observation::index(r, c, ch)];
      v = v * (1.0f - a) + rgb[static_cast<std::size_t>(ch)] * a;
    }
  });
}

double nav_half(std::size_t object) { return object == nav2d::kAgent ? nav2d::kAgentHalf : nav2d::kObjectHalf; }

Rgb object_color(const SceneDescriptor& scene, std::size_t object) {
  if (object == 0) return palette("white");
  const ObjectState& obj = scene.objects[object];
  const ObjectSpec& spec = schema_for(scene.domain).object(object);
  return palette(spec.concepts.at(0).values.at(obj.values.at(0)));
}

Observation render_nav2d(const SceneDescriptor& scene) {
  Canvas canvas{};
  for (std::size_t i : {nav2d::kGoal, nav2d::kDistractor, nav2d::kAgent}) {
    if (!scene.objects[i].present) continue;
    paint_square(canvas, scene.objects[i].pos, nav_half(i), object_color(scene, i));
  }
  std::vector<std::uint8_t> raster(Observation::kSize);
  for (std::size_t k = 0; k < raster.size(); ++k) {
    raster[k] = static_cast<std::uint8_t>(std::lround(std::clamp(canvas[k], 0.0f, 255.0f)));
  }
  return Observation(std::move(raster));
}

// --- doorkey rendering -----------------------------------------------------

using CellMask = std::array<const char*, 4>;
constexpr CellMask kFullMask{"####", "####", "####", "####"};
constexpr CellMask kOutlineMask{"####", "#..#", "#..#", "####"};
constexpr CellMask kKeyMask{".##.", ".##.", "..#.", ".##."};
constexpr CellMask kAgentMask{"....", ".##.", ".##.", "...."};

template <class Visit>
void for_mask_pixels(int x, int y, const CellMask& mask, Visit&& visit) {
  for (int dy = 0; dy < doorkey::kCellPixels; ++dy) {
    for (int dx = 0; dx < doorkey::kCellPixels; ++dx) {
      if (mask[static_cast<std::size_t>(dy)][dx] == '#') {
        visit(y * doorkey::kCellPixels + dy, x * doorkey::kCellPixels + dx);
      }
    }
  }
}

const CellMask& doorkey_mask(const SceneDescriptor& scene, std::size_t object) {
  switch (object) {
    case doorkey::kAgent: return kAgentMask;
    case doorkey::kKey: return kKeyMask;
    case doorkey::kDoor: return scene.door_open ? kOutlineMask : kFullMask;
    default: return kFullMask;
  }
}

Observation render_doorkey(const SceneDescriptor& scene) {
  Observation obs;
  const Rgb wall = palette("grey");
  for (int y = 0; y < doorkey::kGridSize; ++y) {
    for (int x = 0; x < doorkey::kGridSize; ++x) {
      if (doorkey::is_wall(scene, x, y)) for_mask_pixels(x, y, kFullMask, [&](int r, int c) { obs.set(r, c, wall); });
    }
  }
  for (std::size_t i : {doorkey::kGoal, doorkey::kLava, doorkey::kDoor, doorkey::kKey, doorkey::kAgent}) {
    const ObjectState& obj = scene.objects[i];
    if (!obj.present) continue;
    if (i == doorkey::kKey && scene.key_held) continue;
    const Rgb color = object_color(scene, i);
    for_mask_pixels(cell(obj.pos.x), cell(obj.pos.y), doorkey_mask(scene, i),
                    [&](int r, int c) { obs.set(r, c, color); });
  }
  return obs;
}

// --- doorkey dynamics ------------------------------------------------------

bool occupies(const ObjectState& obj, int x, int y) {
  return obj.present && cell(obj.pos.x) == x && cell(obj.pos.y) == y;
}

bool passable(const SceneDescriptor& scene, int x, int y) {
  if (x < 0 || y < 0 || x >= doorkey::kGridSize || y >= doorkey::kGridSize) return false;
  if (doorkey::is_wall(scene, x, y)) return false;
  if (occupies(scene.objects[doorkey::kDoor], x, y) && !scene.door_open) return false;
  if (occupies(scene.objects[doorkey::kKey], x, y) && !scene.key_held) return false;
  return true;
}

bool adjacent(Point a, Point b) {
  return std::abs(cell(a.x) - cell(b.x)) + std::abs(cell(a.y) - cell(b.y)) == 1;
}

void step_doorkey(SceneDescriptor& scene, GridAction action) {
  Point& agent = scene.objects[doorkey::kAgent].pos;
  int dx = 0;
  int dy = 0;
  switch (action) {
    case GridAction::kUp: dy = -1; break;
    case GridAction::kDown: dy = 1; break;
    case GridAction::kLeft: dx = -1; break;
    case GridAction::kRight: dx = 1; break;
    case GridAction::kPickup: {
      const ObjectState& key = scene.objects[doorkey::kKey];
      if (key.present && !scene.key_held && adjacent(agent, key.pos)) scene.key_held = true;
      return;
    }
    case GridAction::kUse: {
      const ObjectState& door = scene.objects[doorkey::kDoor];
      if (door.present && !scene.door_open && scene.key_held && adjacent(agent, door.pos)) scene.door_open = true;
      return;
    }
  }
  const int tx = cell(agent.x) + dx;
  const int ty = cell(agent.y) + dy;
  if (passable(scene, tx, ty)) agent = Point{static_cast<double>(tx), static_cast<double>(ty)};
}

bool nav_contact(Point agent, Point object) {
  const double reach = nav2d::kAgentHalf + nav2d::kObjectHalf;
  return std::abs(agent.x - object.x) < reach && std::abs(agent.y - object.y) < reach;
}

}  // namespace

StepResult reset(const SceneDescriptor& scene) {
  validate_scene(scene);
  WorldState state{scene, 0};
  Observation obs = render(state);
  return {std::move(state), std::move(obs)};
}

StepResult step(const WorldState& state, const Action& action) {
  WorldState next = state;
  next.t += 1;
  const Action clean = sanitize(action, state.scene.domain);
  if (state.scene.domain == Domain::kNav2d) {
    const Move move = std::get<Move>(clean);
    Point& agent = next.scene.objects[nav2d::kAgent].pos;
    agent.x = std::clamp(agent.x + move.dx, 0.0, 1.0);
    agent.y = std::clamp(agent.y + move.dy, 0.0, 1.0);
  } else {
    step_doorkey(next.scene, std::get<GridAction>(clean));
  }
  Observation obs = render(next);
  return {std::move(next), std::move(obs)};
}

Observation render(const WorldState& state) {
  return state.scene.domain == Domain::kNav2d ? render_nav2d(state.scene) : render_doorkey(state.scene);
}

std::vector<bool> footprint_mask(const SceneDescriptor& scene, std::size_t object) {
  std::vector<bool> mask(Observation::kSize, false);
  const ObjectState& obj = scene.objects.at(object);
  auto mark = [&](int r, int c) {
    for (int ch = 0; ch < 3; ++ch) mask[Observation::index(r, c, ch)] = true;
  };
  if (scene.domain == Domain::kNav2d) {
    for_square_pixels(obj.pos, nav_half(object), [&](int r, int c, double) { mark(r, c); });
  } else {
    const CellMask& m = object == doorkey::kDoor ? kFullMask : doorkey_mask(scene, object);
    for_mask_pixels(cell(obj.pos.x), cell(obj.pos.y), m, mark);
  }
  return mask;
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kRollout: return "rollout";
    case Provenance::kHumanDemo: return "human_demo";
    case Provenance::kCounterfactual: return "counterfactual";
    case Provenance::kAugmented: return "augmented";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view name) {
  for (Provenance p : {Provenance::kRollout, Provenance::kHumanDemo, Provenance::kCounterfactual,
                       Provenance::kAugmented}) {
    if (to_string(p) == name) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown provenance '" + std::string(name) + "'");
}

std::vector<Action> Trajectory::actions() const {
  std::vector<Action> out;
  out.reserve(steps.size());
  for (const TrajectoryStep& s : steps) out.push_back(s.action);
  return out;
}

std::vector<const WorldState*> Trajectory::states() const {
  std::vector<const WorldState*> out;
  out.reserve(steps.size() + 1);
  for (const TrajectoryStep& s : steps) out.push_back(&s.state);
  out.push_back(&final_state);
  return out;
}

Trajectory rollout(const PolicyFn& policy, const SceneDescriptor& scene, Provenance provenance) {
  const int length = horizon(scene.domain);
  Trajectory traj;
  traj.provenance = provenance;
  traj.initial = scene;
  traj.steps.reserve(static_cast<std::size_t>(length));
  StepResult current = reset(scene);
  for (int t = 0; t < length; ++t) {
    const Action action = sanitize(policy(current.obs), scene.domain);
    StepResult next = step(current.state, action);
    traj.steps.push_back({std::move(current.state), std::move(current.obs), action});
    current = std::move(next);
  }
  traj.final_state = std::move(current.state);
  return traj;
}

Trajectory replay(const SceneDescriptor& scene, std::span<const Action> actions, Provenance provenance) {
  const int length = horizon(scene.domain);
  if (actions.size() != static_cast<std::size_t>(length)) {
    throw Error(ErrorCode::kLengthMismatch, "expected " + std::to_string(length) + " actions, got " +
                                                std::to_string(actions.size()));
  }
  std::size_t t = 0;
  return rollout([&](const Observation&) { return actions[t++]; }, scene, provenance);
}

bool success(const Trajectory& trajectory, const RewardSpec& reward) {
  const SceneDescriptor& scene = trajectory.initial;
  if (scene.domain != reward.domain) throw Error(ErrorCode::kDomainMismatch, "trajectory and reward domains differ");
  const ConceptVector cv = abstract(scene, schema_for(scene.domain));
  if (!reward.satisfied_by(cv)) return false;
  const std::size_t goal = goal_object(scene.domain);
  const Point goal_pos = scene.objects[goal].pos;

  std::vector<std::size_t> hazards;
  for (std::size_t i = 1; i < scene.objects.size(); ++i) {
    if (reward.must_avoid(cv, i)) hazards.push_back(i);
  }

  if (scene.domain == Domain::kNav2d) {
    for (const WorldState* s : trajectory.states()) {
      const Point agent = s->scene.objects[nav2d::kAgent].pos;
      for (std::size_t h : hazards) {
        if (nav_contact(agent, scene.objects[h].pos)) return false;
      }
    }
    const Point agent = trajectory.final_state.scene.objects[nav2d::kAgent].pos;
    return std::hypot(agent.x - goal_pos.x, agent.y - goal_pos.y) <= reward.goal_radius;
  }

  for (const WorldState* s : trajectory.states()) {
    const Point agent = s->scene.objects[doorkey::kAgent].pos;
    for (std::size_t h : hazards) {
      if (occupies(scene.objects[h], cell(agent.x), cell(agent.y))) return false;
    }
    if (occupies(scene.objects[goal], cell(agent.x), cell(agent.y))) return true;
  }
  return false;
}

}  // namespace dfa
