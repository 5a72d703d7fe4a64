#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "dfa/reward.hpp"
#include "dfa/scene.hpp"

namespace dfa {

/// 36x36 RGB raster stored as 8-bit HWC; element access yields the value
/// normalized to [0, 1].
class Observation {
 public:
  static constexpr int kHeight = 36;
  static constexpr int kWidth = 36;
  static constexpr int kChannels = 3;
  static constexpr std::size_t kSize = static_cast<std::size_t>(kHeight) * kWidth * kChannels;

  Observation() : raster_(kSize, 0) {}
  explicit Observation(std::vector<std::uint8_t> raster);

  float operator[](std::size_t i) const { return static_cast<float>(raster_[i]) / 255.0f; }
  std::uint8_t at(int row, int col, int channel) const { return raster_[index(row, col, channel)]; }
  std::span<const std::uint8_t> raster() const { return raster_; }
  std::size_t size() const { return raster_.size(); }

  void set(int row, int col, Rgb color);

  static std::size_t index(int row, int col, int channel) {
    return (static_cast<std::size_t>(row) * kWidth + static_cast<std::size_t>(col)) * kChannels +
           static_cast<std::size_t>(channel);
  }

  bool operator==(const Observation&) const = default;

 private:
  std::vector<std::uint8_t> raster_;
};

enum class GridAction : std::uint8_t { kUp, kDown, kLeft, kRight, kPickup, kUse };
inline constexpr std::size_t kGridActionCount = 6;

std::string_view to_string(GridAction action);
GridAction parse_grid_action(std::string_view name);

struct Move {
  double dx = 0.0;
  double dy = 0.0;

  bool operator==(const Move&) const = default;
};

using Action = std::variant<Move, GridAction>;

/// Validates the action type against the domain and clips nav2d components
/// to the per-step bound. Throws Error(kMalformedAction).
Action sanitize(const Action& action, Domain domain);

/// The no-op action used to pad demonstrations past task completion.
Action idle_action(Domain domain);

Json to_json(const Action& action);
Action action_from_json(const Json& j, Domain domain);

struct WorldState {
  SceneDescriptor scene;
  int t = 0;

  bool operator==(const WorldState&) const = default;
};

struct StepResult {
  WorldState state;
  Observation obs;
};

StepResult reset(const SceneDescriptor& scene);
StepResult step(const WorldState& state, const Action& action);
Observation render(const WorldState& state);

/// Pixels an object covers when drawn in `scene` (door drawn closed).
std::vector<bool> footprint_mask(const SceneDescriptor& scene, std::size_t object);

enum class Provenance { kRollout, kHumanDemo, kCounterfactual, kAugmented };

std::string_view to_string(Provenance provenance);
Provenance parse_provenance(std::string_view name);

struct TrajectoryStep {
  WorldState state;
  Observation obs;
  Action action;

  bool operator==(const TrajectoryStep&) const = default;
};

/// Fixed-horizon record: steps[t] holds the state before action t and its
/// render; `final_state` is the state after the last action.
struct Trajectory {
  Provenance provenance = Provenance::kRollout;
  SceneDescriptor initial;
  std::vector<TrajectoryStep> steps;
  WorldState final_state;

  bool operator==(const Trajectory&) const = default;

  Domain domain() const { return initial.domain; }
  std::vector<Action> actions() const;
  /// Every visited state, including the final one.
  std::vector<const WorldState*> states() const;
};

/// Black-box policy: observation in, action out.
using PolicyFn = std::function<Action(const Observation&)>;

Trajectory rollout(const PolicyFn& policy, const SceneDescriptor& scene,
                   Provenance provenance = Provenance::kRollout);

/// Re-simulates an action sequence from a scene. The sequence must have
/// exactly the domain horizon.
Trajectory replay(const SceneDescriptor& scene, std::span<const Action> actions, Provenance provenance);

bool success(const Trajectory& trajectory, const RewardSpec& reward);

}  // namespace dfa
