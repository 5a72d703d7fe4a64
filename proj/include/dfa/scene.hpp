#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dfa/schema.hpp"

namespace dfa {

enum class Domain { kNav2d, kDoorKey };

std::string_view to_string(Domain domain);
Domain parse_domain(std::string_view name);

struct ObjectState {
  bool present = false;
  // Instantiation index per concept; ignored when absent.
  std::vector<std::size_t> values;
  // Continuous coordinates for nav2d, integral cell coordinates for doorkey.
  Point pos;

  bool operator==(const ObjectState&) const = default;
};

/// Ground-truth parametric scene. Objects are stored in schema order; index 0
/// is always the agent. The runtime flags are only meaningful for doorkey.
struct SceneDescriptor {
  Domain domain = Domain::kNav2d;
  std::vector<ObjectState> objects;
  bool door_open = false;
  bool key_held = false;

  bool operator==(const SceneDescriptor&) const = default;

  const ObjectState& agent() const { return objects.front(); }
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

/// Named palette shared by both renderers.
Rgb palette(std::string_view color);

namespace nav2d {
inline constexpr std::size_t kAgent = 0;
inline constexpr std::size_t kGoal = 1;
inline constexpr std::size_t kDistractor = 2;

inline constexpr int kHorizon = 20;
inline constexpr double kMaxStep = 0.1;
inline constexpr double kGoalRadius = 0.05;
inline constexpr Point kAgentStart{0.1, 0.1};
inline constexpr Point kTrainGoal{0.9, 0.9};
inline constexpr Point kOtherGoal{0.1, 0.9};
// Square footprints, given as half side lengths in world units.
inline constexpr double kAgentHalf = 0.04;
inline constexpr double kObjectHalf = 0.06;
// Perpendicular offset of the expert's waypoint around a blocking distractor.
inline constexpr double kDetourClearance = 0.2;
// Minimum distance of an off-path distractor from the start-goal segment.
inline constexpr double kOffPathDistance = 0.2;
}  // namespace nav2d

namespace doorkey {
inline constexpr std::size_t kAgent = 0;
inline constexpr std::size_t kKey = 1;
inline constexpr std::size_t kDoor = 2;
inline constexpr std::size_t kGoal = 3;
inline constexpr std::size_t kLava = 4;

inline constexpr int kHorizon = 35;
inline constexpr int kGridSize = 9;
inline constexpr int kCellPixels = 4;
inline constexpr int kWallColumn = 4;
inline constexpr Point kAgentStart{1, 1};
inline constexpr Point kKeyCell{2, 5};
inline constexpr Point kDoorCell{4, 3};
inline constexpr Point kGoalCell{6, 6};

/// Border cells and the dividing column, excluding whatever cell the door
/// currently occupies.
bool is_wall(const SceneDescriptor& scene, int x, int y);
bool is_structural_wall(int x, int y);
}  // namespace doorkey

const ConceptSchema& schema_for(Domain domain);
int horizon(Domain domain);

/// True when `pos` lies inside the world and does not overlap the footprint
/// of any other present object (or a wall, for doorkey).
bool placement_free(const SceneDescriptor& scene, std::size_t object, Point pos);

/// Throws Error(kInvalidScene) when bounds, overlap, or schema shape
/// invariants are violated.
void validate_scene(const SceneDescriptor& scene);

Json to_json(const SceneDescriptor& scene);
SceneDescriptor scene_from_json(const Json& j);

}  // namespace dfa
