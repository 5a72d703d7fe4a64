#pragma once

#include <optional>
#include <string_view>

#include "dfa/reward.hpp"

namespace dfa {

enum class ShiftType { kConceptTI, kConceptTR, kDistractorTI, kDistractorTR, kOther };

inline constexpr ShiftType kAllShifts[] = {ShiftType::kConceptTI, ShiftType::kConceptTR, ShiftType::kDistractorTI,
                                           ShiftType::kDistractorTR, ShiftType::kOther};

std::string_view to_string(ShiftType shift);
ShiftType parse_shift(std::string_view name);

/// Whether the shifted concept is task-irrelevant under the paired reward.
bool is_ti(ShiftType shift);

/// A test task derived from a training scene by one shift.
struct TaskSpec {
  Domain domain = Domain::kNav2d;
  SceneDescriptor train_scene;
  SceneDescriptor test_scene;
  ShiftType shift = ShiftType::kConceptTI;
  std::optional<ConceptSlot> shifted;
  RewardSpec reward;
  std::uint64_t seed = 0;

  bool operator==(const TaskSpec&) const = default;

  /// Throws Error(kInvalidScene) when the scene delta disagrees with the
  /// shift type.
  void validate() const;
};

Json to_json(const TaskSpec& task);
TaskSpec task_from_json(const Json& j);

}  // namespace dfa
