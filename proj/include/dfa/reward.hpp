#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfa/concept.hpp"

namespace dfa {

enum class Relevance { kIrrelevant, kRelevant };

std::string_view to_string(Relevance relevance);  // "TI" / "TR"
Relevance parse_relevance(std::string_view text);

/// A concept value that must hold in the scene for the task to count.
struct Requirement {
  std::size_t object = 0;
  std::size_t concept_index = 0;
  std::size_t value = 0;

  bool operator==(const Requirement&) const = default;
};

/// Contact with `object` fails the task; when `value` is set the clause only
/// applies while the object's first concept has that instantiation.
struct AvoidClause {
  std::size_t object = 0;
  std::optional<std::size_t> value;

  bool operator==(const AvoidClause&) const = default;
};

/// The user-intended reward: reach a goal, subject to concept requirements and
/// avoid clauses, with a TI/TR specificity tag per shifted concept slot.
struct RewardSpec {
  Domain domain = Domain::kNav2d;
  std::string text;
  std::vector<Requirement> requirements;
  std::vector<AvoidClause> avoid;
  std::map<ConceptSlot, Relevance> specificity;
  double goal_radius = nav2d::kGoalRadius;

  bool operator==(const RewardSpec&) const = default;

  /// Goal present and every requirement satisfied by the abstract state.
  bool satisfied_by(const ConceptVector& cv) const;

  /// Whether contact with `object` in a scene with abstract state `cv` breaks
  /// an avoid clause.
  bool must_avoid(const ConceptVector& cv, std::size_t object) const;

  /// Ground-truth relevance of a slot. Slots overlapping any TR tag or a
  /// predicate clause are TR; slots the reward does not mention are TI.
  Relevance relevance(const ConceptSlot& slot) const;

  /// Throws Error(kInvalidArgument) when a TI-tagged slot also appears in the
  /// predicate.
  void validate() const;
};

/// Index of the goal object for a domain.
std::size_t goal_object(Domain domain);

Json to_json(const RewardSpec& reward);
RewardSpec reward_from_json(const Json& j);

}  // namespace dfa
