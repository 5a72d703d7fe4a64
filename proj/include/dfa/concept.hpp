#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dfa/scene.hpp"

namespace dfa {

/// Abstract concept state: an explicit presence flag per object plus one
/// one-hot block per (object, concept). Blocks of absent objects are all zero.
class ConceptVector {
 public:
  struct ObjectBlocks {
    bool present = false;
    std::vector<std::vector<std::uint8_t>> blocks;

    bool operator==(const ObjectBlocks&) const = default;
  };

  /// All objects absent.
  explicit ConceptVector(const ConceptSchema& schema);

  std::size_t object_count() const { return objects_.size(); }
  bool present(std::size_t object) const { return objects_.at(object).present; }
  std::span<const std::uint8_t> block(std::size_t object, std::size_t concept_index) const;
  std::size_t concept_count(std::size_t object) const { return objects_.at(object).blocks.size(); }
  /// Index of the hot entry, or nullopt for a zero block.
  std::optional<std::size_t> value(std::size_t object, std::size_t concept_index) const;
  /// Instantiation indices of a present object.
  std::vector<std::size_t> values(std::size_t object) const;

  void set_object(std::size_t object, std::span<const std::size_t> values);
  void clear_object(std::size_t object);

  /// Same object/concept/instantiation layout.
  bool same_shape(const ConceptVector& other) const;

  bool operator==(const ConceptVector&) const = default;

 private:
  std::vector<ObjectBlocks> objects_;
};

struct SetInstantiation {
  std::size_t object = 0;
  std::size_t concept_index = 0;
  std::size_t value = 0;

  auto operator<=>(const SetInstantiation&) const = default;
};

struct RemoveObject {
  std::size_t object = 0;

  auto operator<=>(const RemoveObject&) const = default;
};

struct SpawnObject {
  std::size_t object = 0;
  std::vector<std::size_t> assignment;
  std::optional<Point> placement;

  auto operator<=>(const SpawnObject&) const = default;
};

using Directive = std::variant<SetInstantiation, RemoveObject, SpawnObject>;

std::size_t directive_object(const Directive& directive);
bool is_presence_directive(const Directive& directive);

struct ConceptEdit {
  std::vector<Directive> directives;

  std::size_t size() const { return directives.size(); }
  bool empty() const { return directives.empty(); }

  bool operator==(const ConceptEdit&) const = default;
};

/// An (object, concept) block, or the presence of an object when
/// `concept_index` is empty.
struct ConceptSlot {
  std::size_t object = 0;
  std::optional<std::size_t> concept_index;

  auto operator<=>(const ConceptSlot&) const = default;
};

ConceptSlot slot_of(const Directive& directive);
std::vector<ConceptSlot> slots_of(const ConceptEdit& edit);
/// Whether two slots refer to overlapping blocks (presence covers every
/// concept of its object).
bool slots_overlap(const ConceptSlot& a, const ConceptSlot& b);

/// Slots feedback can name: every (object, concept) block, plus presence
/// for objects the schema marks as distractors.
std::vector<ConceptSlot> concept_slots(const ConceptSchema& schema);

using PlacementHints = std::map<std::size_t, Point>;

ConceptVector abstract(const SceneDescriptor& scene, const ConceptSchema& schema);

/// The state editor over abstract vectors. Objects not named by the edit are
/// copied unchanged.
ConceptVector apply_edit(const ConceptVector& cv, const ConceptEdit& edit, const ConceptSchema& schema);

/// Conditional inverse: concept values come from `cv`; positions, agent pose,
/// and runtime flags come from `base`. Newly present objects are placed by
/// hint, else at the first free entry of their schema spawn candidates.
SceneDescriptor realize(const ConceptVector& cv, const SceneDescriptor& base,
                        const ConceptSchema& schema, const PlacementHints& hints = {});

PlacementHints placement_hints(const ConceptEdit& edit);

/// Every legal edit with 1..max_edits directives on distinct objects.
/// Ordered by cardinality; within a cardinality, edits with fewer
/// instantiation directives come first when `presence_first` is set, then by
/// schema declaration order of the atomic directives.
std::vector<ConceptEdit> enumerate_edits(const ConceptVector& cv, const ConceptSchema& schema,
                                         std::size_t max_edits, bool presence_first = true);

/// Number of (object, concept) blocks whose contents differ.
std::size_t edit_distance(const ConceptVector& a, const ConceptVector& b);

/// Number of blocks an edit rewrites (one per set; k per remove/spawn of an
/// object with k concepts).
std::size_t blocks_changed(const ConceptEdit& edit, const ConceptSchema& schema);

/// Plain-language description such as "goal color changed yellow -> red".
std::string describe(const ConceptEdit& edit, const ConceptVector& before, const ConceptSchema& schema);
std::string describe(const ConceptSlot& slot, const ConceptSchema& schema);

Json to_json(const ConceptVector& cv, const ConceptSchema& schema);
ConceptVector concept_vector_from_json(const Json& j, const ConceptSchema& schema);
Json to_json(const ConceptEdit& edit, const ConceptSchema& schema);
ConceptEdit concept_edit_from_json(const Json& j, const ConceptSchema& schema);
Json to_json(const ConceptSlot& slot, const ConceptSchema& schema);
ConceptSlot concept_slot_from_json(const Json& j, const ConceptSchema& schema);

}  // namespace dfa
