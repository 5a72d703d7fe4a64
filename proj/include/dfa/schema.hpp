#pragma once

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfa/common.hpp"

namespace dfa {

struct Point {
  double x = 0.0;
  double y = 0.0;

  auto operator<=>(const Point&) const = default;
};

struct ConceptSpec {
  std::string name;
  std::vector<std::string> values;

  bool operator==(const ConceptSpec&) const = default;
};

struct ObjectSpec {
  std::string name;
  std::vector<ConceptSpec> concepts;
  bool removable = false;
  bool spawnable = false;
  // Distractors may legitimately be absent from a task, so augmentation over
  // them also covers the all-zero instantiation.
  bool distractor = false;
  // Default placements for spawns, scanned in order (row-major).
  std::vector<Point> spawn_candidates;

  bool operator==(const ObjectSpec&) const = default;
};

/// Objects, their concepts, and the named instantiations of each concept.
/// Construction validates that names are unique per level and that every
/// concept has at least two instantiations.
class ConceptSchema {
 public:
  ConceptSchema(std::string name, std::vector<ObjectSpec> objects);

  const std::string& name() const { return name_; }
  std::span<const ObjectSpec> objects() const { return objects_; }
  const ObjectSpec& object(std::size_t index) const;
  std::size_t object_count() const { return objects_.size(); }

  std::optional<std::size_t> find_object(std::string_view name) const;
  std::size_t object_index(std::string_view name) const;
  std::size_t concept_index(std::size_t object, std::string_view name) const;
  std::size_t value_index(std::size_t object, std::size_t concept_id, std::string_view name) const;
  std::size_t value_count(std::size_t object, std::size_t concept_id) const;

  /// Total number of (object, concept) blocks.
  std::size_t block_count() const;

  bool operator==(const ConceptSchema&) const = default;

 private:
  std::string name_;
  std::vector<ObjectSpec> objects_;
};

Json to_json(const ConceptSchema& schema);
ConceptSchema schema_from_json(const Json& j);

}  // namespace dfa
