#pragma once

#include <span>
#include <string>
#include <vector>

#include "dfa/env.hpp"

namespace dfa {

struct SearchConfig {
  double action_tolerance = 0.05;  // per-step L1 bound for continuous actions
  std::size_t max_edits = 2;
  bool presence_first = true;
  std::size_t parallelism = 1;  // candidates evaluated concurrently

  void validate() const;
};

Json to_json(const SearchConfig& cfg);
SearchConfig search_config_from_json(const Json& j);

enum class SearchStatus { kFound, kNone };

std::string_view to_string(SearchStatus status);

struct SkippedCandidate {
  std::size_t index = 0;
  std::string reason;

  bool operator==(const SkippedCandidate&) const = default;
};

struct CounterfactualResult {
  SearchStatus status = SearchStatus::kNone;
  ConceptEdit edit;
  SceneDescriptor scene;
  Trajectory trajectory;
  std::size_t directive_count = 0;
  std::size_t edit_count = 0;  // differing blocks between the test and counterfactual scenes
  std::size_t candidates_evaluated = 0;
  std::vector<SkippedCandidate> skipped;

  bool found() const { return status == SearchStatus::kFound; }
  bool operator==(const CounterfactualResult&) const = default;
};

/// Per-step L1 distance for continuous actions, 0/1 mismatch for discrete.
std::vector<double> action_distance(std::span<const Action> a, std::span<const Action> b);

/// Every step strictly within tolerance (continuous) or equal (discrete).
bool matches(const Trajectory& counterfactual, const Trajectory& demo, const SearchConfig& cfg);

/// First candidate of enumerate_edits whose rollout matches the demo.
CounterfactualResult search_min_edit(const PolicyFn& policy, const SceneDescriptor& test_scene, const Trajectory& demo,
                                     const ConceptSchema& schema, const SearchConfig& cfg);

/// Reference search: evaluates every edit up to max_edits, built from an
/// independent per-object product enumeration, and returns the
/// minimum-cardinality satisfier first in that product order.
CounterfactualResult brute_force_oracle(const PolicyFn& policy, const SceneDescriptor& test_scene,
                                        const Trajectory& demo, const ConceptSchema& schema, const SearchConfig& cfg);

Json to_json(const CounterfactualResult& result, const ConceptSchema& schema);

}  // namespace dfa
