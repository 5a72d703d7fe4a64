#include "dfa/counterfactual.hpp"

#include <cmath>
#include <optional>
#include <thread>

namespace dfa {

void SearchConfig::validate() const {
  if (!(action_tolerance > 0.0)) throw Error(ErrorCode::kInvalidArgument, "action tolerance must be positive");
  if (max_edits < 1) throw Error(ErrorCode::kInvalidArgument, "max_edits must be at least 1");
  if (parallelism < 1) throw Error(ErrorCode::kInvalidArgument, "parallelism must be at least 1");
}

Json to_json(const SearchConfig& cfg) {
  return {{"action_tolerance", cfg.action_tolerance},
          {"max_edits", cfg.max_edits},
          {"presence_first", cfg.presence_first},
          {"parallelism", cfg.parallelism}};
}

SearchConfig search_config_from_json(const Json& j) {
  SearchConfig cfg;
  cfg.action_tolerance = j.value("action_tolerance", cfg.action_tolerance);
  cfg.max_edits = j.value("max_edits", cfg.max_edits);
  cfg.presence_first = j.value("presence_first", cfg.presence_first);
  cfg.parallelism = j.value("parallelism", cfg.parallelism);
  cfg.validate();
  return cfg;
}

std::string_view to_string(SearchStatus status) { return status == SearchStatus::kFound ? "found" : "none"; }

std::vector<double> action_distance(std::span<const Action> a, std::span<const Action> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, "action sequences differ in length (" + std::to_string(a.size()) + " vs " +
                                                std::to_string(b.size()) + ")");
  }
  std::vector<double> out(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].index() != b[t].index()) throw Error(ErrorCode::kDomainMismatch, "action sequences mix domains");
    if (const auto* m = std::get_if<Move>(&a[t])) {
      const Move& n = std::get<Move>(b[t]);
      out[t] = std::abs(m->dx - n.dx) + std::abs(m->dy - n.dy);
    } else {
      out[t] = std::get<GridAction>(a[t]) == std::get<GridAction>(b[t]) ? 0.0 : 1.0;
    }
  }
  return out;
}

bool matches(const Trajectory& counterfactual, const Trajectory& demo, const SearchConfig& cfg) {
  const std::vector<double> d = action_distance(counterfactual.actions(), demo.actions());
  const bool continuous = counterfactual.domain() == Domain::kNav2d;
  for (double v : d) {
    if (continuous ? !(v < cfg.action_tolerance) : v != 0.0) return false;
  }
  return true;
}

namespace {

struct Outcome {
  bool evaluated = false;
  bool match = false;
  SceneDescriptor scene;
  Trajectory trajectory;
  std::string error;
};

Outcome evaluate(const PolicyFn& policy, const ConceptVector& cv, const SceneDescriptor& test_scene,
                 const Trajectory& demo, const ConceptSchema& schema, const SearchConfig& cfg,
                 const ConceptEdit& edit) {
  Outcome out;
  try {
    const ConceptVector edited = apply_edit(cv, edit, schema);
    out.scene = realize(edited, test_scene, schema, placement_hints(edit));
    out.trajectory = rollout(policy, out.scene, Provenance::kCounterfactual);
    out.evaluated = true;
    out.match = matches(out.trajectory, demo, cfg);
  } catch (const Error& e) {
    out.evaluated = false;
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return out;
}

// Evaluates candidates [first, last) with up to `width` worker threads.
std::vector<Outcome> evaluate_range(const PolicyFn& policy, const ConceptVector& cv, const SceneDescriptor& test_scene,
                                    const Trajectory& demo, const ConceptSchema& schema, const SearchConfig& cfg,
                                    const std::vector<ConceptEdit>& edits, std::size_t first, std::size_t last) {
  std::vector<Outcome> out(last - first);
  if (cfg.parallelism == 1 || last - first == 1) {
    for (std::size_t i = first; i < last; ++i) out[i - first] = evaluate(policy, cv, test_scene, demo, schema, cfg, edits[i]);
    return out;
  }
  std::vector<std::jthread> workers;
  for (std::size_t i = first; i < last; ++i) {
    workers.emplace_back([&, i] { out[i - first] = evaluate(policy, cv, test_scene, demo, schema, cfg, edits[i]); });
  }
  return out;
}

void check_inputs(const SceneDescriptor& test_scene, const Trajectory& demo, const ConceptSchema& schema,
                  const SearchConfig& cfg) {
  cfg.validate();
  if (demo.initial != test_scene) throw Error(ErrorCode::kInvalidArgument, "demonstration must start at the test scene");
  if (schema != schema_for(test_scene.domain)) throw Error(ErrorCode::kSchemaMismatch, "schema does not match the scene");
  if (demo.steps.size() != static_cast<std::size_t>(horizon(test_scene.domain))) {
    throw Error(ErrorCode::kLengthMismatch, "demonstration must span the domain horizon");
  }
}

void fill_found(CounterfactualResult& result, const ConceptVector& cv, const ConceptSchema& schema,
                const ConceptEdit& edit, Outcome&& outcome) {
  result.status = SearchStatus::kFound;
  result.edit = edit;
  result.directive_count = edit.size();
  result.edit_count = edit_distance(cv, abstract(outcome.scene, schema));
  result.scene = std::move(outcome.scene);
  result.trajectory = std::move(outcome.trajectory);
}

// Per-object alternatives to the current state, in schema value order.
std::vector<Directive> object_options(const ConceptVector& cv, const ConceptSchema& schema, std::size_t object) {
  const ObjectSpec& spec = schema.object(object);
  std::vector<Directive> options;
  if (spec.concepts.empty()) return options;
  if (cv.present(object)) {
    for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
      for (std::size_t v = 0; v < spec.concepts[c].values.size(); ++v) {
        if (cv.value(object, c) != v) options.push_back(SetInstantiation{object, c, v});
      }
    }
    if (spec.removable) options.push_back(RemoveObject{object});
  } else if (spec.spawnable) {
    std::vector<std::size_t> assignment(spec.concepts.size(), 0);
    while (true) {
      options.push_back(SpawnObject{object, assignment, std::nullopt});
      std::size_t c = assignment.size();
      while (c > 0 && ++assignment[c - 1] == spec.concepts[c - 1].values.size()) assignment[--c] = 0;
      if (c == 0) break;
    }
  }
  return options;
}

}  // namespace

CounterfactualResult search_min_edit(const PolicyFn& policy, const SceneDescriptor& test_scene, const Trajectory& demo,
                                     const ConceptSchema& schema, const SearchConfig& cfg) {
  check_inputs(test_scene, demo, schema, cfg);
  const ConceptVector cv = abstract(test_scene, schema);
  const std::vector<ConceptEdit> edits = enumerate_edits(cv, schema, cfg.max_edits, cfg.presence_first);
  CounterfactualResult result;
  result.candidates_evaluated = edits.size();
  for (std::size_t first = 0; first < edits.size(); first += cfg.parallelism) {
    const std::size_t last = std::min(edits.size(), first + cfg.parallelism);
    std::vector<Outcome> outcomes = evaluate_range(policy, cv, test_scene, demo, schema, cfg, edits, first, last);
    for (std::size_t i = first; i < last; ++i) {
      Outcome& o = outcomes[i - first];
      if (!o.evaluated) {
        result.skipped.push_back({i, o.error});
        continue;
      }
      if (o.match) {
        result.candidates_evaluated = i + 1;
        fill_found(result, cv, schema, edits[i], std::move(o));
        return result;
      }
    }
  }
  return result;
}

CounterfactualResult brute_force_oracle(const PolicyFn& policy, const SceneDescriptor& test_scene,
                                        const Trajectory& demo, const ConceptSchema& schema, const SearchConfig& cfg) {
  check_inputs(test_scene, demo, schema, cfg);
  const ConceptVector cv = abstract(test_scene, schema);

  // Mixed-radix walk over (keep | option_1 .. option_n) per object.
  std::vector<std::vector<Directive>> options;
  for (std::size_t i = 0; i < schema.object_count(); ++i) options.push_back(object_options(cv, schema, i));
  std::vector<ConceptEdit> edits;
  std::vector<std::size_t> digit(options.size(), 0);
  while (true) {
    std::size_t i = digit.size();
    while (i > 0 && ++digit[i - 1] > options[i - 1].size()) digit[--i] = 0;
    if (i == 0) break;
    ConceptEdit edit;
    for (std::size_t o = 0; o < digit.size(); ++o) {
      if (digit[o] > 0) edit.directives.push_back(options[o][digit[o] - 1]);
    }
    if (edit.size() <= cfg.max_edits) edits.push_back(std::move(edit));
  }

  CounterfactualResult result;
  result.candidates_evaluated = edits.size();
  std::optional<std::size_t> best;
  std::optional<Outcome> best_outcome;
  for (std::size_t first = 0; first < edits.size(); first += cfg.parallelism) {
    const std::size_t last = std::min(edits.size(), first + cfg.parallelism);
    std::vector<Outcome> outcomes = evaluate_range(policy, cv, test_scene, demo, schema, cfg, edits, first, last);
    for (std::size_t i = first; i < last; ++i) {
      Outcome& o = outcomes[i - first];
      if (!o.evaluated) {
        result.skipped.push_back({i, o.error});
        continue;
      }
      if (o.match && (!best || edits[i].size() < edits[*best].size())) {
        best = i;
        best_outcome = std::move(o);
      }
    }
  }
  if (best) fill_found(result, cv, schema, edits[*best], std::move(*best_outcome));
  return result;
}

Json to_json(const CounterfactualResult& result, const ConceptSchema& schema) {
  Json j{{"status", to_string(result.status)}, {"candidates_evaluated", result.candidates_evaluated}};
  if (result.found()) {
    j["edit"] = to_json(result.edit, schema);
    j["directive_count"] = result.directive_count;
    j["edit_count"] = result.edit_count;
    j["scene"] = to_json(result.scene);
    Json actions = Json::array();
    for (const Action& a : result.trajectory.actions()) actions.push_back(to_json(a));
    j["actions"] = actions;
  }
  Json skipped = Json::array();
  for (const SkippedCandidate& s : result.skipped) skipped.push_back({{"index", s.index}, {"reason", s.reason}});
  j["skipped"] = skipped;
  return j;
}

}  // namespace dfa
