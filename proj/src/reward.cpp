#include "dfa/reward.hpp"

namespace dfa {

std::string_view to_string(Relevance relevance) {
  return relevance == Relevance::kIrrelevant ? "TI" : "TR";
}

Relevance parse_relevance(std::string_view text) {
  if (text == "TI") return Relevance::kIrrelevant;
  if (text == "TR") return Relevance::kRelevant;
  throw Error(ErrorCode::kInvalidArgument, "unknown relevance '" + std::string(text) + "' (allowed: TI, TR)");
}

std::size_t goal_object(Domain domain) {
  return domain == Domain::kNav2d ? nav2d::kGoal : doorkey::kGoal;
}

bool RewardSpec::satisfied_by(const ConceptVector& cv) const {
  if (!cv.present(goal_object(domain))) return false;
  for (const Requirement& r : requirements) {
    if (!cv.present(r.object) || cv.value(r.object, r.concept_index) != r.value) return false;
  }
  return true;
}

bool RewardSpec::must_avoid(const ConceptVector& cv, std::size_t object) const {
  if (!cv.present(object)) return false;
  for (const AvoidClause& a : avoid) {
    if (a.object != object) continue;
    if (!a.value || cv.value(object, 0) == a.value) return true;
  }
  return false;
}

Relevance RewardSpec::relevance(const ConceptSlot& slot) const {
  if (auto it = specificity.find(slot); it != specificity.end()) return it->second;
  for (const auto& [tagged, rel] : specificity) {
    if (rel == Relevance::kRelevant && slots_overlap(tagged, slot)) return Relevance::kRelevant;
  }
  for (const Requirement& r : requirements) {
    if (slots_overlap({r.object, r.concept_index}, slot)) return Relevance::kRelevant;
  }
  for (const AvoidClause& a : avoid) {
    if (a.object == slot.object) return Relevance::kRelevant;
  }
  return Relevance::kIrrelevant;
}

void RewardSpec::validate() const {
  for (const auto& [slot, rel] : specificity) {
    if (rel != Relevance::kIrrelevant) continue;
    for (const Requirement& r : requirements) {
      if (slots_overlap({r.object, r.concept_index}, slot)) {
        throw Error(ErrorCode::kInvalidArgument, "TI-tagged slot appears in a reward requirement");
      }
    }
    for (const AvoidClause& a : avoid) {
      if (a.object == slot.object) throw Error(ErrorCode::kInvalidArgument, "TI-tagged slot appears in an avoid clause");
    }
  }
}

Json to_json(const RewardSpec& reward) {
  const ConceptSchema& schema = schema_for(reward.domain);
  Json requirements = Json::array();
  for (const Requirement& r : reward.requirements) {
    const ObjectSpec& spec = schema.object(r.object);
    const ConceptSpec& c = spec.concepts.at(r.concept_index);
    requirements.push_back({{"object", spec.name}, {"concept", c.name}, {"value", c.values.at(r.value)}});
  }
  Json avoid = Json::array();
  for (const AvoidClause& a : reward.avoid) {
    const ObjectSpec& spec = schema.object(a.object);
    avoid.push_back({{"object", spec.name},
                     {"value", a.value ? Json(spec.concepts.at(0).values.at(*a.value)) : Json(nullptr)}});
  }
  Json specificity = Json::array();
  for (const auto& [slot, rel] : reward.specificity) {
    Json s = to_json(slot, schema);
    s["tag"] = to_string(rel);
    specificity.push_back(s);
  }
  return {{"domain", to_string(reward.domain)}, {"text", reward.text},         {"requirements", requirements},
          {"avoid", avoid},                     {"specificity", specificity}, {"goal_radius", reward.goal_radius}};
}

RewardSpec reward_from_json(const Json& j) {
  RewardSpec reward;
  reward.domain = parse_domain(j.at("domain").get<std::string>());
  const ConceptSchema& schema = schema_for(reward.domain);
  reward.text = j.value("text", "");
  for (const Json& r : j.value("requirements", Json::array())) {
    const std::size_t obj = schema.object_index(r.at("object").get<std::string>());
    const std::size_t c = schema.concept_index(obj, r.at("concept").get<std::string>());
    reward.requirements.push_back({obj, c, schema.value_index(obj, c, r.at("value").get<std::string>())});
  }
  for (const Json& a : j.value("avoid", Json::array())) {
    AvoidClause clause{schema.object_index(a.at("object").get<std::string>()), std::nullopt};
    if (a.contains("value") && !a.at("value").is_null()) {
      clause.value = schema.value_index(clause.object, 0, a.at("value").get<std::string>());
    }
    reward.avoid.push_back(clause);
  }
  for (const Json& s : j.value("specificity", Json::array())) {
    reward.specificity[concept_slot_from_json(s, schema)] = parse_relevance(s.at("tag").get<std::string>());
  }
  reward.goal_radius = j.value("goal_radius", nav2d::kGoalRadius);
  reward.validate();
  return reward;
}

}  // namespace dfa
