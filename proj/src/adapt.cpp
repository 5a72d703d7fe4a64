#include "dfa/adapt.hpp"

namespace dfa {

std::vector<Trajectory> FinetuneSet::trajectories() const {
  std::vector<Trajectory> out{demo};
  for (const AugmentedDemo& a : augmented) out.push_back(a.trajectory);
  return out;
}

namespace {

// Directive turning the demo scene's object into the given assignment, or
// nullopt when it already has it.
std::optional<Directive> assign(const ConceptVector& cv, std::size_t object, const std::vector<std::size_t>& values,
                                std::size_t changed_concept) {
  if (!cv.present(object)) return SpawnObject{object, values, std::nullopt};
  const std::vector<std::size_t> current = cv.values(object);
  if (current == values) return std::nullopt;
  return SetInstantiation{object, changed_concept, values[changed_concept]};
}

}  // namespace

std::vector<AugmentedDemo> augment(const Trajectory& demo, const ConceptSlot& slot, const ConceptSchema& schema) {
  if (demo.provenance != Provenance::kHumanDemo) {
    throw Error(ErrorCode::kInvalidArgument, "only human demonstrations are augmented");
  }
  const ObjectSpec& spec = schema.object(slot.object);
  if (spec.concepts.empty()) throw Error(ErrorCode::kInvalidArgument, spec.name + " has no concepts to augment");
  const ConceptVector cv = abstract(demo.initial, schema);
  const bool present = cv.present(slot.object);

  std::vector<ConceptEdit> edits;
  if (slot.concept_index) {
    const std::size_t c = *slot.concept_index;
    std::vector<std::size_t> base = present ? cv.values(slot.object) : std::vector<std::size_t>(spec.concepts.size(), 0);
    for (std::size_t v = 0; v < spec.concepts.at(c).values.size(); ++v) {
      base[c] = v;
      ConceptEdit e;
      if (auto d = assign(cv, slot.object, base, c)) e.directives.push_back(*d);
      edits.push_back(std::move(e));
    }
  } else {
    std::vector<std::size_t> values(spec.concepts.size(), 0);
    while (true) {
      ConceptEdit e;
      if (!present) {
        e.directives.push_back(SpawnObject{slot.object, values, std::nullopt});
      } else {
        // Re-assign every concept, one SetInstantiation per differing block.
        const std::vector<std::size_t> current = cv.values(slot.object);
        for (std::size_t c = 0; c < values.size(); ++c) {
          if (current[c] != values[c]) e.directives.push_back(SetInstantiation{slot.object, c, values[c]});
        }
      }
      edits.push_back(std::move(e));
      std::size_t c = values.size();
      while (c > 0 && ++values[c - 1] == spec.concepts[c - 1].values.size()) values[--c] = 0;
      if (c == 0) break;
    }
  }
  if (!slot.concept_index || spec.distractor) {
    ConceptEdit e;
    if (present) e.directives.push_back(RemoveObject{slot.object});
    edits.push_back(std::move(e));
  }

  const std::vector<Action> actions = demo.actions();
  std::vector<AugmentedDemo> out;
  for (ConceptEdit& e : edits) {
    // Several SetInstantiation directives on one object are applied one by one.
    ConceptVector edited = cv;
    for (const Directive& d : e.directives) edited = apply_edit(edited, ConceptEdit{{d}}, schema);
    SceneDescriptor scene;
    try {
      scene = realize(edited, demo.initial, schema, placement_hints(e));
    } catch (const Error& err) {
      throw Error(ErrorCode::kReplayDiverged, std::string("augmented scene cannot be realized: ") + err.what());
    }
    out.push_back({replay(scene, actions, Provenance::kAugmented), std::move(e)});
  }
  return out;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kAwaitingVerdict: return "awaiting_verdict";
    case Phase::kAwaitingDemo: return "awaiting_demo";
    case Phase::kAwaitingFeedback: return "awaiting_feedback";
    case Phase::kFinetuning: return "finetuning";
    case Phase::kEvaluated: return "evaluated";
  }
  return "unknown";
}

Json to_json(const LoopConfig& cfg) {
  return {{"search", to_json(cfg.search)}, {"train", to_json(cfg.train)}, {"max_rounds", cfg.max_rounds}};
}

LoopConfig default_loop_config(Domain domain, std::uint64_t seed) {
  LoopConfig cfg;
  cfg.train = default_train_config(domain);
  cfg.train.finetune = true;
  cfg.train.seed = seed;
  return cfg;
}

namespace {

Json actions_json(std::span<const Action> actions) {
  Json out = Json::array();
  for (const Action& a : actions) out.push_back(to_json(a));
  return out;
}

template <class T, class F>
Json optional_json(const std::optional<T>& v, F&& f) {
  return v ? f(*v) : Json(nullptr);
}

}  // namespace

Json SessionLog::to_json(const ConceptSchema& schema) const {
  Json rounds_json = Json::array();
  for (const RoundRecord& r : rounds) {
    Json slots = Json::array();
    for (const ConceptSlot& s : r.augmented_slots) slots.push_back(dfa::to_json(s, schema));
    rounds_json.push_back({
        {"round", r.round},
        {"rollout", actions_json(r.rollout)},
        {"verdict", r.verdict},
        {"demo", optional_json(r.demo, [](const Trajectory& t) { return actions_json(t.actions()); })},
        {"counterfactual",
         optional_json(r.counterfactual, [&](const CounterfactualResult& c) { return dfa::to_json(c, schema); })},
        {"valid", optional_json(r.valid, [](bool v) { return Json(v); })},
        {"relevance", optional_json(r.relevance, [](Relevance v) { return Json(std::string(dfa::to_string(v))); })},
        {"augmented_slots", slots},
        {"finetune_size", r.finetune_size},
        {"loss_history", r.loss_history},
        {"post_verdict", optional_json(r.post_verdict, [](bool v) { return Json(v); })},
    });
  }
  return {{"status", status}, {"rounds", rounds_json}};
}

DfaLoop::DfaLoop(PolicyParams policy, SceneDescriptor test_scene, LoopConfig cfg)
    : policy_(std::make_shared<const PolicyParams>(std::move(policy))), scene_(std::move(test_scene)), cfg_(cfg) {
  cfg_.search.validate();
  cfg_.train.validate();
  if (cfg_.max_rounds < 1) throw Error(ErrorCode::kInvalidArgument, "max_rounds must be at least 1");
  if (policy_->arch().domain != scene_.domain) throw Error(ErrorCode::kDomainMismatch, "policy and scene domains differ");
  rollout_ = dfa::rollout(policy_fn(policy_), scene_);
  log_.status = "running";
}

void DfaLoop::require(Phase expected, std::string_view action) const {
  if (phase_ != expected) {
    throw Error(ErrorCode::kPhaseViolation, std::string(action) + " requires phase " + std::string(to_string(expected)) +
                                                " but the session is " + std::string(to_string(phase_)));
  }
}

void DfaLoop::submit_verdict(bool success) {
  require(Phase::kAwaitingVerdict, "verdict");
  if (!log_.rounds.empty()) log_.rounds.back().post_verdict = success;
  if (success) {
    log_.status = "success";
    phase_ = Phase::kEvaluated;
    return;
  }
  if (rounds() >= cfg_.max_rounds) {
    log_.status = "budget_exhausted";
    phase_ = Phase::kEvaluated;
    return;
  }
  RoundRecord record;
  record.round = rounds() + 1;
  record.rollout = rollout_.actions();
  record.verdict = false;
  log_.rounds.push_back(std::move(record));
  phase_ = Phase::kAwaitingDemo;
}

const CounterfactualResult& DfaLoop::submit_demo(Trajectory demo) {
  require(Phase::kAwaitingDemo, "demo");
  if (demo.initial != scene_) throw Error(ErrorCode::kInvalidArgument, "demonstration must start at the test scene");
  demo.provenance = Provenance::kHumanDemo;
  RoundRecord& record = log_.rounds.back();
  const ConceptSchema& schema = schema_for(scene_.domain);
  CounterfactualResult cf = search_min_edit(policy_fn(policy_), scene_, demo, schema, cfg_.search);
  pending_ = FinetuneSet{demo, {}};
  record.demo = std::move(demo);
  record.counterfactual = std::move(cf);
  if (record.counterfactual->found()) {
    phase_ = Phase::kAwaitingFeedback;
  } else {
    record.finetune_size = pending_.size();
    phase_ = Phase::kFinetuning;
  }
  return *record.counterfactual;
}

const FinetuneSet& DfaLoop::submit_feedback(bool valid, std::optional<Relevance> relevance) {
  require(Phase::kAwaitingFeedback, "feedback");
  RoundRecord& record = log_.rounds.back();
  record.valid = valid;
  record.relevance = relevance;
  if (valid && relevance == Relevance::kIrrelevant) {
    const ConceptSchema& schema = schema_for(scene_.domain);
    for (const ConceptSlot& slot : slots_of(record.counterfactual->edit)) {
      std::vector<AugmentedDemo> extra = augment(pending_.demo, slot, schema);
      pending_.augmented.insert(pending_.augmented.end(), std::make_move_iterator(extra.begin()),
                                std::make_move_iterator(extra.end()));
      record.augmented_slots.push_back(slot);
    }
  }
  record.finetune_size = pending_.size();
  phase_ = Phase::kFinetuning;
  return pending_;
}

DfaLoop::FinetuneJob DfaLoop::finetune_job() const {
  require(Phase::kFinetuning, "finetune");
  TrainConfig train = cfg_.train;
  train.seed = derive_seed(cfg_.train.seed, {tag("round"), static_cast<std::uint64_t>(log_.rounds.back().round)});
  return {policy_, pending_.trajectories(), train};
}

void DfaLoop::complete_finetune(TrainResult result) {
  require(Phase::kFinetuning, "finetune");
  if (result.params.arch() != policy_->arch()) {
    throw Error(ErrorCode::kShapeMismatch, "finetuned policy has a different architecture");
  }
  log_.rounds.back().loss_history = std::move(result.loss_history);
  policy_ = std::make_shared<const PolicyParams>(std::move(result.params));
  rollout_ = dfa::rollout(policy_fn(policy_), scene_);
  pending_ = FinetuneSet{};
  phase_ = Phase::kAwaitingVerdict;
}

void DfaLoop::run_finetune() {
  const FinetuneJob job = finetune_job();
  complete_finetune(finetune(*job.policy, job.data, job.train));
}

AdaptResult run_dfa(const PolicyParams& policy, const TaskSpec& task, SimulatedUser& user, const LoopConfig& cfg) {
  if (task.reward != user.model().reward) {
    throw Error(ErrorCode::kInvalidArgument, "task and user must share a reward");
  }
  DfaLoop loop(policy, task.test_scene, cfg);
  while (loop.phase() != Phase::kEvaluated) {
    switch (loop.phase()) {
      case Phase::kAwaitingVerdict:
        loop.submit_verdict(user.judge_success(loop.rollout()));
        break;
      case Phase::kAwaitingDemo:
        loop.submit_demo(user.provide_demo(task.test_scene));
        break;
      case Phase::kAwaitingFeedback: {
        const CounterfactualResult& cf = *loop.log().rounds.back().counterfactual;
        const bool valid = user.verify_counterfactual(cf);
        std::optional<Relevance> relevance;
        if (valid) relevance = user.label_relevance(cf.edit);
        loop.submit_feedback(valid, relevance);
        break;
      }
      case Phase::kFinetuning:
        loop.run_finetune();
        break;
      case Phase::kEvaluated:
        break;
    }
  }
  return {loop.policy(), loop.log()};
}

}  // namespace dfa
