#include "dfa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace dfa {

// --- task types --------------------------------------------------------------

std::string_view to_string(ShiftType shift) {
  switch (shift) {
    case ShiftType::kConceptTI: return "ConceptTI";
    case ShiftType::kConceptTR: return "ConceptTR";
    case ShiftType::kDistractorTI: return "DistractorTI";
    case ShiftType::kDistractorTR: return "DistractorTR";
    case ShiftType::kOther: return "Other";
  }
  return "unknown";
}

ShiftType parse_shift(std::string_view name) {
  for (ShiftType s : kAllShifts) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown shift '" + std::string(name) +
                  "' (allowed: ConceptTI, ConceptTR, DistractorTI, DistractorTR, Other)");
}

bool is_ti(ShiftType shift) { return shift == ShiftType::kConceptTI || shift == ShiftType::kDistractorTI; }

void TaskSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kInvalidScene, std::string(to_string(shift)) + " task: " + what);
  };
  if (train_scene.domain != domain || test_scene.domain != domain || reward.domain != domain) fail("domains differ");
  validate_scene(train_scene);
  validate_scene(test_scene);
  const ConceptSchema& schema = schema_for(domain);
  const ConceptVector before = abstract(train_scene, schema);
  const ConceptVector after = abstract(test_scene, schema);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < train_scene.objects.size(); ++i) {
    if (train_scene.objects[i].pos != test_scene.objects[i].pos) ++moved;
  }
  switch (shift) {
    case ShiftType::kConceptTI:
    case ShiftType::kConceptTR: {
      if (edit_distance(before, after) != 1 || moved != 0 || !shifted || !shifted->concept_index) {
        fail("exactly one concept block must change");
      }
      for (std::size_t i = 0; i < train_scene.objects.size(); ++i) {
        if (before.present(i) != after.present(i)) fail("presence changed");
      }
      if (before.value(shifted->object, *shifted->concept_index) ==
          after.value(shifted->object, *shifted->concept_index)) {
        fail("recorded slot is not the changed one");
      }
      break;
    }
    case ShiftType::kDistractorTI:
    case ShiftType::kDistractorTR: {
      if (!shifted || shifted->concept_index || !schema.object(shifted->object).distractor) {
        fail("the shifted slot must be a distractor's presence");
      }
      for (std::size_t i = 0; i < train_scene.objects.size(); ++i) {
        const bool spawned = !before.present(i) && after.present(i);
        if (spawned != (i == shifted->object)) fail("exactly one distractor must be spawned");
        if (i != shifted->object && before.present(i) != after.present(i)) fail("presence changed");
        if (i != shifted->object && train_scene.objects[i] != test_scene.objects[i]) fail("other objects changed");
      }
      break;
    }
    case ShiftType::kOther:
      if (before != after || moved != 1 || shifted) fail("only one position may change");
      break;
  }
  reward.validate();
}

Json to_json(const TaskSpec& task) {
  const ConceptSchema& schema = schema_for(task.domain);
  return {{"domain", to_string(task.domain)},
          {"seed", task.seed},
          {"shift", to_string(task.shift)},
          {"shifted", task.shifted ? to_json(*task.shifted, schema) : Json(nullptr)},
          {"reward", to_json(task.reward)},
          {"train_scene", to_json(task.train_scene)},
          {"test_scene", to_json(task.test_scene)}};
}

TaskSpec task_from_json(const Json& j) {
  TaskSpec task;
  task.domain = parse_domain(j.at("domain").get<std::string>());
  task.seed = j.at("seed").get<std::uint64_t>();
  task.shift = parse_shift(j.at("shift").get<std::string>());
  if (!j.at("shifted").is_null()) task.shifted = concept_slot_from_json(j.at("shifted"), schema_for(task.domain));
  task.reward = reward_from_json(j.at("reward"));
  task.train_scene = scene_from_json(j.at("train_scene"));
  task.test_scene = scene_from_json(j.at("test_scene"));
  task.validate();
  return task;
}

// --- generators --------------------------------------------------------------

namespace {

constexpr double kStartJitter = 0.05;
constexpr Point kDoorKeyOtherGoal{7, 1};

std::uint64_t domain_tag(Domain d) { return tag(to_string(d)); }

ObjectState object(bool present, std::vector<std::size_t> values, Point pos) {
  return {present, present ? std::move(values) : std::vector<std::size_t>{}, pos};
}

const std::string& value_name(const SceneDescriptor& scene, std::size_t obj) {
  const ObjectSpec& spec = schema_for(scene.domain).object(obj);
  return spec.concepts[0].values[scene.objects[obj].values[0]];
}

std::string base_text(Domain domain) {
  return domain == Domain::kNav2d ? "go to the goal" : "pick up the key, open the door and go to the goal";
}

SceneDescriptor jittered_start(const SceneDescriptor& scene, Rng& rng) {
  SceneDescriptor s = scene;
  Point& agent = s.objects[0].pos;
  if (scene.domain == Domain::kNav2d) {
    agent.x += (2.0 * uniform_unit(rng) - 1.0) * kStartJitter;
    agent.y += (2.0 * uniform_unit(rng) - 1.0) * kStartJitter;
    return s;
  }
  std::vector<Point> cells;
  for (int y = 1; y < doorkey::kGridSize - 1; ++y) {
    for (int x = 1; x < doorkey::kWallColumn; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      if (placement_free(scene, doorkey::kAgent, p)) cells.push_back(p);
    }
  }
  agent = cells[uniform_index(rng, cells.size())];
  return s;
}

// Cells the expert visits in the unshifted scene.
std::vector<Point> expert_cells(const SceneDescriptor& scene, const RewardSpec& reward) {
  std::vector<Point> cells;
  for (const WorldState* s : expert_demo(scene, reward).states()) {
    const Point p = s->scene.agent().pos;
    if (std::find(cells.begin(), cells.end(), p) == cells.end()) cells.push_back(p);
  }
  return cells;
}

}  // namespace

TrainTask gen_train_task(Domain domain, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag("train-task"), domain_tag(domain)}));
  TrainTask task;
  task.domain = domain;
  task.seed = seed;
  SceneDescriptor& s = task.scene;
  s.domain = domain;
  if (domain == Domain::kNav2d) {
    s.objects = {object(true, {}, nav2d::kAgentStart), object(true, {uniform_index(rng, 4)}, nav2d::kTrainGoal),
                 object(false, {}, schema_for(domain).object(nav2d::kDistractor).spawn_candidates[0])};
  } else {
    const std::size_t key = uniform_index(rng, 4);
    const std::size_t door = uniform_index(rng, 4);
    const std::size_t goal = uniform_index(rng, 4);
    s.objects = {object(true, {}, doorkey::kAgentStart), object(true, {key}, doorkey::kKeyCell),
                 object(true, {door}, doorkey::kDoorCell), object(true, {goal}, doorkey::kGoalCell),
                 object(false, {}, schema_for(domain).object(doorkey::kLava).spawn_candidates[0])};
  }
  validate_scene(s);
  task.reward.domain = domain;
  task.reward.text = base_text(domain);
  for (std::size_t k = 0; k < kTrainDemos; ++k) {
    const SceneDescriptor start = k == 0 ? s : jittered_start(s, rng);
    task.demos.push_back(expert_demo(start, task.reward));
  }
  return task;
}

TaskSpec gen_shift_task(const TrainTask& train, ShiftType shift, std::uint64_t seed) {
  const Domain domain = train.domain;
  const ConceptSchema& schema = schema_for(domain);
  Rng rng(derive_seed(seed, {tag("shift-task"), domain_tag(domain), tag(to_string(shift))}));
  TaskSpec task;
  task.domain = domain;
  task.seed = seed;
  task.shift = shift;
  task.train_scene = train.scene;
  task.test_scene = train.scene;
  task.reward.domain = domain;
  task.reward.text = base_text(domain);
  SceneDescriptor& test = task.test_scene;

  switch (shift) {
    case ShiftType::kConceptTI:
    case ShiftType::kConceptTR: {
      std::size_t obj = nav2d::kGoal;
      if (domain == Domain::kDoorKey) {
        constexpr std::size_t kColored[] = {doorkey::kKey, doorkey::kDoor, doorkey::kGoal};
        obj = kColored[uniform_index(rng, 3)];
      }
      const std::size_t old = test.objects[obj].values[0];
      const std::size_t fresh = (old + 1 + uniform_index(rng, 3)) % 4;
      test.objects[obj].values[0] = fresh;
      task.shifted = ConceptSlot{obj, 0};
      const std::string& name = schema.object(obj).name;
      if (shift == ShiftType::kConceptTI) {
        task.reward.specificity[*task.shifted] = Relevance::kIrrelevant;
        task.reward.text += " (any " + name + " color)";
      } else {
        task.reward.requirements.push_back({obj, 0, fresh});
        task.reward.specificity[*task.shifted] = Relevance::kRelevant;
        task.reward.text += " (the " + value_name(test, obj) + " " + name + " only)";
      }
      break;
    }
    case ShiftType::kDistractorTI:
    case ShiftType::kDistractorTR: {
      const std::size_t obj = domain == Domain::kNav2d ? nav2d::kDistractor : doorkey::kLava;
      const ObjectSpec& spec = schema.object(obj);
      std::vector<Point> spots;
      if (domain == Domain::kNav2d) {
        const Point a = nav2d::kAgentStart;
        const Point b = nav2d::kTrainGoal;
        if (shift == ShiftType::kDistractorTR) {
          for (double t : {0.4, 0.5, 0.6}) spots.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        } else {
          spots = spec.spawn_candidates;
        }
      } else {
        const std::vector<Point> path = expert_cells(train.scene, train.reward);
        auto on_path = [&](Point p) { return std::find(path.begin(), path.end(), p) != path.end(); };
        if (shift == ShiftType::kDistractorTR) {
          for (const Point& p : path) {
            // The cell behind the door is the only way in, so lava there would
            // leave no route at all.
            const Point door = train.scene.objects[doorkey::kDoor].pos;
            const bool behind_door = std::abs(p.x - door.x) + std::abs(p.y - door.y) == 1.0;
            if (p.x > doorkey::kWallColumn && !behind_door && p != train.scene.objects[doorkey::kGoal].pos) {
              spots.push_back(p);
            }
          }
        } else {
          for (const Point& p : spec.spawn_candidates) {
            if (!on_path(p) && placement_free(train.scene, obj, p)) spots.push_back(p);
          }
        }
      }
      const std::size_t color = uniform_index(rng, spec.concepts[0].values.size());
      test.objects[obj] = object(true, {color}, spots[uniform_index(rng, spots.size())]);
      task.shifted = ConceptSlot{obj, std::nullopt};
      if (shift == ShiftType::kDistractorTI) {
        task.reward.specificity[*task.shifted] = Relevance::kIrrelevant;
        task.reward.text += ", ignore the " + spec.name;
      } else {
        task.reward.avoid.push_back({obj, color});
        task.reward.specificity[*task.shifted] = Relevance::kRelevant;
        task.reward.text += ", avoid the " + value_name(test, obj) + " " + spec.name;
      }
      break;
    }
    case ShiftType::kOther: {
      const std::size_t goal = goal_object(domain);
      test.objects[goal].pos = domain == Domain::kNav2d ? nav2d::kOtherGoal : kDoorKeyOtherGoal;
      task.reward.text += " (in its new place)";
      break;
    }
  }
  task.validate();
  return task;
}

std::vector<SceneDescriptor> eval_scenes(const TaskSpec& task, std::size_t count) {
  std::vector<SceneDescriptor> out;
  const ConceptSchema& schema = schema_for(task.domain);
  for (std::size_t i = 0; i < count; ++i) {
    SceneDescriptor scene = task.test_scene;
    if (is_ti(task.shift) && task.shifted) {
      Rng rng(derive_seed(task.seed, {tag("eval-scene"), tag(to_string(task.shift)), static_cast<std::uint64_t>(i)}));
      const ConceptSlot slot = *task.shifted;
      ObjectState& obj = scene.objects[slot.object];
      const std::size_t m = schema.object(slot.object).concepts[slot.concept_index.value_or(0)].values.size();
      if (slot.concept_index) {
        obj.values[*slot.concept_index] = uniform_index(rng, m);
      } else {
        const std::size_t pick = uniform_index(rng, m + 1);
        obj.present = pick < m;
        obj.values = obj.present ? std::vector<std::size_t>{pick} : std::vector<std::size_t>{};
      }
    }
    out.push_back(std::move(scene));
  }
  return out;
}

double success_rate(const PolicyParams& policy, std::span<const SceneDescriptor> scenes, const RewardSpec& reward) {
  if (scenes.empty()) return 0.0;
  const PolicyFn fn = [&](const Observation& obs) { return predict(policy, obs); };
  std::size_t wins = 0;
  for (const SceneDescriptor& s : scenes) wins += success(rollout(fn, s), reward) ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(scenes.size());
}

// --- conditions ----------------------------------------------------------------

std::string_view to_string(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::kNHRandom: return "NHRandom";
    case ConditionKind::kBaselineH: return "BaselineH";
    case ConditionKind::kCFH: return "CFH";
    case ConditionKind::kOracleFB: return "OracleFB";
  }
  return "unknown";
}

ConditionKind parse_condition(std::string_view name) {
  for (ConditionKind k :
       {ConditionKind::kNHRandom, ConditionKind::kBaselineH, ConditionKind::kCFH, ConditionKind::kOracleFB}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown condition '" + std::string(name) + "' (allowed: NHRandom, BaselineH, CFH, OracleFB)");
}

Condition Condition::standard(ConditionKind kind, double q_baseline, double q_cf) {
  switch (kind) {
    case ConditionKind::kNHRandom: return {kind, 0.0};
    case ConditionKind::kBaselineH: return {kind, q_baseline};
    case ConditionKind::kCFH: return {kind, q_cf};
    case ConditionKind::kOracleFB: return {kind, 1.0};
  }
  return {kind, 1.0};
}

RunConfig default_run_config(Domain domain) {
  RunConfig cfg;
  cfg.finetune = default_train_config(domain);
  cfg.finetune.finetune = true;
  return cfg;
}

bool ResultRecord::same_result(const ResultRecord& o) const {
  return task_id == o.task_id && domain == o.domain && shift == o.shift && condition == o.condition &&
         accuracy == o.accuracy && seed == o.seed && pre_success == o.pre_success && post_success == o.post_success &&
         eval_count == o.eval_count && demos_used == o.demos_used && augmented == o.augmented &&
         augmented_slot == o.augmented_slot && augmented_true_concept == o.augmented_true_concept && error == o.error;
}

Json to_json(const ResultRecord& r) {
  const ConceptSchema& schema = schema_for(r.domain);
  return {{"task_id", r.task_id},
          {"domain", to_string(r.domain)},
          {"shift", to_string(r.shift)},
          {"condition", r.condition},
          {"accuracy", r.accuracy},
          {"seed", r.seed},
          {"pre_success", r.pre_success},
          {"post_success", r.post_success},
          {"eval_count", r.eval_count},
          {"demos_used", r.demos_used},
          {"augmented", r.augmented},
          {"augmented_slot", r.augmented_slot ? to_json(*r.augmented_slot, schema) : Json(nullptr)},
          {"augmented_true_concept", r.augmented_true_concept},
          {"error", r.error},
          {"wall_time_ms", r.wall_time_ms}};
}

ResultRecord result_from_json(const Json& j) {
  ResultRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.domain = parse_domain(j.at("domain").get<std::string>());
  r.shift = parse_shift(j.at("shift").get<std::string>());
  r.condition = j.at("condition").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.pre_success = j.at("pre_success").get<double>();
  r.post_success = j.at("post_success").get<double>();
  r.eval_count = j.at("eval_count").get<std::size_t>();
  r.demos_used = j.at("demos_used").get<std::size_t>();
  r.augmented = j.at("augmented").get<std::size_t>();
  if (!j.at("augmented_slot").is_null()) {
    r.augmented_slot = concept_slot_from_json(j.at("augmented_slot"), schema_for(r.domain));
  }
  r.augmented_true_concept = j.at("augmented_true_concept").get<bool>();
  r.error = j.value("error", "");
  r.wall_time_ms = j.value("wall_time_ms", 0.0);
  return r;
}

std::vector<Trajectory> full_product_augment(const Trajectory& demo, const ConceptSchema& schema) {
  const ConceptVector cv = abstract(demo.initial, schema);
  std::vector<std::size_t> objects;
  std::vector<std::size_t> concept_ids;
  std::vector<std::size_t> radix;
  for (std::size_t obj = 0; obj < schema.object_count(); ++obj) {
    if (!cv.present(obj)) continue;
    for (std::size_t c = 0; c < schema.object(obj).concepts.size(); ++c) {
      objects.push_back(obj);
      concept_ids.push_back(c);
      radix.push_back(schema.value_count(obj, c));
    }
  }
  const std::vector<Action> actions = demo.actions();
  std::vector<Trajectory> out;
  std::vector<std::size_t> digits(radix.size(), 0);
  while (true) {
    ConceptVector variant = cv;
    for (std::size_t k = 0; k < digits.size(); ++k) {
      std::vector<std::size_t> values = variant.values(objects[k]);
      values[concept_ids[k]] = digits[k];
      variant.set_object(objects[k], values);
    }
    out.push_back(replay(realize(variant, demo.initial, schema), actions, Provenance::kAugmented));
    std::size_t k = digits.size();
    while (k > 0 && ++digits[k - 1] == radix[k - 1]) digits[--k] = 0;
    if (k == 0) break;
  }
  return out;
}

ConceptSlot condition_slot(const TaskSpec& task, double accuracy) {
  if (!task.shifted) throw Error(ErrorCode::kConditionMismatch, "task has no shifted concept to augment");
  const std::vector<ConceptSlot> slots = concept_slots(schema_for(task.domain));
  Rng rng(derive_seed(task.seed, {tag("condition-draw"), domain_tag(task.domain), tag(to_string(task.shift))}));
  const double u = uniform_unit(rng);
  const ConceptSlot random = slots[uniform_index(rng, slots.size())];
  return u < accuracy ? *task.shifted : random;
}

namespace {

std::string task_id(const TaskSpec& task) {
  return std::string(to_string(task.domain)) + "-" + std::string(to_string(task.shift)) + "-" +
         std::to_string(task.seed);
}

}  // namespace

ResultRecord run_condition(const PolicyParams& policy, const TaskSpec& task, const Condition& condition,
                           const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (!is_ti(task.shift) || !task.shifted) {
    throw Error(ErrorCode::kConditionMismatch, std::string(to_string(condition.kind)) +
                                                   " needs a task-irrelevant shift, got " +
                                                   std::string(to_string(task.shift)));
  }
  if (policy.arch().domain != task.domain) throw Error(ErrorCode::kDomainMismatch, "policy and task domains differ");
  if (!(condition.accuracy >= 0.0 && condition.accuracy <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "condition accuracy must lie in [0, 1]");
  }
  const ConceptSchema& schema = schema_for(task.domain);

  ResultRecord record;
  record.task_id = task_id(task);
  record.domain = task.domain;
  record.shift = task.shift;
  record.condition = std::string(to_string(condition.kind));
  record.accuracy = condition.accuracy;
  record.seed = task.seed;
  record.eval_count = cfg.eval_count;

  const Trajectory demo = expert_demo(task.test_scene, task.reward);
  std::vector<Trajectory> data{demo};
  std::optional<ConceptSlot> slot;
  if (cfg.full_product && condition.kind == ConditionKind::kNHRandom) {
    record.condition = "NHRandomFull";
    for (Trajectory& t : full_product_augment(demo, schema)) data.push_back(std::move(t));
  } else {
    slot = condition_slot(task, condition.accuracy);
    // Every condition gets the augmentation budget of the true concept.
    const std::size_t budget = augment(demo, *task.shifted, schema).size();
    const std::vector<AugmentedDemo> variants = augment(demo, *slot, schema);
    for (std::size_t k = 0; k < budget; ++k) data.push_back(variants[k % variants.size()].trajectory);
  }

  TrainConfig train = cfg.finetune;
  train.finetune = true;
  train.seed = derive_seed(task.seed, {tag("condition-finetune"), domain_tag(task.domain)});
  const PolicyParams adapted = finetune(policy, data, train).params;

  const std::vector<SceneDescriptor> scenes = eval_scenes(task, cfg.eval_count);
  record.pre_success = success_rate(policy, scenes, task.reward);
  record.post_success = success_rate(adapted, scenes, task.reward);
  record.demos_used = 1;
  record.augmented = data.size() - 1;
  record.augmented_slot = slot;
  record.augmented_true_concept = slot == task.shifted;
  record.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

TrainResult train_base_policy(const TrainTask& train) {
  const PolicyParams init =
      init_policy(architecture_for(train.domain), derive_seed(train.seed, {tag("base-policy"), domain_tag(train.domain)}));
  TrainConfig cfg = default_train_config(train.domain);
  cfg.seed = derive_seed(train.seed, {tag("base-train"), domain_tag(train.domain)});
  return train_bc(init, train.demos, cfg);
}

std::shared_ptr<const PolicyParams> PolicyCache::get(Domain domain, std::uint64_t seed) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find({domain, seed}); it != cache_.end()) return it->second;
  }
  auto trained = std::make_shared<const PolicyParams>(train_base_policy(gen_train_task(domain, seed)).params);
  std::lock_guard lock(mutex_);
  return cache_.emplace(std::pair{domain, seed}, std::move(trained)).first->second;
}

// --- sweep ---------------------------------------------------------------------

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  for (ConditionKind k :
       {ConditionKind::kNHRandom, ConditionKind::kBaselineH, ConditionKind::kCFH, ConditionKind::kOracleFB}) {
    cfg.conditions.push_back(Condition::standard(k));
  }
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  return cfg;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig cfg;
  if (j.contains("domains")) {
    cfg.domains.clear();
    for (const Json& d : j.at("domains")) cfg.domains.push_back(parse_domain(d.get<std::string>()));
  }
  if (j.contains("shifts")) {
    cfg.shifts.clear();
    for (const Json& s : j.at("shifts")) cfg.shifts.push_back(parse_shift(s.get<std::string>()));
  }
  const double q_baseline = j.value("q_baseline", 0.3);
  const double q_cf = j.value("q_cf", 0.8);
  if (j.contains("conditions")) {
    for (const Json& c : j.at("conditions")) {
      if (c.is_string()) {
        cfg.conditions.push_back(Condition::standard(parse_condition(c.get<std::string>()), q_baseline, q_cf));
        continue;
      }
      Condition cond = Condition::standard(parse_condition(c.at("kind").get<std::string>()), q_baseline, q_cf);
      cond.accuracy = c.value("accuracy", cond.accuracy);
      if (!(cond.accuracy >= 0.0 && cond.accuracy <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "condition accuracy must lie in [0, 1]");
      }
      cfg.conditions.push_back(cond);
    }
  } else {
    for (ConditionKind k :
         {ConditionKind::kNHRandom, ConditionKind::kBaselineH, ConditionKind::kCFH, ConditionKind::kOracleFB}) {
      cfg.conditions.push_back(Condition::standard(k, q_baseline, q_cf));
    }
  }
  if (j.contains("seeds")) {
    for (const Json& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
  } else {
    const std::uint64_t first = j.value("seed_start", std::uint64_t{0});
    const std::uint64_t count = j.value("seed_count", std::uint64_t{20});
    for (std::uint64_t s = 0; s < count; ++s) cfg.seeds.push_back(first + s);
  }
  cfg.eval_count = j.value("eval_count", cfg.eval_count);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.csv = j.value("csv", cfg.csv);
  cfg.full_product = j.value("full_product", cfg.full_product);
  return cfg;
}

Json to_json(const SummaryRow& row) {
  return {{"domain", to_string(row.domain)}, {"shift", to_string(row.shift)}, {"condition", row.condition},
          {"accuracy", row.accuracy},        {"count", row.count},            {"failures", row.failures},
          {"pre_mean", row.pre_mean},        {"post_mean", row.post_mean},    {"post_stderr", row.post_stderr}};
}

std::vector<SummaryRow> summarize(std::span<const ResultRecord> records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> posts;
  for (const ResultRecord& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& row) {
      return row.domain == r.domain && row.shift == r.shift && row.condition == r.condition &&
             row.accuracy == r.accuracy;
    });
    if (it == rows.end()) {
      rows.push_back({r.domain, r.shift, r.condition, r.accuracy});
      posts.emplace_back();
      it = rows.end() - 1;
    }
    const std::size_t k = static_cast<std::size_t>(it - rows.begin());
    if (!r.error.empty()) {
      ++it->failures;
      continue;
    }
    ++it->count;
    it->pre_mean += r.pre_success;
    posts[k].push_back(r.post_success);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    SummaryRow& row = rows[k];
    if (row.count == 0) continue;
    const double n = static_cast<double>(row.count);
    row.pre_mean /= n;
    double sum = 0.0;
    for (double v : posts[k]) sum += v;
    row.post_mean = sum / n;
    if (row.count > 1) {
      double ss = 0.0;
      for (double v : posts[k]) ss += (v - row.post_mean) * (v - row.post_mean);
      row.post_stderr = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
  }
  return rows;
}

namespace {

std::string record_key(const std::string& id, const std::string& condition, double accuracy) {
  std::ostringstream key;
  key << id << '|' << condition << '|' << accuracy;
  return key.str();
}

}  // namespace

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                         PolicyCache* cache) {
  std::filesystem::path dir = out;
  if (const char* env = std::getenv("DFA_OUTPUT_DIR"); env != nullptr && *env != '\0') dir = env;
  std::filesystem::create_directories(dir);
  const std::filesystem::path records_path = dir / "records.jsonl";

  std::map<std::string, ResultRecord> done;
  if (std::ifstream existing(records_path); existing) {
    std::string line;
    while (std::getline(existing, line)) {
      if (line.empty()) continue;
      try {
        ResultRecord r = result_from_json(Json::parse(line));
        done.emplace(record_key(r.task_id, r.condition, r.accuracy), std::move(r));
      } catch (const std::exception&) {
        // A torn trailing line from an interrupted run is recomputed.
      }
    }
  }

  PolicyCache local;
  PolicyCache& policies = cache != nullptr ? *cache : local;
  std::ofstream sink(records_path, std::ios::app);
  if (!sink) throw Error(ErrorCode::kIo, "cannot open " + records_path.string());
  std::mutex sink_mutex;

  struct Group {
    Domain domain;
    std::uint64_t seed;
  };
  std::vector<Group> groups;
  for (Domain d : cfg.domains) {
    for (std::uint64_t s : cfg.seeds) groups.push_back({d, s});
  }

  auto run_group = [&](const Group& g) {
    std::vector<ResultRecord> records;
    std::shared_ptr<const PolicyParams> policy;
    for (ShiftType shift : cfg.shifts) {
      std::optional<TaskSpec> task;
      for (const Condition& cond : cfg.conditions) {
        const std::string id = std::string(to_string(g.domain)) + "-" + std::string(to_string(shift)) + "-" +
                               std::to_string(g.seed);
        const std::string name = cfg.full_product && cond.kind == ConditionKind::kNHRandom
                                     ? std::string("NHRandomFull")
                                     : std::string(to_string(cond.kind));
        if (done.count(record_key(id, name, cond.accuracy)) != 0) continue;
        ResultRecord r;
        try {
          if (!policy) policy = policies.get(g.domain, g.seed);
          if (!task) task = gen_shift_task(gen_train_task(g.domain, g.seed), shift, g.seed);
          RunConfig run = default_run_config(g.domain);
          run.eval_count = cfg.eval_count;
          run.full_product = cfg.full_product;
          r = run_condition(*policy, *task, cond, run);
        } catch (const std::exception& e) {
          r.task_id = id;
          r.domain = g.domain;
          r.shift = shift;
          r.condition = name;
          r.accuracy = cond.accuracy;
          r.seed = g.seed;
          r.error = e.what();
        }
        {
          std::lock_guard lock(sink_mutex);
          sink << to_json(r).dump() << '\n';
          sink.flush();
        }
        records.push_back(std::move(r));
      }
    }
    return records;
  };

  std::vector<std::vector<ResultRecord>> results(groups.size());
  const std::size_t workers =
      std::max<std::size_t>(1, cfg.workers != 0 ? cfg.workers : std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, groups.size()); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < groups.size(); i = next++) results[i] = run_group(groups[i]);
      });
    }
  }

  // Canonical order: configuration order, with resumed records in place.
  std::vector<ResultRecord> all;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    for (ShiftType shift : cfg.shifts) {
      for (const Condition& cond : cfg.conditions) {
        const std::string id = std::string(to_string(g.domain)) + "-" + std::string(to_string(shift)) + "-" +
                               std::to_string(g.seed);
        const std::string name = cfg.full_product && cond.kind == ConditionKind::kNHRandom
                                     ? std::string("NHRandomFull")
                                     : std::string(to_string(cond.kind));
        if (auto it = done.find(record_key(id, name, cond.accuracy)); it != done.end()) {
          all.push_back(it->second);
          continue;
        }
        for (const ResultRecord& r : results[gi]) {
          if (r.task_id == id && r.condition == name && r.accuracy == cond.accuracy) all.push_back(r);
        }
      }
    }
  }

  const std::vector<SummaryRow> rows = summarize(all);
  Json summary = Json::array();
  for (const SummaryRow& row : rows) summary.push_back(to_json(row));
  std::ofstream(dir / "summary.json") << Json{{"records", all.size()}, {"rows", summary}}.dump(2) << '\n';
  if (cfg.csv) {
    std::ofstream csv(dir / "summary.csv");
    csv << "domain,shift,condition,accuracy,count,failures,pre_mean,post_mean,post_stderr\n";
    for (const SummaryRow& r : rows) {
      csv << to_string(r.domain) << ',' << to_string(r.shift) << ',' << r.condition << ',' << r.accuracy << ','
          << r.count << ',' << r.failures << ',' << r.pre_mean << ',' << r.post_mean << ',' << r.post_stderr << '\n';
    }
  }
  return all;
}

}  // namespace dfa
