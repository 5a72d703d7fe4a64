#include "dfa/concept.hpp"

#include <algorithm>
#include <set>

namespace dfa {

// ---------------------------------------------------------------------------
// ConceptSchema

ConceptSchema::ConceptSchema(std::string name, std::vector<ObjectSpec> objects)
    : name_(std::move(name)), objects_(std::move(objects)) {
  std::set<std::string> object_names;
  for (const ObjectSpec& obj : objects_) {
    if (!object_names.insert(obj.name).second) {
      throw Error(ErrorCode::kSchemaMismatch, "duplicate object name " + obj.name);
    }
    std::set<std::string> concept_names;
    for (const ConceptSpec& c : obj.concepts) {
      if (!concept_names.insert(c.name).second) {
        throw Error(ErrorCode::kSchemaMismatch, "duplicate concept " + obj.name + "." + c.name);
      }
      if (c.values.size() < 2) {
        throw Error(ErrorCode::kSchemaMismatch, obj.name + "." + c.name + " needs at least two instantiations");
      }
      std::set<std::string> value_names(c.values.begin(), c.values.end());
      if (value_names.size() != c.values.size()) {
        throw Error(ErrorCode::kSchemaMismatch, "duplicate instantiation in " + obj.name + "." + c.name);
      }
    }
  }
}

const ObjectSpec& ConceptSchema::object(std::size_t index) const {
  if (index >= objects_.size()) throw Error(ErrorCode::kSchemaMismatch, "object index out of range");
  return objects_[index];
}

std::optional<std::size_t> ConceptSchema::find_object(std::string_view name) const {
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    if (objects_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ConceptSchema::object_index(std::string_view name) const {
  if (auto i = find_object(name)) return *i;
  throw Error(ErrorCode::kSchemaMismatch, "unknown object '" + std::string(name) + "' in schema " + name_);
}

std::size_t ConceptSchema::concept_index(std::size_t object, std::string_view name) const {
  const auto& concepts = this->object(object).concepts;
  for (std::size_t c = 0; c < concepts.size(); ++c) {
    if (concepts[c].name == name) return c;
  }
  throw Error(ErrorCode::kSchemaMismatch,
              "unknown concept '" + std::string(name) + "' for object " + objects_[object].name);
}

std::size_t ConceptSchema::value_index(std::size_t object, std::size_t concept_id, std::string_view name) const {
  const auto& values = this->object(object).concepts.at(concept_id).values;
  for (std::size_t v = 0; v < values.size(); ++v) {
    if (values[v] == name) return v;
  }
  throw Error(ErrorCode::kSchemaMismatch, "unknown instantiation '" + std::string(name) + "' for " +
                                              objects_[object].name + "." + objects_[object].concepts[concept_id].name);
}

std::size_t ConceptSchema::value_count(std::size_t object, std::size_t concept_id) const {
  const auto& concepts = this->object(object).concepts;
  if (concept_id >= concepts.size()) throw Error(ErrorCode::kSchemaMismatch, "concept index out of range");
  return concepts[concept_id].values.size();
}

std::size_t ConceptSchema::block_count() const {
  std::size_t n = 0;
  for (const ObjectSpec& obj : objects_) n += obj.concepts.size();
  return n;
}

Json to_json(const ConceptSchema& schema) {
  Json objects = Json::array();
  for (const ObjectSpec& obj : schema.objects()) {
    Json o;
    o["name"] = obj.name;
    o["removable"] = obj.removable;
    o["spawnable"] = obj.spawnable;
    o["distractor"] = obj.distractor;
    Json concepts = Json::array();
    for (const ConceptSpec& c : obj.concepts) concepts.push_back({{"name", c.name}, {"values", c.values}});
    o["concepts"] = concepts;
    Json candidates = Json::array();
    for (const Point& p : obj.spawn_candidates) candidates.push_back(Json::array({p.x, p.y}));
    o["spawn_candidates"] = candidates;
    objects.push_back(o);
  }
  return {{"name", schema.name()}, {"objects", objects}};
}

ConceptSchema schema_from_json(const Json& j) {
  std::vector<ObjectSpec> objects;
  for (const Json& o : j.at("objects")) {
    ObjectSpec spec;
    spec.name = o.at("name").get<std::string>();
    spec.removable = o.value("removable", false);
    spec.spawnable = o.value("spawnable", false);
    spec.distractor = o.value("distractor", false);
    for (const Json& c : o.value("concepts", Json::array())) {
      spec.concepts.push_back({c.at("name").get<std::string>(), c.at("values").get<std::vector<std::string>>()});
    }
    for (const Json& p : o.value("spawn_candidates", Json::array())) {
      spec.spawn_candidates.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    objects.push_back(std::move(spec));
  }
  return ConceptSchema(j.at("name").get<std::string>(), std::move(objects));
}

// ---------------------------------------------------------------------------
// ConceptVector

ConceptVector::ConceptVector(const ConceptSchema& schema) {
  objects_.resize(schema.object_count());
  for (std::size_t i = 0; i < schema.object_count(); ++i) {
    for (const ConceptSpec& c : schema.object(i).concepts) {
      objects_[i].blocks.emplace_back(c.values.size(), std::uint8_t{0});
    }
  }
}

std::span<const std::uint8_t> ConceptVector::block(std::size_t object, std::size_t concept_index) const {
  return objects_.at(object).blocks.at(concept_index);
}

std::optional<std::size_t> ConceptVector::value(std::size_t object, std::size_t concept_index) const {
  const auto& b = objects_.at(object).blocks.at(concept_index);
  for (std::size_t v = 0; v < b.size(); ++v) {
    if (b[v] != 0) return v;
  }
  return std::nullopt;
}

std::vector<std::size_t> ConceptVector::values(std::size_t object) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < concept_count(object); ++c) out.push_back(value(object, c).value_or(0));
  return out;
}

void ConceptVector::set_object(std::size_t object, std::span<const std::size_t> values) {
  ObjectBlocks& obj = objects_.at(object);
  if (values.size() != obj.blocks.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "concept assignment has wrong arity");
  }
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (values[c] >= obj.blocks[c].size()) throw Error(ErrorCode::kSchemaMismatch, "instantiation out of range");
    std::fill(obj.blocks[c].begin(), obj.blocks[c].end(), std::uint8_t{0});
    obj.blocks[c][values[c]] = 1;
  }
  obj.present = true;
}

void ConceptVector::clear_object(std::size_t object) {
  ObjectBlocks& obj = objects_.at(object);
  for (auto& b : obj.blocks) std::fill(b.begin(), b.end(), std::uint8_t{0});
  obj.present = false;
}

bool ConceptVector::same_shape(const ConceptVector& other) const {
  if (objects_.size() != other.objects_.size()) return false;
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    const auto& a = objects_[i].blocks;
    const auto& b = other.objects_[i].blocks;
    if (a.size() != b.size()) return false;
    for (std::size_t c = 0; c < a.size(); ++c) {
      if (a[c].size() != b[c].size()) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Directives and slots

std::size_t directive_object(const Directive& directive) {
  return std::visit([](const auto& d) { return d.object; }, directive);
}

bool is_presence_directive(const Directive& directive) {
  return !std::holds_alternative<SetInstantiation>(directive);
}

ConceptSlot slot_of(const Directive& directive) {
  if (const auto* set = std::get_if<SetInstantiation>(&directive)) return {set->object, set->concept_index};
  return {directive_object(directive), std::nullopt};
}

std::vector<ConceptSlot> slots_of(const ConceptEdit& edit) {
  std::vector<ConceptSlot> out;
  for (const Directive& d : edit.directives) out.push_back(slot_of(d));
  return out;
}

bool slots_overlap(const ConceptSlot& a, const ConceptSlot& b) {
  if (a.object != b.object) return false;
  if (!a.concept_index || !b.concept_index) return true;
  return *a.concept_index == *b.concept_index;
}

std::vector<ConceptSlot> concept_slots(const ConceptSchema& schema) {
  std::vector<ConceptSlot> out;
  for (std::size_t i = 0; i < schema.object_count(); ++i) {
    const ObjectSpec& spec = schema.object(i);
    for (std::size_t c = 0; c < spec.concepts.size(); ++c) out.push_back({i, c});
    if (spec.distractor) out.push_back({i, std::nullopt});
  }
  return out;
}

PlacementHints placement_hints(const ConceptEdit& edit) {
  PlacementHints hints;
  for (const Directive& d : edit.directives) {
    if (const auto* spawn = std::get_if<SpawnObject>(&d); spawn && spawn->placement) {
      hints[spawn->object] = *spawn->placement;
    }
  }
  return hints;
}

// ---------------------------------------------------------------------------
// Operations

ConceptVector abstract(const SceneDescriptor& scene, const ConceptSchema& schema) {
  if (scene.objects.size() != schema.object_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "scene has " + std::to_string(scene.objects.size()) +
                                                " objects, schema " + schema.name() + " declares " +
                                                std::to_string(schema.object_count()));
  }
  ConceptVector cv(schema);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectState& obj = scene.objects[i];
    if (!obj.present) continue;
    if (obj.values.size() != schema.object(i).concepts.size()) {
      throw Error(ErrorCode::kSchemaMismatch, schema.object(i).name + " has wrong number of concept values");
    }
    for (std::size_t c = 0; c < obj.values.size(); ++c) {
      if (obj.values[c] >= schema.value_count(i, c)) {
        throw Error(ErrorCode::kSchemaMismatch, "unknown instantiation for " + schema.object(i).name);
      }
    }
    cv.set_object(i, obj.values);
  }
  return cv;
}

ConceptVector apply_edit(const ConceptVector& cv, const ConceptEdit& edit, const ConceptSchema& schema) {
  if (cv.object_count() != schema.object_count()) throw Error(ErrorCode::kSchemaMismatch, "vector/schema mismatch");
  std::set<std::size_t> touched;
  for (const Directive& d : edit.directives) {
    const std::size_t obj = directive_object(d);
    if (obj >= schema.object_count()) throw Error(ErrorCode::kIllegalEdit, "directive targets unknown object");
    if (!touched.insert(obj).second) {
      throw Error(ErrorCode::kIllegalEdit, "more than one directive for " + schema.object(obj).name);
    }
  }
  ConceptVector out = cv;
  for (const Directive& d : edit.directives) {
    const std::size_t obj = directive_object(d);
    const ObjectSpec& spec = schema.object(obj);
    if (const auto* set = std::get_if<SetInstantiation>(&d)) {
      if (!cv.present(obj)) throw Error(ErrorCode::kIllegalEdit, "cannot set a concept of absent " + spec.name);
      if (set->concept_index >= spec.concepts.size() || set->value >= spec.concepts[set->concept_index].values.size()) {
        throw Error(ErrorCode::kIllegalEdit, "instantiation out of range for " + spec.name);
      }
      std::vector<std::size_t> values = cv.values(obj);
      values[set->concept_index] = set->value;
      out.set_object(obj, values);
    } else if (std::holds_alternative<RemoveObject>(d)) {
      if (!cv.present(obj)) throw Error(ErrorCode::kIllegalEdit, "cannot remove absent " + spec.name);
      if (!spec.removable) throw Error(ErrorCode::kIllegalEdit, spec.name + " is not removable");
      out.clear_object(obj);
    } else {
      const auto& spawn = std::get<SpawnObject>(d);
      if (cv.present(obj)) throw Error(ErrorCode::kIllegalEdit, "cannot spawn present " + spec.name);
      if (!spec.spawnable) throw Error(ErrorCode::kIllegalEdit, spec.name + " is not spawnable");
      if (spawn.assignment.size() != spec.concepts.size()) {
        throw Error(ErrorCode::kIllegalEdit, "spawn of " + spec.name + " must assign every concept");
      }
      for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
        if (spawn.assignment[c] >= spec.concepts[c].values.size()) {
          throw Error(ErrorCode::kIllegalEdit, "spawn instantiation out of range for " + spec.name);
        }
      }
      out.set_object(obj, spawn.assignment);
    }
  }
  return out;
}

SceneDescriptor realize(const ConceptVector& cv, const SceneDescriptor& base, const ConceptSchema& schema,
                        const PlacementHints& hints) {
  if (cv.object_count() != schema.object_count() || base.objects.size() != schema.object_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "vector, scene and schema disagree on object count");
  }
  SceneDescriptor out = base;
  std::vector<std::size_t> spawns;
  for (std::size_t i = 0; i < out.objects.size(); ++i) {
    ObjectState& obj = out.objects[i];
    if (!cv.present(i)) {
      obj.present = false;
      obj.values.clear();
    } else if (obj.present) {
      obj.values = cv.values(i);
    } else {
      spawns.push_back(i);
    }
  }
  for (std::size_t i : spawns) {
    ObjectState& obj = out.objects[i];
    std::optional<Point> where;
    if (auto it = hints.find(i); it != hints.end()) {
      if (!placement_free(out, i, it->second)) {
        throw Error(ErrorCode::kPlacementCollision, "placement hint for " + schema.object(i).name + " collides");
      }
      where = it->second;
    } else {
      for (const Point& p : schema.object(i).spawn_candidates) {
        if (placement_free(out, i, p)) {
          where = p;
          break;
        }
      }
      if (!where) {
        throw Error(ErrorCode::kPlacementCollision, "no free default placement for " + schema.object(i).name);
      }
    }
    obj.pos = *where;
    obj.values = cv.values(i);
    obj.present = true;
  }
  return out;
}

namespace {

struct Atom {
  Directive directive;
  std::size_t object = 0;
  bool presence = false;
};

void cartesian(const ObjectSpec& spec, std::size_t c, std::vector<std::size_t>& current,
               std::vector<std::vector<std::size_t>>& out) {
  if (c == spec.concepts.size()) {
    out.push_back(current);
    return;
  }
  for (std::size_t v = 0; v < spec.concepts[c].values.size(); ++v) {
    current.push_back(v);
    cartesian(spec, c + 1, current, out);
    current.pop_back();
  }
}

std::vector<Atom> presence_atoms(const ConceptVector& cv, const ConceptSchema& schema, std::size_t i) {
  std::vector<Atom> atoms;
  const ObjectSpec& spec = schema.object(i);
  if (cv.present(i)) {
    if (spec.removable) atoms.push_back({RemoveObject{i}, i, true});
  } else if (spec.spawnable) {
    std::vector<std::vector<std::size_t>> assignments;
    std::vector<std::size_t> current;
    cartesian(spec, 0, current, assignments);
    for (auto& a : assignments) atoms.push_back({SpawnObject{i, std::move(a), std::nullopt}, i, true});
  }
  return atoms;
}

std::vector<Atom> instantiation_atoms(const ConceptVector& cv, const ConceptSchema& schema, std::size_t i) {
  std::vector<Atom> atoms;
  if (!cv.present(i)) return atoms;
  const ObjectSpec& spec = schema.object(i);
  for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
    const std::size_t current = cv.value(i, c).value_or(0);
    for (std::size_t v = 0; v < spec.concepts[c].values.size(); ++v) {
      if (v != current) atoms.push_back({SetInstantiation{i, c, v}, i, false});
    }
  }
  return atoms;
}

void combine(const std::vector<Atom>& atoms, std::size_t size, std::size_t start, std::vector<std::size_t>& chosen,
             std::vector<std::vector<std::size_t>>& out) {
  if (chosen.size() == size) {
    out.push_back(chosen);
    return;
  }
  for (std::size_t a = start; a < atoms.size(); ++a) {
    bool clash = false;
    for (std::size_t b : chosen) clash = clash || atoms[b].object == atoms[a].object;
    if (clash) continue;
    chosen.push_back(a);
    combine(atoms, size, a + 1, chosen, out);
    chosen.pop_back();
  }
}

}  // namespace

std::vector<ConceptEdit> enumerate_edits(const ConceptVector& cv, const ConceptSchema& schema, std::size_t max_edits,
                                         bool presence_first) {
  if (max_edits < 1) throw Error(ErrorCode::kInvalidArgument, "max_edits must be at least 1");
  if (cv.object_count() != schema.object_count()) throw Error(ErrorCode::kSchemaMismatch, "vector/schema mismatch");

  std::vector<Atom> atoms;
  if (presence_first) {
    for (std::size_t i = 0; i < schema.object_count(); ++i) {
      for (Atom& a : presence_atoms(cv, schema, i)) atoms.push_back(std::move(a));
    }
    for (std::size_t i = 0; i < schema.object_count(); ++i) {
      for (Atom& a : instantiation_atoms(cv, schema, i)) atoms.push_back(std::move(a));
    }
  } else {
    for (std::size_t i = 0; i < schema.object_count(); ++i) {
      for (Atom& a : instantiation_atoms(cv, schema, i)) atoms.push_back(std::move(a));
      for (Atom& a : presence_atoms(cv, schema, i)) atoms.push_back(std::move(a));
    }
  }

  std::vector<ConceptEdit> edits;
  for (std::size_t size = 1; size <= max_edits; ++size) {
    std::vector<std::vector<std::size_t>> combos;
    std::vector<std::size_t> chosen;
    combine(atoms, size, 0, chosen, combos);
    if (presence_first) {
      auto instantiation_count = [&](const std::vector<std::size_t>& combo) {
        return std::count_if(combo.begin(), combo.end(), [&](std::size_t a) { return !atoms[a].presence; });
      };
      std::stable_sort(combos.begin(), combos.end(), [&](const auto& x, const auto& y) {
        return instantiation_count(x) < instantiation_count(y);
      });
    }
    for (const auto& combo : combos) {
      ConceptEdit edit;
      for (std::size_t a : combo) edit.directives.push_back(atoms[a].directive);
      edits.push_back(std::move(edit));
    }
  }
  return edits;
}

std::size_t edit_distance(const ConceptVector& a, const ConceptVector& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::kSchemaMismatch, "concept vectors do not share a schema");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.object_count(); ++i) {
    for (std::size_t c = 0; c < a.concept_count(i); ++c) {
      const auto x = a.block(i, c);
      const auto y = b.block(i, c);
      if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) ++n;
    }
  }
  return n;
}

std::size_t blocks_changed(const ConceptEdit& edit, const ConceptSchema& schema) {
  std::size_t n = 0;
  for (const Directive& d : edit.directives) {
    n += is_presence_directive(d) ? schema.object(directive_object(d)).concepts.size() : 1;
  }
  return n;
}

std::string describe(const ConceptSlot& slot, const ConceptSchema& schema) {
  const ObjectSpec& spec = schema.object(slot.object);
  if (!slot.concept_index) return spec.name + " presence";
  return spec.name + " " + spec.concepts.at(*slot.concept_index).name;
}

std::string describe(const ConceptEdit& edit, const ConceptVector& before, const ConceptSchema& schema) {
  std::string out;
  for (const Directive& d : edit.directives) {
    if (!out.empty()) out += "; ";
    const std::size_t obj = directive_object(d);
    const ObjectSpec& spec = schema.object(obj);
    if (const auto* set = std::get_if<SetInstantiation>(&d)) {
      const ConceptSpec& c = spec.concepts.at(set->concept_index);
      const auto old = before.value(obj, set->concept_index);
      out += spec.name + " " + c.name + " changed " + (old ? c.values.at(*old) : std::string("none")) + " -> " +
             c.values.at(set->value);
    } else if (std::holds_alternative<RemoveObject>(d)) {
      out += spec.name + " removed";
    } else {
      const auto& spawn = std::get<SpawnObject>(d);
      out += spec.name + " added";
      for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
        out += (c == 0 ? " (" : ", ") + spec.concepts[c].name + " " + spec.concepts[c].values.at(spawn.assignment[c]);
      }
      if (!spec.concepts.empty()) out += ")";
    }
  }
  return out.empty() ? "no change" : out;
}

// ---------------------------------------------------------------------------
// JSON

Json to_json(const ConceptVector& cv, const ConceptSchema& schema) {
  Json objects = Json::array();
  for (std::size_t i = 0; i < cv.object_count(); ++i) {
    const ObjectSpec& spec = schema.object(i);
    Json concepts = Json::array();
    for (std::size_t c = 0; c < cv.concept_count(i); ++c) {
      const auto b = cv.block(i, c);
      concepts.push_back({{"name", spec.concepts[c].name}, {"onehot", std::vector<int>(b.begin(), b.end())}});
    }
    objects.push_back({{"name", spec.name}, {"present", cv.present(i)}, {"concepts", concepts}});
  }
  return {{"schema", schema.name()}, {"objects", objects}};
}

ConceptVector concept_vector_from_json(const Json& j, const ConceptSchema& schema) {
  ConceptVector cv(schema);
  if (j.at("objects").size() != schema.object_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "concept vector object count does not match schema");
  }
  for (const Json& o : j.at("objects")) {
    const std::size_t i = schema.object_index(o.at("name").get<std::string>());
    if (!o.at("present").get<bool>()) {
      for (const Json& c : o.at("concepts")) {
        for (int bit : c.at("onehot").get<std::vector<int>>()) {
          if (bit != 0) throw Error(ErrorCode::kSchemaMismatch, "absent object with nonzero block");
        }
      }
      continue;
    }
    std::vector<std::size_t> values(schema.object(i).concepts.size(), 0);
    for (const Json& c : o.at("concepts")) {
      const std::size_t ci = schema.concept_index(i, c.at("name").get<std::string>());
      const auto bits = c.at("onehot").get<std::vector<int>>();
      if (bits.size() != schema.value_count(i, ci) || std::count(bits.begin(), bits.end(), 1) != 1 ||
          std::count(bits.begin(), bits.end(), 0) != static_cast<long>(bits.size()) - 1) {
        throw Error(ErrorCode::kSchemaMismatch, "block for present object must be one-hot");
      }
      values[ci] = static_cast<std::size_t>(std::find(bits.begin(), bits.end(), 1) - bits.begin());
    }
    cv.set_object(i, values);
  }
  return cv;
}

Json to_json(const ConceptEdit& edit, const ConceptSchema& schema) {
  Json directives = Json::array();
  for (const Directive& d : edit.directives) {
    const std::size_t obj = directive_object(d);
    const ObjectSpec& spec = schema.object(obj);
    Json out;
    if (const auto* set = std::get_if<SetInstantiation>(&d)) {
      const ConceptSpec& c = spec.concepts.at(set->concept_index);
      out["op"] = "set";
      out["object"] = spec.name;
      out["concept"] = c.name;
      out["value"] = c.values.at(set->value);
    } else if (std::holds_alternative<RemoveObject>(d)) {
      out["op"] = "remove";
      out["object"] = spec.name;
    } else {
      const auto& spawn = std::get<SpawnObject>(d);
      out["op"] = "spawn";
      out["object"] = spec.name;
      Json assignment = Json::object();
      for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
        assignment[spec.concepts[c].name] = spec.concepts[c].values.at(spawn.assignment.at(c));
      }
      out["assignment"] = assignment;
      out["placement"] = spawn.placement ? Json::array({spawn.placement->x, spawn.placement->y}) : Json(nullptr);
    }
    directives.push_back(out);
  }
  return {{"directives", directives}};
}

ConceptEdit concept_edit_from_json(const Json& j, const ConceptSchema& schema) {
  ConceptEdit edit;
  for (const Json& d : j.at("directives")) {
    const std::string op = d.at("op").get<std::string>();
    const std::size_t obj = schema.object_index(d.at("object").get<std::string>());
    if (op == "set") {
      const std::size_t c = schema.concept_index(obj, d.at("concept").get<std::string>());
      edit.directives.push_back(SetInstantiation{obj, c, schema.value_index(obj, c, d.at("value").get<std::string>())});
    } else if (op == "remove") {
      edit.directives.push_back(RemoveObject{obj});
    } else if (op == "spawn") {
      SpawnObject spawn{obj, std::vector<std::size_t>(schema.object(obj).concepts.size(), 0), std::nullopt};
      const Json& assignment = d.at("assignment");
      if (assignment.size() != spawn.assignment.size()) {
        throw Error(ErrorCode::kSchemaMismatch, "spawn must assign every concept");
      }
      for (auto it = assignment.begin(); it != assignment.end(); ++it) {
        const std::size_t c = schema.concept_index(obj, it.key());
        spawn.assignment[c] = schema.value_index(obj, c, it.value().get<std::string>());
      }
      if (d.contains("placement") && !d.at("placement").is_null()) {
        spawn.placement = Point{d.at("placement").at(0).get<double>(), d.at("placement").at(1).get<double>()};
      }
      edit.directives.push_back(std::move(spawn));
    } else {
      throw Error(ErrorCode::kSchemaMismatch, "unknown directive op '" + op + "' (allowed: set, remove, spawn)");
    }
  }
  return edit;
}

Json to_json(const ConceptSlot& slot, const ConceptSchema& schema) {
  const ObjectSpec& spec = schema.object(slot.object);
  return {{"object", spec.name},
          {"concept", slot.concept_index ? Json(spec.concepts.at(*slot.concept_index).name) : Json("presence")}};
}

ConceptSlot concept_slot_from_json(const Json& j, const ConceptSchema& schema) {
  ConceptSlot slot;
  slot.object = schema.object_index(j.at("object").get<std::string>());
  const std::string c = j.at("concept").get<std::string>();
  if (c != "presence") slot.concept_index = schema.concept_index(slot.object, c);
  return slot;
}

}  // namespace dfa
