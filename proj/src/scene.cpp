#include "dfa/scene.hpp"

#include <cmath>

namespace dfa {

std::string_view to_string(Domain domain) {
  switch (domain) {
    case Domain::kNav2d: return "nav2d";
    case Domain::kDoorKey: return "doorkey";
  }
  return "unknown";
}

Domain parse_domain(std::string_view name) {
  if (name == "nav2d") return Domain::kNav2d;
  if (name == "doorkey") return Domain::kDoorKey;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown domain '" + std::string(name) + "' (allowed: nav2d, doorkey)");
}

Rgb palette(std::string_view color) {
  if (color == "red") return {255, 0, 0};
  if (color == "green") return {0, 255, 0};
  if (color == "blue") return {0, 0, 255};
  if (color == "yellow") return {255, 255, 0};
  if (color == "orange") return {255, 128, 0};
  if (color == "pink") return {255, 96, 208};
  if (color == "white") return {255, 255, 255};
  if (color == "grey") return {100, 100, 100};
  throw Error(ErrorCode::kSchemaMismatch, "no palette entry for color '" + std::string(color) + "'");
}

namespace {

const std::vector<std::string> kColors = {"red", "green", "blue", "yellow"};
const std::vector<std::string> kLavaColors = {"orange", "pink"};

ConceptSchema make_nav2d_schema() {
  std::vector<ObjectSpec> objects;
  objects.push_back({"agent", {}, false, false, false, {}});
  objects.push_back({"goal", {{"color", kColors}}, true, true, false, {nav2d::kTrainGoal, nav2d::kOtherGoal}});
  objects.push_back({"distractor", {{"color", kColors}}, true, true, true, {{0.75, 0.25}, {0.25, 0.75}}});
  return ConceptSchema("nav2d", std::move(objects));
}

ConceptSchema make_doorkey_schema() {
  std::vector<ObjectSpec> objects;
  objects.push_back({"agent", {}, false, false, false, {}});
  objects.push_back({"key", {{"color", kColors}}, true, true, false, {doorkey::kKeyCell}});
  objects.push_back({"door", {{"color", kColors}}, true, true, false, {doorkey::kDoorCell}});
  objects.push_back({"goal", {{"color", kColors}}, true, true, false, {doorkey::kGoalCell}});
  // Off-path cells in row-major order.
  objects.push_back({"lava", {{"color", kLavaColors}}, true, true, true, {{7, 1}, {6, 2}, {1, 7}, {7, 7}}});
  return ConceptSchema("doorkey", std::move(objects));
}

bool near_integer(double v) { return std::abs(v - std::round(v)) < 1e-9; }

int cell(double v) { return static_cast<int>(std::lround(v)); }

double half_size(std::size_t object) {
  return object == nav2d::kAgent ? nav2d::kAgentHalf : nav2d::kObjectHalf;
}

}  // namespace

const ConceptSchema& schema_for(Domain domain) {
  static const ConceptSchema nav = make_nav2d_schema();
  static const ConceptSchema grid = make_doorkey_schema();
  return domain == Domain::kNav2d ? nav : grid;
}

int horizon(Domain domain) {
  return domain == Domain::kNav2d ? nav2d::kHorizon : doorkey::kHorizon;
}

namespace doorkey {

bool is_structural_wall(int x, int y) {
  if (x <= 0 || y <= 0 || x >= kGridSize - 1 || y >= kGridSize - 1) return true;
  return x == kWallColumn;
}

bool is_wall(const SceneDescriptor& scene, int x, int y) {
  if (!is_structural_wall(x, y)) return false;
  const Point door = scene.objects.at(kDoor).pos;
  return !(cell(door.x) == x && cell(door.y) == y);
}

}  // namespace doorkey

bool placement_free(const SceneDescriptor& scene, std::size_t object, Point pos) {
  if (scene.domain == Domain::kNav2d) {
    if (pos.x < 0.0 || pos.x > 1.0 || pos.y < 0.0 || pos.y > 1.0) return false;
    for (std::size_t j = 0; j < scene.objects.size(); ++j) {
      if (j == object || !scene.objects[j].present) continue;
      const Point other = scene.objects[j].pos;
      const double reach = half_size(object) + half_size(j);
      if (std::abs(other.x - pos.x) < reach && std::abs(other.y - pos.y) < reach) return false;
    }
    return true;
  }
  if (!near_integer(pos.x) || !near_integer(pos.y)) return false;
  const int x = cell(pos.x);
  const int y = cell(pos.y);
  if (x < 0 || y < 0 || x >= doorkey::kGridSize || y >= doorkey::kGridSize) return false;
  if (object == doorkey::kDoor) {
    if (x != doorkey::kWallColumn || y <= 0 || y >= doorkey::kGridSize - 1) return false;
  } else if (doorkey::is_structural_wall(x, y)) {
    return false;
  }
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (j == object || !scene.objects[j].present) continue;
    if (cell(scene.objects[j].pos.x) == x && cell(scene.objects[j].pos.y) == y) return false;
  }
  return true;
}

void validate_scene(const SceneDescriptor& scene) {
  const ConceptSchema& schema = schema_for(scene.domain);
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidScene, what); };
  if (scene.objects.size() != schema.object_count()) fail("object count does not match schema");
  if (!scene.agent().present) fail("agent must be present");
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectState& obj = scene.objects[i];
    const ObjectSpec& spec = schema.object(i);
    if (!obj.present) {
      if (!obj.values.empty()) fail(spec.name + " is absent but carries concept values");
      continue;
    }
    if (obj.values.size() != spec.concepts.size()) fail(spec.name + " has wrong number of concept values");
    for (std::size_t c = 0; c < spec.concepts.size(); ++c) {
      if (obj.values[c] >= spec.concepts[c].values.size()) fail(spec.name + " has out-of-range instantiation");
    }
    if (!placement_free(scene, i, obj.pos)) fail(spec.name + " is out of bounds or overlaps another object");
  }
  if (scene.domain == Domain::kDoorKey && (scene.door_open || scene.key_held)) {
    fail("initial doorkey scenes start with the door closed and the key on the floor");
  }
}

Json to_json(const SceneDescriptor& scene) {
  const ConceptSchema& schema = schema_for(scene.domain);
  Json objects = Json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectState& obj = scene.objects[i];
    const ObjectSpec& spec = schema.object(i);
    Json o;
    o["name"] = spec.name;
    o["present"] = obj.present;
    Json concepts = Json::object();
    if (obj.present) {
      for (std::size_t c = 0; c < spec.concepts.size() && c < obj.values.size(); ++c) {
        concepts[spec.concepts[c].name] = spec.concepts[c].values.at(obj.values[c]);
      }
    }
    o["concepts"] = concepts;
    o["pos"] = Json::array({obj.pos.x, obj.pos.y});
    objects.push_back(o);
  }
  Json j;
  j["domain"] = to_string(scene.domain);
  j["objects"] = objects;
  if (scene.domain == Domain::kDoorKey) {
    j["door_open"] = scene.door_open;
    j["key_held"] = scene.key_held;
  }
  return j;
}

SceneDescriptor scene_from_json(const Json& j) {
  SceneDescriptor scene;
  scene.domain = parse_domain(j.at("domain").get<std::string>());
  const ConceptSchema& schema = schema_for(scene.domain);
  scene.objects.resize(schema.object_count());
  std::vector<bool> seen(schema.object_count(), false);
  for (const Json& o : j.at("objects")) {
    const std::size_t i = schema.object_index(o.at("name").get<std::string>());
    if (seen[i]) throw Error(ErrorCode::kSchemaMismatch, "duplicate object " + schema.object(i).name);
    seen[i] = true;
    ObjectState& obj = scene.objects[i];
    obj.present = o.at("present").get<bool>();
    obj.pos = {o.at("pos").at(0).get<double>(), o.at("pos").at(1).get<double>()};
    if (obj.present) {
      const ObjectSpec& spec = schema.object(i);
      const Json& concepts = o.value("concepts", Json::object());
      if (concepts.size() != spec.concepts.size()) {
        throw Error(ErrorCode::kSchemaMismatch, spec.name + " must assign every concept");
      }
      obj.values.resize(spec.concepts.size());
      for (auto it = concepts.begin(); it != concepts.end(); ++it) {
        const std::size_t c = schema.concept_index(i, it.key());
        obj.values[c] = schema.value_index(i, c, it.value().get<std::string>());
      }
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw Error(ErrorCode::kSchemaMismatch, "missing object " + schema.object(i).name);
  }
  scene.door_open = j.value("door_open", false);
  scene.key_held = j.value("key_held", false);
  return scene;
}

}  // namespace dfa
