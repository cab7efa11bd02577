#include "cmg/plan_io.hpp"

#include "cmg/io.hpp"

namespace cmg {

using nlohmann::json;

namespace {

json vec2(Vec2 p) { return json::array({round_sig9(p[0]), round_sig9(p[1])}); }

json event_json(const EventRecord& e) {
  const EventSpec& s = e.spec;
  return {{"description", e.description},
          {"affected", e.affected},
          {"spec",
           {{"pattern", to_string(s.pattern)},
            {"epicenter", vec2(s.epicenter)},
            {"direction", vec2(s.direction)},
            {"radius", round_sig9(s.radius)},
            {"spacing", round_sig9(s.spacing)},
            {"onset_frame", s.onset_frame},
            {"duration_frames", s.duration_frames},
            {"leader_agent", s.leader_agent},
            {"agents", s.agents}}}};
}

// Typed accessors that report the JSON path of whatever is missing or mistyped.
const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing field");
  return *it;
}

double num(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw SchemaError(path + "." + key, "expected a number");
  return v.get<double>();
}

long long integer(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_integer()) throw SchemaError(path + "." + key, "expected an integer");
  return v.get<long long>();
}

std::string str(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

const json& arr(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "." + key, "expected an array");
  return v;
}

Vec2 read_vec2(const json& obj, const std::string& key, const std::string& path) {
  const json& v = arr(obj, key, path);
  if (v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw SchemaError(path + "." + key, "expected [a, b]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

std::vector<int> int_list(const json& obj, const std::string& key, const std::string& path) {
  const json& v = arr(obj, key, path);
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) throw SchemaError(path + "." + key + "[" + std::to_string(i) + "]", "expected an integer");
    out.push_back(v[i].get<int>());
  }
  return out;
}

std::string at(const std::string& path, const std::string& key, std::size_t i) {
  return path + "." + key + "[" + std::to_string(i) + "]";
}

}  // namespace

json plan_to_json(const ScenePlan& plan) {
  json groups = json::array();
  for (const auto& g : plan.groups) {
    json inter = json::array();
    for (const auto& c : g.interactions) {
      inter.push_back({{"agent_a", c.agent_a},
                       {"joint_a", c.joint_a},
                       {"agent_b", c.agent_b},
                       {"joint_b", c.joint_b},
                       {"distance", round_sig9(c.distance)},
                       {"frames", c.frames}});
    }
    groups.push_back({{"id", g.id},
                      {"members", g.members},
                      {"activity", g.activity},
                      {"activity_text", g.activity_text},
                      {"anchor", vec2(g.anchor)},
                      {"formation", to_string(g.formation)},
                      {"close_interaction", g.close_interaction},
                      {"interactions", inter}});
  }
  json agents = json::array();
  for (const auto& a : plan.agents) {
    json keys = json::array();
    for (const auto& k : a.keys) keys.push_back(json::array({k.frame, round_sig9(k.p[0]), round_sig9(k.p[1])}));
    agents.push_back(
        {{"id", a.id}, {"group", a.group}, {"text", a.text}, {"heading", round_sig9(a.heading)}, {"keyframes", keys}});
  }
  json events = json::array();
  for (const auto& e : plan.events) events.push_back(event_json(e));
  json entries = json::array();
  int joints = plan.control.empty() ? 0 : plan.control[0].joints();
  for (std::size_t i = 0; i < plan.control.size(); ++i) {
    const SpatialControl& c = plan.control[i];
    for (int t = 0; t < c.frames(); ++t) {
      for (int j = 0; j < c.joints(); ++j) {
        if (c.mask(t, j) == 0.0) continue;
        const Vector3 p = c.target(t, j);
        entries.push_back(json::array({static_cast<int>(i), t, j, round_sig9(p[0]), round_sig9(p[1]), round_sig9(p[2])}));
      }
    }
  }
  return {{"version", ScenePlan::kVersion},
          {"scene", plan.scene},
          {"seed", plan.seed},
          {"provenance", plan.provenance},
          {"provenance_note", plan.provenance_note},
          {"params",
           {{"n", plan.params.n},
            {"s", round_sig9(plan.params.s)},
            {"sigma", round_sig9(plan.params.sigma)},
            {"alpha", round_sig9(plan.params.alpha)}}},
          {"frames", plan.frames},
          {"fps", round_sig9(plan.fps)},
          {"pelvis_height", round_sig9(plan.pelvis_height)},
          {"v_max", round_sig9(plan.v_max)},
          {"groups", groups},
          {"agents", agents},
          {"events", events},
          {"control", {{"joints", joints}, {"entries", entries}}}};
}

std::string serialize_plan(const ScenePlan& plan) { return plan_to_json(plan).dump(2) + "\n"; }

ScenePlan plan_from_json(const json& doc) {
  const std::string root = "$";
  if (!doc.is_object()) throw SchemaError(root, "expected an object");
  const std::string version = str(doc, "version", root);
  if (version != ScenePlan::kVersion) {
    throw UnsupportedVersionError("unsupported version '" + version + "' (expected " + ScenePlan::kVersion + ")");
  }
  ScenePlan plan;
  plan.scene = str(doc, "scene", root);
  {
    const json& s = field(doc, "seed", root);
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw SchemaError("$.seed", "expected a non-negative integer");
    }
    plan.seed = s.get<std::uint64_t>();
  }
  plan.provenance = str(doc, "provenance", root);
  plan.provenance_note = str(doc, "provenance_note", root);
  const json& params = field(doc, "params", root);
  plan.params.n = static_cast<int>(integer(params, "n", "$.params"));
  plan.params.s = num(params, "s", "$.params");
  plan.params.sigma = num(params, "sigma", "$.params");
  plan.params.alpha = num(params, "alpha", "$.params");
  plan.frames = static_cast<int>(integer(doc, "frames", root));
  plan.fps = num(doc, "fps", root);
  plan.pelvis_height = num(doc, "pelvis_height", root);
  plan.v_max = num(doc, "v_max", root);

  const json& groups = arr(doc, "groups", root);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string p = at(root, "groups", i);
    Group g;
    g.id = static_cast<int>(integer(groups[i], "id", p));
    g.members = int_list(groups[i], "members", p);
    g.activity = str(groups[i], "activity", p);
    g.activity_text = str(groups[i], "activity_text", p);
    g.anchor = read_vec2(groups[i], "anchor", p);
    try {
      g.formation = parse_formation(str(groups[i], "formation", p));
    } catch (const ValidationError& e) {
      throw SchemaError(p + ".formation", e.what());
    }
    const json& ci = field(groups[i], "close_interaction", p);
    if (!ci.is_boolean()) throw SchemaError(p + ".close_interaction", "expected a boolean");
    g.close_interaction = ci.get<bool>();
    const json& inter = arr(groups[i], "interactions", p);
    for (std::size_t k = 0; k < inter.size(); ++k) {
      const std::string q = at(p, "interactions", k);
      InteractionConstraint c;
      c.agent_a = static_cast<int>(integer(inter[k], "agent_a", q));
      c.joint_a = static_cast<int>(integer(inter[k], "joint_a", q));
      c.agent_b = static_cast<int>(integer(inter[k], "agent_b", q));
      c.joint_b = static_cast<int>(integer(inter[k], "joint_b", q));
      c.distance = num(inter[k], "distance", q);
      c.frames = int_list(inter[k], "frames", q);
      g.interactions.push_back(std::move(c));
    }
    plan.groups.push_back(std::move(g));
  }

  const json& agents = arr(doc, "agents", root);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = at(root, "agents", i);
    AgentTrack a;
    a.id = static_cast<int>(integer(agents[i], "id", p));
    a.group = static_cast<int>(integer(agents[i], "group", p));
    a.text = str(agents[i], "text", p);
    a.heading = num(agents[i], "heading", p);
    const json& keys = arr(agents[i], "keyframes", p);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const json& kf = keys[k];
      if (!kf.is_array() || kf.size() != 3 || !kf[0].is_number_integer() || !kf[1].is_number() || !kf[2].is_number()) {
        throw SchemaError(at(p, "keyframes", k), "expected [frame, a, b]");
      }
      a.keys.push_back({kf[0].get<int>(), {kf[1].get<double>(), kf[2].get<double>()}});
    }
    plan.agents.push_back(std::move(a));
  }

  const json& events = arr(doc, "events", root);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string p = at(root, "events", i);
    EventRecord e;
    e.description = str(events[i], "description", p);
    e.affected = int_list(events[i], "affected", p);
    const json& s = field(events[i], "spec", p);
    const std::string sp = p + ".spec";
    try {
      e.spec.pattern = parse_event_pattern(str(s, "pattern", sp));
    } catch (const ValidationError& err) {
      throw SchemaError(sp + ".pattern", err.what());
    }
    e.spec.epicenter = read_vec2(s, "epicenter", sp);
    e.spec.direction = read_vec2(s, "direction", sp);
    e.spec.radius = num(s, "radius", sp);
    e.spec.spacing = num(s, "spacing", sp);
    e.spec.onset_frame = static_cast<int>(integer(s, "onset_frame", sp));
    e.spec.duration_frames = static_cast<int>(integer(s, "duration_frames", sp));
    e.spec.leader_agent = static_cast<int>(integer(s, "leader_agent", sp));
    e.spec.agents = int_list(s, "agents", sp);
    plan.events.push_back(std::move(e));
  }

  const json& control = field(doc, "control", root);
  const int joints = static_cast<int>(integer(control, "joints", "$.control"));
  if (joints < 1) throw SchemaError("$.control.joints", "expected a positive joint count");
  if (plan.frames < 1) throw SchemaError("$.frames", "expected a positive frame count");
  for (int i = 0; i < plan.n(); ++i) plan.control.push_back(SpatialControl::empty(plan.frames, joints));
  const json& entries = arr(control, "entries", "$.control");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const json& e = entries[k];
    const std::string p = at("$.control", "entries", k);
    if (!e.is_array() || e.size() != 6 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
        !e[2].is_number_integer() || !e[3].is_number() || !e[4].is_number() || !e[5].is_number()) {
      throw SchemaError(p, "expected [agent, frame, joint, x, y, z]");
    }
    const int a = e[0].get<int>(), t = e[1].get<int>(), j = e[2].get<int>();
    if (a < 0 || a >= plan.n() || t < 0 || t >= plan.frames || j < 0 || j >= joints) {
      throw SchemaError(p, "index out of range");
    }
    if (plan.control[a].mask(t, j) != 0.0) throw SchemaError(p, "duplicate control entry");
    plan.control[a].set(t, j, Vector3(e[3].get<double>(), e[4].get<double>(), e[5].get<double>()));
  }
  plan.validate(joints);
  return plan;
}

ScenePlan parse_plan(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("plan is not valid JSON: ") + e.what());
  }
  return plan_from_json(doc);
}

void write_plan(const ScenePlan& plan, const std::string& path) { write_file(path, serialize_plan(plan)); }

ScenePlan read_plan(const std::string& path) { return parse_plan(read_file(path)); }

}  // namespace cmg
