#include "cmg/planner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "cmg/llm.hpp"

namespace cmg {

namespace {

constexpr double kPi = std::numbers::pi;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool finite(double v) { return std::isfinite(v); }

Vec2 add(Vec2 a, Vec2 b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 sub(Vec2 a, Vec2 b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 scale(Vec2 a, double k) { return {a[0] * k, a[1] * k}; }
double dot(Vec2 a, Vec2 b) { return a[0] * b[0] + a[1] * b[1]; }
double norm(Vec2 a) { return std::hypot(a[0], a[1]); }
Vec2 polar(double r, double angle) { return {r * std::cos(angle), r * std::sin(angle)}; }
// Yaw that faces `dir` ((sin yaw, cos yaw) is the facing vector on the ground).
double yaw_of(Vec2 dir) { return norm(dir) > 0.0 ? std::atan2(dir[0], dir[1]) : 0.0; }

Vec2 row(const Matrix& path, int i) { return {path(i, 0), path(i, 1)}; }
void set_row(Matrix& path, int i, Vec2 p) {
  path(i, 0) = p[0];
  path(i, 1) = p[1];
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Whole-word prefix match ("follow" matches "followed"), or substring match for phrases.
bool has_keyword(const std::string& text, const std::string& key) {
  if (key.find(' ') != std::string::npos) return (" " + text + " ").find(" " + key) != std::string::npos;
  std::string word;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    const char c = i < text.size() ? text[i] : ' ';
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += c;
    } else {
      if (word.rfind(key, 0) == 0) return true;
      word.clear();
    }
  }
  return false;
}

bool any_keyword(const std::string& text, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (has_keyword(text, k)) return true;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Small types

void CrowdParams::validate() const {
  require(n >= 1, "crowd params: n must be >= 1");
  require(finite(s) && s > 0.0, "crowd params: s must be > 0");
  require(s <= n, "crowd params: s must not exceed n");
  require(finite(sigma) && sigma >= 0.0 && sigma <= 1.0, "crowd params: sigma must be in [0, 1]");
  require(finite(alpha) && alpha >= 0.0 && alpha <= 1.0, "crowd params: alpha must be in [0, 1]");
}

std::string to_string(Formation f) {
  switch (f) {
    case Formation::Cluster: return "cluster";
    case Formation::Circle: return "circle";
    case Formation::Line: return "line";
    case Formation::Pair: return "pair";
  }
  return "cluster";
}

Formation parse_formation(const std::string& s) {
  const std::string k = lower(s);
  if (k == "cluster") return Formation::Cluster;
  if (k == "circle") return Formation::Circle;
  if (k == "line") return Formation::Line;
  if (k == "pair") return Formation::Pair;
  throw ValidationError("unknown formation '" + s + "' (expected cluster, circle, line or pair)");
}

const std::vector<std::string>& event_pattern_names() {
  static const std::vector<std::string> names = {"Following", "Avoiding", "Queuing", "Encircling", "Passing", "Random"};
  return names;
}

std::string to_string(EventPattern p) { return event_pattern_names()[static_cast<int>(p)]; }

EventPattern parse_event_pattern(const std::string& s) {
  const auto& names = event_pattern_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (lower(s) == lower(names[i])) return static_cast<EventPattern>(i);
  }
  throw ValidationError("unknown event pattern '" + s +
                        "' (expected one of Following, Avoiding, Queuing, Encircling, Passing, Random)");
}

void EventSpec::validate(int frames) const {
  require(onset_frame >= 0 && onset_frame < frames,
          "event: onset_frame " + std::to_string(onset_frame) + " outside [0, " + std::to_string(frames) + ")");
  require(duration_frames >= 1, "event: duration_frames must be >= 1");
  require(finite(epicenter[0]) && finite(epicenter[1]), "event: epicenter must be finite");
  require(finite(direction[0]) && finite(direction[1]), "event: direction must be finite");
  require(finite(radius) && radius > 0.0, "event: radius must be > 0");
  require(finite(spacing) && spacing > 0.0, "event: spacing must be > 0");
  for (int a : agents) require(a >= 0, "event: agent indices must be >= 0");
  switch (pattern) {
    case EventPattern::Avoiding:
    case EventPattern::Passing:
      require(norm(direction) > 0.0, "event: " + to_string(pattern) + " needs a non-zero obstacle velocity");
      break;
    case EventPattern::Queuing:
      require(norm(direction) > 0.0, "event: Queuing needs a non-zero queue direction");
      break;
    case EventPattern::Following:
      require(leader_agent >= 0, "event: Following needs a leader agent");
      break;
    default:
      break;
  }
}

void PlannerConfig::validate() const {
  require(frames >= 1, "planner: frames must be >= 1");
  require(finite(fps) && fps > 0.0, "planner: fps must be > 0");
  require(finite(arena) && arena > 0.0, "planner: arena must be > 0");
  require(finite(base_spacing) && base_spacing > 0.0, "planner: base_spacing must be > 0");
  require(alpha_interact >= 0.0 && alpha_interact <= 1.0, "planner: alpha_interact must be in [0, 1]");
  require(finite(v_max) && v_max > 0.0, "planner: v_max must be > 0");
  require(finite(eps_return) && eps_return > 0.0, "planner: eps_return must be > 0");
  require(finite(walk_speed) && walk_speed >= 0.0, "planner: walk_speed must be >= 0");
  require(finite(handshake_distance) && handshake_distance >= 0.0, "planner: handshake_distance must be >= 0");
  require(finite(follow_delay) && follow_delay >= 0.0, "planner: follow_delay must be >= 0");
  require(finite(follow_offset), "planner: follow_offset must be finite");
  require(finite(random_radius) && random_radius >= 0.0, "planner: random_radius must be >= 0");
  require(finite(pelvis_height) && pelvis_height >= 0.0, "planner: pelvis_height must be >= 0");
  require(keyframe_stride >= 1, "planner: keyframe_stride must be >= 1");
  require(llm_candidates >= 1, "planner: llm_candidates must be >= 1");
}

Interp parse_interp(const std::string& s) {
  const std::string k = lower(s);
  if (k == "catmull-rom" || k == "catmull_rom" || k == "catmullrom") return Interp::CatmullRom;
  if (k == "linear") return Interp::Linear;
  throw ValidationError("unknown interpolation '" + s + "' (expected catmull-rom or linear)");
}

std::string to_string(Interp i) { return i == Interp::Linear ? "linear" : "catmull-rom"; }

Backend parse_backend(const std::string& s) {
  const std::string k = lower(s);
  if (k == "llm") return Backend::Llm;
  if (k == "fallback") return Backend::Fallback;
  throw ValidationError("unknown planner backend '" + s + "' (expected llm or fallback)");
}

std::string to_string(Backend b) { return b == Backend::Llm ? "llm" : "fallback"; }

void ScenePlan::validate(int joints) const {
  params.validate();
  require(params.n == n(), "plan: params.n disagrees with the number of agents");
  require(frames >= 1 && fps > 0.0, "plan: frames and fps must be positive");
  require(provenance == "llm" || provenance == "fallback", "plan: provenance must be llm or fallback");
  std::vector<int> owner(n(), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(groups[g].id == static_cast<int>(g), "plan: group ids must be 0..g-1 in order");
    for (int m : groups[g].members) {
      require(m >= 0 && m < n(), "plan: group member " + std::to_string(m) + " out of range");
      require(owner[m] == -1, "plan: agent " + std::to_string(m) + " belongs to more than one group");
      owner[m] = static_cast<int>(g);
    }
    for (const auto& c : groups[g].interactions) {
      require(c.agent_a >= 0 && c.agent_a < n() && c.agent_b >= 0 && c.agent_b < n(),
              "plan: interaction agent out of range");
      require(c.joint_a >= 0 && c.joint_a < joints && c.joint_b >= 0 && c.joint_b < joints,
              "plan: interaction joint out of range");
      for (int fr : c.frames) require(fr >= 0 && fr < frames, "plan: interaction frame out of range");
    }
  }
  for (int i = 0; i < n(); ++i) {
    require(owner[i] != -1, "plan: agent " + std::to_string(i) + " belongs to no group");
    const AgentTrack& a = agents[i];
    require(a.id == i, "plan: agent ids must be 0..n-1 in order");
    require(a.group == owner[i], "plan: agent " + std::to_string(i) + " group field disagrees with groups");
    require(!a.keys.empty(), "plan: agent " + std::to_string(i) + " has no keyframes");
    for (std::size_t k = 0; k < a.keys.size(); ++k) {
      require(a.keys[k].frame >= 0 && a.keys[k].frame < frames, "plan: keyframe outside the clip");
      require(k == 0 || a.keys[k].frame > a.keys[k - 1].frame, "plan: keyframes out of order");
      require(finite(a.keys[k].p[0]) && finite(a.keys[k].p[1]), "plan: keyframe not finite");
    }
  }
  require(static_cast<int>(control.size()) == n(), "plan: need one control signal per agent");
  for (const auto& c : control) {
    require(c.frames() == frames && c.joints() == joints, "plan: control shape disagrees with frames/joints");
    c.validate();
  }
}

const std::vector<CatalogActivity>& activity_catalog() {
  static const std::vector<CatalogActivity> catalog = {
      {"walk", "a person walks forward", Formation::Cluster, true},
      {"stand and converse", "a person stands and talks with hand gestures", Formation::Circle, false},
      {"queue", "a person stands still waiting in line", Formation::Line, false},
      {"dance in circle", "a person dances while moving in a circle", Formation::Circle, true},
      {"exercise in rows", "a person does exercises in place", Formation::Line, false},
      {"handshake pair", "a person shakes hands with another person", Formation::Pair, false},
  };
  return catalog;
}

std::vector<std::vector<int>> divide_groups(const CrowdParams& params, std::mt19937_64& rng) {
  params.validate();
  const int g = std::max(1, static_cast<int>(std::ceil(params.n / params.s - 1e-12)));
  std::vector<int> order(params.n);
  for (int i = 0; i < params.n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> groups(g);
  const int base = params.n / g, extra = params.n % g;
  int next = 0;
  for (int k = 0; k < g; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    groups[k].assign(order.begin() + next, order.begin() + next + size);
    std::sort(groups[k].begin(), groups[k].end());
    next += size;
  }
  return groups;
}

// ---------------------------------------------------------------------------------------------
// Parameters

CrowdParams derive_params(const std::string& scene, int n, Backend backend, PlannerLLMClient* llm, std::string* note) {
  require(n >= 1, "derive_params: n must be >= 1");
  if (backend == Backend::Llm) {
    std::string why = "llm not configured";
    if (llm != nullptr && llm->config().configured()) {
      try {
        const auto res = llm->request("derive_params", {{"scene", scene}, {"n", std::to_string(n)}});
        CrowdParams p;
        p.n = n;  // the head count is the caller's
        p.s = std::clamp(res.value["s"].get<double>(), 1.0, static_cast<double>(n));
        p.sigma = res.value["sigma"].get<double>();
        p.alpha = res.value["alpha"].get<double>();
        p.validate();
        if (note) *note = "params from llm";
        return p;
      } catch (const LlmError& e) {
        why = e.what();
      } catch (const ValidationError& e) {
        why = e.what();
      }
    }
    if (note) *note = "params fallback: " + why;
  }
  const std::string t = lower(scene);
  CrowdParams p;
  p.n = n;
  p.s = 3.0;
  p.sigma = 0.5;
  p.alpha = 0.5;
  if (any_keyword(t, {"crowded", "busy", "packed", "concert", "festival", "rush"})) p.sigma = 0.8;
  if (any_keyword(t, {"quiet", "empty", "calm", "sparse"})) p.sigma = 0.2;
  if (any_keyword(t, {"party", "greet", "meet", "handshake", "reception", "conference", "reunion"})) p.alpha = 0.8;
  if (any_keyword(t, {"queue", "line up", "station", "exercise", "gym"})) p.s = 5.0;
  if (any_keyword(t, {"couple", "pairs", "date"})) p.s = 2.0;
  p.s = std::min(p.s, static_cast<double>(n));
  return p;
}

// ---------------------------------------------------------------------------------------------
// Trajectory utilities

double catmull_rom(double p0, double p1, double p2, double p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * (2.0 * p1 + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

Matrix densify_track(const AgentTrack& track, int frames, Interp interp) {
  require(frames >= 1, "densify: frames must be >= 1");
  const auto& keys = track.keys;
  require(!keys.empty(), "densify: agent " + std::to_string(track.id) + " has no keyframes");
  for (std::size_t k = 1; k < keys.size(); ++k) {
    require(keys[k].frame > keys[k - 1].frame,
            "densify: keyframes out of order for agent " + std::to_string(track.id));
  }
  const int K = static_cast<int>(keys.size());
  Matrix path(frames, 2);
  int seg = 0;
  for (int t = 0; t < frames; ++t) {
    if (t <= keys.front().frame) {
      set_row(path, t, keys.front().p);
      continue;
    }
    if (t >= keys.back().frame) {
      set_row(path, t, keys.back().p);
      continue;
    }
    while (keys[seg + 1].frame < t) ++seg;
    const Keyframe& k1 = keys[seg];
    const Keyframe& k2 = keys[seg + 1];
    const double u = static_cast<double>(t - k1.frame) / static_cast<double>(k2.frame - k1.frame);
    for (int c = 0; c < 2; ++c) {
      if (interp == Interp::Linear) {
        path(t, c) = k1.p[c] + (k2.p[c] - k1.p[c]) * u;
      } else {
        const double p0 = seg > 0 ? keys[seg - 1].p[c] : k1.p[c];
        const double p3 = seg + 2 < K ? keys[seg + 2].p[c] : k2.p[c];
        path(t, c) = catmull_rom(p0, k1.p[c], k2.p[c], p3, u);
      }
    }
  }
  return path;
}

Matrix clamp_speed(const Matrix& path, double max_step) {
  require(max_step > 0.0, "clamp_speed: max_step must be > 0");
  Matrix out = path;
  for (Eigen::Index i = 1; i < path.rows(); ++i) {
    const Vec2 d = {path(i, 0) - out(i - 1, 0), path(i, 1) - out(i - 1, 1)};
    const double len = norm(d);
    if (len > max_step) {
      out(i, 0) = out(i - 1, 0) + d[0] * (max_step / len);
      out(i, 1) = out(i - 1, 1) + d[1] * (max_step / len);
    }
  }
  return out;
}

Matrix agent_path(const ScenePlan& plan, int agent, Interp interp) {
  require(agent >= 0 && agent < plan.n(), "agent index out of range");
  return clamp_speed(densify_track(plan.agents[agent], plan.frames, interp), plan.v_max / plan.fps);
}

double standing_pelvis_height(const Skeleton& skel) { return skel.rest_pelvis_height(0.02) - 0.04; }

namespace {

Vector3 ground_point(const Skeleton& skel, Vec2 p, double height) {
  Vector3 v = Vector3::Zero();
  v[skel.ground_a()] = p[0];
  v[skel.ground_b()] = p[1];
  v[skel.up()] = height;
  return v;
}

}  // namespace

std::vector<SpatialControl> trajectories_to_control(const ScenePlan& plan, Interp interp, const Skeleton& skel) {
  const int J = skel.joints();
  std::vector<Matrix> paths;
  std::vector<SpatialControl> out;
  for (int i = 0; i < plan.n(); ++i) {
    paths.push_back(agent_path(plan, i, interp));
    SpatialControl c = SpatialControl::empty(plan.frames, J);
    for (int t = 0; t < plan.frames; ++t) c.set(t, 0, ground_point(skel, row(paths[i], t), plan.pelvis_height));
    out.push_back(std::move(c));
  }
  const double hand_h = plan.pelvis_height + kHandAbovePelvis;
  for (const auto& g : plan.groups) {
    for (const auto& ic : g.interactions) {
      require(ic.joint_a < J && ic.joint_b < J, "interaction joint out of range for this skeleton");
      for (int t : ic.frames) {
        const Vec2 pa = row(paths[ic.agent_a], t), pb = row(paths[ic.agent_b], t);
        const Vec2 d = sub(pb, pa);
        const double len = norm(d);
        const Vec2 u = len > 0.0 ? scale(d, 1.0 / len) : Vec2{1.0, 0.0};
        const Vec2 mid = scale(add(pa, pb), 0.5);
        out[ic.agent_a].set(t, ic.joint_a, ground_point(skel, sub(mid, scale(u, 0.5 * ic.distance)), hand_h));
        out[ic.agent_b].set(t, ic.joint_b, ground_point(skel, add(mid, scale(u, 0.5 * ic.distance)), hand_h));
      }
    }
  }
  return out;
}

GroundFrame agent_frame(const ScenePlan& plan, int agent) {
  const Matrix path = agent_path(plan, agent);
  return GroundFrame{path(0, 0), path(0, 1), plan.agents[agent].heading};
}

SpatialControl canonical_control(const ScenePlan& plan, int agent, const Skeleton& skel) {
  require(agent >= 0 && agent < static_cast<int>(plan.control.size()), "canonical_control: agent out of range");
  const GroundFrame frame = agent_frame(plan, agent);
  const SpatialControl& world = plan.control[agent];
  SpatialControl local = SpatialControl::empty(world.frames(), world.joints());
  for (int t = 0; t < world.frames(); ++t) {
    for (int j = 0; j < world.joints(); ++j) {
      if (world.mask(t, j) != 0.0) local.set(t, j, frame.to_local(world.target(t, j), skel));
    }
  }
  return local;
}

// ---------------------------------------------------------------------------------------------
// Scene layout

namespace {

const CatalogActivity* find_activity(const std::string& id) {
  for (const auto& a : activity_catalog()) {
    if (a.id == lower(id)) return &a;
  }
  return nullptr;
}

// Catalog ids that fit a scene description; every non-interactive activity when nothing matches.
std::vector<std::string> preferred_activities(const std::string& scene) {
  const std::string t = lower(scene);
  std::vector<std::string> out;
  auto add_id = [&](const char* id) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.emplace_back(id);
  };
  if (any_keyword(t, {"queue", "line up", "ticket", "bus stop", "station", "counter"})) add_id("queue");
  if (any_keyword(t, {"park", "gym", "exercise", "fitness", "workout", "morning"})) add_id("exercise in rows");
  if (any_keyword(t, {"party", "dance", "festival", "concert", "club", "wedding"})) add_id("dance in circle");
  if (any_keyword(t, {"square", "plaza", "street", "mall", "market", "campus", "sidewalk"})) {
    add_id("walk");
    add_id("stand and converse");
  }
  if (any_keyword(t, {"meet", "greet", "conference", "office", "reception", "chat", "cafe", "lobby"})) {
    add_id("stand and converse");
  }
  if (out.empty()) {
    for (const auto& a : activity_catalog()) {
      if (a.formation != Formation::Pair) out.push_back(a.id);
    }
  }
  return out;
}

constexpr double kStrollLength = 1.5;  // m, half-length of a walking group's back-and-forth path
constexpr double kConverseRadius = 0.8;
constexpr double kDanceRadius = 1.5;
constexpr double kQueueGap = 0.8;
constexpr double kRowGap = 1.2;
constexpr double kPairHalf = 0.45;
constexpr double kPairRowGap = 1.5;

struct GroupShape {
  std::vector<Vec2> offsets;  // member positions relative to the anchor, before group rotation
  std::vector<double> yaw;    // member headings in the same frame
  double radius = 0.0;        // extent of the group's footprint, motion included
};

double ring_radius(int m, double minimum) { return std::max(minimum, m * 0.9 / (2.0 * kPi)); }

GroupShape group_shape(const Group& g, bool moving) {
  const int m = static_cast<int>(g.members.size());
  GroupShape s;
  const bool queue = g.activity == "queue";
  for (int k = 0; k < m; ++k) {
    Vec2 p{0.0, 0.0};
    double yaw = 0.0;
    switch (g.formation) {
      case Formation::Cluster: {
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        p = polar(0.7 * std::sqrt(static_cast<double>(k)), golden * k);
        break;
      }
      case Formation::Circle: {
        const double r = ring_radius(m, moving ? kDanceRadius : kConverseRadius);
        const double ang = 2.0 * kPi * k / m;
        p = polar(r, ang);
        yaw = moving ? yaw_of({-std::sin(ang), std::cos(ang)}) : yaw_of(scale(p, -1.0));
        if (m == 1) p = {0.0, 0.0};
        break;
      }
      case Formation::Line:
        if (queue) {
          p = {0.0, -kQueueGap * k};
        } else {
          const int per_row = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m)))));
          p = {kRowGap * (k % per_row - 0.5 * (per_row - 1)), -kRowGap * (k / per_row)};
        }
        break;
      case Formation::Pair: {
        const int pair = k / 2;
        const bool second = (k % 2) == 1;
        p = {second ? kPairHalf : -kPairHalf, -kPairRowGap * pair};
        yaw = second ? -kPi / 2.0 : kPi / 2.0;
        if (m % 2 == 1 && k == m - 1) {
          p = {0.0, -kPairRowGap * pair};
          yaw = 0.0;
        }
        break;
      }
    }
    s.offsets.push_back(p);
    s.yaw.push_back(yaw);
  }
  // Centre the footprint on the anchor.
  Vec2 c{0.0, 0.0};
  for (const auto& p : s.offsets) c = add(c, p);
  c = scale(c, 1.0 / std::max(1, m));
  for (auto& p : s.offsets) p = sub(p, c);
  for (const auto& p : s.offsets) s.radius = std::max(s.radius, norm(p));
  if (moving && g.formation != Formation::Circle) s.radius += 2.0 * kStrollLength;
  return s;
}

double triangle_wave(double d, double L) {
  // 0 -> L -> 0 -> -L -> 0 over a period of 4L.
  double x = std::fmod(d, 4.0 * L);
  if (x < L) return x;
  if (x < 3.0 * L) return 2.0 * L - x;
  return x - 4.0 * L;
}

std::vector<int> key_frames(int frames, int stride, bool moving) {
  std::vector<int> out{0};
  if (frames == 1) return out;
  if (moving) {
    for (int t = stride; t < frames - 1; t += stride) out.push_back(t);
  }
  out.push_back(frames - 1);
  return out;
}

struct ActivityChoice {
  std::string activity;
  std::string text;
  Formation formation;
  bool moving;
};

bool moving_text(const std::string& text) {
  return any_keyword(lower(text), {"walk", "run", "jog", "march", "stroll", "dance", "move", "wander"});
}

// Validity score of an LLM candidate: one point per group entry with a usable formation, plus one when the
// entry count matches. Invalid replies score -1.
int score_candidate(const nlohmann::json& reply, const std::vector<std::vector<int>>& members) {
  const auto& gs = reply["groups"];
  int score = gs.size() == members.size() ? 1 : 0;
  for (std::size_t i = 0; i < std::min(gs.size(), members.size()); ++i) {
    const Formation f = parse_formation(gs[i]["formation"].get<std::string>());
    const int m = static_cast<int>(members[i].size());
    const bool feasible = f != Formation::Pair || m == 2;
    if (feasible) ++score;
  }
  return score;
}

}  // namespace

ScenePlan plan_scene(const std::string& scene, const CrowdParams& params, Backend backend, std::uint64_t seed,
                     const Skeleton& skel, const PlannerConfig& cfg, PlannerLLMClient* llm) {
  params.validate();
  cfg.validate();
  std::mt19937_64 rng(seed);
  ScenePlan plan;
  plan.scene = scene;
  plan.params = params;
  plan.frames = cfg.frames;
  plan.fps = cfg.fps;
  plan.v_max = cfg.v_max;
  plan.seed = seed;
  plan.pelvis_height = cfg.pelvis_height > 0.0 ? cfg.pelvis_height : standing_pelvis_height(skel);
  plan.provenance = "fallback";

  const auto members = divide_groups(params, rng);
  const int G = static_cast<int>(members.size());
  const bool interact = params.alpha >= cfg.alpha_interact;

  // Activities: the largest group takes the paired interaction when alpha is high enough.
  std::vector<ActivityChoice> choice(G);
  const auto pref = preferred_activities(scene);
  for (int g = 0; g < G; ++g) {
    const CatalogActivity* a = find_activity(pref[std::uniform_int_distribution<std::size_t>(0, pref.size() - 1)(rng)]);
    if (interact && g == 0 && members[0].size() >= 2) a = find_activity("handshake pair");
    choice[g] = {a->id, a->text, a->formation, a->moving};
  }

  if (backend == Backend::Llm) {
    std::string why = "llm not configured";
    if (llm != nullptr && llm->config().configured()) {
      std::string sizes;
      for (int g = 0; g < G; ++g) sizes += (g ? "," : "") + std::to_string(members[g].size());
      std::ostringstream alpha;
      alpha << params.alpha;
      int best = -1, best_score = -1;
      nlohmann::json best_reply;
      std::string scores, errors;
      for (int c = 0; c < cfg.llm_candidates; ++c) {
        int score = -1;
        try {
          const auto res = llm->request("motion_plans", {{"scene", scene},
                                                         {"n", std::to_string(params.n)},
                                                         {"group_count", std::to_string(G)},
                                                         {"group_sizes", sizes},
                                                         {"alpha", alpha.str()},
                                                         {"candidate", std::to_string(c + 1)},
                                                         {"candidates", std::to_string(cfg.llm_candidates)}});
          score = score_candidate(res.value, members);
          if (score > best_score) {
            best = c;
            best_score = score;
            best_reply = res.value;
          }
        } catch (const LlmError& e) {
          errors = e.what();
        }
        scores += (c ? "," : "") + std::to_string(score);
      }
      if (best >= 0 && best_score == G + 1) {
        const auto& gs = best_reply["groups"];
        for (int g = 0; g < G; ++g) {
          const std::string text = gs[g]["text"].get<std::string>();
          const std::string activity = lower(gs[g]["activity"].get<std::string>());
          const CatalogActivity* known = find_activity(activity);
          choice[g] = {activity, text, parse_formation(gs[g]["formation"].get<std::string>()),
                       known ? known->moving : moving_text(text)};
        }
        plan.provenance = "llm";
        plan.provenance_note = "candidate " + std::to_string(best + 1) + " of " + std::to_string(cfg.llm_candidates) +
                               " chosen, scores [" + scores + "]";
      } else {
        why = best >= 0 ? "no feasible candidate, scores [" + scores + "]" : errors;
      }
    }
    if (plan.provenance != "llm") plan.provenance_note = "fallback: " + why;
  }

  // Groups, shapes and anchors.
  std::vector<GroupShape> shapes;
  for (int g = 0; g < G; ++g) {
    Group grp;
    grp.id = g;
    grp.members = members[g];
    grp.activity = choice[g].activity;
    grp.activity_text = choice[g].text;
    grp.formation = choice[g].formation;
    grp.close_interaction = interact && g == 0 && members[g].size() >= 2;
    shapes.push_back(group_shape(grp, choice[g].moving));
    plan.groups.push_back(std::move(grp));
  }
  const double spacing = cfg.base_spacing * (1.5 - params.sigma);
  double arena = cfg.arena;
  std::vector<Vec2> anchors;
  int failures = 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(anchors.size()) < G) {
    const int g = static_cast<int>(anchors.size());
    const Vec2 p{(unit(rng) - 0.5) * arena, (unit(rng) - 0.5) * arena};
    bool ok = true;
    for (int h = 0; h < g && ok; ++h) ok = norm(sub(p, anchors[h])) >= spacing + shapes[g].radius + shapes[h].radius;
    if (ok) {
      anchors.push_back(p);
    } else if (++failures >= 1000) {
      arena *= 1.2;
      failures = 0;
    }
  }

  // Member tracks.
  plan.agents.resize(params.n);
  for (int g = 0; g < G; ++g) {
    Group& grp = plan.groups[g];
    grp.anchor = anchors[g];
    const double theta = 2.0 * kPi * unit(rng);
    const bool moving = choice[g].moving;
    const auto frames = key_frames(cfg.frames, cfg.keyframe_stride, moving);
    const int m = static_cast<int>(grp.members.size());
    const Vec2 fwd = {std::sin(theta), std::cos(theta)};
    for (int k = 0; k < m; ++k) {
      AgentTrack& tr = plan.agents[grp.members[k]];
      tr.id = grp.members[k];
      tr.group = g;
      tr.text = grp.activity_text;
      double a0, b0;
      rotate_ground(theta, shapes[g].offsets[k][0], shapes[g].offsets[k][1], a0, b0);
      const Vec2 home = add(grp.anchor, {a0, b0});
      tr.heading = wrap_angle(shapes[g].yaw[k] + theta);
      for (int t : frames) {
        const double time = t / cfg.fps;
        Vec2 p = home;
        if (moving && grp.formation == Formation::Circle && m > 1) {
          const double r = norm(shapes[g].offsets[k]);
          const double ang0 = std::atan2(b0, a0);
          p = add(grp.anchor, polar(r, ang0 + cfg.walk_speed * time / r));
        } else if (moving) {
          p = add(home, scale(fwd, triangle_wave(cfg.walk_speed * time, kStrollLength)));
        }
        tr.keys.push_back({t, p});
      }
      if (moving && grp.formation != Formation::Circle) tr.heading = wrap_angle(theta);
      if (moving && grp.formation == Formation::Circle && m > 1) {
        tr.heading = wrap_angle(yaw_of({-b0, a0}));
      }
    }
    if (grp.close_interaction) {
      const int wrist = [&] {
        for (const char* name : {"right_wrist", "right_hand"}) {
          const auto& names = skel.names();
          const auto it = std::find(names.begin(), names.end(), name);
          if (it != names.end()) return static_cast<int>(it - names.begin());
        }
        return -1;
      }();
      if (wrist >= 0) {
        std::vector<int> at;
        for (int t = cfg.frames / 3; t <= (2 * cfg.frames) / 3; t += 5) at.push_back(t);
        for (int k = 0; k + 1 < m; k += 2) {
          grp.interactions.push_back({grp.members[k], wrist, grp.members[k + 1], wrist, cfg.handshake_distance, at});
        }
      }
    }
  }
  plan.control = trajectories_to_control(plan, Interp::CatmullRom, skel);
  plan.validate(skel.joints());
  return plan;
}

// ---------------------------------------------------------------------------------------------
// Events

EventPattern pattern_from_keywords(const std::string& description) {
  const std::string t = lower(description);
  if (any_keyword(t, {"follow", "leader", "guide", "tour", "chase"})) return EventPattern::Following;
  if (any_keyword(t, {"queue", "line up", "lining up", "wait in line", "ticket", "counter"})) return EventPattern::Queuing;
  if (any_keyword(t, {"encircl", "surround", "gather around", "circle around", "performer", "street show"})) {
    return EventPattern::Encircling;
  }
  if (any_keyword(t, {"pass", "cyclist", "bike", "bicycle", "runner", "jogger", "skater"})) return EventPattern::Passing;
  if (any_keyword(t, {"avoid", "car", "vehicle", "obstacle", "dodge", "make way", "cart", "truck"})) {
    return EventPattern::Avoiding;
  }
  return EventPattern::Random;
}

namespace {

// Position along a dense path at a fractional frame; clamped to the clip.
Vec2 sample_path(const Matrix& path, double t) {
  const double tc = std::clamp(t, 0.0, static_cast<double>(path.rows() - 1));
  const int i = static_cast<int>(std::floor(tc));
  const int j = std::min<int>(i + 1, static_cast<int>(path.rows()) - 1);
  const double u = tc - i;
  return {path(i, 0) + (path(j, 0) - path(i, 0)) * u, path(i, 1) + (path(j, 1) - path(i, 1)) * u};
}

struct Segment {
  Vec2 a, b;
  Vec2 dir() const {
    const Vec2 d = sub(b, a);
    return scale(d, 1.0 / norm(d));
  }
  double length() const { return norm(sub(b, a)); }
};

double segment_distance(const Segment& s, Vec2 p) {
  const Vec2 d = sub(s.b, s.a);
  const double u = std::clamp(dot(sub(p, s.a), d) / dot(d, d), 0.0, 1.0);
  return norm(sub(p, add(s.a, scale(d, u))));
}

// Constant lateral shift (along the segment normal, on the side the agent occupies at onset) that keeps every
// frame from `from` on at least r away from the segment; zero when the agent never comes closer than r.
Vec2 avoidance_shift(const Matrix& path, int from, const Segment& seg, double r) {
  const Vec2 d = seg.dir();
  const Vec2 nrm = {-d[1], d[0]};
  const double L = seg.length();
  double closest = std::numeric_limits<double>::infinity();
  for (int t = from; t < path.rows(); ++t) closest = std::min(closest, segment_distance(seg, row(path, t)));
  if (closest >= r) return {0.0, 0.0};
  const double lat0 = dot(sub(row(path, from), seg.a), nrm);
  const double side = lat0 < 0.0 ? -1.0 : 1.0;
  double need = 0.0;
  for (int t = from; t < path.rows(); ++t) {
    const Vec2 rel = sub(row(path, t), seg.a);
    const double u = dot(rel, d);
    if (u < -r || u > L + r) continue;
    need = std::max(need, r - side * dot(rel, nrm));
  }
  return scale(nrm, side * need);
}

}  // namespace

ScenePlan apply_event(const ScenePlan& plan, const std::string& description, const EventSpec& event, Backend backend,
                      const Skeleton& skel, const PlannerConfig& cfg, PlannerLLMClient* llm) {
  cfg.validate();
  EventSpec spec = event;
  ScenePlan out = plan;
  const int n = plan.n();
  if (backend == Backend::Llm) {
    std::string why = "llm not configured";
    bool used = false;
    if (llm != nullptr && llm->config().configured()) {
      try {
        const auto res = llm->request("interpret_event", {{"scene", plan.scene},
                                                          {"event", description},
                                                          {"n", std::to_string(n)},
                                                          {"last_agent", std::to_string(n - 1)}});
        spec.pattern = parse_event_pattern(res.value["pattern"].get<std::string>());
        if (res.value.contains("agents")) {
          spec.agents.clear();
          for (const auto& a : res.value["agents"]) {
            if (a.get<int>() < n) spec.agents.push_back(a.get<int>());
          }
        }
        used = true;
      } catch (const LlmError& e) {
        why = e.what();
      }
    }
    out.provenance_note += (out.provenance_note.empty() ? "" : "; ") +
                           (used ? "event interpreted by llm" : "event fallback: " + why);
  }
  spec.validate(plan.frames);
  if (spec.pattern == EventPattern::Following) {
    require(spec.leader_agent < n, "event: leader agent " + std::to_string(spec.leader_agent) + " out of range");
  }
  for (int a : spec.agents) require(a < n, "event: agent " + std::to_string(a) + " out of range");

  std::vector<int> affected = spec.agents;
  if (affected.empty()) {
    for (int i = 0; i < n; ++i) affected.push_back(i);
  }
  std::sort(affected.begin(), affected.end());
  affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
  if (spec.pattern == EventPattern::Following) {
    affected.erase(std::remove(affected.begin(), affected.end(), spec.leader_agent), affected.end());
  }

  const int F = plan.frames;
  const int o = spec.onset_frame;
  const double d = spec.duration_frames;
  std::vector<Matrix> paths;
  for (int i = 0; i < n; ++i) paths.push_back(agent_path(plan, i));
  std::vector<Matrix> next = paths;
  auto ramp = [&](int t) { return smoothstep((t - o) / d); };
  auto linear = [&](int t) { return std::clamp((t - o) / d, 0.0, 1.0); };

  // Straight-line approach from the onset position to a target, then hold.
  auto approach = [&](int i, Vec2 target) {
    const Vec2 start = row(paths[i], o);
    for (int t = o; t < F; ++t) set_row(next[i], t, add(start, scale(sub(target, start), linear(t))));
  };

  std::vector<int> changed;
  switch (spec.pattern) {
    case EventPattern::Following: {
      const Matrix& lead = paths[spec.leader_agent];
      std::vector<std::pair<double, int>> by_dist;
      for (int i : affected) by_dist.push_back({norm(sub(row(paths[i], o), row(lead, o))), i});
      std::stable_sort(by_dist.begin(), by_dist.end());
      for (std::size_t k = 0; k < by_dist.size(); ++k) {
        const int i = by_dist[k].second;
        const int rank = static_cast<int>(k) + 1;
        const double lag = cfg.follow_delay * plan.fps * rank;
        for (int t = o; t < F; ++t) {
          const double tl = t - lag;
          Vec2 heading = sub(sample_path(lead, tl + 1.0), sample_path(lead, tl - 1.0));
          if (norm(heading) < 1e-9) {
            const double yaw = plan.agents[spec.leader_agent].heading;
            heading = {std::sin(yaw), std::cos(yaw)};
          }
          heading = scale(heading, 1.0 / norm(heading));
          const Vec2 perp = {heading[1], -heading[0]};
          const Vec2 target = add(sample_path(lead, tl), scale(perp, (rank % 2) * cfg.follow_offset));
          const double w = ramp(t);
          set_row(next[i], t, add(scale(row(paths[i], t), 1.0 - w), scale(target, w)));
        }
        changed.push_back(i);
      }
      break;
    }
    case EventPattern::Avoiding:
    case EventPattern::Passing: {
      const Segment seg{spec.epicenter, add(spec.epicenter, scale(spec.direction, d / plan.fps))};
      const double third = d / 3.0;
      for (int i : affected) {
        const Vec2 shift = avoidance_shift(paths[i], o, seg, spec.radius);
        if (norm(shift) == 0.0) continue;
        for (int t = o; t < F; ++t) {
          double w = ramp(t);
          if (spec.pattern == EventPattern::Passing) {
            const double s = t - o;
            w = s < third ? smoothstep(s / third) : (s <= 2.0 * third ? 1.0 : 1.0 - smoothstep((s - 2.0 * third) / third));
          }
          set_row(next[i], t, add(row(paths[i], t), scale(shift, w)));
        }
        changed.push_back(i);
      }
      break;
    }
    case EventPattern::Queuing: {
      const Vec2 dir = scale(spec.direction, 1.0 / norm(spec.direction));
      std::vector<std::pair<double, int>> order;
      for (int i : affected) order.push_back({dot(sub(row(paths[i], o), spec.epicenter), dir), i});
      std::stable_sort(order.begin(), order.end());
      for (std::size_t k = 0; k < order.size(); ++k) {
        approach(order[k].second, add(spec.epicenter, scale(dir, spec.spacing * static_cast<double>(k))));
        changed.push_back(order[k].second);
      }
      break;
    }
    case EventPattern::Encircling: {
      const int m = static_cast<int>(affected.size());
      std::vector<double> phi(m);
      for (int k = 0; k < m; ++k) {
        const Vec2 rel = sub(row(paths[affected[k]], o), spec.epicenter);
        phi[k] = std::atan2(rel[1], rel[0]);
      }
      std::vector<bool> agent_done(m, false), slot_done(m, false);
      for (int step = 0; step < m; ++step) {
        int best_a = -1, best_s = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < m; ++a) {
          if (agent_done[a]) continue;
          for (int s = 0; s < m; ++s) {
            if (slot_done[s]) continue;
            const double gap = std::abs(wrap_angle(phi[a] - 2.0 * kPi * s / m));
            if (gap < best - 1e-12) {
              best = gap;
              best_a = a;
              best_s = s;
            }
          }
        }
        agent_done[best_a] = slot_done[best_s] = true;
        approach(affected[best_a], add(spec.epicenter, polar(spec.radius, 2.0 * kPi * best_s / m)));
        changed.push_back(affected[best_a]);
      }
      break;
    }
    case EventPattern::Random: {
      for (int i : affected) {
        std::mt19937_64 r(mix64(mix64(plan.seed ^ mix64(static_cast<std::uint64_t>(i))) + static_cast<std::uint64_t>(o)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double rad = cfg.random_radius * std::sqrt(unit(r));
        const double ang = 2.0 * kPi * unit(r);
        approach(i, add(row(paths[i], o), polar(rad, ang)));
        changed.push_back(i);
      }
      break;
    }
  }

  std::sort(changed.begin(), changed.end());
  for (int i : changed) {
    const double max_step = plan.v_max / plan.fps;
    Matrix path = clamp_speed(next[i], max_step);
    if (spec.pattern == EventPattern::Passing) {
      // The forward clamp can leave an agent lagging behind its path after the window; pull it back so it is on
      // the original path from onset+duration onwards while every step stays within max_step.
      const int end = std::min(F, o + static_cast<int>(d));
      for (int t = end; t < F; ++t) set_row(path, t, row(paths[i], t));
      for (int t = std::min(end, F) - 1; t >= o; --t) {
        const Vec2 p = row(path, t), q = row(path, t + 1 < F ? t + 1 : t);
        const double len = norm(sub(p, q));
        if (len > max_step) set_row(path, t, add(q, scale(sub(p, q), max_step / len)));
      }
    }
    auto& keys = out.agents[i].keys;
    keys.clear();
    for (int t = 0; t < F; ++t) keys.push_back({t, row(path, t)});
  }
  // Paired constraints no longer hold once either partner has been moved.
  for (auto& g : out.groups) {
    for (auto& ic : g.interactions) {
      if (std::binary_search(changed.begin(), changed.end(), ic.agent_a) ||
          std::binary_search(changed.begin(), changed.end(), ic.agent_b)) {
        ic.frames.erase(std::remove_if(ic.frames.begin(), ic.frames.end(), [&](int t) { return t >= o; }),
                        ic.frames.end());
      }
    }
    g.interactions.erase(std::remove_if(g.interactions.begin(), g.interactions.end(),
                                        [](const InteractionConstraint& c) { return c.frames.empty(); }),
                         g.interactions.end());
  }
  out.events.push_back({description, spec, changed});
  out.control = trajectories_to_control(out, Interp::CatmullRom, skel);
  out.validate(skel.joints());
  return out;
}

}  // namespace cmg
