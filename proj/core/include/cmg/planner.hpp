#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cmg/motion.hpp"
#include "cmg/skeleton.hpp"

namespace cmg {

class PlannerLLMClient;

/// Ground-plane point (a, b) in the skeleton's ground axes.
using Vec2 = std::array<double, 2>;

struct CrowdParams {
  int n = 1;
  double s = 1.0;      // average group size
  double sigma = 0.5;  // crowd density in [0, 1]
  double alpha = 0.5;  // interaction intensity in [0, 1]

  void validate() const;
};

enum class Formation { Cluster, Circle, Line, Pair };
std::string to_string(Formation f);
Formation parse_formation(const std::string& s);

/// Paired joint constraint: joint_a of agent_a and joint_b of agent_b are `distance` apart on `frames`.
struct InteractionConstraint {
  int agent_a = 0;
  int joint_a = 0;
  int agent_b = 0;
  int joint_b = 0;
  double distance = 0.2;
  std::vector<int> frames;
};

struct Group {
  int id = 0;
  std::vector<int> members;
  std::string activity;       // catalog id, or free text from the LLM
  std::string activity_text;  // text prompt for the motion model
  Vec2 anchor{0.0, 0.0};
  Formation formation = Formation::Cluster;
  bool close_interaction = false;
  std::vector<InteractionConstraint> interactions;
};

struct Keyframe {
  int frame = 0;
  Vec2 p{0.0, 0.0};
};

struct AgentTrack {
  int id = 0;
  int group = 0;
  std::string text;
  double heading = 0.0;  // facing yaw at frame 0 (0 = +b axis)
  std::vector<Keyframe> keys;  // pelvis ground positions, world frame, strictly increasing frames
};

enum class EventPattern { Following, Avoiding, Queuing, Encircling, Passing, Random };
const std::vector<std::string>& event_pattern_names();
std::string to_string(EventPattern p);
/// Case-insensitive; unknown names raise ValidationError listing the six patterns.
EventPattern parse_event_pattern(const std::string& s);

struct EventSpec {
  EventPattern pattern = EventPattern::Random;
  Vec2 epicenter{0.0, 0.0};  // obstacle start, queue head, ring centre
  Vec2 direction{0.0, 0.0};  // obstacle velocity (m/s) or queue direction
  double radius = 1.5;       // ring radius or avoidance clearance
  double spacing = 0.8;      // queue spacing
  int onset_frame = 0;
  int duration_frames = 40;
  int leader_agent = 0;
  std::vector<int> agents;  // affected agents; empty = every agent

  void validate(int frames) const;
};

struct EventRecord {
  std::string description;
  EventSpec spec;
  std::vector<int> affected;
};

struct PlannerConfig {
  int frames = 60;
  double fps = 20.0;
  double arena = 20.0;          // m, side of the square arena for anchors
  double base_spacing = 4.0;    // m; anchor spacing = base_spacing * (1.5 - sigma)
  double alpha_interact = 0.7;  // alpha at or above this tags a group for close interaction
  double v_max = 1.5;           // m/s
  double eps_return = 0.1;      // m
  double walk_speed = 0.6;      // m/s
  double handshake_distance = 0.2;
  double follow_delay = 0.5;    // s
  double follow_offset = 0.6;   // m
  double random_radius = 3.0;   // m
  double pelvis_height = 0.0;   // m; 0 = standing height of the skeleton
  int keyframe_stride = 15;
  int llm_candidates = 3;

  void validate() const;
};

enum class Interp { CatmullRom, Linear };
Interp parse_interp(const std::string& s);
std::string to_string(Interp i);

struct ScenePlan {
  static constexpr const char* kVersion = "cmg_plan_v1";
  std::string scene;
  CrowdParams params;
  std::vector<Group> groups;
  std::vector<AgentTrack> agents;
  std::vector<EventRecord> events;
  int frames = 60;
  double fps = 20.0;
  double pelvis_height = 0.9;
  double v_max = 1.5;                   // m/s, applied when densifying tracks
  std::string provenance = "fallback";  // "llm" | "fallback"
  std::string provenance_note;          // why a fallback happened, candidate scores, ...
  std::uint64_t seed = 0;
  std::vector<SpatialControl> control;  // world-frame targets per agent

  int n() const { return static_cast<int>(agents.size()); }
  /// Throws ValidationError unless groups partition the agents and control entries are consistent.
  void validate(int joints) const;
};

/// Activity catalog used by the deterministic planner.
struct CatalogActivity {
  std::string id;
  std::string text;
  Formation formation;
  bool moving;
};
const std::vector<CatalogActivity>& activity_catalog();

/// g = max(1, ceil(n / s)) groups with sizes differing by at most one (round-robin remainder), members
/// shuffled by `rng`. Groups are returned largest first.
std::vector<std::vector<int>> divide_groups(const CrowdParams& params, std::mt19937_64& rng);

enum class Backend { Llm, Fallback };
Backend parse_backend(const std::string& s);
std::string to_string(Backend b);

/// Crowd parameters for a scene and head count: asked from the LLM when available, otherwise read off
/// scene keywords. `note` (optional) receives the reason for a fallback.
CrowdParams derive_params(const std::string& scene, int n, Backend backend, PlannerLLMClient* llm = nullptr,
                          std::string* note = nullptr);

/// Builds a plan; LLM failures fall back to the deterministic planner and are recorded in provenance.
ScenePlan plan_scene(const std::string& scene, const CrowdParams& params, Backend backend, std::uint64_t seed,
                     const Skeleton& skel, const PlannerConfig& cfg, PlannerLLMClient* llm = nullptr);

/// Pattern suggested by keywords in an event description; Random when nothing matches.
EventPattern pattern_from_keywords(const std::string& description);

/// Rewrites agent trajectories from event.onset_frame. With the LLM backend the event text is interpreted
/// by the model when possible; otherwise `event` is used as given.
ScenePlan apply_event(const ScenePlan& plan, const std::string& description, const EventSpec& event, Backend backend,
                      const Skeleton& skel, const PlannerConfig& cfg, PlannerLLMClient* llm = nullptr);

/// Dense pelvis ground path (frames x 2) of one agent. Frames before the first key hold the first key,
/// frames after the last key hold the last one. Keys out of order raise ValidationError.
Matrix densify_track(const AgentTrack& track, int frames, Interp interp);
/// densify_track followed by clamp_speed at the plan's v_max.
Matrix agent_path(const ScenePlan& plan, int agent, Interp interp = Interp::CatmullRom);

/// Dense pelvis paths for all agents plus interaction joints at their constraint frames, in world
/// coordinates. The mask is 1 exactly at written entries.
std::vector<SpatialControl> trajectories_to_control(const ScenePlan& plan, Interp interp, const Skeleton& skel);

/// Catmull-Rom (uniform, endpoint-clamped) through keys; evaluates at integer frames.
double catmull_rom(double p0, double p1, double p2, double p3, double u);

/// Limits per-frame displacement to v_max / fps by pursuing the requested path.
Matrix clamp_speed(const Matrix& path, double max_step);

/// Agent's canonical frame: origin at its frame-0 pelvis, rotated by its heading.
GroundFrame agent_frame(const ScenePlan& plan, int agent);

/// Control of one agent expressed in its canonical frame (what the motion model consumes).
SpatialControl canonical_control(const ScenePlan& plan, int agent, const Skeleton& skel);

double standing_pelvis_height(const Skeleton& skel);
/// Hand height used for paired hand constraints, relative to the plan's pelvis height.
constexpr double kHandAbovePelvis = 0.1;

}  // namespace cmg
