#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cmg/llm.hpp"
#include "cmg/pipeline.hpp"
#include "cmg/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string skeleton_file;
  bool json_errors = false;
  bool quiet = false;
};

cmg::RunConfig load_config(const Common& c) {
  cmg::RunConfig cfg;
  if (!c.config_file.empty()) cfg.load_file(c.config_file);
  cfg.apply_env();
  for (const auto& s : c.sets) cfg.set_assignment(s);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

cmg::Skeleton load_skeleton(const Common& c) {
  return c.skeleton_file.empty() ? cmg::Skeleton::humanml22() : cmg::Skeleton::load(c.skeleton_file);
}

cmg::Vec2 parse_vec2(const std::string& s, const char* what) {
  const auto comma = s.find(',');
  cmg::require(comma != std::string::npos, std::string(what) + ": expected a,b");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw cmg::ValidationError(std::string(what) + ": expected a,b");
  }
}

void say(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << "\n";
}

// ---------------------------------------------------------------------------------------------

struct PlanArgs {
  std::string scene;
  int n = 0;
  std::optional<double> s, sigma, alpha;
  std::string backend;
  bool offline = false;
  std::string event;
  std::string pattern;
  std::string epicenter = "0,0";
  std::string direction = "1,0";
  double radius = 1.5;
  double spacing = 0.8;
  int onset = 0;
  int duration = 40;
  int leader = 0;
  std::vector<int> agents;
  std::string out;
};

cmg::ScenePlan build_plan(const PlanArgs& a, const cmg::RunConfig& cfg, const cmg::Skeleton& skel, const Common& c) {
  cmg::Backend backend = cmg::parse_backend(a.backend.empty() ? cfg.get("planner.backend") : a.backend);
  cmg::LlmConfig lc = cfg.llm().with_env();
  if (a.offline) {
    lc.offline = true;
    backend = cmg::Backend::Fallback;
  }
  cmg::PlannerLLMClient client(lc);
  cmg::PlannerLLMClient* llm = backend == cmg::Backend::Llm ? &client : nullptr;
  const cmg::PlannerConfig pc = cfg.planner();

  cmg::CrowdParams params;
  std::string note;
  if (a.s && a.sigma && a.alpha) {
    params = {a.n, *a.s, *a.sigma, *a.alpha};
  } else {
    params = cmg::derive_params(a.scene, a.n, backend, llm, &note);
    if (a.s) params.s = *a.s;
    if (a.sigma) params.sigma = *a.sigma;
    if (a.alpha) params.alpha = *a.alpha;
  }
  cmg::ScenePlan plan = cmg::plan_scene(a.scene, params, backend, cfg.seed(), skel, pc, llm);
  if (!note.empty()) plan.provenance_note = note + (plan.provenance_note.empty() ? "" : "; " + plan.provenance_note);
  if (!a.event.empty()) {
    cmg::EventSpec ev;
    ev.pattern = a.pattern.empty() ? cmg::pattern_from_keywords(a.event) : cmg::parse_event_pattern(a.pattern);
    ev.epicenter = parse_vec2(a.epicenter, "--epicenter");
    ev.direction = parse_vec2(a.direction, "--direction");
    ev.radius = a.radius;
    ev.spacing = a.spacing;
    ev.onset_frame = a.onset;
    ev.duration_frames = a.duration;
    ev.leader_agent = a.leader;
    ev.agents = a.agents;
    plan = cmg::apply_event(plan, a.event, ev, backend, skel, pc, llm);
  }
  const cmg::Interp interp = cmg::parse_interp(cfg.get("planner.interp"));
  if (interp != cmg::Interp::CatmullRom) plan.control = cmg::trajectories_to_control(plan, interp, skel);
  say(c, "plan: " + std::to_string(plan.n()) + " agents in " + std::to_string(plan.groups.size()) +
             " groups, provenance " + plan.provenance);
  return plan;
}

// ---------------------------------------------------------------------------------------------

std::string ext_of(const std::string& path) { return fs::path(path).extension().string(); }

cmg::MotionFile read_any_motion(const std::string& path) {
  return ext_of(path) == ".csv" ? cmg::motion_from_csv(cmg::read_file(path)) : cmg::read_motion(path);
}

void write_any_motion(const cmg::MotionFile& m, const std::string& path) {
  if (ext_of(path) == ".csv") {
    cmg::write_file(path, cmg::motion_to_csv(m));
  } else {
    cmg::write_motion(m, path);
  }
}

cmg::MotionFile convert_repr(const cmg::MotionFile& in, const std::string& repr, const cmg::Skeleton& skel) {
  if (repr.empty() || repr == in.repr) return in;
  cmg::require(repr == "relative" || repr == "global", "--repr must be relative or global");
  cmg::MotionFile out = in;
  out.repr = repr;
  out.tensors.clear();
  if (repr == "global") {
    for (const auto& g : cmg::global_motions(in, skel)) out.tensors.push_back(g.positions);
  } else {
    for (const auto& g : cmg::global_motions(in, skel)) out.tensors.push_back(cmg::global_to_relative(g, skel).data);
  }
  if (out.joint_names.empty()) out.joint_names = skel.names();
  return out;
}

json train_summary(const cmg::TrainReport& r) {
  auto parts = [](const cmg::LossParts& p) {
    return json{{"total", cmg::round_sig9(p.total)},
                {"whole", cmg::round_sig9(p.whole)},
                {"con", cmg::round_sig9(p.con)},
                {"foot", cmg::round_sig9(p.foot)}};
  };
  return {{"initial", parts(r.initial)}, {"final", parts(r.final)}};
}

int report_error(const Common& c, int code, const char* kind, const std::string& msg) {
  if (c.json_errors) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", msg}, {"exit_code", code}}}}.dump() << "\n";
  } else {
    std::cerr << "cmg: " << kind << " error: " << msg << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Common common;
  CLI::App app{"cmg: crowd scene planning and controllable motion generation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");
  app.footer(cmg::RunConfig::help_text());
  app.add_option("--config", common.config_file, "Config file (key = value lines)");
  app.add_option("--set", common.sets, "Override a config key: --set key=value (repeatable)");
  app.add_option("--seed", common.seed, "Run seed (same as --set seed=N)");
  app.add_option("--skeleton", common.skeleton_file, "Skeleton JSON (default: 22-joint humanml layout)");
  app.add_flag("--json-errors", common.json_errors, "Print errors as one JSON object on stderr");
  app.add_flag("--quiet", common.quiet, "Suppress progress messages");

  PlanArgs pa;
  auto* plan_cmd = app.add_subcommand("plan", "Plan a crowd scene and write cmg_plan_v1 JSON");
  plan_cmd->add_option("--scene", pa.scene, "Scene description")->required();
  plan_cmd->add_option("--n", pa.n, "Number of agents")->required()->check(CLI::PositiveNumber);
  plan_cmd->add_option("--s", pa.s, "Average group size");
  plan_cmd->add_option("--sigma", pa.sigma, "Crowd density in [0, 1]");
  plan_cmd->add_option("--alpha", pa.alpha, "Interaction intensity in [0, 1]");
  plan_cmd->add_option("--backend", pa.backend, "llm or fallback (default: planner.backend)");
  plan_cmd->add_flag("--offline", pa.offline, "Never contact the LLM; use the deterministic planner");
  plan_cmd->add_option("--event", pa.event, "Event description to apply after planning");
  plan_cmd->add_option("--pattern", pa.pattern, "Response pattern (default: from event keywords)");
  plan_cmd->add_option("--epicenter", pa.epicenter, "Event point a,b (m)");
  plan_cmd->add_option("--direction", pa.direction, "Obstacle velocity or queue direction a,b");
  plan_cmd->add_option("--radius", pa.radius, "Ring radius or avoidance clearance (m)");
  plan_cmd->add_option("--spacing", pa.spacing, "Queue spacing (m)");
  plan_cmd->add_option("--onset", pa.onset, "Event onset frame");
  plan_cmd->add_option("--duration", pa.duration, "Event duration in frames");
  plan_cmd->add_option("--leader", pa.leader, "Leader agent for Following");
  plan_cmd->add_option("--agents", pa.agents, "Affected agents (default: all)");
  plan_cmd->add_option("--out", pa.out, "Output plan JSON")->required();

  std::string gen_plan, gen_weights, gen_out, gen_global_out;
  auto* gen_cmd = app.add_subcommand("generate", "Generate per-agent motion for a plan");
  gen_cmd->add_option("--plan", gen_plan, "Plan JSON")->required();
  gen_cmd->add_option("--weights", gen_weights, "CMGW checkpoint")->required();
  gen_cmd->add_option("--out", gen_out, "Relative-representation MotionFile (.csv for CSV)")->required();
  gen_cmd->add_option("--global-out", gen_global_out, "World-frame global MotionFile");

  std::string train_out;
  int log_every = 100;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the denoiser on synthetic sequences");
  train_cmd->add_option("--out", train_out, "Output CMGW checkpoint")->required();
  train_cmd->add_option("--log-every", log_every, "Progress interval in steps (0 = silent)");

  std::string eval_motion, eval_plan, eval_ref, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Compute metrics and write a JSON report");
  eval_cmd->add_option("--motion", eval_motion, "MotionFile to evaluate")->required();
  eval_cmd->add_option("--plan", eval_plan, "Plan whose controls define spatial errors");
  eval_cmd->add_option("--reference", eval_ref, "Reference MotionFile for FID (default: synthetic set)");
  eval_cmd->add_option("--out", eval_out, "Report path (default: stdout)");

  std::string conv_in, conv_out, conv_repr;
  auto* conv_cmd = app.add_subcommand("convert", "Convert MotionFile <-> CSV and relative <-> global");
  conv_cmd->add_option("--in", conv_in, "Input (.csv or MotionFile)")->required();
  conv_cmd->add_option("--out", conv_out, "Output (.csv or MotionFile)")->required();
  conv_cmd->add_option("--repr", conv_repr, "Target representation: relative or global");

  std::string demo_dir = "demo_out", demo_weights;
  int demo_agents = 4;
  int demo_train_steps = 150;
  auto* demo_cmd = app.add_subcommand("demo", "Offline end to end: train or load, plan, generate, eval");
  demo_cmd->add_option("--out-dir", demo_dir, "Output directory");
  demo_cmd->add_option("--weights", demo_weights, "Use this checkpoint instead of training");
  demo_cmd->add_option("--agents", demo_agents, "Number of agents")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--train-steps", demo_train_steps, "Training steps when no --weights is given")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (common.json_errors) return report_error(common, kUsage, "usage", e.what());
    app.exit(e);
    return kUsage;
  }

  try {
    const cmg::RunConfig cfg = load_config(common);
    const cmg::Skeleton skel = load_skeleton(common);

    if (*plan_cmd) {
      cmg::write_plan(build_plan(pa, cfg, skel, common), pa.out);
    } else if (*gen_cmd) {
      const cmg::ScenePlan plan = cmg::read_plan(gen_plan);
      const auto motions = cmg::generate_motions(plan, cmg::load_weights(gen_weights), cfg, skel);
      write_any_motion(motions.relative, gen_out);
      if (!gen_global_out.empty()) write_any_motion(motions.global, gen_global_out);
      say(common, "generated " + std::to_string(motions.relative.n()) + " sequences");
    } else if (*train_cmd) {
      cmg::TrainReport report;
      const auto weights = cmg::train_toy_model(cfg, skel, &report, [&](int step, const cmg::LossParts& p) {
        if (log_every > 0 && step % log_every == 0) {
          std::ostringstream msg;
          msg << "step " << step << " loss " << p.total << " (whole " << p.whole << ", con " << p.con << ", foot "
              << p.foot << ")";
          say(common, msg.str());
        }
      });
      cmg::save_weights(weights, train_out);
      std::cout << cmg::dump_json(train_summary(report));
    } else if (*eval_cmd) {
      const cmg::MotionFile motion = read_any_motion(eval_motion);
      std::optional<cmg::ScenePlan> plan;
      if (!eval_plan.empty()) plan = cmg::read_plan(eval_plan);
      std::optional<cmg::MotionFile> ref;
      if (!eval_ref.empty()) ref = read_any_motion(eval_ref);
      const std::string text = cmg::dump_json(
          cmg::evaluate_motions(motion, plan ? &*plan : nullptr, ref ? &*ref : nullptr, cfg, skel));
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        cmg::write_file(eval_out, text);
      }
    } else if (*conv_cmd) {
      write_any_motion(convert_repr(read_any_motion(conv_in), conv_repr, skel), conv_out);
    } else if (*demo_cmd) {
      fs::create_directories(demo_dir);
      const fs::path dir(demo_dir);
      cmg::DenoiserWeights weights = [&] {
        if (!demo_weights.empty()) return cmg::load_weights(demo_weights);
        cmg::RunConfig tc = cfg;
        tc.set("train.steps", std::to_string(demo_train_steps));
        say(common, "demo: training toy model (" + tc.get("train.steps") + " steps)");
        return cmg::train_toy_model(tc, skel);
      }();
      cmg::save_weights(weights, (dir / "weights.cmgw").string());
      PlanArgs demo_plan;
      demo_plan.scene = "a public square where people meet and a street performer starts a show";
      demo_plan.n = demo_agents;
      demo_plan.offline = true;
      demo_plan.event = "a street performer starts a show and people gather around";
      demo_plan.radius = 2.0;
      demo_plan.onset = cfg.get_int("model.frames") / 4;
      demo_plan.duration = cfg.get_int("model.frames") / 2;
      const cmg::ScenePlan built = build_plan(demo_plan, cfg, skel, common);
      cmg::write_plan(built, (dir / "plan.json").string());
      // Generate from the serialized plan so a rerun from plan.json gives the same bytes.
      const cmg::ScenePlan plan = cmg::read_plan((dir / "plan.json").string());
      const auto motions = cmg::generate_motions(plan, weights, cfg, skel);
      cmg::write_motion(motions.relative, (dir / "motion_relative.cmg").string());
      cmg::write_motion(motions.global, (dir / "motion_global.cmg").string());
      cmg::write_file((dir / "metrics.json").string(),
                      cmg::dump_json(cmg::evaluate_motions(motions.global, &plan, nullptr, cfg, skel)));
      say(common, "demo: wrote " + demo_dir + "/{weights.cmgw, plan.json, motion_relative.cmg, motion_global.cmg, "
                                              "metrics.json}");
    }
  } catch (const cmg::ValidationError& e) {
    return report_error(common, kValidation, "validation", e.what());
  } catch (const cmg::RuntimeError& e) {
    return report_error(common, kRuntime, "runtime", e.what());
  } catch (const std::exception& e) {
    return report_error(common, kRuntime, "runtime", e.what());
  }
  return kOk;
}
