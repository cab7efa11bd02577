#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "cmg/io.hpp"
#include "cmg/motion.hpp"
#include "cmg/plan_io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Small model and few steps so the end-to-end commands stay quick.
const char* kTiny =
    " --set model.frames=16 --set model.latent=8 --set model.blocks=1 --set model.ffn=16 --set model.text_dim=32"
    " --set train.steps=3 --set diffusion.infer_steps=4 --set guidance.last_n=2 --set guidance.inner_steps=2"
    " --set train.samples=2";

// Progress lines also go to stderr; the error object is always the last line.
json last_json_line(const std::string& text) {
  std::string t = text;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  return json::parse(t.substr(t.rfind('\n') == std::string::npos ? 0 : t.rfind('\n') + 1));
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cmg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliRun run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(CMG_BINARY) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = cmg::read_file(out);
    r.err = cmg::read_file(err);
    return r;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorExitsOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("plan --scene x").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  const CliRun r = run("--json-errors plan --n 2 --out x.json");
  EXPECT_EQ(r.code, 1);
  const json e = last_json_line(r.err);
  EXPECT_EQ(e["error"]["kind"], "usage");
  EXPECT_EQ(e["error"]["exit_code"], 1);
}

TEST_F(Cli, ValidationErrorExitsTwo) {
  EXPECT_EQ(run("--set nope.key=1 plan --scene x --n 2 --out " + path("p.json")).code, 2);
  const CliRun r = run("--json-errors plan --scene x --n 3 --sigma 4 --out " + path("p.json"));
  EXPECT_EQ(r.code, 2);
  const json e = last_json_line(r.err);
  EXPECT_EQ(e["error"]["kind"], "validation");
  EXPECT_NE(e["error"]["message"].get<std::string>().find("sigma"), std::string::npos);
  EXPECT_EQ(run("generate --plan " + path("missing.json") + " --weights w --out o.cmg").code, 2);
}

TEST_F(Cli, RuntimeErrorExitsThree) {
  const CliRun r = run("--json-errors plan --scene x --n 2 --offline --out " + path("no/such/dir/p.json"));
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(last_json_line(r.err)["error"]["kind"], "runtime");
}

TEST_F(Cli, PlanOfflineFallsBack) {
  const CliRun r = run("--seed 3 plan --scene \"a public square\" --n 4 --offline --backend llm --out " + path("p.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const cmg::ScenePlan plan = cmg::read_plan(path("p.json"));
  EXPECT_EQ(plan.provenance, "fallback");
  EXPECT_EQ(plan.n(), 4);
  EXPECT_EQ(plan.seed, 3u);
}

TEST_F(Cli, PlanWithEvent) {
  const CliRun r = run("plan --scene \"a public square\" --n 5 --offline --event \"people line up at the kiosk\" "
                    "--direction 1,0 --onset 10 --duration 30 --out " + path("p.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const cmg::ScenePlan plan = cmg::read_plan(path("p.json"));
  ASSERT_EQ(plan.events.size(), 1u);
  EXPECT_EQ(plan.events[0].spec.pattern, cmg::EventPattern::Queuing);
}

TEST_F(Cli, ConvertRoundTrip) {
  const cmg::Skeleton skel = cmg::Skeleton::humanml22();
  std::mt19937_64 rng(5);
  cmg::MotionFile rel;
  rel.J = 22;
  rel.joint_names = skel.names();
  for (int k = 0; k < 2; ++k) rel.tensors.push_back(cmg::fixtures::random_relative(skel, 12, rng));
  cmg::write_motion(rel, path("rel.cmg"));
  ASSERT_EQ(run("convert --in " + path("rel.cmg") + " --out " + path("glob.cmg") + " --repr global").code, 0);
  ASSERT_EQ(run("convert --in " + path("glob.cmg") + " --out " + path("rel2.cmg") + " --repr relative").code, 0);
  ASSERT_EQ(run("convert --in " + path("rel2.cmg") + " --out " + path("glob2.cmg") + " --repr global").code, 0);
  ASSERT_EQ(run("convert --in " + path("glob.cmg") + " --out " + path("glob.csv")).code, 0);
  const auto g1 = cmg::read_motion(path("glob.cmg"));
  const auto g2 = cmg::read_motion(path("glob2.cmg"));
  EXPECT_EQ(g1.repr, "global");
  ASSERT_EQ(g1.n(), 2);
  // The relative form drops the initial ground placement, so compare after rigid alignment.
  for (int k = 0; k < 2; ++k) {
    cmg::GlobalMotion a, b;
    a.positions = g1.tensors[k];
    b.positions = g2.tensors[k];
    EXPECT_LT(cmg::fixtures::aligned_error(a, b, skel), 1e-4);
  }
  const auto csv = cmg::motion_from_csv(cmg::read_file(path("glob.csv")));
  for (int k = 0; k < 2; ++k) EXPECT_LT((csv.tensors[k] - g1.tensors[k]).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(Cli, TrainGenerateEval) {
  const std::string tiny = kTiny;
  const CliRun t = run(tiny + " train-toy --out " + path("w.cmgw"));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(json::parse(t.out).contains("final"));
  ASSERT_EQ(run(tiny + " plan --scene \"a park\" --n 2 --offline --out " + path("p.json")).code, 0);
  const CliRun g = run(tiny + " generate --plan " + path("p.json") + " --weights " + path("w.cmgw") + " --out " +
                    path("rel.cmg") + " --global-out " + path("glob.cmg"));
  ASSERT_EQ(g.code, 0) << g.err;
  const auto rel = cmg::read_motion(path("rel.cmg"));
  EXPECT_EQ(rel.n(), 2);
  EXPECT_EQ(rel.frames(), 16);
  const CliRun e = run(tiny + " eval --motion " + path("glob.cmg") + " --plan " + path("p.json"));
  ASSERT_EQ(e.code, 0) << e.err;
  const json report = json::parse(e.out);
  EXPECT_TRUE(report["metrics"].contains("foot_skating_ratio")) << e.out;
  EXPECT_TRUE(report["metrics"]["spatial"]["defined"].get<bool>());
}
