#include <gtest/gtest.h>

#include <map>

#include "cmg/config.hpp"
#include "cmg/errors.hpp"

using namespace cmg;

TEST(Config, DefaultsMatchDocumentedValues) {
  RunConfig c;
  EXPECT_EQ(c.get_int("diffusion.infer_steps"), 50);
  EXPECT_EQ(c.get_double("guidance.eta"), 0.1);
  EXPECT_EQ(c.get_int("guidance.inner_steps"), 20);
  EXPECT_EQ(c.sampler().steps, 50);
  EXPECT_EQ(c.sampler().guidance.last_n, 10);
  for (const auto& k : RunConfig::keys()) EXPECT_EQ(c.get(k.name), k.default_value) << k.name;
}

TEST(Config, UnknownKeysRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("diffusion.nonsense", "1"), ValidationError);
  EXPECT_THROW(c.get("nope"), ValidationError);
  EXPECT_THROW(c.set_assignment("guidance.eta"), ValidationError);
  EXPECT_THROW(c.load_text("model.frames = 40\nbogus.key = 3\n"), ValidationError);
}

TEST(Config, FileTextParsing) {
  RunConfig c;
  c.load_text("# comment\n\nmodel.frames = 40   # trailing\n guidance.eta=0.2\n");
  EXPECT_EQ(c.get_int("model.frames"), 40);
  EXPECT_EQ(c.get_double("guidance.eta"), 0.2);
  try {
    c.load_text("model.frames = 40\nno equals sign\n", "my.cfg");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg:2"), std::string::npos) << e.what();
  }
}

TEST(Config, EnvironmentThenExplicitSet) {
  EXPECT_EQ(RunConfig::env_name("diffusion.infer_steps"), "CMG_DIFFUSION_INFER_STEPS");
  RunConfig c;
  c.load_text("diffusion.infer_steps = 25\n");
  const std::map<std::string, std::string> env = {{"CMG_DIFFUSION_INFER_STEPS", "40"}, {"UNRELATED", "x"}};
  c.apply_env(&env);
  EXPECT_EQ(c.get_int("diffusion.infer_steps"), 40);
  c.set_assignment("diffusion.infer_steps=10");
  EXPECT_EQ(c.get_int("diffusion.infer_steps"), 10);
}

TEST(Config, TypedGettersValidate) {
  RunConfig c;
  c.set("model.frames", "abc");
  EXPECT_THROW(c.get_int("model.frames"), ValidationError);
  c.set("guidance.eta", "1e-2");
  EXPECT_EQ(c.get_double("guidance.eta"), 0.01);
  c.set("seed", "-3");
  EXPECT_THROW(c.seed(), ValidationError);
}

TEST(Config, HelpListsEveryKey) {
  const std::string help = RunConfig::help_text();
  for (const auto& k : RunConfig::keys()) EXPECT_NE(help.find(k.name), std::string::npos) << k.name;
}
