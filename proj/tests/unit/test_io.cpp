#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>

#include "cmg/errors.hpp"
#include "cmg/io.hpp"
#include "cmg/plan_io.hpp"
#include "oracles.hpp"

using namespace cmg;

namespace {

// Values exactly representable in f32, so the file round trip is lossless.
Matrix f32_matrix(int r, int c, std::mt19937_64& rng) {
  Matrix m = fixtures::random_matrix(r, c, rng, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
  return m;
}

MotionFile sample_file(std::uint64_t seed, const std::string& repr = "relative") {
  const Skeleton skel = Skeleton::toy4();
  std::mt19937_64 rng(seed);
  MotionFile m;
  m.repr = repr;
  m.fps = 20.0;
  m.J = 4;
  m.joint_names = skel.names();
  for (int k = 0; k < 3; ++k) m.tensors.push_back(f32_matrix(7, m.cols(), rng));
  return m;
}

// Rewrites the JSON header of a framed blob, keeping the payload.
std::string with_header(const std::string& bytes, const std::function<void(nlohmann::json&)>& edit) {
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  auto h = nlohmann::json::parse(bytes.substr(8, len));
  edit(h);
  const std::string hs = h.dump();
  std::string out = bytes.substr(0, 4);
  for (int i = 0; i < 4; ++i) out += static_cast<char>((hs.size() >> (8 * i)) & 0xff);
  return out + hs + bytes.substr(8 + len);
}

}  // namespace

TEST(MotionFile, BitIdenticalRoundTrip) {
  for (const char* repr : {"relative", "global"}) {
    const MotionFile m = sample_file(1, repr);
    const std::string bytes = encode_motion(m);
    const MotionFile back = decode_motion(bytes);
    EXPECT_EQ(back.repr, m.repr);
    EXPECT_EQ(back.J, 4);
    EXPECT_EQ(back.fps, 20.0);
    EXPECT_EQ(back.joint_names, m.joint_names);
    ASSERT_EQ(back.n(), 3);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(back.tensors[k], m.tensors[k]);
    EXPECT_EQ(encode_motion(back), bytes);
  }
}

TEST(MotionFile, LayoutIsMagicLengthHeaderPayload) {
  const MotionFile m = sample_file(2);
  const std::string bytes = encode_motion(m);
  EXPECT_EQ(bytes.substr(0, 4), "CMG1");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  const auto h = nlohmann::json::parse(bytes.substr(8, len));
  EXPECT_EQ(h["n"], 3);
  EXPECT_EQ(h["f"], 7);
  EXPECT_EQ(h["D"], relative_dim(4));
  EXPECT_EQ(h["dtype"], "f32le");
  EXPECT_EQ(bytes.size(), 8 + len + 3u * 7 * relative_dim(4) * 4);
  // First payload value is tensor 0, frame 0, channel 0.
  float v = 0;
  std::memcpy(&v, bytes.data() + 8 + len, 4);
  EXPECT_EQ(static_cast<double>(v), m.tensors[0](0, 0));
  std::memcpy(&v, bytes.data() + 8 + len + 4, 4);
  EXPECT_EQ(static_cast<double>(v), m.tensors[0](0, 1));
}

TEST(MotionFile, TruncatedPayloadNamesByteCounts) {
  const std::string bytes = encode_motion(sample_file(3));
  const std::string cut = bytes.substr(0, bytes.size() - 10);
  try {
    decode_motion(cut);
    FAIL() << "expected TruncatedPayloadError";
  } catch (const TruncatedPayloadError& e) {
    EXPECT_EQ(e.actual_bytes + 10, e.expected_bytes);
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(e.expected_bytes)), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(e.actual_bytes)), std::string::npos);
  }
}

TEST(MotionFile, MagicMismatch) {
  std::string bytes = encode_motion(sample_file(4));
  bytes[3] = 'X';
  EXPECT_THROW(decode_motion(bytes), MagicMismatchError);
  EXPECT_THROW(decode_motion("CM"), MagicMismatchError);
}

TEST(MotionFile, HeaderInconsistentWithJ) {
  const std::string bytes = encode_motion(sample_file(5));
  EXPECT_THROW(decode_motion(with_header(bytes, [](auto& h) { h["J"] = 5; })), HeaderMismatchError);
  EXPECT_THROW(decode_motion(with_header(bytes, [](auto& h) { h["version"] = 2; })), UnsupportedVersionError);
  try {
    decode_motion(with_header(bytes, [](auto& h) { h.erase("fps"); }));
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.fps");
  }
  EXPECT_THROW(decode_motion(bytes + "xx"), HeaderMismatchError);
}

TEST(MotionFile, ValidationOnWrite) {
  MotionFile m = sample_file(6);
  m.tensors[1] = Matrix::Zero(6, m.cols());
  EXPECT_THROW(encode_motion(m), ValidationError);
}

TEST(MotionFile, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "cmg_io_roundtrip.cmg").string();
  const MotionFile m = sample_file(7);
  write_motion(m, path);
  EXPECT_EQ(encode_motion(read_motion(path)), encode_motion(m));
  std::filesystem::remove(path);
}

TEST(MotionCsv, RoundTripAtNineDigits) {
  const MotionFile m = sample_file(8, "global");
  const std::string csv = motion_to_csv(m);
  const MotionFile back = motion_from_csv(csv);
  ASSERT_EQ(back.n(), m.n());
  EXPECT_EQ(back.repr, "global");
  EXPECT_EQ(back.joint_names, m.joint_names);
  for (int k = 0; k < m.n(); ++k) {
    const double err = (back.tensors[k] - m.tensors[k]).cwiseAbs().maxCoeff();
    EXPECT_LT(err, 1e-8);
  }
  EXPECT_EQ(motion_to_csv(back), csv);
}

TEST(Weights, RoundTrip) {
  DenoiserConfig cfg;
  cfg.frames = 8;
  cfg.joints = 4;
  cfg.latent = 8;
  cfg.blocks = 2;
  cfg.ffn = 12;
  cfg.text_dim = 8;
  const auto w = DenoiserWeights::init(cfg, 3);
  const std::string bytes = encode_weights(w);
  EXPECT_EQ(bytes.substr(0, 4), "CMGW");
  const auto back = decode_weights(bytes);
  EXPECT_TRUE(back.config() == cfg);
  EXPECT_EQ(back.seed(), 3u);
  ASSERT_EQ(back.tensors().size(), w.tensors().size());
  for (std::size_t i = 0; i < w.tensors().size(); ++i) {
    EXPECT_EQ(back.tensors()[i].name, w.tensors()[i].name);
    EXPECT_LT((back.tensors()[i].value - w.tensors()[i].value).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_EQ(encode_weights(back), bytes);
  EXPECT_THROW(decode_weights(bytes.substr(0, bytes.size() - 4)), TruncatedPayloadError);
  EXPECT_THROW(decode_weights(encode_motion(sample_file(9))), MagicMismatchError);
}

TEST(RoundSig9, KeepsNineDigits) {
  EXPECT_EQ(round_sig9(0.1234567891234), 0.123456789);
  EXPECT_EQ(round_sig9(123456789012.0), 123456789000.0);
  EXPECT_EQ(round_sig9(0.0), 0.0);
  EXPECT_EQ(round_sig9(-2.5), -2.5);
}

namespace {

ScenePlan sample_plan() {
  PlannerConfig cfg;
  const Skeleton skel = Skeleton::humanml22();
  ScenePlan p = plan_scene("friends at a party", CrowdParams{5, 2.0, 0.4, 0.8}, Backend::Fallback, 17, skel, cfg);
  EventSpec e;
  e.pattern = EventPattern::Encircling;
  e.epicenter = {0.5, -0.25};
  e.radius = 2.0;
  e.onset_frame = 20;
  e.duration_frames = 30;
  return apply_event(p, "gather around", e, Backend::Fallback, skel, cfg);
}

}  // namespace

TEST(PlanJson, SerializeParseSerializeIsByteIdentical) {
  const std::string a = serialize_plan(sample_plan());
  const std::string b = serialize_plan(parse_plan(a));
  EXPECT_EQ(a, b);
}

TEST(PlanJson, MissingGroupsNamesPath) {
  auto doc = nlohmann::json::parse(serialize_plan(sample_plan()));
  doc.erase("groups");
  try {
    parse_plan(doc.dump());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.groups");
  }
}

TEST(PlanJson, NestedSchemaPath) {
  auto doc = nlohmann::json::parse(serialize_plan(sample_plan()));
  doc["groups"][1]["close_interaction"] = "yes";
  try {
    parse_plan(doc.dump());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.groups[1].close_interaction");
  }
}

TEST(PlanJson, UnsupportedVersion) {
  auto doc = nlohmann::json::parse(serialize_plan(sample_plan()));
  doc["version"] = "cmg_plan_v2";
  EXPECT_THROW(parse_plan(doc.dump()), UnsupportedVersionError);
}

TEST(PlanJson, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "cmg_io_plan.json").string();
  const ScenePlan p = sample_plan();
  write_plan(p, path);
  EXPECT_EQ(serialize_plan(read_plan(path)), serialize_plan(p));
  std::filesystem::remove(path);
}
