#include "cmg/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cmg {

using nlohmann::json;

Skeleton::Skeleton(std::vector<std::string> names, std::vector<int> parents, std::vector<Vector3> offsets,
                   std::array<int, 4> feet, std::array<int, 4> facing, char up_axis)
    : names_(std::move(names)),
      parents_(std::move(parents)),
      offsets_(std::move(offsets)),
      feet_(feet),
      facing_(facing) {
  const int J = static_cast<int>(parents_.size());
  require(J >= 2, "skeleton: need at least 2 joints");
  require(static_cast<int>(offsets_.size()) == J && static_cast<int>(names_.size()) == J,
          "skeleton: names/parents/offsets length mismatch");
  require(parents_[0] == -1, "skeleton: joint 0 must be the root (parent -1)");
  require(offsets_[0].isZero(0.0), "skeleton: root offset must be zero");
  for (int j = 1; j < J; ++j) {
    require(parents_[j] >= 0 && parents_[j] < j,
            "skeleton: parent of joint " + std::to_string(j) + " must precede it");
  }
  for (int f : feet_) require(f > 0 && f < J, "skeleton: foot joint index out of range");
  for (int f : facing_) require(f > 0 && f < J, "skeleton: facing joint index out of range");
  if (up_axis == 'y' || up_axis == 'Y') {
    up_ = 1;
  } else if (up_axis == 'z' || up_axis == 'Z') {
    up_ = 2;
  } else {
    throw ValidationError(std::string("skeleton: unsupported up axis '") + up_axis + "'");
  }
}

Skeleton Skeleton::humanml22() {
  std::vector<std::string> names = {
      "pelvis",     "left_hip",      "right_hip",      "spine1",     "left_knee",   "right_knee",
      "spine2",     "left_ankle",    "right_ankle",    "spine3",     "left_foot",   "right_foot",
      "neck",       "left_collar",   "right_collar",   "head",       "left_shoulder", "right_shoulder",
      "left_elbow", "right_elbow",   "left_wrist",     "right_wrist"};
  std::vector<int> parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  std::vector<Vector3> offsets = {
      {0.0, 0.0, 0.0},      {0.06, -0.09, 0.0},   {-0.06, -0.09, 0.0},  {0.0, 0.11, -0.01},
      {0.04, -0.38, 0.0},   {-0.04, -0.38, 0.0},  {0.0, 0.14, 0.01},    {0.0, -0.40, -0.04},
      {0.0, -0.40, -0.04},  {0.0, 0.05, 0.02},    {0.0, -0.06, 0.12},   {0.0, -0.06, 0.12},
      {0.0, 0.21, -0.03},   {0.08, 0.12, -0.02},  {-0.08, 0.12, -0.02}, {0.0, 0.09, 0.05},
      {0.12, 0.04, -0.01},  {-0.12, 0.04, -0.01}, {0.26, 0.0, -0.02},   {-0.26, 0.0, -0.02},
      {0.25, 0.0, 0.0},     {-0.25, 0.0, 0.0}};
  return Skeleton(std::move(names), std::move(parents), std::move(offsets), {7, 10, 8, 11}, {1, 2, 16, 17}, 'y');
}

Skeleton Skeleton::toy4() {
  std::vector<std::string> names = {"pelvis", "spine", "left_foot", "right_foot"};
  std::vector<int> parents = {-1, 0, 0, 0};
  std::vector<Vector3> offsets = {{0, 0, 0}, {0, 0.5, 0}, {0.1, -0.9, 0.05}, {-0.1, -0.9, 0.05}};
  return Skeleton(std::move(names), std::move(parents), std::move(offsets), {2, 2, 3, 3}, {2, 3, 2, 3}, 'y');
}

int Skeleton::index_of(const std::string& name) const {
  for (int j = 0; j < joints(); ++j) {
    if (names_[j] == name) return j;
  }
  throw ValidationError("skeleton: unknown joint '" + name + "'");
}

namespace {

int joint_ref(const json& v, const std::vector<std::string>& names, const std::string& path) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] == v.get<std::string>()) return static_cast<int>(j);
    }
    throw SchemaError(path, "unknown joint name '" + v.get<std::string>() + "'");
  }
  throw SchemaError(path, "expected joint index or name");
}

std::array<int, 2> joint_pair(const json& obj, const char* key, const std::vector<std::string>& names,
                              const std::string& path) {
  if (!obj.contains(key) || !obj[key].is_array() || obj[key].size() != 2) {
    throw SchemaError(path + "." + key, "expected an array of two joints");
  }
  return {joint_ref(obj[key][0], names, path + "." + key + "[0]"),
          joint_ref(obj[key][1], names, path + "." + key + "[1]")};
}

}  // namespace

Skeleton Skeleton::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("skeleton JSON: ") + e.what());
  }
  if (!doc.contains("joints") || !doc["joints"].is_array()) throw SchemaError("$.joints", "missing joint list");
  std::vector<std::string> names;
  for (std::size_t j = 0; j < doc["joints"].size(); ++j) {
    const auto& jt = doc["joints"][j];
    const std::string p = "$.joints[" + std::to_string(j) + "]";
    if (!jt.contains("name") || !jt["name"].is_string()) throw SchemaError(p + ".name", "missing name");
    names.push_back(jt["name"].get<std::string>());
  }
  std::vector<int> parents;
  std::vector<Vector3> offsets;
  for (std::size_t j = 0; j < doc["joints"].size(); ++j) {
    const auto& jt = doc["joints"][j];
    const std::string p = "$.joints[" + std::to_string(j) + "]";
    if (!jt.contains("parent")) throw SchemaError(p + ".parent", "missing parent");
    parents.push_back(jt["parent"].is_null() ? -1 : joint_ref(jt["parent"], names, p + ".parent"));
    if (!jt.contains("offset") || !jt["offset"].is_array() || jt["offset"].size() != 3) {
      throw SchemaError(p + ".offset", "expected [x, y, z]");
    }
    offsets.emplace_back(jt["offset"][0].get<double>(), jt["offset"][1].get<double>(),
                         jt["offset"][2].get<double>());
  }
  if (!doc.contains("feet") || !doc["feet"].is_object()) throw SchemaError("$.feet", "missing foot joints");
  const auto left = joint_pair(doc["feet"], "left", names, "$.feet");
  const auto right = joint_pair(doc["feet"], "right", names, "$.feet");
  std::array<int, 4> facing{};
  if (doc.contains("facing")) {
    const auto hips = joint_pair(doc["facing"], "hips", names, "$.facing");
    const auto shoulders = joint_pair(doc["facing"], "shoulders", names, "$.facing");
    facing = {hips[0], hips[1], shoulders[0], shoulders[1]};
  } else {
    facing = {left[0], right[0], left[0], right[0]};
  }
  const std::string up = doc.value("up_axis", std::string("y"));
  if (up.size() != 1) throw SchemaError("$.up_axis", "expected \"y\" or \"z\"");
  return Skeleton(std::move(names), std::move(parents), std::move(offsets), {left[0], left[1], right[0], right[1]},
                  facing, up[0]);
}

Skeleton Skeleton::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open skeleton file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Skeleton::to_json() const {
  json doc;
  doc["joints"] = json::array();
  for (int j = 0; j < joints(); ++j) {
    doc["joints"].push_back({{"name", names_[j]},
                             {"parent", parents_[j]},
                             {"offset", {offsets_[j].x(), offsets_[j].y(), offsets_[j].z()}}});
  }
  doc["feet"] = {{"left", {feet_[0], feet_[1]}}, {"right", {feet_[2], feet_[3]}}};
  doc["facing"] = {{"hips", {facing_[0], facing_[1]}}, {"shoulders", {facing_[2], facing_[3]}}};
  doc["up_axis"] = std::string(1, up_axis());
  return doc.dump(2);
}

std::vector<Vector3> Skeleton::rest_positions(double floor_clearance) const {
  const int J = joints();
  std::vector<Vector3> pos(J);
  pos[0].setZero();
  for (int j = 1; j < J; ++j) pos[j] = pos[parents_[j]] + offsets_[j];
  double lowest = 0.0;
  for (const auto& p : pos) lowest = std::min(lowest, p[up_]);
  for (auto& p : pos) p[up_] += floor_clearance - lowest;
  return pos;
}

double Skeleton::rest_pelvis_height(double floor_clearance) const {
  return rest_positions(floor_clearance)[0][up_];
}

}  // namespace cmg
