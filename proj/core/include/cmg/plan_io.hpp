#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "cmg/planner.hpp"

namespace cmg {

/// Canonical cmg_plan_v1 document: sorted keys, floats rounded to 9 significant digits, so equal plans
/// serialize to identical bytes.
nlohmann::json plan_to_json(const ScenePlan& plan);
std::string serialize_plan(const ScenePlan& plan);

/// Throws SchemaError naming the JSON path of the first problem, UnsupportedVersionError for other
/// version tags, ValidationError when the content is well-formed but inconsistent.
ScenePlan plan_from_json(const nlohmann::json& doc);
ScenePlan parse_plan(const std::string& text);

void write_plan(const ScenePlan& plan, const std::string& path);
ScenePlan read_plan(const std::string& path);

}  // namespace cmg
