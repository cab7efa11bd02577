#include "cmg/llm.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

#include "cmg/planner.hpp"
#include "prompts_data.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that collides with Eigen names.
#include <httplib.h>

namespace cmg {

using nlohmann::json;

LlmConfig LlmConfig::with_env() const {
  LlmConfig c = *this;
  if (const char* v = std::getenv("CMG_LLM_ENDPOINT"); v && *v) c.endpoint = v;
  if (const char* v = std::getenv("CMG_LLM_API_KEY"); v && *v) c.api_key = v;
  if (const char* v = std::getenv("CMG_LLM_MODEL"); v && *v) c.model = v;
  return c;
}

std::string to_string(LlmErrorKind k) {
  switch (k) {
    case LlmErrorKind::Timeout: return "timeout";
    case LlmErrorKind::HttpStatus: return "http_status";
    case LlmErrorKind::SchemaViolation: return "schema_violation";
    case LlmErrorKind::Transport: return "transport";
    case LlmErrorKind::NotConfigured: return "not_configured";
  }
  return "unknown";
}

const std::string& prompt_template(const std::string& id) {
  const auto& all = detail::embedded_prompts();
  const auto it = all.find(id);
  if (it == all.end()) throw ValidationError("unknown prompt template '" + id + "'");
  return it->second;
}

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = tmpl.find("}}", open);
    if (close == std::string::npos) break;
    out.append(tmpl, pos, open - pos);
    const std::string name = tmpl.substr(open + 2, close - open - 2);
    const auto it = vars.find(name);
    if (it == vars.end()) throw ValidationError("prompt template: no value for placeholder '" + name + "'");
    out += it->second;
    pos = close + 2;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

namespace {

void need_number(const json& v, const std::string& path, double lo, double hi) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi)) throw SchemaError(path, "value out of range");
}

const json& member(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw SchemaError(path + "." + key, "missing field");
  return obj.at(key);
}

}  // namespace

void validate_llm_reply(const std::string& id, const json& v) {
  if (!v.is_object()) throw SchemaError("$", "expected a JSON object");
  if (id == "derive_params") {
    const json& n = member(v, "n", "$");
    if (!n.is_number_integer() || n.get<long long>() < 1) throw SchemaError("$.n", "expected an integer >= 1");
    need_number(member(v, "s", "$"), "$.s", 1e-9, 1e9);
    need_number(member(v, "sigma", "$"), "$.sigma", 0.0, 1.0);
    need_number(member(v, "alpha", "$"), "$.alpha", 0.0, 1.0);
  } else if (id == "motion_plans") {
    const json& g = member(v, "groups", "$");
    if (!g.is_array() || g.empty()) throw SchemaError("$.groups", "expected a non-empty array");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string p = "$.groups[" + std::to_string(i) + "]";
      if (!g[i].is_object()) throw SchemaError(p, "expected an object");
      for (const char* key : {"activity", "text", "formation"}) {
        const json& f = member(g[i], key, p);
        if (!f.is_string() || f.get<std::string>().empty()) throw SchemaError(p + "." + key, "expected a non-empty string");
      }
      try {
        parse_formation(g[i]["formation"].get<std::string>());
      } catch (const ValidationError&) {
        throw SchemaError(p + ".formation", "unknown formation");
      }
    }
  } else if (id == "interpret_event") {
    const json& pat = member(v, "pattern", "$");
    if (!pat.is_string()) throw SchemaError("$.pattern", "expected a string");
    try {
      parse_event_pattern(pat.get<std::string>());
    } catch (const ValidationError&) {
      throw SchemaError("$.pattern", "unknown pattern");
    }
    if (v.contains("agents")) {
      const json& a = v["agents"];
      if (!a.is_array()) throw SchemaError("$.agents", "expected an array");
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number_integer() || a[i].get<long long>() < 0) {
          throw SchemaError("$.agents[" + std::to_string(i) + "]", "expected a non-negative integer");
        }
      }
    }
  } else {
    throw ValidationError("unknown prompt template '" + id + "'");
  }
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("llm endpoint must be an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct Attempt {
  bool ok = false;
  LlmErrorKind kind = LlmErrorKind::Transport;
  std::string message;
  std::string raw;
  int status = 0;
  json value;
};

Attempt attempt_once(const LlmConfig& cfg, const Url& url, const std::string& body, const std::string& template_id) {
  Attempt a;
  httplib::Client cli(url.origin);
  const auto secs = static_cast<time_t>(std::floor(cfg.timeout_s));
  const auto usecs = static_cast<time_t>((cfg.timeout_s - std::floor(cfg.timeout_s)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  auto res = cli.Post(url.path, headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    a.kind = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? LlmErrorKind::Timeout
                                                                                        : LlmErrorKind::Transport;
    a.message = "request failed: " + httplib::to_string(err);
    return a;
  }
  a.raw = res->body;
  a.status = res->status;
  if (res->status < 200 || res->status >= 300) {
    a.kind = LlmErrorKind::HttpStatus;
    a.message = "HTTP status " + std::to_string(res->status);
    return a;
  }
  a.kind = LlmErrorKind::SchemaViolation;
  json reply;
  try {
    reply = json::parse(res->body);
    const json& content = reply.at("choices").at(0).at("message").at("content");
    a.value = content.is_string() ? json::parse(content.get<std::string>()) : content;
  } catch (const json::exception& e) {
    a.message = std::string("malformed reply: ") + e.what();
    return a;
  }
  try {
    validate_llm_reply(template_id, a.value);
  } catch (const SchemaError& e) {
    a.message = std::string("schema violation at ") + e.what();
    return a;
  }
  a.ok = true;
  return a;
}

}  // namespace

LlmResponse PlannerLLMClient::request(const std::string& template_id, const std::map<std::string, std::string>& vars) {
  if (!cfg_.configured()) {
    throw LlmError(LlmErrorKind::NotConfigured, cfg_.offline ? "llm: offline mode" : "llm: no endpoint configured");
  }
  const std::string prompt = render_template(prompt_template(template_id), vars);
  const json body = {{"model", cfg_.model},
                     {"temperature", 0},
                     {"response_format", {{"type", "json_object"}}},
                     {"messages",
                      {{{"role", "system"}, {"content", "Reply with JSON only."}}, {{"role", "user"}, {"content", prompt}}}}};
  const Url url = split_url(cfg_.endpoint);
  const std::string payload = body.dump();
  Attempt last;
  double wait = cfg_.backoff_s;
  const int attempts = std::max(0, cfg_.max_retries) + 1;
  for (int k = 0; k < attempts; ++k) {
    last = attempt_once(cfg_, url, payload, template_id);
    if (last.ok) return {std::move(last.value), k, std::move(last.raw)};
    if (k + 1 < attempts && wait > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      wait *= 2.0;
    }
  }
  throw LlmError(last.kind, "llm " + template_id + ": " + last.message + " after " + std::to_string(attempts) + " attempt(s)",
                 last.raw, last.status, attempts);
}

}  // namespace cmg
