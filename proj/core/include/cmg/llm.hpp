#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "cmg/errors.hpp"

namespace cmg {

struct LlmConfig {
  std::string endpoint;  // full URL of a chat-completions style endpoint
  std::string api_key;
  std::string model = "gpt-4";
  double timeout_s = 20.0;
  int max_retries = 2;     // attempts = max_retries + 1
  double backoff_s = 0.5;  // doubled after every failed attempt
  bool offline = false;

  /// Overrides endpoint, key and model from CMG_LLM_ENDPOINT, CMG_LLM_API_KEY, CMG_LLM_MODEL when set.
  LlmConfig with_env() const;
  bool configured() const { return !offline && !endpoint.empty(); }
};

enum class LlmErrorKind { Timeout, HttpStatus, SchemaViolation, Transport, NotConfigured };
std::string to_string(LlmErrorKind k);

class LlmError : public RuntimeError {
 public:
  LlmError(LlmErrorKind kind, const std::string& what, std::string raw = {}, int status = 0, int attempts = 0)
      : RuntimeError(what), kind(kind), raw_response(std::move(raw)), http_status(status), attempts(attempts) {}
  LlmErrorKind kind;
  std::string raw_response;
  int http_status;
  int attempts;
};

struct LlmResponse {
  nlohmann::json value;
  int retries = 0;
  std::string raw;
};

/// Prompt template shipped with the library (ids: derive_params, motion_plans, interpret_event).
const std::string& prompt_template(const std::string& id);
/// Replaces {{name}} placeholders; a placeholder without a value is a ValidationError.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars);
/// Schema check of a parsed reply; throws SchemaError naming the offending JSON path.
void validate_llm_reply(const std::string& template_id, const nlohmann::json& value);

/// Sends chat-style JSON POST requests. Each reply's message content must be a JSON object matching
/// the template's schema; malformed replies, timeouts and non-2xx statuses are retried with backoff.
class PlannerLLMClient {
 public:
  explicit PlannerLLMClient(LlmConfig cfg) : cfg_(std::move(cfg)) {}

  LlmResponse request(const std::string& template_id, const std::map<std::string, std::string>& vars);
  const LlmConfig& config() const { return cfg_; }

 private:
  LlmConfig cfg_;
};

}  // namespace cmg
