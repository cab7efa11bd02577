#pragma once

// Scripted chat-completions endpoint on localhost. Each incoming request consumes the next scripted
// reply; once the script runs out the last reply repeats.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

namespace cmg::fixtures {

struct ScriptedReply {
  int status = 200;
  std::string body;
  int delay_ms = 0;
};

// Wraps a JSON value as the message content of a chat-completions reply.
inline std::string chat_reply(const nlohmann::json& content) {
  nlohmann::json r = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content.dump()}}}}}}};
  return r.dump();
}

inline ScriptedReply ok(const nlohmann::json& content) { return {200, chat_reply(content), 0}; }

class MockLlmServer {
 public:
  explicit MockLlmServer(std::vector<ScriptedReply> script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ScriptedReply r;
      {
        std::lock_guard<std::mutex> lock(mu_);
        bodies_.push_back(req.body);
        r = script_[std::min(next_, script_.size() - 1)];
        ++next_;
      }
      if (r.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(r.delay_ms));
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockLlmServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::size_t requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return next_;
  }

  std::vector<std::string> bodies() const {
    std::lock_guard<std::mutex> lock(mu_);
    return bodies_;
  }

 private:
  httplib::Server server_;
  std::vector<ScriptedReply> script_;
  std::vector<std::string> bodies_;
  std::size_t next_ = 0;
  mutable std::mutex mu_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace cmg::fixtures
