#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "httplib.h"

#include "aries/backend.hpp"

namespace aries {

struct HttpConfig {
  std::string endpoint = "http://127.0.0.1:30000";  // scheme://host:port[/prefix]
  std::string model = "meta-llama/Llama-3.1-405B-Instruct";
  std::string api_key;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds timeout{120'000};
  std::optional<double> temperature;  // overrides the per-query temperature
};

/// OpenAI-compatible /v1/chat/completions client. Transient failures
/// (connection errors, 429, 5xx) are retried with exponential backoff; only
/// the final successful attempt is charged to the ledger.
class HttpGenerator : public Generator {
 public:
  HttpGenerator(HttpConfig config, QueryLedger& ledger) : Generator(ledger), config_(std::move(config)) {
    auto scheme = config_.endpoint.find("://");
    auto path_start = config_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = config_.endpoint.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    bool has_version = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
    path_ = prefix + (has_version ? "/chat/completions" : "/v1/chat/completions");
  }

  bool concurrent() const override { return true; }

  const std::string& path() const { return path_; }

  nlohmann::json request_body(const GeneratorQuery& query) const {
    nlohmann::json messages = nlohmann::json::array();
    if (!query.role_system.empty()) messages.push_back({{"role", "system"}, {"content", query.role_system}});
    messages.push_back({{"role", "user"}, {"content", query.role_user}});
    return {{"model", config_.model},
            {"messages", messages},
            {"temperature", config_.temperature.value_or(query.temperature)},
            {"max_tokens", query.max_tokens}};
  }

  std::string complete(const GeneratorQuery& query) override {
    if (query.temperature < 0) throw Error(Errc::InvalidRequest, "negative temperature");
    ledger().reserve();
    const std::string body = request_body(query).dump();
    Errc last_code = Errc::HttpError;
    std::string last_error;
    auto backoff = std::chrono::duration<double, std::milli>(config_.initial_backoff);

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= config_.backoff_factor;
      }
      httplib::Client client(host_);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        auto err = res.error();
        last_code = (err == httplib::Error::Read || err == httplib::Error::Write ||
                     err == httplib::Error::ConnectionTimeout)
                        ? Errc::Timeout
                        : Errc::HttpError;
        last_error = httplib::to_string(err);
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_code = Errc::HttpError;
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        ledger().release();
        throw Error(Errc::HttpError, "status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      auto reply = nlohmann::json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
          reply["choices"].empty() || !reply["choices"][0].contains("message") ||
          !reply["choices"][0]["message"].contains("content") ||
          !reply["choices"][0]["message"]["content"].is_string()) {
        ledger().release();
        throw Error(Errc::HttpError, "malformed chat completion response");
      }
      ledger().commit(query.tag);
      return reply["choices"][0]["message"]["content"].get<std::string>();
    }
    ledger().release();
    throw Error(last_code, "giving up after " + std::to_string(config_.max_retries + 1) +
                               " attempts: " + last_error);
  }

 private:
  HttpConfig config_;
  std::string host_;
  std::string path_;
};

}  // namespace aries
