#pragma once

// HTTP adapters for real scoring/equivalence models and LLM endpoints. Kept
// out of the core headers so only targets that need them pay for httplib.

#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "daf/metrics.hpp"
#include "daf/probing.hpp"
#include "daf/registry.hpp"
#include "daf/scoring.hpp"

namespace daf {

namespace detail {

// "http://host:port/path" -> {"http://host:port", "/path"}
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline nlohmann::json post_json(httplib::Client& client, const std::string& path,
                                const nlohmann::json& body, const std::string& bearer) {
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  const auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw std::runtime_error("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw std::runtime_error("HTTP status " + std::to_string(res->status) + ": " + res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("invalid JSON response: ") + e.what());
  }
}

}  // namespace detail

// Scores one option per request: POST {context, question, option,
// question_id, option_index} and expect {"logit": <number>}. Model location
// comes from the backend spec, never from hard-coded paths.
class HttpScorerBackend : public ScorerBackend {
 public:
  explicit HttpScorerBackend(const std::string& url) {
    const auto [base, path] = detail::split_url(url);
    path_ = path;
    client_ = std::make_unique<httplib::Client>(base);
    client_->set_read_timeout(60, 0);
  }

  double score_option(const ScoreQuery& q) const override {
    nlohmann::json body;
    body["context"] = std::string(q.context);
    body["question"] = std::string(q.question);
    body["option"] = std::string(q.option);
    body["question_id"] = std::string(q.question_id);
    body["option_index"] = q.option_index;
    return detail::post_json(*client_, path_, body, "").at("logit").get<double>();
  }

  // one shared connection; the pipeline serializes access
  bool concurrent_calls_allowed() const override { return false; }

 private:
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
};

// POST {candidate, reference, question}, expect {"equivalence": <number in [0,1]>}.
class HttpEquivalenceScorer : public EquivalenceScorer {
 public:
  explicit HttpEquivalenceScorer(const std::string& url) {
    const auto [base, path] = detail::split_url(url);
    path_ = path;
    client_ = std::make_unique<httplib::Client>(base);
    client_->set_read_timeout(60, 0);
  }

  double equivalence(const std::string& candidate, const std::string& reference,
                     const std::string& question) const override {
    nlohmann::json body;
    body["candidate"] = candidate;
    body["reference"] = reference;
    body["question"] = question;
    return detail::post_json(*client_, path_, body, "").at("equivalence").get<double>();
  }

 private:
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
};

// Completion endpoint and credential come from the environment:
// DAF_LLM_ENDPOINT (required) and DAF_LLM_API_KEY (optional). POST
// {"prompt": ...}, expect {"text": ...}.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient() {
    const char* endpoint = std::getenv("DAF_LLM_ENDPOINT");
    if (!endpoint || !*endpoint)
      throw std::runtime_error("DAF_LLM_ENDPOINT is not set; use --mock for offline runs");
    const char* key = std::getenv("DAF_LLM_API_KEY");
    bearer_ = key ? key : "";
    const auto [base, path] = detail::split_url(endpoint);
    path_ = path;
    client_ = std::make_unique<httplib::Client>(base);
    client_->set_read_timeout(120, 0);
  }

  std::string complete(const std::string& prompt) override {
    nlohmann::json body;
    body["prompt"] = prompt;
    return detail::post_json(*client_, path_, body, bearer_).at("text").get<std::string>();
  }

 private:
  std::string path_;
  std::string bearer_;
  std::unique_ptr<httplib::Client> client_;
};

inline void register_http_adapters(BackendRegistry& backends, EquivalenceRegistry& equivalence) {
  backends.add("http",
               [](const std::string& arg) { return std::make_shared<HttpScorerBackend>(arg); });
  equivalence.add(
      "http", [](const std::string& arg) { return std::make_shared<HttpEquivalenceScorer>(arg); });
}

}  // namespace daf
