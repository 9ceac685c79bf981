#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factax/corpus.hpp"
#include "factax/prompting.hpp"
#include "factax/util.hpp"

namespace factax::llm {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::string model_name;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  static ChatRequest single_user(std::string model, std::string prompt);

  // OpenAI-compatible wire payload.
  json to_json() const;
  // Content hash; the replay key.
  std::string hash() const;
};

struct ChatResponse {
  std::string text;
  std::string raw_body;  // response body as received, persisted for audit
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int retries = 0;
  double latency_ms = 0.0;
};

struct BackendConfig {
  enum class Kind { Remote, Replay, Oracle };

  Kind kind = Kind::Oracle;
  std::string endpoint;  // e.g. https://api.example.com/v1
  // Name of the environment variable holding the API key. Only the name is
  // ever stored or logged.
  std::string credentials_env = "FACTAX_API_KEY";
  std::string model_name = "gpt-3.5-turbo-0125";
  int retry_limit = 3;
  double backoff_base_ms = 250.0;
  double requests_per_second = 0.0;  // 0 = unthrottled
  int max_in_flight = 4;
  std::uint64_t seed = 0;            // mock backends
  std::string session_path;          // replay source / record sink
  double flip_probability = 0.0;     // oracle corruption

  json to_json() const;
  static BackendConfig from_json(const json& j);
  static Kind parse_kind(std::string_view name);
  static std::string_view kind_name(Kind kind);
};

struct AuthError : std::runtime_error {
  explicit AuthError(const std::string& what) : std::runtime_error(what) {}
};

struct ContentRefusal : std::runtime_error {
  explicit ContentRefusal(const std::string& what) : std::runtime_error(what) {}
};

struct BackendExhausted : std::runtime_error {
  explicit BackendExhausted(const std::string& what) : std::runtime_error(what) {}
};

struct ReplayMiss : std::runtime_error {
  std::string request_hash;
  explicit ReplayMiss(std::string hash)
      : std::runtime_error("no recorded response for request hash " + hash),
        request_hash(std::move(hash)) {}
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Thread-safe; blocking. Throws AuthError / ContentRefusal /
  // BackendExhausted / ReplayMiss.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string_view kind_name() const = 0;
};

// OpenAI-compatible HTTP backend with exponential-backoff retries on
// transient failures (timeouts, 408/429, 5xx), a client-side token-bucket
// rate limiter, and a bounded in-flight count.
std::unique_ptr<Backend> make_remote_backend(const BackendConfig& config);

// Answers solely from a recorded session log; throws ReplayMiss on any
// request that was not recorded.
std::unique_ptr<Backend> make_replay_backend(const std::string& session_path);

// Wraps another backend and appends (request_hash, request, response,
// timestamps) JSON lines to the session log.
std::unique_ptr<Backend> make_record_backend(std::unique_ptr<Backend> inner,
                                             const std::string& session_path);

// Deterministic stand-in for a remote model: answers each prompt with the
// canonical rendered response for the gold label planted for the prompt's
// summary (or window) slot text. With flip_probability > 0, each answer is
// independently corrupted with that probability (clean -> one random error
// type, error -> clean), seeded and deterministic.
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(const BackendConfig& config);

  // Plants the expected verdict for one summary/window text (normalized
  // internally). Later entries overwrite earlier ones.
  void add_entry(std::string_view slot_text, prompting::Verdict verdict);

  // Plants the example's whole-summary verdict from its gold label, plus
  // per-window entries under the given segmentation target: for inconsistent
  // examples the full gold type set is planted on the first window and the
  // remaining windows are clean.
  void add_example(const corpus::SummaryExample& example, std::size_t target_words = 30);

  ChatResponse complete(const ChatRequest& request) override;
  std::string_view kind_name() const override { return "oracle"; }

  // The summary/window slot text of a rendered prompt, as used for lookups.
  static std::string extract_slot_text(std::string_view prompt);

 private:
  std::map<std::string, prompting::Verdict> entries_;
  Rng rng_;
  double flip_probability_;
  std::mutex mutex_;
};

// Builds the configured backend. Remote backends are wrapped in a recorder
// when session_path is set; oracle backends are seeded from `oracle_corpus`
// (whole-summary + first-window entries).
std::unique_ptr<Backend> make_backend(const BackendConfig& config,
                                      const std::vector<corpus::SummaryExample>& oracle_corpus = {},
                                      std::size_t oracle_target_words = 30);

}  // namespace factax::llm
