#include "factax/llm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <thread>

#ifdef FACTAX_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace factax::llm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Client-side token bucket; refills continuously at `rate` per second.
class TokenBucket {
 public:
  explicit TokenBucket(double rate)
      : rate_(rate), capacity_(std::max(1.0, rate)), tokens_(capacity_),
        last_(Clock::now()) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    for (;;) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const double wait_s = (1.0 - tokens_) / rate_;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
      lock.lock();
    }
  }

 private:
  void refill() {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

  double rate_, capacity_, tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

// Bounds the number of concurrent complete() calls.
class InFlightGate {
 public:
  explicit InFlightGate(int limit) : limit_(std::max(1, limit)) {}

  struct Slot {
    InFlightGate* gate;
    ~Slot() { gate->release(); }
  };

  Slot enter() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
    return Slot{this};
  }

 private:
  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --active_;
    }
    cv_.notify_one();
  }

  int limit_;
  int active_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct ParsedUrl {
  std::string scheme_host_port;  // what httplib::Client wants
  std::string base_path;         // prefix for request paths
};

ParsedUrl parse_url(const std::string& endpoint) {
  const std::size_t scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint must include a scheme: " + endpoint);
  }
  const std::size_t path_start = endpoint.find('/', scheme_end + 3);
  ParsedUrl url;
  if (path_start == std::string::npos) {
    url.scheme_host_port = endpoint;
  } else {
    url.scheme_host_port = endpoint.substr(0, path_start);
    url.base_path = endpoint.substr(path_start);
  }
  while (!url.base_path.empty() && url.base_path.back() == '/') url.base_path.pop_back();
  return url;
}

bool is_retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status < 600);
}

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(const BackendConfig& config)
      : config_(config),
        url_(parse_url(config.endpoint)),
        gate_(config.max_in_flight),
        bucket_(config.requests_per_second > 0.0
                    ? std::make_unique<TokenBucket>(config.requests_per_second)
                    : nullptr) {}

  ChatResponse complete(const ChatRequest& request) override {
    const auto slot = gate_.enter();
    const char* key = std::getenv(config_.credentials_env.c_str());
    if (key == nullptr || key[0] == '\0') {
      throw AuthError("credentials environment variable " + config_.credentials_env +
                      " is not set");
    }
    const std::string body = request.to_json().dump();
    const auto start = Clock::now();

    for (int attempt = 0;; ++attempt) {
      if (bucket_) bucket_->acquire();
      httplib::Client client(url_.scheme_host_port);
      client.set_connection_timeout(30, 0);
      client.set_read_timeout(120, 0);
      httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
      auto res = client.Post((url_.base_path + "/chat/completions").c_str(), headers,
                             body, "application/json");

      if (res && res->status == 200) {
        ChatResponse response = parse_success(res->body);
        response.retries = attempt;
        response.latency_ms = elapsed_ms(start);
        return response;
      }
      if (res && (res->status == 401 || res->status == 403)) {
        throw AuthError("backend rejected credentials from " + config_.credentials_env +
                        " (HTTP " + std::to_string(res->status) + ")");
      }
      if (res && !is_retryable_status(res->status)) {
        throw BackendExhausted("non-retryable HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200));
      }
      if (attempt >= config_.retry_limit) {
        const std::string cause =
            res ? "HTTP " + std::to_string(res->status)
                : "transport error: " + httplib::to_string(res.error());
        throw BackendExhausted("gave up after " + std::to_string(attempt + 1) +
                               " attempts (" + cause + ")");
      }
      const double delay_ms = config_.backoff_base_ms * static_cast<double>(1ull << attempt);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
    }
  }

  std::string_view kind_name() const override { return "remote"; }

 private:
  static ChatResponse parse_success(const std::string& body) {
    json parsed;
    try {
      parsed = json::parse(body);
    } catch (const json::exception& ex) {
      throw BackendExhausted(std::string("unparseable response body: ") + ex.what());
    }
    if (!parsed.contains("choices") || parsed["choices"].empty()) {
      throw BackendExhausted("response carries no choices: " + body.substr(0, 200));
    }
    const json& choice = parsed["choices"][0];
    if (choice.value("finish_reason", std::string()) == "content_filter") {
      throw ContentRefusal("backend refused the prompt (finish_reason=content_filter)");
    }
    ChatResponse response;
    response.text = choice.at("message").at("content").get<std::string>();
    response.raw_body = body;
    if (parsed.contains("usage")) {
      response.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
      response.completion_tokens = parsed["usage"].value("completion_tokens", 0);
    }
    return response;
  }

  BackendConfig config_;
  ParsedUrl url_;
  InFlightGate gate_;
  std::unique_ptr<TokenBucket> bucket_;
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(const std::string& session_path) {
    if (file_exists(session_path)) {
      for (const auto& [line, value] : read_jsonl(session_path)) {
        if (value.is_null() || !value.contains("request_hash")) continue;
        sessions_[value.at("request_hash").get<std::string>()] = value.at("response");
      }
    }
  }

  ChatResponse complete(const ChatRequest& request) override {
    const std::string hash = request.hash();
    const auto it = sessions_.find(hash);
    if (it == sessions_.end()) throw ReplayMiss(hash);
    const json& r = it->second;
    ChatResponse response;
    response.text = r.at("text").get<std::string>();
    response.raw_body = r.value("raw_body", std::string());
    response.prompt_tokens = r.value("prompt_tokens", 0);
    response.completion_tokens = r.value("completion_tokens", 0);
    response.latency_ms = r.value("latency_ms", 0.0);
    return response;
  }

  std::string_view kind_name() const override { return "replay"; }

 private:
  std::map<std::string, json> sessions_;
};

class RecordBackend : public Backend {
 public:
  RecordBackend(std::unique_ptr<Backend> inner, std::string session_path)
      : inner_(std::move(inner)), session_path_(std::move(session_path)) {}

  ChatResponse complete(const ChatRequest& request) override {
    const auto started_at = std::chrono::system_clock::now();
    ChatResponse response = inner_->complete(request);
    json entry{{"request_hash", request.hash()},
               {"request", request.to_json()},
               {"response",
                json{{"text", response.text},
                     {"raw_body", response.raw_body},
                     {"prompt_tokens", response.prompt_tokens},
                     {"completion_tokens", response.completion_tokens},
                     {"latency_ms", response.latency_ms}}},
               {"recorded_at_ms",
                std::chrono::duration_cast<std::chrono::milliseconds>(
                    started_at.time_since_epoch())
                    .count()}};
    std::lock_guard<std::mutex> lock(mutex_);
    append_line(session_path_, entry.dump());
    return response;
  }

  std::string_view kind_name() const override { return "record"; }

 private:
  std::unique_ptr<Backend> inner_;
  std::string session_path_;
  std::mutex mutex_;
};

}  // namespace

ChatRequest ChatRequest::single_user(std::string model, std::string prompt) {
  ChatRequest request;
  request.model_name = std::move(model);
  request.messages.push_back({"user", std::move(prompt)});
  return request;
}

json ChatRequest::to_json() const {
  json messages_json = json::array();
  for (const ChatMessage& m : messages) {
    messages_json.push_back(json{{"role", m.role}, {"content", m.content}});
  }
  return json{{"model", model_name},
              {"messages", std::move(messages_json)},
              {"temperature", temperature},
              {"max_tokens", max_output_tokens}};
}

std::string ChatRequest::hash() const { return json_hash(to_json()); }

json BackendConfig::to_json() const {
  return json{{"kind", std::string(kind_name(kind))},
              {"endpoint", endpoint},
              {"credentials_env", credentials_env},
              {"model_name", model_name},
              {"retry_limit", retry_limit},
              {"backoff_base_ms", backoff_base_ms},
              {"requests_per_second", requests_per_second},
              {"max_in_flight", max_in_flight},
              {"seed", seed},
              {"session_path", session_path},
              {"flip_probability", flip_probability}};
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  c.kind = parse_kind(j.value("kind", std::string("oracle")));
  c.endpoint = j.value("endpoint", std::string());
  c.credentials_env = j.value("credentials_env", std::string("FACTAX_API_KEY"));
  c.model_name = j.value("model_name", std::string("gpt-3.5-turbo-0125"));
  c.retry_limit = j.value("retry_limit", 3);
  c.backoff_base_ms = j.value("backoff_base_ms", 250.0);
  c.requests_per_second = j.value("requests_per_second", 0.0);
  c.max_in_flight = j.value("max_in_flight", 4);
  c.seed = j.value("seed", std::uint64_t{0});
  c.session_path = j.value("session_path", std::string());
  c.flip_probability = j.value("flip_probability", 0.0);
  if (c.retry_limit < 0) throw std::invalid_argument("retry_limit must be >= 0");
  return c;
}

BackendConfig::Kind BackendConfig::parse_kind(std::string_view name) {
  if (iequals(name, "remote")) return Kind::Remote;
  if (iequals(name, "replay")) return Kind::Replay;
  if (iequals(name, "oracle")) return Kind::Oracle;
  throw std::invalid_argument("unknown backend kind: " + std::string(name));
}

std::string_view BackendConfig::kind_name(Kind kind) {
  switch (kind) {
    case Kind::Remote: return "remote";
    case Kind::Replay: return "replay";
    case Kind::Oracle: return "oracle";
  }
  return "?";
}

std::unique_ptr<Backend> make_remote_backend(const BackendConfig& config) {
  return std::make_unique<RemoteBackend>(config);
}

std::unique_ptr<Backend> make_replay_backend(const std::string& session_path) {
  return std::make_unique<ReplayBackend>(session_path);
}

std::unique_ptr<Backend> make_record_backend(std::unique_ptr<Backend> inner,
                                             const std::string& session_path) {
  return std::make_unique<RecordBackend>(std::move(inner), session_path);
}

OracleBackend::OracleBackend(const BackendConfig& config)
    : rng_(config.seed), flip_probability_(config.flip_probability) {}

void OracleBackend::add_entry(std::string_view slot_text, prompting::Verdict verdict) {
  entries_[normalize_text(slot_text)] = std::move(verdict);
}

void OracleBackend::add_example(const corpus::SummaryExample& example,
                                std::size_t target_words) {
  using taxonomy::GoldLabel;
  prompting::Verdict whole;
  switch (example.gold.kind) {
    case GoldLabel::Kind::Consistent:
      whole = prompting::Verdict::clean("The summary matches the document.");
      break;
    case GoldLabel::Kind::Inconsistent:
      if (example.gold.types.empty()) {
        // Binary-only gold: answer with an unspecified error so the verdict
        // still reads inconsistent after parsing. Addition is arbitrary but
        // fixed.
        whole = prompting::Verdict::with_types({taxonomy::ErrorType::Addition},
                                               "The summary is not supported.");
      } else {
        whole = prompting::Verdict::with_types(example.gold.types,
                                               "The summary contains the marked errors.");
      }
      break;
    case GoldLabel::Kind::Score: {
      whole = prompting::Verdict::clean("Scored per the gold annotation.");
      whole.score = example.gold.score;
      break;
    }
  }
  add_entry(example.summary, whole);

  const auto windows = prompting::segment_windows(example.summary, target_words);
  for (const prompting::Window& w : windows) {
    if (w.index == 0) {
      add_entry(w.text, whole);
    } else {
      add_entry(w.text, prompting::Verdict::clean("This part matches the document."));
    }
  }
}

std::string OracleBackend::extract_slot_text(std::string_view prompt) {
  // Last "summary:" marker at a line start (the slot in the shipped
  // template); the slot runs to the first blank line.
  std::string lower(prompt);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t marker = std::string::npos;
  std::size_t pos = 0;
  while ((pos = lower.find("summary:", pos)) != std::string::npos) {
    if (pos == 0 || lower[pos - 1] == '\n') marker = pos;
    pos += 8;
  }
  if (marker == std::string::npos) return "";
  std::size_t begin = marker + 8;
  std::size_t end = prompt.find("\n\n", begin);
  if (end == std::string_view::npos) end = prompt.size();
  return std::string(trim(prompt.substr(begin, end - begin)));
}

ChatResponse OracleBackend::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw std::invalid_argument("empty request");
  const std::string slot = extract_slot_text(request.messages.back().content);
  const std::string key = normalize_text(slot);

  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    // Tolerate slot texts that embed extra framing around a planted entry:
    // fall back to the longest planted key contained in the slot.
    std::size_t best_len = 0;
    for (auto probe = entries_.begin(); probe != entries_.end(); ++probe) {
      if (probe->first.size() > best_len && key.find(probe->first) != std::string::npos) {
        best_len = probe->first.size();
        it = probe;
      }
    }
    if (best_len == 0) {
      throw BackendExhausted("oracle has no entry for prompt slot: " + slot.substr(0, 80));
    }
  }

  prompting::Verdict verdict = it->second;
  if (flip_probability_ > 0.0 && !verdict.score.has_value() &&
      rng_.unit() < flip_probability_) {
    if (verdict.types.empty()) {
      const taxonomy::ErrorType flipped =
          taxonomy::kAllErrorTypes[rng_.index(taxonomy::kAllErrorTypes.size())];
      verdict = prompting::Verdict::with_types({flipped}, "Corrupted answer.");
    } else {
      verdict = prompting::Verdict::clean("Corrupted answer.");
    }
  }

  ChatResponse response;
  response.text = prompting::render_response(verdict);
  response.raw_body = response.text;
  return response;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config,
                                      const std::vector<corpus::SummaryExample>& oracle_corpus,
                                      std::size_t oracle_target_words) {
  switch (config.kind) {
    case BackendConfig::Kind::Remote: {
      auto backend = make_remote_backend(config);
      if (!config.session_path.empty()) {
        backend = make_record_backend(std::move(backend), config.session_path);
      }
      return backend;
    }
    case BackendConfig::Kind::Replay:
      return make_replay_backend(config.session_path);
    case BackendConfig::Kind::Oracle: {
      auto backend = std::make_unique<OracleBackend>(config);
      for (const corpus::SummaryExample& e : oracle_corpus) {
        backend->add_example(e, oracle_target_words);
      }
      if (!config.session_path.empty()) {
        return make_record_backend(std::move(backend), config.session_path);
      }
      return backend;
    }
  }
  throw std::logic_error("unreachable backend kind");
}

}  // namespace factax::llm
