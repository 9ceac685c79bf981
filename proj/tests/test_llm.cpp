#include <doctest.h>

#ifdef FACTAX_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "factax/llm.hpp"
#include "factax/prompting.hpp"

using namespace factax;
using namespace factax::llm;
using prompting::Verdict;
using taxonomy::TypeSet;
using enum taxonomy::ErrorType;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ChatRequest request_for(const std::string& summary) {
  const std::string prompt = prompting::build_factax_prompt(
      "A document for testing.", summary, prompting::PromptTemplate::standard());
  return ChatRequest::single_user("test-model", prompt);
}

// Minimal local chat-completions stub.
struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit StubServer(httplib::Server::Handler handler) {
    server.Post("/v1/chat/completions", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubServer() {
    server.stop();
    thread.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

std::string success_body(const std::string& content) {
  json body{{"choices",
             json::array({json{{"message", json{{"role", "assistant"}, {"content", content}}},
                               {"finish_reason", "stop"}}})},
            {"usage", json{{"prompt_tokens", 12}, {"completion_tokens", 5}}}};
  return body.dump();
}

}  // namespace

TEST_CASE("chat requests hash by content") {
  const ChatRequest a = ChatRequest::single_user("m", "hello");
  const ChatRequest b = ChatRequest::single_user("m", "hello");
  ChatRequest c = ChatRequest::single_user("m", "world");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  c = ChatRequest::single_user("other-model", "hello");
  CHECK(a.hash() != c.hash());

  const json wire = a.to_json();
  CHECK(wire.at("model") == "m");
  CHECK(wire.at("messages").size() == 1);
  CHECK(wire.at("messages")[0].at("role") == "user");
}

TEST_CASE("backend config round-trips and never stores a credential value") {
  BackendConfig config;
  config.kind = BackendConfig::Kind::Remote;
  config.endpoint = "http://localhost:9/v1";
  config.credentials_env = "FACTAX_TEST_KEY";
  config.retry_limit = 7;
  config.requests_per_second = 2.5;
  config.flip_probability = 0.25;
  const BackendConfig back = BackendConfig::from_json(config.to_json());
  CHECK(back.kind == config.kind);
  CHECK(back.endpoint == config.endpoint);
  CHECK(back.credentials_env == config.credentials_env);
  CHECK(back.retry_limit == config.retry_limit);
  CHECK(back.requests_per_second == config.requests_per_second);
  CHECK(back.flip_probability == config.flip_probability);

  setenv("FACTAX_TEST_KEY", "super-secret-credential", 1);
  CHECK(config.to_json().dump().find("super-secret-credential") == std::string::npos);
  unsetenv("FACTAX_TEST_KEY");

  CHECK(BackendConfig::parse_kind("remote") == BackendConfig::Kind::Remote);
  CHECK(BackendConfig::parse_kind("ORACLE") == BackendConfig::Kind::Oracle);
  CHECK_THROWS((void)BackendConfig::parse_kind("carrier-pigeon"));
}

TEST_CASE("remote backend retries transient failures") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n <= 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
    } else {
      res.set_content(success_body("- Label: Factually Correct"), "application/json");
    }
  });

  BackendConfig config;
  config.kind = BackendConfig::Kind::Remote;
  config.endpoint = stub.endpoint();
  config.credentials_env = "FACTAX_TEST_KEY";
  config.backoff_base_ms = 1.0;
  config.retry_limit = 3;
  setenv("FACTAX_TEST_KEY", "dummy", 1);

  const auto backend = make_remote_backend(config);
  const ChatResponse response = backend->complete(ChatRequest::single_user("m", "hi"));
  CHECK(response.text == "- Label: Factually Correct");
  CHECK(response.retries == 2);
  CHECK(response.prompt_tokens == 12);
  CHECK(response.completion_tokens == 5);
  CHECK(calls.load() == 3);
}

TEST_CASE("remote backend surfaces auth errors and refusals") {
  setenv("FACTAX_TEST_KEY", "dummy", 1);

  SUBCASE("missing credentials fail before any request") {
    unsetenv("FACTAX_MISSING_KEY");
    BackendConfig config;
    config.kind = BackendConfig::Kind::Remote;
    config.endpoint = "http://127.0.0.1:9/v1";
    config.credentials_env = "FACTAX_MISSING_KEY";
    CHECK_THROWS_AS((void)make_remote_backend(config)->complete(
                        ChatRequest::single_user("m", "hi")),
                    AuthError);
  }
  SUBCASE("401 maps to AuthError") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
    });
    BackendConfig config;
    config.kind = BackendConfig::Kind::Remote;
    config.endpoint = stub.endpoint();
    config.credentials_env = "FACTAX_TEST_KEY";
    CHECK_THROWS_AS((void)make_remote_backend(config)->complete(
                        ChatRequest::single_user("m", "hi")),
                    AuthError);
  }
  SUBCASE("content filter maps to ContentRefusal") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      json body{{"choices", json::array({json{{"message", json{{"content", ""}}},
                                              {"finish_reason", "content_filter"}}})}};
      res.set_content(body.dump(), "application/json");
    });
    BackendConfig config;
    config.kind = BackendConfig::Kind::Remote;
    config.endpoint = stub.endpoint();
    config.credentials_env = "FACTAX_TEST_KEY";
    CHECK_THROWS_AS((void)make_remote_backend(config)->complete(
                        ChatRequest::single_user("m", "hi")),
                    ContentRefusal);
  }
  SUBCASE("retries exhaust into BackendExhausted") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.status = 503;
    });
    BackendConfig config;
    config.kind = BackendConfig::Kind::Remote;
    config.endpoint = stub.endpoint();
    config.credentials_env = "FACTAX_TEST_KEY";
    config.retry_limit = 2;
    config.backoff_base_ms = 1.0;
    CHECK_THROWS_AS((void)make_remote_backend(config)->complete(
                        ChatRequest::single_user("m", "hi")),
                    BackendExhausted);
  }
  SUBCASE("the authorization header carries the key, logs never do") {
    std::string seen_auth;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
      seen_auth = req.get_header_value("Authorization");
      res.set_content(success_body("- Label: Factually Correct"), "application/json");
    });
    const std::string session = temp_path("factax_llm_session_secret.jsonl");
    std::remove(session.c_str());
    setenv("FACTAX_TEST_KEY", "hunter2-credential", 1);
    BackendConfig config;
    config.kind = BackendConfig::Kind::Remote;
    config.endpoint = stub.endpoint();
    config.credentials_env = "FACTAX_TEST_KEY";
    config.session_path = session;
    const auto backend = make_backend(config);
    (void)backend->complete(ChatRequest::single_user("m", "hi"));
    CHECK(seen_auth == "Bearer hunter2-credential");
    CHECK(read_file(session).find("hunter2-credential") == std::string::npos);
    std::remove(session.c_str());
  }
}

TEST_CASE("oracle backend answers from planted labels") {
  BackendConfig config;
  config.kind = BackendConfig::Kind::Oracle;
  config.seed = 11;
  OracleBackend oracle(config);
  oracle.add_entry("The summary to judge.", Verdict::with_types({Entity}, "planted"));
  oracle.add_entry("A clean one.", Verdict::clean("fine"));

  const ChatResponse flagged = oracle.complete(request_for("The summary to judge."));
  CHECK(prompting::parse_response(flagged.text).types == TypeSet{Entity});
  const ChatResponse clean = oracle.complete(request_for("A clean one."));
  CHECK(prompting::parse_response(clean.text).consistent);

  // Unknown slot text with no containing entry: exhausted.
  CHECK_THROWS_AS((void)oracle.complete(request_for("Never planted text.")),
                  BackendExhausted);

  SUBCASE("slot extraction takes the last line-start summary block") {
    const std::string prompt = prompting::build_factax_prompt(
        "Doc mentioning Summary: inline.", "Actual target words.",
        prompting::PromptTemplate::standard());
    CHECK(OracleBackend::extract_slot_text(prompt) == "Actual target words.");
  }
  SUBCASE("score-labeled entries answer with the score") {
    Verdict scored = Verdict::clean("ok");
    scored.score = 7.0;
    oracle.add_entry("Scored summary.", scored);
    prompting::ParseOptions options;
    options.expect_score = true;
    const std::string prompt = prompting::build_factax_prompt(
        "A document for testing.", "Scored summary.",
        prompting::PromptTemplate::standard(), prompting::PromptMode::Score);
    const ChatResponse response =
        oracle.complete(ChatRequest::single_user("m", prompt));
    CHECK(prompting::parse_response(response.text, options).score == 7.0);
  }
}

TEST_CASE("oracle flip corruption is seeded and bounded") {
  BackendConfig config;
  config.kind = BackendConfig::Kind::Oracle;
  config.seed = 5;
  config.flip_probability = 1.0;
  OracleBackend oracle(config);
  oracle.add_entry("Clean text.", Verdict::clean());
  oracle.add_entry("Bad text.", Verdict::with_types({Predicate}));

  // p = 1: a clean entry always flips to exactly one error type.
  const Verdict flipped = prompting::parse_response(
      oracle.complete(request_for("Clean text.")).text);
  CHECK_FALSE(flipped.consistent);
  CHECK(flipped.types.size() == 1);
  // ... and an error entry flips to clean.
  const Verdict unflipped = prompting::parse_response(
      oracle.complete(request_for("Bad text.")).text);
  CHECK(unflipped.consistent);

  // Same seed, same call sequence -> identical responses.
  OracleBackend first(config), second(config);
  for (OracleBackend* o : {&first, &second}) {
    o->add_entry("Clean text.", Verdict::clean());
    o->add_entry("Bad text.", Verdict::with_types({Predicate}));
  }
  for (int i = 0; i < 10; ++i) {
    const std::string summary = i % 2 ? "Clean text." : "Bad text.";
    CHECK(first.complete(request_for(summary)).text ==
          second.complete(request_for(summary)).text);
  }
}

TEST_CASE("record and replay round-trip") {
  const std::string session = temp_path("factax_llm_session.jsonl");
  std::remove(session.c_str());

  BackendConfig config;
  config.kind = BackendConfig::Kind::Oracle;
  config.seed = 3;
  config.session_path = session;

  corpus::SummaryExample example;
  example.id = "e1";
  example.dataset_id = "faceval";
  example.domain = corpus::Domain::Dialogues;
  example.document = "A: We met on Monday.\nB: Right.";
  example.summary = "They met on Tuesday.";
  example.gold = taxonomy::GoldLabel::inconsistent({Circumstantial});

  const auto recorded = make_backend(config, {example});
  const ChatRequest request = request_for("They met on Tuesday.");
  const ChatResponse original = recorded->complete(request);
  CHECK(prompting::parse_response(original.text).types == TypeSet{Circumstantial});

  const auto replay = make_replay_backend(session);
  const ChatResponse replayed = replay->complete(request);
  CHECK(replayed.text == original.text);
  CHECK(replayed.raw_body == original.raw_body);

  // A mutated prompt misses.
  CHECK_THROWS_AS((void)replay->complete(request_for("They met on Wednesday.")),
                  ReplayMiss);

  // An empty log misses immediately.
  const std::string empty = temp_path("factax_llm_empty.jsonl");
  write_file(empty, "");
  CHECK_THROWS_AS((void)make_replay_backend(empty)->complete(request), ReplayMiss);
  std::remove(empty.c_str());
  std::remove(session.c_str());
}
