#include "factax/inference.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

namespace factax::inference {

namespace {

struct WorkItem {
  const corpus::SummaryExample* example;
  int run_index;
};

// One backend call, parsed; a response that fails to parse is re-queried
// once, then mapped to the flagged fallback verdict.
prompting::Verdict query_once(llm::Backend& backend, const std::string& model,
                              const std::string& prompt, bool expect_score,
                              std::vector<std::string>& raw_responses,
                              double& latency_ms) {
  const llm::ChatRequest request = llm::ChatRequest::single_user(model, prompt);
  std::string last_cause;
  for (int attempt = 0; attempt < 2; ++attempt) {
    llm::ChatResponse response;
    try {
      response = backend.complete(request);
    } catch (const llm::AuthError&) {
      throw;  // configuration problem: retrying other examples cannot help
    } catch (const llm::ContentRefusal& ex) {
      last_cause = ex.what();
      continue;
    }
    raw_responses.push_back(response.text);
    latency_ms += response.latency_ms;
    try {
      return prompting::parse_response(response.text,
                                       prompting::ParseOptions{expect_score});
    } catch (const prompting::UnparseableResponse& ex) {
      last_cause = ex.what();
    } catch (const prompting::UnknownErrorToken& ex) {
      last_cause = ex.what();
    }
  }
  return prompting::Verdict::unparsed_fallback(last_cause);
}

VerdictRecord run_one(const corpus::SummaryExample& example, int run_index,
                      const RunConfig& config, llm::Backend& backend) {
  VerdictRecord record;
  record.example_id = example.id;
  record.dataset_id = example.dataset_id;
  record.run_index = run_index;

  const bool aligned =
      config.align.has_value() &&
      (config.force_alignment || corpus::domain_needs_alignment(example.domain));
  const std::string& model = config.model_name;

  try {
    if (config.method == Method::FacTax) {
      const std::string context =
          aligned ? alignment::align_document(example.document, example.summary,
                                              *config.align)
                  : example.document;
      const bool score_mode = example.gold.kind == taxonomy::GoldLabel::Kind::Score;
      const std::string prompt = prompting::build_factax_prompt(
          context, example.summary, config.tmpl,
          score_mode ? prompting::PromptMode::Score : prompting::PromptMode::Classify);
      record.verdict = query_once(backend, model, prompt, score_mode,
                                  record.raw_responses, record.latency_ms);
      if (record.verdict.parse_failed) record.error = record.verdict.rationale;
    } else {
      const std::vector<prompting::Window> windows =
          prompting::segment_windows(example.summary, config.window_target_words);
      std::vector<prompting::Verdict> verdicts;
      for (const prompting::Window& window : windows) {
        const std::string context =
            aligned ? alignment::align_window(example.document, window.text,
                                              *config.align)
                    : example.document;
        const std::string prompt = prompting::build_factax_prompt(
            context, window.text, config.tmpl, prompting::PromptMode::Classify);
        prompting::Verdict verdict = query_once(backend, model, prompt, false,
                                                record.raw_responses, record.latency_ms);
        record.per_window.push_back({window, verdict});
        verdicts.push_back(std::move(verdict));
      }
      record.verdict = prompting::aggregate_windows(verdicts);
      if (record.verdict.parse_failed) record.error = "one or more windows unparseable";
    }
  } catch (const llm::AuthError&) {
    throw;
  } catch (const std::exception& ex) {
    record.verdict = prompting::Verdict::unparsed_fallback(ex.what());
    record.error = ex.what();
  }
  return record;
}

void sort_records(std::vector<VerdictRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const VerdictRecord& a, const VerdictRecord& b) {
              if (a.example_id != b.example_id) return a.example_id < b.example_id;
              return a.run_index < b.run_index;
            });
}

}  // namespace

std::string_view method_name(Method method) {
  return method == Method::FacTax ? "factax" : "factax-wd";
}

Method parse_method(std::string_view name) {
  if (iequals(name, "factax")) return Method::FacTax;
  if (iequals(name, "factax-wd") || iequals(name, "factax_wd") || iequals(name, "wd")) {
    return Method::FacTaxWd;
  }
  throw std::invalid_argument("unknown method: " + std::string(name));
}

json VerdictRecord::to_json() const {
  json j{{"example_id", example_id},
         {"dataset_id", dataset_id},
         {"run_index", run_index},
         {"verdict", verdict.to_json()},
         {"raw_responses", raw_responses},
         {"latency_ms", latency_ms}};
  if (!per_window.empty()) {
    json windows = json::array();
    for (const WindowVerdict& wv : per_window) {
      windows.push_back(json{{"window",
                              json{{"index", wv.window.index},
                                   {"text", wv.window.text},
                                   {"word_count", wv.window.word_count}}},
                             {"verdict", wv.verdict.to_json()}});
    }
    j["per_window"] = std::move(windows);
  }
  if (!error.empty()) j["error"] = error;
  return j;
}

VerdictRecord VerdictRecord::from_json(const json& j) {
  VerdictRecord r;
  r.example_id = j.at("example_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.run_index = j.at("run_index").get<int>();
  r.verdict = prompting::Verdict::from_json(j.at("verdict"));
  if (j.contains("per_window")) {
    for (const json& wv : j.at("per_window")) {
      WindowVerdict out;
      const json& w = wv.at("window");
      out.window.index = w.at("index").get<std::size_t>();
      out.window.text = w.at("text").get<std::string>();
      out.window.word_count = w.at("word_count").get<std::size_t>();
      out.verdict = prompting::Verdict::from_json(wv.at("verdict"));
      r.per_window.push_back(std::move(out));
    }
  }
  r.raw_responses = j.value("raw_responses", std::vector<std::string>{});
  r.latency_ms = j.value("latency_ms", 0.0);
  r.error = j.value("error", std::string());
  return r;
}

std::vector<VerdictRecord> load_records(const std::string& path) {
  std::vector<VerdictRecord> records;
  if (!file_exists(path)) return records;
  for (const auto& [line, value] : read_jsonl(path)) {
    if (value.is_null()) continue;  // tolerate a torn trailing line from a kill
    records.push_back(VerdictRecord::from_json(value));
  }
  return records;
}

std::vector<VerdictRecord> run(const std::vector<corpus::SummaryExample>& examples,
                               const RunConfig& config, llm::Backend& backend) {
  if (config.repeats < 1) throw std::invalid_argument("repeats must be >= 1");

  std::vector<VerdictRecord> records;
  std::set<std::pair<std::string, int>> completed;
  if (!config.output_path.empty()) {
    records = load_records(config.output_path);
    for (const VerdictRecord& r : records) completed.emplace(r.example_id, r.run_index);
  }

  std::vector<WorkItem> work;
  for (const corpus::SummaryExample& example : examples) {
    for (int run_index = 0; run_index < config.repeats; ++run_index) {
      if (!completed.count({example.id, run_index})) {
        work.push_back({&example, run_index});
      }
    }
  }

  std::mutex sink_mutex;
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      {
        std::lock_guard<std::mutex> lock(sink_mutex);
        if (failure) return;
      }
      try {
        VerdictRecord record =
            run_one(*work[i].example, work[i].run_index, config, backend);
        std::lock_guard<std::mutex> lock(sink_mutex);
        if (!config.output_path.empty()) {
          append_line(config.output_path, record.to_json().dump());
        }
        records.push_back(std::move(record));
      } catch (...) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int thread_count = std::max(1, std::min<int>(config.concurrency_limit,
                                                     static_cast<int>(work.size())));
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  sort_records(records);
  if (!config.output_path.empty()) {
    std::string out;
    for (const VerdictRecord& r : records) {
      out += r.to_json().dump();
      out += '\n';
    }
    write_file_atomic(config.output_path, out);
  }
  return records;
}

std::map<int, std::vector<VerdictRecord>> predictions(
    const std::vector<VerdictRecord>& records, PredictionPolicy policy,
    int expected_runs) {
  std::map<int, std::vector<VerdictRecord>> runs;
  for (const VerdictRecord& r : records) runs[r.run_index].push_back(r);
  for (auto& [run_index, list] : runs) sort_records(list);

  if (policy == PredictionPolicy::Averaged) {
    std::set<std::string> all_ids;
    for (const VerdictRecord& r : records) all_ids.insert(r.example_id);
    for (int run_index = 0; run_index < expected_runs; ++run_index) {
      const auto it = runs.find(run_index);
      if (it == runs.end()) {
        throw IncompleteRun(run_index,
                            "run " + std::to_string(run_index) + " has no records");
      }
      std::set<std::string> ids;
      for (const VerdictRecord& r : it->second) ids.insert(r.example_id);
      if (ids != all_ids) {
        throw IncompleteRun(run_index, "run " + std::to_string(run_index) +
                                           " covers " + std::to_string(ids.size()) +
                                           " of " + std::to_string(all_ids.size()) +
                                           " examples");
      }
    }
  }
  return runs;
}

}  // namespace factax::inference
