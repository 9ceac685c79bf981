#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "factax/alignment.hpp"
#include "factax/corpus.hpp"
#include "factax/llm.hpp"
#include "factax/prompting.hpp"

namespace factax::inference {

enum class Method { FacTax, FacTaxWd };

std::string_view method_name(Method method);      // "factax" / "factax-wd"
Method parse_method(std::string_view name);

struct RunConfig {
  Method method = Method::FacTax;
  int repeats = 3;
  // Context alignment; applied to Reports/Stories examples, or to everything
  // when force_alignment is set.
  std::optional<alignment::AlignmentConfig> align;
  bool force_alignment = false;
  std::size_t window_target_words = 30;  // factax-wd segmentation
  std::string model_name = "gpt-3.5-turbo-0125";  // echoed into each request
  prompting::PromptTemplate tmpl = prompting::PromptTemplate::standard();
  int concurrency_limit = 1;
  std::string output_path;  // record sink; resumable when it already exists
  std::uint64_t seed = 0;
};

struct WindowVerdict {
  prompting::Window window;
  prompting::Verdict verdict;
};

struct VerdictRecord {
  std::string example_id;
  std::string dataset_id;
  int run_index = 0;
  prompting::Verdict verdict;
  std::vector<WindowVerdict> per_window;  // factax-wd only
  std::vector<std::string> raw_responses;
  double latency_ms = 0.0;
  std::string error;  // terminal failure cause, empty on success

  json to_json() const;
  static VerdictRecord from_json(const json& j);
};

// Runs the configured method over the examples. Completed (example_id,
// run_index) pairs already present in output_path are never re-queried;
// fresh records are appended as they complete and the file is rewritten in
// (example_id, run_index) order at the end. Per-example failures are
// recorded with their cause and the run continues; AuthError aborts.
std::vector<VerdictRecord> run(const std::vector<corpus::SummaryExample>& examples,
                               const RunConfig& config, llm::Backend& backend);

std::vector<VerdictRecord> load_records(const std::string& path);

struct IncompleteRun : std::runtime_error {
  int run_index;
  explicit IncompleteRun(int run, const std::string& what)
      : std::runtime_error(what), run_index(run) {}
};

enum class PredictionPolicy { PerRun, Averaged };

// Groups records per run. PerRun returns whatever is present; Averaged
// (strict) additionally demands that runs 0..expected_runs-1 all exist and
// cover the same example set, since downstream metrics are averaged across
// complete runs (never majority-voted across predictions).
std::map<int, std::vector<VerdictRecord>> predictions(
    const std::vector<VerdictRecord>& records, PredictionPolicy policy,
    int expected_runs);

}  // namespace factax::inference
