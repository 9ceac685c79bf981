// Command-line surface for the factual-consistency toolkit: label conversion,
// context alignment, inference, evaluation, training-corpus compilation, and
// record-file reporting.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "factax/corpus.hpp"
#include "factax/distill.hpp"
#include "factax/evaluation.hpp"
#include "factax/inference.hpp"
#include "factax/llm.hpp"
#include "factax/prompting.hpp"
#include "factax/taxonomy.hpp"
#include "factax/util.hpp"

namespace {

using namespace factax;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Settings shared by every subcommand; resolution order is
// flag > config file > environment variable > built-in default.
struct Globals {
  std::string config_path;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string backend_kind;
  std::string template_path;
  std::string out;

  void load_config() {
    if (config_path.empty()) {
      if (const char* env = std::getenv("FACTAX_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) config = json::parse(read_file(config_path));
  }

  template <typename T>
  T resolve(const CLI::Option* flag, const T& flag_value, const std::string& config_key,
            const char* env_name, const T& fallback) const {
    if (flag != nullptr && flag->count() > 0) return flag_value;
    if (config.contains(config_key)) return config.at(config_key).get<T>();
    if constexpr (std::is_same_v<T, std::string>) {
      if (const char* env = std::getenv(env_name)) return std::string(env);
    } else {
      if (const char* env = std::getenv(env_name)) {
        return static_cast<T>(std::stoull(env));
      }
    }
    return fallback;
  }
};

std::string hash_file_if_exists(const std::string& path) {
  if (path.empty() || !file_exists(path)) return "";
  return hex64(fnv1a64(read_file(path)));
}

// Every command leaves "<out>.manifest.json" beside its output.
struct ManifestWriter {
  std::string out_path;
  json manifest;
  std::int64_t started = now_ms();

  ManifestWriter(std::string out, std::string command, std::uint64_t seed)
      : out_path(std::move(out)) {
    manifest["command"] = std::move(command);
    manifest["seed"] = seed;
    manifest["version"] = std::string(kVersion);
    manifest["inputs"] = json::object();
  }

  void input(const std::string& name, const std::string& path) {
    if (path.empty()) return;
    manifest["inputs"][name] = json{{"path", path}, {"fnv1a64", hash_file_if_exists(path)}};
  }

  void finish() {
    if (out_path.empty()) return;
    manifest["started_at_ms"] = started;
    manifest["finished_at_ms"] = now_ms();
    write_file_atomic(out_path + ".manifest.json", manifest.dump(2) + "\n");
  }
};

prompting::PromptTemplate load_template(const std::string& path) {
  return path.empty() ? prompting::PromptTemplate::standard()
                      : prompting::PromptTemplate::from_file(path);
}

llm::BackendConfig backend_from(const Globals& globals, const std::string& kind,
                                const std::string& endpoint, const std::string& model,
                                const std::string& session, double rps, int retry_limit,
                                double flip_probability, const std::string& credentials_env,
                                int max_in_flight) {
  llm::BackendConfig config;
  if (globals.config.contains("backend")) {
    config = llm::BackendConfig::from_json(globals.config.at("backend"));
  }
  if (!kind.empty()) config.kind = llm::BackendConfig::parse_kind(kind);
  if (!endpoint.empty()) config.endpoint = endpoint;
  if (!model.empty()) config.model_name = model;
  if (!session.empty()) config.session_path = session;
  if (rps >= 0.0) config.requests_per_second = rps;
  if (retry_limit >= 0) config.retry_limit = retry_limit;
  if (flip_probability >= 0.0) config.flip_probability = flip_probability;
  if (!credentials_env.empty()) config.credentials_env = credentials_env;
  if (max_in_flight > 0) config.max_in_flight = max_in_flight;
  config.seed = globals.seed;
  return config;
}

int cmd_convert(const Globals& globals, const std::string& input,
                const std::string& schema_path, const std::string& dataset,
                const std::string& overrides_path, const std::string& out) {
  corpus::SchemaDescriptor schema = corpus::SchemaDescriptor::from_file(schema_path);
  if (!dataset.empty()) schema.dataset_id = dataset;
  taxonomy::OverrideTable overrides;
  if (!overrides_path.empty()) overrides = taxonomy::load_overrides(overrides_path);

  ManifestWriter manifest(out, "convert", globals.seed);
  manifest.input("input", input);
  manifest.input("schema", schema_path);
  manifest.input("overrides", overrides_path);

  const corpus::LoadResult result = corpus::load_corpus(input, schema, overrides);
  corpus::write_unified(out, result.examples);

  std::map<std::string, std::size_t> kind_counts;
  std::map<taxonomy::ErrorType, std::size_t> type_counts;
  for (const corpus::SummaryExample& e : result.examples) {
    switch (e.gold.kind) {
      case taxonomy::GoldLabel::Kind::Consistent: ++kind_counts["consistent"]; break;
      case taxonomy::GoldLabel::Kind::Inconsistent: ++kind_counts["inconsistent"]; break;
      case taxonomy::GoldLabel::Kind::Score: ++kind_counts["score"]; break;
    }
    for (taxonomy::ErrorType t : e.gold.types) ++type_counts[t];
  }
  std::cout << "converted " << result.examples.size() << " examples from " << input << "\n";
  for (const auto& [kind, count] : kind_counts) {
    std::cout << "  " << kind << ": " << count << "\n";
  }
  for (const auto& [type, count] : type_counts) {
    std::cout << "  " << taxonomy::display_name(type) << ": " << count << "\n";
  }

  bool label_failure = false;
  for (const corpus::LoadIssue& issue : result.issues) {
    std::cerr << input << ":" << issue.line << ": " << issue.message << "\n";
    label_failure = label_failure || issue.label_issue;
  }
  manifest.manifest["examples"] = result.examples.size();
  manifest.manifest["issues"] = result.issues.size();
  manifest.finish();
  return label_failure ? 1 : 0;
}

int cmd_align(const std::string& document_path, std::string summary,
              const std::string& window, std::size_t budget, std::size_t top_n,
              const std::string& out) {
  const std::string document = read_file(document_path);
  if (!summary.empty() && summary.front() == '@') summary = read_file(summary.substr(1));
  alignment::AlignmentConfig config;
  config.max_context_tokens = budget;
  config.per_window_sentences = top_n;
  const std::string context = window.empty()
                                  ? alignment::align_document(document, summary, config)
                                  : alignment::align_window(document, window, config);
  if (out.empty()) {
    std::cout << context << "\n";
  } else {
    write_file_atomic(out, context + "\n");
  }
  return 0;
}

int cmd_infer(const Globals& globals, const std::string& corpus_path,
              const std::string& method_name, int repeats, bool resume, bool no_align,
              bool force_align, std::size_t budget, std::size_t top_n,
              std::size_t target_words, int concurrency,
              const llm::BackendConfig& backend_config, const std::string& out) {
  const corpus::LoadResult loaded = corpus::load_unified(corpus_path);
  for (const corpus::LoadIssue& issue : loaded.issues) {
    std::cerr << corpus_path << ":" << issue.line << ": " << issue.message << "\n";
  }
  if (loaded.examples.empty()) {
    std::cerr << "no examples loaded from " << corpus_path << "\n";
    return 1;
  }
  if (file_exists(out) && !resume) {
    std::cerr << out << " already exists; pass --resume to continue it\n";
    return 1;
  }

  inference::RunConfig config;
  config.method = inference::parse_method(method_name);
  config.repeats = repeats;
  if (!no_align) {
    alignment::AlignmentConfig align;
    align.max_context_tokens = budget;
    align.per_window_sentences = top_n;
    config.align = align;
  }
  config.force_alignment = force_align;
  config.window_target_words = target_words;
  config.model_name = backend_config.model_name;
  config.tmpl = load_template(globals.template_path);
  config.concurrency_limit = concurrency;
  config.output_path = out;
  config.seed = globals.seed;

  ManifestWriter manifest(out, "infer", globals.seed);
  manifest.input("corpus", corpus_path);
  manifest.input("template", globals.template_path);
  manifest.manifest["method"] = std::string(inference::method_name(config.method));
  manifest.manifest["repeats"] = repeats;
  manifest.manifest["backend"] = backend_config.to_json();
  manifest.manifest["template_hash"] = hex64(config.tmpl.content_hash());

  std::map<std::string, std::size_t> domain_counts;
  for (const corpus::SummaryExample& e : loaded.examples) {
    ++domain_counts[std::string(corpus::domain_name(e.domain))];
  }
  for (const auto& [domain, count] : domain_counts) {
    std::cout << domain << ": " << count << " examples x " << repeats << " runs\n";
  }

  const auto backend = llm::make_backend(backend_config, loaded.examples, target_words);
  const std::vector<inference::VerdictRecord> records =
      inference::run(loaded.examples, config, *backend);

  std::size_t failures = 0;
  for (const inference::VerdictRecord& r : records) failures += r.error.empty() ? 0 : 1;
  std::cout << "wrote " << records.size() << " records to " << out << " (" << failures
            << " flagged)\n";
  manifest.manifest["records"] = records.size();
  manifest.manifest["flagged"] = failures;
  manifest.finish();
  return 0;
}

int cmd_eval(const Globals& globals, const std::string& records_path,
             const std::string& gold_path, const std::string& domain_scores_path,
             int runs, bool strict, const std::string& out) {
  if (!domain_scores_path.empty()) {
    // Audit mode: MACRO over externally supplied per-domain scores.
    const json scores_json = json::parse(read_file(domain_scores_path));
    std::map<std::string, double> domain_scores;
    for (const auto& [domain, score] : scores_json.items()) {
      domain_scores[domain] = score.get<double>();
    }
    std::cout.setf(std::ios::fixed);
    std::cout.precision(2);
    std::cout << "MACRO: " << evaluation::macro_score(domain_scores) << "\n";
    return 0;
  }

  const std::vector<inference::VerdictRecord> records =
      inference::load_records(records_path);
  const corpus::LoadResult gold = corpus::load_unified(gold_path);
  for (const corpus::LoadIssue& issue : gold.issues) {
    std::cerr << gold_path << ":" << issue.line << ": " << issue.message << "\n";
  }

  ManifestWriter manifest(out, "eval", globals.seed);
  manifest.input("records", records_path);
  manifest.input("gold", gold_path);

  const evaluation::EvalReport report =
      evaluation::evaluate_records(records, gold.examples, runs, strict);
  write_file_atomic(out + ".json", report.to_json().dump(2) + "\n");
  write_file_atomic(out + ".txt", report.to_text());
  std::cout << report.to_text();
  manifest.manifest["macro"] = report.macro;
  manifest.finish();
  return 0;
}

int cmd_distill(const Globals& globals, const std::string& splits_path,
                const std::string& data_dir, const std::string& setting_name,
                double ratio, const std::string& format_name, std::size_t epoch_size,
                const std::string& typed_csv, const std::string& out) {
  const corpus::SplitSpec spec = corpus::SplitSpec::from_file(splits_path);
  std::map<std::string, std::vector<corpus::SummaryExample>> loaded;
  std::set<std::string> wanted(spec.set_one.begin(), spec.set_one.end());
  wanted.insert(spec.set_two.begin(), spec.set_two.end());
  wanted.insert(spec.test.begin(), spec.test.end());
  for (const std::string& dataset : wanted) {
    const std::string path = data_dir + "/" + dataset + ".jsonl";
    if (!file_exists(path)) {
      std::cerr << "missing dataset file: " << path << "\n";
      return 1;
    }
    corpus::LoadResult result = corpus::load_unified(path);
    for (const corpus::LoadIssue& issue : result.issues) {
      std::cerr << path << ":" << issue.line << ": " << issue.message << "\n";
    }
    loaded[dataset] = std::move(result.examples);
  }

  distill::ForgeSetting setting;
  setting.name = distill::ForgeSetting::parse_name(setting_name);
  setting.taxonomy_ratio = ratio;
  setting.seed = globals.seed;

  std::set<std::string> typed_datasets;
  {
    std::size_t begin = 0;
    while (begin <= typed_csv.size() && !typed_csv.empty()) {
      std::size_t comma = typed_csv.find(',', begin);
      if (comma == std::string::npos) comma = typed_csv.size();
      const std::string id = trim(typed_csv.substr(begin, comma - begin));
      if (!id.empty()) typed_datasets.insert(id);
      if (comma >= typed_csv.size()) break;
      begin = comma + 1;
    }
  }

  const corpus::Splits splits = corpus::assemble_splits(spec, loaded);
  distill::TrainingCorpus corpus_out =
      distill::build_training_corpus(setting, splits, typed_datasets);
  corpus_out.manifest["splits_file"] = splits_path;

  const distill::ExportFormat format = distill::parse_export_format(format_name);
  distill::export_corpus(corpus_out.pairs, out, format, corpus_out.manifest);
  std::cout << "setting " << distill::ForgeSetting::name_text(setting.name) << ": "
            << corpus_out.manifest["binary_pairs"] << " binary + "
            << corpus_out.manifest["taxonomy_pairs"] << " taxonomy pairs -> " << out
            << "\n";

  if (epoch_size > 0) {
    const std::vector<distill::PromptCompletion> epoch = distill::sample_with_ratio(
        corpus_out.pairs, setting.taxonomy_ratio, epoch_size, globals.seed);
    const std::string epoch_path = out + ".epoch.jsonl";
    json epoch_manifest = corpus_out.manifest;
    epoch_manifest["epoch_size"] = epoch_size;
    distill::export_corpus(epoch, epoch_path, format, epoch_manifest);
    std::cout << "sampled epoch of " << epoch.size() << " pairs -> " << epoch_path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& records_path, const std::string& out) {
  const std::vector<inference::VerdictRecord> records =
      inference::load_records(records_path);
  std::map<std::string, std::size_t> per_dataset;
  std::set<int> runs;
  std::size_t flagged = 0, windowed = 0;
  double latency_total = 0.0;
  for (const inference::VerdictRecord& r : records) {
    ++per_dataset[r.dataset_id];
    runs.insert(r.run_index);
    flagged += r.error.empty() ? 0 : 1;
    windowed += r.per_window.empty() ? 0 : 1;
    latency_total += r.latency_ms;
  }
  std::ostringstream text;
  text << "records: " << records.size() << " across " << runs.size() << " runs\n";
  for (const auto& [dataset, count] : per_dataset) {
    text << "  " << dataset << ": " << count << "\n";
  }
  text << "flagged failures: " << flagged << "\n";
  text << "windowed records: " << windowed << "\n";
  if (!records.empty()) {
    text << "mean latency: " << latency_total / static_cast<double>(records.size())
         << " ms\n";
  }
  std::cout << text.str();
  if (!out.empty()) write_file_atomic(out, text.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Taxonomy-grounded factual-consistency toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags (--out, --seed, ...) may follow the subcommand

  Globals globals;
  auto* config_opt = app.add_option("--config", globals.config_path, "JSON config file");
  std::uint64_t seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "deterministic seed");
  std::string backend_flag;
  auto* backend_opt =
      app.add_option("--backend", backend_flag, "backend kind: remote|replay|oracle");
  std::string template_flag;
  auto* template_opt = app.add_option("--template", template_flag, "prompt template file");
  std::string out_flag;
  auto* out_opt = app.add_option("--out", out_flag, "output path");

  // convert
  auto* convert = app.add_subcommand("convert", "unify a source dataset file");
  std::string convert_input, convert_schema, convert_dataset, convert_overrides;
  convert->add_option("--input", convert_input, "source JSONL file")->required();
  convert->add_option("--schema", convert_schema, "schema descriptor JSON")->required();
  convert->add_option("--dataset", convert_dataset, "override the schema's dataset id");
  convert->add_option("--overrides", convert_overrides, "manual override TSV");

  // align
  auto* align = app.add_subcommand("align", "condense one document (debug utility)");
  std::string align_document, align_summary, align_window;
  std::size_t align_budget = 1024, align_top_n = 5;
  align->add_option("--document", align_document, "document text file")->required();
  align->add_option("--summary", align_summary, "summary text (or @file)");
  align->add_option("--window", align_window, "window text (top-n mode)");
  align->add_option("--budget", align_budget, "token budget");
  align->add_option("--top-n", align_top_n, "sentences per window");

  // infer
  auto* infer = app.add_subcommand("infer", "run a detection method over a corpus");
  std::string infer_corpus, infer_method = "factax", infer_endpoint, infer_model;
  std::string infer_session, infer_credentials;
  int infer_repeats = 3, infer_concurrency = 1, infer_retry = -1, infer_in_flight = 0;
  bool infer_resume = false, infer_no_align = false, infer_force_align = false;
  std::size_t infer_budget = 1024, infer_top_n = 5, infer_target_words = 30;
  double infer_rps = -1.0, infer_flip = -1.0;
  infer->add_option("--corpus", infer_corpus, "unified corpus JSONL")->required();
  infer->add_option("--method", infer_method, "factax | factax-wd");
  infer->add_option("--repeats", infer_repeats, "independent runs per example");
  infer->add_option("--endpoint", infer_endpoint, "remote API base URL");
  infer->add_option("--model", infer_model, "model name");
  infer->add_option("--session", infer_session, "session log (record sink / replay source)");
  infer->add_option("--credentials-env", infer_credentials,
                    "environment variable holding the API key");
  infer->add_option("--concurrency", infer_concurrency, "worker threads");
  infer->add_option("--retry-limit", infer_retry, "transient-failure retries");
  infer->add_option("--rps", infer_rps, "client-side requests per second");
  infer->add_option("--max-in-flight", infer_in_flight, "bound on concurrent requests");
  infer->add_option("--flip-p", infer_flip, "oracle corruption probability");
  infer->add_option("--align-budget", infer_budget, "aligned context token budget");
  infer->add_option("--align-top-n", infer_top_n, "aligned sentences per window");
  infer->add_option("--target-words", infer_target_words, "window size in words");
  infer->add_flag("--resume", infer_resume, "continue an existing record file");
  infer->add_flag("--no-align", infer_no_align, "disable context alignment");
  infer->add_flag("--force-align", infer_force_align, "align all domains");

  // eval
  auto* eval = app.add_subcommand("eval", "score a record file against gold");
  std::string eval_records, eval_gold, eval_domain_scores;
  int eval_runs = 3;
  bool eval_strict = false;
  eval->add_option("--records", eval_records, "verdict record JSONL");
  eval->add_option("--gold", eval_gold, "unified gold corpus JSONL");
  eval->add_option("--domain-scores", eval_domain_scores,
                   "JSON map of domain -> score; print MACRO only");
  eval->add_option("--runs", eval_runs, "expected run count");
  eval->add_flag("--strict", eval_strict, "fail on incomplete runs");

  // distill
  auto* distill_cmd = app.add_subcommand("distill", "compile a fine-tuning corpus");
  std::string distill_splits, distill_data, distill_setting = "I-Binary";
  std::string distill_format = "pairs", distill_typed;
  double distill_ratio = 0.20;
  std::size_t distill_epoch = 0;
  distill_cmd->add_option("--splits", distill_splits, "split spec JSON")->required();
  distill_cmd->add_option("--data", distill_data, "directory of <dataset>.jsonl files")
      ->required();
  distill_cmd->add_option("--setting", distill_setting,
                          "I-Binary | I-Taxonomy | I&II-Taxonomy");
  distill_cmd->add_option("--ratio", distill_ratio, "taxonomy ratio for epoch sampling");
  distill_cmd->add_option("--format", distill_format, "pairs | chat");
  distill_cmd->add_option("--epoch-size", distill_epoch,
                          "also export one sampled epoch of this size");
  distill_cmd->add_option("--typed-datasets", distill_typed,
                          "comma-separated extra type-annotated dataset ids");

  // report
  auto* report = app.add_subcommand("report", "summarize a record file");
  std::string report_records;
  report->add_option("--records", report_records, "verdict record JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    globals.load_config();
    globals.seed = globals.resolve<std::uint64_t>(seed_opt, seed_flag, "seed",
                                                  "FACTAX_SEED", 0);
    globals.backend_kind = globals.resolve<std::string>(backend_opt, backend_flag,
                                                        "backend_kind", "FACTAX_BACKEND", "");
    globals.template_path = globals.resolve<std::string>(
        template_opt, template_flag, "template", "FACTAX_TEMPLATE", "");
    globals.out = globals.resolve<std::string>(out_opt, out_flag, "out", "FACTAX_OUT", "");
    (void)config_opt;

    if (convert->parsed()) {
      if (globals.out.empty()) throw CLI::ValidationError("--out is required");
      return cmd_convert(globals, convert_input, convert_schema, convert_dataset,
                         convert_overrides, globals.out);
    }
    if (align->parsed()) {
      return cmd_align(align_document, align_summary, align_window, align_budget,
                       align_top_n, globals.out);
    }
    if (infer->parsed()) {
      if (globals.out.empty()) throw CLI::ValidationError("--out is required");
      const llm::BackendConfig backend = backend_from(
          globals, globals.backend_kind, infer_endpoint, infer_model, infer_session,
          infer_rps, infer_retry, infer_flip, infer_credentials, infer_in_flight);
      return cmd_infer(globals, infer_corpus, infer_method, infer_repeats, infer_resume,
                       infer_no_align, infer_force_align, infer_budget, infer_top_n,
                       infer_target_words, infer_concurrency, backend, globals.out);
    }
    if (eval->parsed()) {
      if (eval_domain_scores.empty() && globals.out.empty()) {
        throw CLI::ValidationError("--out is required");
      }
      if (eval_domain_scores.empty() && (eval_records.empty() || eval_gold.empty())) {
        throw CLI::ValidationError("--records and --gold are required");
      }
      return cmd_eval(globals, eval_records, eval_gold, eval_domain_scores, eval_runs,
                      eval_strict, globals.out);
    }
    if (distill_cmd->parsed()) {
      if (globals.out.empty()) throw CLI::ValidationError("--out is required");
      return cmd_distill(globals, distill_splits, distill_data, distill_setting,
                         distill_ratio, distill_format, distill_epoch, distill_typed,
                         globals.out);
    }
    if (report->parsed()) {
      return cmd_report(report_records, globals.out);
    }
  } catch (const CLI::Error& ex) {
    return app.exit(ex);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
