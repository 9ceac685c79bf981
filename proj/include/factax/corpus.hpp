#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factax/taxonomy.hpp"
#include "factax/util.hpp"

namespace factax::corpus {

enum class Domain { CnnDm, XSum, Dialogues, Reports, Stories };

inline constexpr std::array<Domain, 5> kAllDomains = {
    Domain::CnnDm, Domain::XSum, Domain::Dialogues, Domain::Reports, Domain::Stories};

std::string_view domain_name(Domain domain);  // "CNN/DM", "XSum", ...
std::optional<Domain> parse_domain(std::string_view name);

// Domains a known dataset may legitimately carry; empty = unconstrained.
const std::vector<Domain>& dataset_domains(std::string_view dataset_id);

// Long-document domains get context alignment by default.
bool domain_needs_alignment(Domain domain);

// One document/summary pair with unified gold annotation.
struct SummaryExample {
  std::string id;
  std::string dataset_id;
  Domain domain = Domain::CnnDm;
  std::string document;
  std::string summary;
  taxonomy::GoldLabel gold;
  std::string origin_model;  // generator of the summary, if known

  json to_json() const;
  static SummaryExample from_json(const json& j);  // throws std::invalid_argument
};

// Declarative mapping from a source dataset's JSONL fields onto
// SummaryExample. Exactly one of labels_field / consistent_field /
// score_field drives the gold label (labels take precedence when several are
// present on a record).
struct SchemaDescriptor {
  std::string dataset_id;
  Domain domain = Domain::CnnDm;
  std::string id_field;          // optional; ids synthesized when absent
  std::string document_field = "document";
  std::string summary_field = "summary";
  std::string labels_field;      // string or array of source label strings
  std::string consistent_field;  // boolean-ish consistency flag
  std::string score_field;       // numeric consistency score
  std::string origin_model_field;

  json to_json() const;
  static SchemaDescriptor from_json(const json& j);
  static SchemaDescriptor from_file(const std::string& path);
};

struct LoadIssue {
  int line = 0;  // 1-based line in the source file; 0 = file-level
  std::string message;
  bool label_issue = false;  // unresolved label (vs. a malformed record)
};

struct LoadResult {
  std::vector<SummaryExample> examples;
  std::vector<LoadIssue> issues;
};

// Reads a source-format JSONL file through a schema descriptor, converting
// labels via taxonomy::convert_label. Records that fail are reported in
// `issues`, never silently dropped.
LoadResult load_corpus(const std::string& path, const SchemaDescriptor& schema,
                       const taxonomy::OverrideTable& overrides = {});

// Reads / writes the unified JSONL record format.
LoadResult load_unified(const std::string& path);
void write_unified(const std::string& path, const std::vector<SummaryExample>& examples);

// Drops every candidate whose normalized document text (lowercased,
// whitespace-collapsed) matches a reserved document.
std::vector<SummaryExample> overlap_filter(const std::vector<SummaryExample>& candidates,
                                           const std::vector<std::string>& reserved_docs);

// Training/test split recipe.
struct SplitSpec {
  std::vector<std::string> set_one;
  std::vector<std::string> set_two;
  std::vector<std::string> test;
  std::size_t set_two_sample_size = 50000;
  std::uint64_t seed = 0;
  // Test-side filter: keep only summaries whose origin_model appears in the
  // dataset's list. Datasets without an entry (or with an empty list) keep
  // every summary.
  std::map<std::string, std::vector<std::string>> sota_models;

  json to_json() const;
  static SplitSpec from_json(const json& j);
  static SplitSpec from_file(const std::string& path);
};

struct Splits {
  std::vector<SummaryExample> train_one;
  std::vector<SummaryExample> train_two;
  std::vector<SummaryExample> test;
};

struct MissingDataset : std::runtime_error {
  std::string dataset_id;
  explicit MissingDataset(std::string id)
      : std::runtime_error("dataset not loaded: " + id), dataset_id(std::move(id)) {}
};

// Assembles Set I (all examples), Set II (seeded per-dataset samples of
// set_two_sample_size, after overlap-filtering against test documents), and
// the test set (SOTA-model summaries only, where configured). Deterministic
// in (spec, loaded).
Splits assemble_splits(const SplitSpec& spec,
                       const std::map<std::string, std::vector<SummaryExample>>& loaded);

}  // namespace factax::corpus
