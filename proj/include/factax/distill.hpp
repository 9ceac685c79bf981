#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "factax/corpus.hpp"
#include "factax/taxonomy.hpp"
#include "factax/util.hpp"

namespace factax::distill {

inline constexpr std::string_view kBinaryConsistentToken = "Factually Correct";
inline constexpr std::string_view kBinaryInconsistentToken = "Factually Incorrect";
inline constexpr std::string_view kNoErrorToken = "No Error";

struct ScoreLabeled : std::runtime_error {
  explicit ScoreLabeled(const std::string& example_id)
      : std::runtime_error("score-labeled example excluded from pair generation: " +
                           example_id) {}
};

struct NoTypeLabels : std::runtime_error {
  explicit NoTypeLabels(const std::string& example_id)
      : std::runtime_error("example has no converted type labels: " + example_id) {}
};

struct EmptyStratum : std::runtime_error {
  explicit EmptyStratum(const std::string& which)
      : std::runtime_error("required sampling stratum is empty: " + which) {}
};

enum class PairKind { Binary, Taxonomy };

std::string_view pair_kind_name(PairKind kind);

// One supervised fine-tuning pair.
struct PromptCompletion {
  std::string prompt;
  std::string completion;
  PairKind kind = PairKind::Binary;
  std::string source_example_id;
  std::string dataset_id;

  json to_json() const;
};

// Datasets whose consistent examples may carry an explicit empty type set
// (and hence a "No Error" taxonomy completion): the built-in type-annotated
// datasets plus any ids passed in `extra`.
bool dataset_is_typed(std::string_view dataset_id, const std::set<std::string>& extra);

// Binary Completion pair: two-way consistency token. Throws ScoreLabeled.
PromptCompletion make_binary_pair(const corpus::SummaryExample& example);

// Error Type Completion pair: the prompt lists the five candidate types with
// definitions; the completion enumerates gold types in canonical order, or
// "No Error". Throws ScoreLabeled / NoTypeLabels.
PromptCompletion make_taxonomy_pair(const corpus::SummaryExample& example,
                                    const std::set<std::string>& typed_datasets = {});

struct ForgeSetting {
  enum class Name { IBinary, ITaxonomy, IAndIITaxonomy };

  Name name = Name::IBinary;
  double taxonomy_ratio = 0.20;  // epoch-sampling target, I&II-Taxonomy only
  std::uint64_t seed = 0;

  static Name parse_name(std::string_view text);  // "I-Binary" etc.
  static std::string_view name_text(Name name);
};

struct TrainingCorpus {
  std::vector<PromptCompletion> pairs;
  json manifest;
};

// Compiles the training corpus for one setting:
//   I-Binary:       binary pairs over Set I
//   I-Taxonomy:     I-Binary plus taxonomy pairs for type-labeled Set I examples
//   I&II-Taxonomy:  I-Taxonomy plus binary pairs over Set II
// Score-labeled examples are skipped and counted. The manifest carries pair
// counts (totals with and without taxonomy pairs), the realized taxonomy
// ratio, per-dataset provenance, and the recommended fine-tuning
// hyperparameters as metadata.
TrainingCorpus build_training_corpus(const ForgeSetting& setting,
                                     const corpus::Splits& splits,
                                     const std::set<std::string>& typed_datasets = {});

// Taxonomy-pair share implied by a (binary, total) pair count.
double taxonomy_ratio_from_counts(std::size_t binary_count, std::size_t total_count);

// Draws one epoch of epoch_size pairs with exactly round(ratio * epoch_size)
// taxonomy pairs. Within a stratum the draw is without replacement unless
// the stratum is exhausted. Deterministic under seed.
std::vector<PromptCompletion> sample_with_ratio(const std::vector<PromptCompletion>& pairs,
                                                double taxonomy_ratio,
                                                std::size_t epoch_size,
                                                std::uint64_t seed);

enum class ExportFormat { Pairs, Chat };

ExportFormat parse_export_format(std::string_view name);

// Writes pairs as JSON Lines plus a companion "<path>.manifest.json"
// carrying counts, the completion-only-loss recommendation, and
// `extra_manifest` entries (e.g. the build manifest).
void export_corpus(const std::vector<PromptCompletion>& pairs, const std::string& path,
                   ExportFormat format, const json& extra_manifest = json::object());

}  // namespace factax::distill
