#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factax/util.hpp"

namespace factax::taxonomy {

// The five error types, in canonical order. Canonical order governs prompt
// listings and completion rendering ("Entity_Error, Coreference_Error").
enum class ErrorType {
  Predicate,
  Entity,
  Circumstantial,
  Coreference,
  Addition,
};

inline constexpr std::array<ErrorType, 5> kAllErrorTypes = {
    ErrorType::Predicate, ErrorType::Entity, ErrorType::Circumstantial,
    ErrorType::Coreference, ErrorType::Addition};

using TypeSet = std::set<ErrorType>;

// Human-readable definition, used verbatim in prompts.
std::string_view definition(ErrorType type);
// "Predicate Error"
std::string_view display_name(ErrorType type);
// "Predicate_Error" — the token emitted in labels and completions.
std::string_view canonical_token(ErrorType type);

// Recognizes type tokens case-insensitively with '_' and ' '
// interchangeable ("entity_error", "Entity Error", "entity").
std::optional<ErrorType> parse_error_token(std::string_view token);
// True for "Factually Correct", "No Error" and similar clean tokens.
bool is_clean_token(std::string_view token);

// "Entity_Error, Coreference_Error" in canonical order; "" for the empty set.
std::string format_type_list(const TypeSet& types);

// Unified gold annotation: a consistency flag, a (possibly empty) converted
// type set, or a dataset-scale score. Score is mutually exclusive with the
// other kinds; Inconsistent with an empty set is legal for datasets that only
// carry binary judgments.
struct GoldLabel {
  enum class Kind { Consistent, Inconsistent, Score };

  Kind kind = Kind::Consistent;
  TypeSet types;       // meaningful only for Inconsistent
  double score = 0.0;  // meaningful only for Score

  static GoldLabel consistent() { return GoldLabel{Kind::Consistent, {}, 0.0}; }
  static GoldLabel inconsistent(TypeSet t) {
    return GoldLabel{Kind::Inconsistent, std::move(t), 0.0};
  }
  static GoldLabel score_value(double v) { return GoldLabel{Kind::Score, {}, v}; }

  bool binary_resolvable() const { return kind != Kind::Score; }
  bool operator==(const GoldLabel&) const = default;

  json to_json() const;
  static GoldLabel from_json(const json& j);
};

struct ConversionRule {
  enum class Target { MapTo, Consistent, Manual };

  std::string dataset_id;  // "*" matches any dataset
  std::string source_label;
  Target target = Target::MapTo;
  TypeSet types;  // for MapTo
};

// The complete built-in rule table: the heuristic conversion for
// AggreFact-unified labels (NP -> Entity, Pred -> Predicate, Sent -> Addition,
// extrinsic additionally -> Addition) expanded over the datasets that use that
// label scheme, the per-dataset tables for BUMP, DiaSumFact, DiaSummFactCorr,
// FacEval and GovReport, and wildcard rules for clean labels and for the
// canonical type tokens themselves (which makes conversion idempotent).
const std::vector<ConversionRule>& builtin_rules();

// Case-insensitive, trimmed lookup; exact dataset rules shadow wildcards.
const ConversionRule* find_rule(std::string_view dataset_id, std::string_view source_label);

struct OverrideKey {
  std::string dataset_id;
  std::string example_id;
  std::string source_label;
  auto operator<=>(const OverrideKey&) const = default;
};

// Resolves Manual targets (and otherwise-unknown labels) per example.
using OverrideTable = std::map<OverrideKey, TypeSet>;

// One record per line, tab-separated:
//   dataset_id <TAB> example_id <TAB> source_label <TAB> comma-separated type tokens
// An empty fourth field maps the label to no types. '#' lines are skipped.
OverrideTable load_overrides(const std::string& path);
OverrideTable parse_overrides(std::string_view content);

struct UnknownLabel : std::runtime_error {
  UnknownLabel(std::string dataset, std::string label)
      : std::runtime_error("unknown label '" + label + "' for dataset '" + dataset + "'"),
        dataset_id(std::move(dataset)),
        label(std::move(label)) {}
  std::string dataset_id;
  std::string label;
};

struct MissingOverride : std::runtime_error {
  MissingOverride(std::string dataset, std::string example, std::string label)
      : std::runtime_error("label '" + label + "' of dataset '" + dataset +
                           "' requires a manual override (example '" + example + "')"),
        dataset_id(std::move(dataset)),
        example_id(std::move(example)),
        label(std::move(label)) {}
  std::string dataset_id;
  std::string example_id;
  std::string label;
};

// Unions the converted type sets of all source labels. An empty union yields
// Consistent. Overrides are consulted for Manual targets and for labels with
// no built-in rule; conversion never silently drops a label.
GoldLabel convert_label(std::string_view dataset_id,
                        const std::vector<std::string>& source_labels,
                        const OverrideTable& overrides = {},
                        std::string_view example_id = "");

// Error types available for a dataset after conversion; empty for datasets
// with no type annotations and for unknown dataset ids.
const TypeSet& dataset_types(std::string_view dataset_id);
bool dataset_has_type_annotations(std::string_view dataset_id);

// True iff the type set is empty and the consistency flag is not explicitly
// negative (an unparseable-response fallback sets the flag negative while
// leaving the set empty).
inline bool is_consistent(bool consistent_flag, const TypeSet& types) {
  return types.empty() && consistent_flag;
}

}  // namespace factax::taxonomy
