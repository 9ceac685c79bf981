#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "factax/corpus.hpp"
#include "factax/inference.hpp"
#include "factax/taxonomy.hpp"

namespace factax::evaluation {

using taxonomy::ErrorType;
using taxonomy::TypeSet;

struct DegenerateGold : std::runtime_error {
  explicit DegenerateGold(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroVariance : std::runtime_error {
  explicit ZeroVariance(const std::string& what) : std::runtime_error(what) {}
};

struct MissingCount : std::runtime_error {
  std::string dataset_id;
  explicit MissingCount(std::string id)
      : std::runtime_error("no example count for dataset " + id),
        dataset_id(std::move(id)) {}
};

struct EmptyGold : std::runtime_error {
  EmptyGold() : std::runtime_error("match criteria need a non-empty gold type set") {}
};

// (sensitivity + specificity) / 2, positive class = true. Throws
// DegenerateGold unless both classes appear in gold.
double balanced_accuracy(const std::vector<bool>& pred_labels,
                         const std::vector<bool>& gold_labels);

// Sample Pearson product-moment correlation. Throws ZeroVariance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Example-count-weighted (micro) average over one domain's datasets.
double domain_score(const std::map<std::string, double>& dataset_scores,
                    const std::map<std::string, std::size_t>& dataset_example_counts);

// Unweighted mean over domains.
double macro_score(const std::map<std::string, double>& domain_scores);

// Scans all midpoints between consecutive distinct sorted scores plus +/-inf;
// prediction rule is score >= threshold -> positive. Ties break toward the
// smaller threshold. Returns (threshold, achieved balanced accuracy).
std::pair<double, double> tune_threshold(const std::vector<double>& scores,
                                         const std::vector<bool>& gold_labels);

struct TypePRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

// Per-type precision/recall/F1 over aligned example lists; an undefined
// quotient counts as 0.
std::map<ErrorType, TypePRF> error_type_f1(const std::vector<TypeSet>& pred_type_sets,
                                           const std::vector<TypeSet>& gold_type_sets);

struct CriteriaFlags {
  bool exact = false;
  bool subset = false;
  bool contains_one = false;
  bool contains_all = false;
};

// The four type-match criteria on one factually-incorrect example. Throws
// EmptyGold when gold_set is empty.
CriteriaFlags match_criteria(const TypeSet& pred_set, const TypeSet& gold_set);

struct CriteriaRates {
  double exact = 0.0;         // percentages in [0,100]
  double subset = 0.0;
  double contains_one = 0.0;
  double contains_all = 0.0;
  std::size_t cases = 0;
};

CriteriaRates criteria_rates(const std::vector<TypeSet>& pred_type_sets,
                             const std::vector<TypeSet>& gold_type_sets);

struct EvalReport {
  std::map<std::string, double> per_dataset;
  std::map<std::string, std::string> per_dataset_metric;     // balanced_accuracy | pearson
  std::map<std::string, std::size_t> per_dataset_count;      // micro-average weights
  std::map<std::string, double> per_domain;
  double macro = 0.0;
  std::map<ErrorType, TypePRF> per_type_f1;
  CriteriaRates criteria;
  int run_count = 0;
  std::vector<std::string> warnings;

  json to_json() const;
  std::string to_text() const;
};

// Joins verdict records against the gold corpus: per-run per-dataset metrics
// (balanced accuracy, or Pearson for score-labeled datasets), averaged over
// runs, micro-averaged into domains (weights = evaluated example counts,
// echoed for audit), MACRO over domains, plus per-type F1 and the four match
// criteria over type-annotated gold. `strict_runs` demands complete runs
// (IncompleteRun otherwise); the default tolerates and warns.
EvalReport evaluate_records(const std::vector<inference::VerdictRecord>& records,
                            const std::vector<corpus::SummaryExample>& gold,
                            int expected_runs, bool strict_runs = false);

}  // namespace factax::evaluation
