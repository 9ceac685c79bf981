#include "factax/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace factax::evaluation {

namespace {

struct Confusion {
  long tp = 0, fn = 0, tn = 0, fp = 0;
};

Confusion count_confusion(const std::vector<bool>& pred, const std::vector<bool>& gold) {
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double balanced_accuracy_unchecked(const Confusion& c) {
  const double sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return (sensitivity + specificity) / 2.0;
}

}  // namespace

double balanced_accuracy(const std::vector<bool>& pred_labels,
                         const std::vector<bool>& gold_labels) {
  if (pred_labels.size() != gold_labels.size()) {
    throw std::invalid_argument("balanced_accuracy: length mismatch");
  }
  const Confusion c = count_confusion(pred_labels, gold_labels);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw DegenerateGold("balanced accuracy needs both classes in gold");
  }
  return balanced_accuracy_unchecked(c);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += xs[i];
    mean_y += ys[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ZeroVariance("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

double domain_score(const std::map<std::string, double>& dataset_scores,
                    const std::map<std::string, std::size_t>& dataset_example_counts) {
  if (dataset_scores.empty()) throw std::invalid_argument("domain_score: empty input");
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& [dataset, score] : dataset_scores) {
    const auto it = dataset_example_counts.find(dataset);
    if (it == dataset_example_counts.end()) throw MissingCount(dataset);
    weighted += score * static_cast<double>(it->second);
    total += static_cast<double>(it->second);
  }
  if (total == 0.0) throw std::invalid_argument("domain_score: zero total count");
  return weighted / total;
}

double macro_score(const std::map<std::string, double>& domain_scores) {
  if (domain_scores.empty()) throw std::invalid_argument("macro_score: empty input");
  double sum = 0.0;
  for (const auto& [domain, score] : domain_scores) sum += score;
  return sum / static_cast<double>(domain_scores.size());
}

std::pair<double, double> tune_threshold(const std::vector<double>& scores,
                                         const std::vector<bool>& gold_labels) {
  if (scores.size() != gold_labels.size()) {
    throw std::invalid_argument("tune_threshold: length mismatch");
  }
  long positives = 0;
  for (bool g : gold_labels) positives += g ? 1 : 0;
  if (positives == 0 || positives == static_cast<long>(gold_labels.size())) {
    throw DegenerateGold("threshold tuning needs both classes in gold");
  }

  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  }
  candidates.push_back(std::numeric_limits<double>::infinity());

  double best_threshold = candidates.front();
  double best_accuracy = -1.0;
  std::vector<bool> pred(scores.size());
  for (double threshold : candidates) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold;
    const double accuracy = balanced_accuracy_unchecked(count_confusion(pred, gold_labels));
    if (accuracy > best_accuracy) {
      best_accuracy = accuracy;
      best_threshold = threshold;
    }
  }
  return {best_threshold, best_accuracy};
}

std::map<ErrorType, TypePRF> error_type_f1(const std::vector<TypeSet>& pred_type_sets,
                                           const std::vector<TypeSet>& gold_type_sets) {
  if (pred_type_sets.size() != gold_type_sets.size()) {
    throw std::invalid_argument("error_type_f1: length mismatch");
  }
  std::map<ErrorType, TypePRF> out;
  for (ErrorType type : taxonomy::kAllErrorTypes) {
    TypePRF prf;
    for (std::size_t i = 0; i < gold_type_sets.size(); ++i) {
      const bool in_pred = pred_type_sets[i].count(type) > 0;
      const bool in_gold = gold_type_sets[i].count(type) > 0;
      if (in_pred && in_gold) ++prf.tp;
      if (in_pred && !in_gold) ++prf.fp;
      if (!in_pred && in_gold) ++prf.fn;
    }
    prf.precision = prf.tp + prf.fp > 0
                        ? static_cast<double>(prf.tp) / static_cast<double>(prf.tp + prf.fp)
                        : 0.0;
    prf.recall = prf.tp + prf.fn > 0
                     ? static_cast<double>(prf.tp) / static_cast<double>(prf.tp + prf.fn)
                     : 0.0;
    prf.f1 = prf.precision + prf.recall > 0.0
                 ? 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)
                 : 0.0;
    out[type] = prf;
  }
  return out;
}

CriteriaFlags match_criteria(const TypeSet& pred_set, const TypeSet& gold_set) {
  if (gold_set.empty()) throw EmptyGold();
  CriteriaFlags flags;
  flags.exact = pred_set == gold_set;
  flags.subset = std::includes(gold_set.begin(), gold_set.end(), pred_set.begin(),
                               pred_set.end());
  flags.contains_all = std::includes(pred_set.begin(), pred_set.end(), gold_set.begin(),
                                     gold_set.end());
  flags.contains_one = std::any_of(pred_set.begin(), pred_set.end(), [&](ErrorType t) {
    return gold_set.count(t) > 0;
  });
  return flags;
}

CriteriaRates criteria_rates(const std::vector<TypeSet>& pred_type_sets,
                             const std::vector<TypeSet>& gold_type_sets) {
  if (pred_type_sets.size() != gold_type_sets.size()) {
    throw std::invalid_argument("criteria_rates: length mismatch");
  }
  CriteriaRates rates;
  long exact = 0, subset = 0, one = 0, all = 0;
  for (std::size_t i = 0; i < gold_type_sets.size(); ++i) {
    if (gold_type_sets[i].empty()) continue;
    const CriteriaFlags flags = match_criteria(pred_type_sets[i], gold_type_sets[i]);
    ++rates.cases;
    exact += flags.exact;
    subset += flags.subset;
    one += flags.contains_one;
    all += flags.contains_all;
  }
  if (rates.cases > 0) {
    const double denom = static_cast<double>(rates.cases);
    rates.exact = 100.0 * static_cast<double>(exact) / denom;
    rates.subset = 100.0 * static_cast<double>(subset) / denom;
    rates.contains_one = 100.0 * static_cast<double>(one) / denom;
    rates.contains_all = 100.0 * static_cast<double>(all) / denom;
  }
  return rates;
}

json EvalReport::to_json() const {
  json datasets = json::object();
  for (const auto& [dataset, score] : per_dataset) {
    datasets[dataset] = json{{"score", score},
                             {"metric", per_dataset_metric.at(dataset)},
                             {"examples", per_dataset_count.at(dataset)}};
  }
  json domains = json::object();
  for (const auto& [domain, score] : per_domain) domains[domain] = score;
  json f1 = json::object();
  for (const auto& [type, prf] : per_type_f1) {
    f1[std::string(taxonomy::canonical_token(type))] =
        json{{"precision", prf.precision}, {"recall", prf.recall},   {"f1", prf.f1},
             {"tp", prf.tp},               {"fp", prf.fp},           {"fn", prf.fn}};
  }
  json j{{"per_dataset", std::move(datasets)},
         {"per_domain", std::move(domains)},
         {"macro", macro},
         {"run_count", run_count},
         {"warnings", warnings}};
  if (!per_type_f1.empty()) j["per_type_f1"] = std::move(f1);
  if (criteria.cases > 0) {
    j["criteria_rates"] = json{{"exact", criteria.exact},
                               {"subset", criteria.subset},
                               {"contains_one", criteria.contains_one},
                               {"contains_all", criteria.contains_all},
                               {"cases", criteria.cases}};
  }
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "== Evaluation report (" << run_count << " run" << (run_count == 1 ? "" : "s")
      << ") ==\n";
  out << "\nPer dataset:\n";
  for (const auto& [dataset, score] : per_dataset) {
    out << "  " << dataset << ": " << score << " (" << per_dataset_metric.at(dataset)
        << ", n=" << per_dataset_count.at(dataset) << ")\n";
  }
  out << "\nPer domain (micro-averaged, weights = evaluated examples):\n";
  for (const auto& [domain, score] : per_domain) {
    out << "  " << domain << ": " << score << "\n";
  }
  out << "\nMACRO: " << macro << "\n";
  if (!per_type_f1.empty()) {
    out << "\nPer-type F1:\n";
    for (const auto& [type, prf] : per_type_f1) {
      out << "  " << taxonomy::display_name(type) << ": P=" << prf.precision
          << " R=" << prf.recall << " F1=" << prf.f1 << " (tp=" << prf.tp
          << " fp=" << prf.fp << " fn=" << prf.fn << ")\n";
    }
  }
  if (criteria.cases > 0) {
    out.precision(2);
    out << "\nType-match criteria over " << criteria.cases << " cases (%):\n"
        << "  exact=" << criteria.exact << " subset=" << criteria.subset
        << " contains_one=" << criteria.contains_one
        << " contains_all=" << criteria.contains_all << "\n";
    out.precision(4);
  }
  for (const std::string& warning : warnings) out << "\nwarning: " << warning << "\n";
  return out.str();
}

EvalReport evaluate_records(const std::vector<inference::VerdictRecord>& records,
                            const std::vector<corpus::SummaryExample>& gold,
                            int expected_runs, bool strict_runs) {
  EvalReport report;

  std::map<std::string, const corpus::SummaryExample*> gold_by_id;
  for (const corpus::SummaryExample& e : gold) gold_by_id[e.id] = &e;

  const auto runs = inference::predictions(
      records, strict_runs ? inference::PredictionPolicy::Averaged
                           : inference::PredictionPolicy::PerRun,
      expected_runs);
  report.run_count = static_cast<int>(runs.size());

  if (!strict_runs) {
    std::set<std::string> all_ids;
    for (const inference::VerdictRecord& r : records) all_ids.insert(r.example_id);
    for (int run_index = 0; run_index < expected_runs; ++run_index) {
      const auto it = runs.find(run_index);
      if (it == runs.end()) {
        report.warnings.push_back("run " + std::to_string(run_index) +
                                  " has no records; evaluating the rest");
        continue;
      }
      std::set<std::string> ids;
      for (const inference::VerdictRecord& r : it->second) ids.insert(r.example_id);
      if (ids != all_ids) {
        report.warnings.push_back("run " + std::to_string(run_index) + " covers " +
                                  std::to_string(ids.size()) + " of " +
                                  std::to_string(all_ids.size()) + " examples");
      }
    }
  }

  // Per-run, per-dataset paired predictions.
  struct DatasetRun {
    std::vector<bool> pred, gold_labels;       // classification
    std::vector<double> pred_scores, gold_scores;  // score-labeled
  };
  std::map<std::string, std::map<int, DatasetRun>> by_dataset;
  std::map<std::string, std::set<std::string>> evaluated_ids;
  std::set<std::string> unmatched;

  // Type-level pools (typed datasets only; gold Consistent counts as the
  // empty set, binary-only Inconsistent gold is excluded).
  std::vector<TypeSet> pred_types, gold_types;

  for (const auto& [run_index, run_records] : runs) {
    for (const inference::VerdictRecord& r : run_records) {
      const auto it = gold_by_id.find(r.example_id);
      if (it == gold_by_id.end()) {
        unmatched.insert(r.example_id);
        continue;
      }
      const corpus::SummaryExample& e = *it->second;
      DatasetRun& slot = by_dataset[e.dataset_id][run_index];
      evaluated_ids[e.dataset_id].insert(e.id);

      if (e.gold.kind == taxonomy::GoldLabel::Kind::Score) {
        if (r.verdict.score.has_value()) {
          slot.pred_scores.push_back(*r.verdict.score);
          slot.gold_scores.push_back(e.gold.score);
        }
      } else {
        slot.pred.push_back(r.verdict.consistent);
        slot.gold_labels.push_back(e.gold.kind == taxonomy::GoldLabel::Kind::Consistent);
      }

      if (taxonomy::dataset_has_type_annotations(e.dataset_id)) {
        if (e.gold.kind == taxonomy::GoldLabel::Kind::Consistent) {
          pred_types.push_back(r.verdict.types);
          gold_types.push_back({});
        } else if (e.gold.kind == taxonomy::GoldLabel::Kind::Inconsistent &&
                   !e.gold.types.empty()) {
          pred_types.push_back(r.verdict.types);
          gold_types.push_back(e.gold.types);
        }
      }
    }
  }
  if (!unmatched.empty()) {
    report.warnings.push_back(std::to_string(unmatched.size()) +
                              " record example ids missing from gold; ignored");
  }

  // Dataset scores: mean over runs of the per-run metric.
  for (const auto& [dataset, per_run] : by_dataset) {
    double sum = 0.0;
    int usable = 0;
    std::string metric;
    for (const auto& [run_index, slot] : per_run) {
      try {
        if (!slot.gold_scores.empty()) {
          metric = "pearson";
          sum += pearson(slot.pred_scores, slot.gold_scores);
          ++usable;
        } else if (!slot.gold_labels.empty()) {
          metric = "balanced_accuracy";
          sum += balanced_accuracy(slot.pred, slot.gold_labels);
          ++usable;
        }
      } catch (const std::exception& ex) {
        report.warnings.push_back("dataset " + dataset + " run " +
                                  std::to_string(run_index) + ": " + ex.what());
      }
    }
    if (usable == 0) {
      report.warnings.push_back("dataset " + dataset + " has no scorable run; excluded");
      continue;
    }
    report.per_dataset[dataset] = sum / usable;
    report.per_dataset_metric[dataset] = metric;
    report.per_dataset_count[dataset] = evaluated_ids[dataset].size();
  }

  // Gold datasets that never showed up in the records.
  for (const corpus::SummaryExample& e : gold) {
    if (!by_dataset.count(e.dataset_id)) {
      const std::string warning =
          "gold dataset " + e.dataset_id + " absent from records; excluded from MACRO";
      if (std::find(report.warnings.begin(), report.warnings.end(), warning) ==
          report.warnings.end()) {
        report.warnings.push_back(warning);
      }
    }
  }

  // Micro-average into domains, then MACRO.
  std::map<std::string, std::map<std::string, double>> domain_datasets;
  for (const auto& [dataset, score] : report.per_dataset) {
    // Domain comes from the gold examples of that dataset.
    std::string domain;
    for (const corpus::SummaryExample& e : gold) {
      if (e.dataset_id == dataset) {
        domain = std::string(corpus::domain_name(e.domain));
        break;
      }
    }
    domain_datasets[domain][dataset] = score;
  }
  for (const auto& [domain, scores] : domain_datasets) {
    std::map<std::string, std::size_t> counts;
    for (const auto& [dataset, score] : scores) {
      counts[dataset] = report.per_dataset_count.at(dataset);
    }
    report.per_domain[domain] = domain_score(scores, counts);
  }
  if (!report.per_domain.empty()) report.macro = macro_score(report.per_domain);

  if (!gold_types.empty()) {
    report.per_type_f1 = error_type_f1(pred_types, gold_types);
    report.criteria = criteria_rates(pred_types, gold_types);
  }
  return report;
}

}  // namespace factax::evaluation
