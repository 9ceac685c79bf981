#include <doctest.h>

#include <cmath>

#include "factax/evaluation.hpp"

using namespace factax;
using namespace factax::evaluation;
using prompting::Verdict;
using taxonomy::GoldLabel;
using enum taxonomy::ErrorType;

namespace {

std::vector<bool> bools(std::initializer_list<int> xs) {
  std::vector<bool> out;
  for (int x : xs) out.push_back(x != 0);
  return out;
}

corpus::SummaryExample gold_example(const std::string& id, const std::string& dataset,
                                    corpus::Domain domain, GoldLabel gold) {
  corpus::SummaryExample e;
  e.id = id;
  e.dataset_id = dataset;
  e.domain = domain;
  e.document = "document text";
  e.summary = "summary text";
  e.gold = std::move(gold);
  return e;
}

inference::VerdictRecord record_for(const std::string& id, const std::string& dataset,
                                    int run_index, Verdict verdict) {
  inference::VerdictRecord r;
  r.example_id = id;
  r.dataset_id = dataset;
  r.run_index = run_index;
  r.verdict = std::move(verdict);
  return r;
}

}  // namespace

TEST_CASE("balanced accuracy arithmetic") {
  CHECK(balanced_accuracy(bools({1, 1, 0, 0}), bools({1, 1, 0, 0})) == doctest::Approx(1.0));
  // TP=3 FN=1 TN=2 FP=2.
  CHECK(balanced_accuracy(bools({1, 1, 1, 0, 1, 1, 0, 0}),
                          bools({1, 1, 1, 1, 0, 0, 0, 0})) == doctest::Approx(0.625));
  CHECK(balanced_accuracy(bools({1, 1, 1, 1}), bools({1, 1, 0, 0})) == doctest::Approx(0.5));
  CHECK_THROWS_AS((void)balanced_accuracy(bools({1, 0}), bools({1, 1})), DegenerateGold);
  CHECK_THROWS((void)balanced_accuracy(bools({1}), bools({1, 0})));

  SUBCASE("invariant under consistent class relabeling") {
    Rng rng(12);
    for (int iter = 0; iter < 100; ++iter) {
      std::vector<bool> pred, gold;
      for (int i = 0; i < 40; ++i) {
        pred.push_back(rng.unit() < 0.5);
        gold.push_back(rng.unit() < 0.5);
      }
      gold[0] = true;
      gold[1] = false;  // both classes present
      std::vector<bool> pred_flip, gold_flip;
      for (bool b : pred) pred_flip.push_back(!b);
      for (bool b : gold) gold_flip.push_back(!b);
      CHECK(balanced_accuracy(pred, gold) ==
            doctest::Approx(balanced_accuracy(pred_flip, gold_flip)).epsilon(1e-12));
    }
  }
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0));
  // Pinned 12-decimal reference value for [1,2,3] vs [2,4,7].
  CHECK(pearson({1, 2, 3}, {2, 4, 7}) ==
        doctest::Approx(0.993399267798783).epsilon(1e-12));
  CHECK_THROWS_AS((void)pearson({1, 1, 1}, {1, 2, 3}), ZeroVariance);
  CHECK_THROWS((void)pearson({1}, {2}));

  SUBCASE("invariant under positive affine transforms") {
    Rng rng(77);
    for (int iter = 0; iter < 100; ++iter) {
      std::vector<double> xs, ys;
      for (int i = 0; i < 20; ++i) {
        xs.push_back(rng.unit() * 10);
        ys.push_back(rng.unit() * 10);
      }
      const double base = pearson(xs, ys);
      const double a = 0.5 + rng.unit() * 4;
      const double b = rng.unit() * 100 - 50;
      std::vector<double> xs2;
      for (double x : xs) xs2.push_back(a * x + b);
      CHECK(std::abs(pearson(xs2, ys) - base) < 1e-9);
    }
  }
}

TEST_CASE("domain and macro averages") {
  CHECK(domain_score({{"faceval", 62.76}}, {{"faceval", 200}}) == doctest::Approx(62.76));
  CHECK(domain_score({{"a", 60}, {"b", 70}}, {{"a", 5}, {"b", 5}}) == doctest::Approx(65));
  CHECK(domain_score({{"a", 80}, {"b", 60}}, {{"a", 100}, {"b", 300}}) ==
        doctest::Approx(65));
  CHECK_THROWS_AS((void)domain_score({{"a", 80}}, {}), MissingCount);

  CHECK(macro_score({{"CNN/DM", 68.97},
                     {"XSum", 72.21},
                     {"Dialogues", 62.76},
                     {"Reports", 40.54},
                     {"Stories", 45.93}}) == doctest::Approx(58.08).epsilon(0.0002));
  CHECK(macro_score({{"CNN/DM", 60.03},
                     {"XSum", 69.39},
                     {"Dialogues", 66.85},
                     {"Reports", 41.40},
                     {"Stories", 44.63}}) == doctest::Approx(56.46).epsilon(0.0002));
  CHECK(macro_score({{"only", 42.5}}) == doctest::Approx(42.5));
}

TEST_CASE("threshold tuning") {
  const auto separable = tune_threshold({0.1, 0.9}, bools({0, 1}));
  CHECK(separable.first == doctest::Approx(0.5));
  CHECK(separable.second == doctest::Approx(1.0));

  const auto flat = tune_threshold({0.4, 0.4, 0.4, 0.4}, bools({1, 0, 1, 0}));
  CHECK(flat.second == doctest::Approx(0.5));

  SUBCASE("achieved value dominates any fixed threshold") {
    Rng rng(5);
    for (int iter = 0; iter < 50; ++iter) {
      std::vector<double> scores;
      std::vector<bool> gold;
      for (int i = 0; i < 30; ++i) {
        scores.push_back(rng.unit());
        gold.push_back(rng.unit() < 0.5);
      }
      gold[0] = true;
      gold[1] = false;
      const auto [threshold, achieved] = tune_threshold(scores, gold);

      for (int probe = 0; probe < 20; ++probe) {
        const double t = rng.unit() * 1.2 - 0.1;
        std::vector<bool> pred;
        for (double s : scores) pred.push_back(s >= t);
        CHECK(balanced_accuracy(pred, gold) <= achieved + 1e-12);
      }
      // The returned threshold reproduces the achieved accuracy.
      std::vector<bool> pred;
      for (double s : scores) pred.push_back(s >= threshold);
      CHECK(balanced_accuracy(pred, gold) == doctest::Approx(achieved).epsilon(1e-12));
    }
  }
}

TEST_CASE("per-type F1 from hand-counted confusions") {
  // Five examples, counted by hand:
  //   Entity:    tp=2 (e1,e3), fp=1 (e4), fn=1 (e5) -> P=2/3 R=2/3 F1=2/3
  //   Predicate: tp=1 (e2), fp=0, fn=1 (e3)         -> P=1 R=1/2 F1=2/3
  //   Addition:  tp=0, fp=0, fn=2 (e4,e5)           -> all zero
  const std::vector<TypeSet> pred = {
      {Entity}, {Predicate}, {Entity}, {Entity}, {}};
  const std::vector<TypeSet> gold = {
      {Entity}, {Predicate}, {Entity, Predicate}, {Addition}, {Entity, Addition}};
  const auto f1 = error_type_f1(pred, gold);

  CHECK(f1.at(Entity).tp == 2);
  CHECK(f1.at(Entity).fp == 1);
  CHECK(f1.at(Entity).fn == 1);
  CHECK(f1.at(Entity).f1 == doctest::Approx(2.0 / 3.0));
  CHECK(f1.at(Predicate).precision == doctest::Approx(1.0));
  CHECK(f1.at(Predicate).recall == doctest::Approx(0.5));
  CHECK(f1.at(Predicate).f1 == doctest::Approx(2.0 / 3.0));
  CHECK(f1.at(Addition).f1 == doctest::Approx(0.0));

  // Perfect predictions give F1 = 1 on every type with support.
  const auto perfect = error_type_f1(gold, gold);
  for (const auto& [type, prf] : perfect) {
    if (prf.tp + prf.fn > 0) CHECK(prf.f1 == doctest::Approx(1.0));
  }
}

TEST_CASE("match criteria definitions and partial order") {
  const CriteriaFlags partial = match_criteria({Entity}, {Entity, Coreference});
  CHECK_FALSE(partial.exact);
  CHECK(partial.subset);
  CHECK(partial.contains_one);
  CHECK_FALSE(partial.contains_all);

  const CriteriaFlags identical = match_criteria({Entity, Coreference},
                                                 {Entity, Coreference});
  CHECK(identical.exact);
  CHECK(identical.subset);
  CHECK(identical.contains_one);
  CHECK(identical.contains_all);

  const CriteriaFlags empty_pred = match_criteria({}, {Entity});
  CHECK_FALSE(empty_pred.exact);
  CHECK(empty_pred.subset);
  CHECK_FALSE(empty_pred.contains_one);
  CHECK_FALSE(empty_pred.contains_all);

  CHECK_THROWS_AS((void)match_criteria({Entity}, {}), EmptyGold);

  SUBCASE("implication structure on random pairs") {
    Rng rng(21);
    for (int iter = 0; iter < 2000; ++iter) {
      TypeSet pred, gold;
      for (taxonomy::ErrorType t : taxonomy::kAllErrorTypes) {
        if (rng.unit() < 0.4) pred.insert(t);
        if (rng.unit() < 0.4) gold.insert(t);
      }
      if (gold.empty()) gold.insert(Predicate);
      const CriteriaFlags flags = match_criteria(pred, gold);
      if (flags.exact) {
        CHECK(flags.subset);
        CHECK(flags.contains_all);
      }
      if (flags.contains_all) CHECK(flags.contains_one);
    }
  }
}

TEST_CASE("criteria rates are percentages over incorrect gold cases") {
  const std::vector<TypeSet> pred = {{Entity}, {Predicate}, {}, {Entity}};
  const std::vector<TypeSet> gold = {{Entity}, {Entity}, {}, {Entity, Addition}};
  const CriteriaRates rates = criteria_rates(pred, gold);
  CHECK(rates.cases == 3);  // the consistent example is skipped
  CHECK(rates.exact == doctest::Approx(100.0 / 3.0));
  CHECK(rates.subset == doctest::Approx(200.0 / 3.0));
  CHECK(rates.contains_one == doctest::Approx(200.0 / 3.0));
  CHECK(rates.contains_all == doctest::Approx(100.0 / 3.0));
  CHECK(rates.exact <= std::min(rates.subset, rates.contains_all));
  CHECK(rates.contains_all <= rates.contains_one);
}

TEST_CASE("evaluate_records joins runs, datasets and domains") {
  std::vector<corpus::SummaryExample> gold;
  gold.push_back(gold_example("f1", "faceval", corpus::Domain::Dialogues,
                              GoldLabel::consistent()));
  gold.push_back(gold_example("f2", "faceval", corpus::Domain::Dialogues,
                              GoldLabel::inconsistent({Entity})));
  gold.push_back(gold_example("f3", "faceval", corpus::Domain::Dialogues,
                              GoldLabel::inconsistent({Predicate})));
  gold.push_back(gold_example("f4", "faceval", corpus::Domain::Dialogues,
                              GoldLabel::consistent()));
  gold.push_back(gold_example("s1", "summeval", corpus::Domain::CnnDm,
                              GoldLabel::score_value(2)));
  gold.push_back(gold_example("s2", "summeval", corpus::Domain::CnnDm,
                              GoldLabel::score_value(4)));
  gold.push_back(gold_example("s3", "summeval", corpus::Domain::CnnDm,
                              GoldLabel::score_value(5)));

  std::vector<inference::VerdictRecord> records;
  for (int run = 0; run < 2; ++run) {
    // Run 0 is perfect on faceval; run 1 flips one prediction.
    records.push_back(record_for("f1", "faceval", run, Verdict::clean()));
    records.push_back(record_for("f2", "faceval", run,
                                 Verdict::with_types({Entity})));
    records.push_back(record_for(
        "f3", "faceval", run,
        run == 0 ? Verdict::with_types({Predicate}) : Verdict::clean()));
    records.push_back(record_for("f4", "faceval", run, Verdict::clean()));
    for (const auto& [id, score] : {std::pair{"s1", 3.0}, {"s2", 5.0}, {"s3", 8.0}}) {
      Verdict v = Verdict::clean();
      v.score = score;
      records.push_back(record_for(id, "summeval", run, v));
    }
  }

  const EvalReport report = evaluate_records(records, gold, 2);
  CHECK(report.run_count == 2);
  // faceval: run 0 BA = 1.0; run 1 BA = (0.5 + 1.0) / 2 = 0.75; mean 0.875.
  CHECK(report.per_dataset.at("faceval") == doctest::Approx(0.875));
  CHECK(report.per_dataset_metric.at("faceval") == "balanced_accuracy");
  // summeval: identical monotone scores both runs -> pearson vs gold.
  CHECK(report.per_dataset.at("summeval") ==
        doctest::Approx(pearson({2, 4, 5}, {3, 5, 8})));
  CHECK(report.per_dataset_metric.at("summeval") == "pearson");
  CHECK(report.per_dataset_count.at("faceval") == 4);
  CHECK(report.per_domain.at("Dialogues") == doctest::Approx(0.875));
  CHECK(report.macro ==
        doctest::Approx((0.875 + pearson({2, 4, 5}, {3, 5, 8})) / 2.0));

  // Per-type F1 pools the typed dataset across runs: Entity perfect,
  // Predicate hit in run 0 and missed in run 1.
  CHECK(report.per_type_f1.at(Entity).f1 == doctest::Approx(1.0));
  CHECK(report.per_type_f1.at(Predicate).recall == doctest::Approx(0.5));

  // Criteria cover the inconsistent typed cases of both runs.
  CHECK(report.criteria.cases == 4);

  SUBCASE("strict mode demands complete runs") {
    records.pop_back();
    CHECK_THROWS_AS((void)evaluate_records(records, gold, 2, true),
                    inference::IncompleteRun);
    const EvalReport tolerant = evaluate_records(records, gold, 2, false);
    CHECK_FALSE(tolerant.warnings.empty());
  }
  SUBCASE("datasets absent from the records are warned about") {
    gold.push_back(gold_example("g1", "govreport", corpus::Domain::Reports,
                                GoldLabel::inconsistent({Addition})));
    const EvalReport partial = evaluate_records(records, gold, 2);
    CHECK(partial.per_dataset.count("govreport") == 0);
    CHECK_FALSE(partial.warnings.empty());
  }
}
