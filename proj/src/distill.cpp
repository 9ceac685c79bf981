#include "factax/distill.hpp"

#include <algorithm>
#include <cmath>

namespace factax::distill {

namespace {

std::string binary_prompt(const corpus::SummaryExample& example) {
  std::string prompt =
      "Determine whether the summary is factually consistent with the "
      "document.\n\nDocument:\n";
  prompt += example.document;
  prompt += "\n\nSummary:\n";
  prompt += example.summary;
  prompt += "\n\nAnswer \"";
  prompt += kBinaryConsistentToken;
  prompt += "\" or \"";
  prompt += kBinaryInconsistentToken;
  prompt += "\".";
  return prompt;
}

std::string taxonomy_prompt(const corpus::SummaryExample& example) {
  std::string prompt =
      "Identify the factual error types in the summary with respect to the "
      "document. The candidate error types are:\n";
  for (taxonomy::ErrorType type : taxonomy::kAllErrorTypes) {
    prompt += "- ";
    prompt += taxonomy::display_name(type);
    prompt += ": ";
    prompt += taxonomy::definition(type);
    prompt += '\n';
  }
  prompt += "\nDocument:\n";
  prompt += example.document;
  prompt += "\n\nSummary:\n";
  prompt += example.summary;
  prompt += "\n\nAnswer \"";
  prompt += kNoErrorToken;
  prompt += "\" or the comma-separated error types present.";
  return prompt;
}

json hyperparameter_recommendation() {
  // Documented recipe for consuming this corpus; the toolkit does not run
  // fine-tuning itself.
  return json{{"epochs", 8},
              {"per_device_batch_size", 1},
              {"learning_rate", 1e-5},
              {"lr_schedule", "cosine"},
              {"warmup_ratio", 0.05},
              {"loss", "completion_only"}};
}

}  // namespace

std::string_view pair_kind_name(PairKind kind) {
  return kind == PairKind::Binary ? "binary" : "taxonomy";
}

json PromptCompletion::to_json() const {
  return json{{"prompt", prompt},
              {"completion", completion},
              {"kind", std::string(pair_kind_name(kind))},
              {"source_example_id", source_example_id},
              {"dataset_id", dataset_id}};
}

bool dataset_is_typed(std::string_view dataset_id, const std::set<std::string>& extra) {
  if (taxonomy::dataset_has_type_annotations(dataset_id)) return true;
  return extra.count(std::string(dataset_id)) > 0;
}

PromptCompletion make_binary_pair(const corpus::SummaryExample& example) {
  if (!example.gold.binary_resolvable()) throw ScoreLabeled(example.id);
  PromptCompletion pair;
  pair.prompt = binary_prompt(example);
  pair.completion = example.gold.kind == taxonomy::GoldLabel::Kind::Consistent
                        ? std::string(kBinaryConsistentToken)
                        : std::string(kBinaryInconsistentToken);
  pair.kind = PairKind::Binary;
  pair.source_example_id = example.id;
  pair.dataset_id = example.dataset_id;
  return pair;
}

PromptCompletion make_taxonomy_pair(const corpus::SummaryExample& example,
                                    const std::set<std::string>& typed_datasets) {
  if (!example.gold.binary_resolvable()) throw ScoreLabeled(example.id);
  const bool inconsistent = example.gold.kind == taxonomy::GoldLabel::Kind::Inconsistent;
  if (inconsistent && example.gold.types.empty()) throw NoTypeLabels(example.id);
  if (!inconsistent && !dataset_is_typed(example.dataset_id, typed_datasets)) {
    // A consistent example only carries an (implicit) empty type set when its
    // dataset annotates types at all.
    throw NoTypeLabels(example.id);
  }
  PromptCompletion pair;
  pair.prompt = taxonomy_prompt(example);
  pair.completion = inconsistent ? taxonomy::format_type_list(example.gold.types)
                                 : std::string(kNoErrorToken);
  pair.kind = PairKind::Taxonomy;
  pair.source_example_id = example.id;
  pair.dataset_id = example.dataset_id;
  return pair;
}

ForgeSetting::Name ForgeSetting::parse_name(std::string_view text) {
  if (iequals(text, "I-Binary") || iequals(text, "i_binary")) return Name::IBinary;
  if (iequals(text, "I-Taxonomy") || iequals(text, "i_taxonomy")) return Name::ITaxonomy;
  if (iequals(text, "I&II-Taxonomy") || iequals(text, "i_ii_taxonomy") ||
      iequals(text, "I+II-Taxonomy")) {
    return Name::IAndIITaxonomy;
  }
  throw std::invalid_argument("unknown distillation setting: " + std::string(text));
}

std::string_view ForgeSetting::name_text(Name name) {
  switch (name) {
    case Name::IBinary: return "I-Binary";
    case Name::ITaxonomy: return "I-Taxonomy";
    case Name::IAndIITaxonomy: return "I&II-Taxonomy";
  }
  return "?";
}

double taxonomy_ratio_from_counts(std::size_t binary_count, std::size_t total_count) {
  if (total_count == 0) throw std::invalid_argument("total pair count must be > 0");
  if (binary_count > total_count) {
    throw std::invalid_argument("binary count exceeds total count");
  }
  return static_cast<double>(total_count - binary_count) / static_cast<double>(total_count);
}

TrainingCorpus build_training_corpus(const ForgeSetting& setting,
                                     const corpus::Splits& splits,
                                     const std::set<std::string>& typed_datasets) {
  TrainingCorpus corpus_out;
  std::size_t binary_count = 0, taxonomy_count = 0, skipped_score = 0;
  std::map<std::string, std::map<std::string, std::size_t>> per_dataset;

  auto add_binary = [&](const corpus::SummaryExample& e) {
    if (!e.gold.binary_resolvable()) {
      ++skipped_score;
      return;
    }
    corpus_out.pairs.push_back(make_binary_pair(e));
    ++binary_count;
    ++per_dataset[e.dataset_id]["binary"];
  };

  for (const corpus::SummaryExample& e : splits.train_one) {
    add_binary(e);
    if (setting.name == ForgeSetting::Name::IBinary) continue;
    if (!e.gold.binary_resolvable()) continue;
    const bool type_labeled =
        e.gold.kind == taxonomy::GoldLabel::Kind::Inconsistent
            ? !e.gold.types.empty()
            : dataset_is_typed(e.dataset_id, typed_datasets);
    if (!type_labeled) continue;
    corpus_out.pairs.push_back(make_taxonomy_pair(e, typed_datasets));
    ++taxonomy_count;
    ++per_dataset[e.dataset_id]["taxonomy"];
  }

  if (setting.name == ForgeSetting::Name::IAndIITaxonomy) {
    for (const corpus::SummaryExample& e : splits.train_two) add_binary(e);
  }

  const std::size_t total = binary_count + taxonomy_count;
  json per_dataset_json = json::object();
  for (const auto& [dataset, kinds] : per_dataset) {
    per_dataset_json[dataset] = json{{"binary", kinds.count("binary") ? kinds.at("binary") : 0},
                                     {"taxonomy",
                                      kinds.count("taxonomy") ? kinds.at("taxonomy") : 0}};
  }
  corpus_out.manifest =
      json{{"setting", std::string(ForgeSetting::name_text(setting.name))},
           {"binary_pairs", binary_count},
           {"taxonomy_pairs", taxonomy_count},
           {"total_pairs", total},
           // Companion total for audits that count only binary pairs; the
           // two totals bracket the ambiguity in how a combined corpus may
           // be sized.
           {"total_pairs_binary_only", binary_count},
           {"taxonomy_ratio", total > 0 ? taxonomy_ratio_from_counts(binary_count, total)
                                        : 0.0},
           {"skipped_score_labeled", skipped_score},
           {"per_dataset", std::move(per_dataset_json)},
           {"seed", setting.seed},
           {"recommended_hyperparameters", hyperparameter_recommendation()}};
  if (setting.name == ForgeSetting::Name::IAndIITaxonomy) {
    corpus_out.manifest["epoch_taxonomy_ratio_target"] = setting.taxonomy_ratio;
  }
  return corpus_out;
}

std::vector<PromptCompletion> sample_with_ratio(const std::vector<PromptCompletion>& pairs,
                                                double taxonomy_ratio,
                                                std::size_t epoch_size,
                                                std::uint64_t seed) {
  if (taxonomy_ratio < 0.0 || taxonomy_ratio > 1.0) {
    throw std::invalid_argument("taxonomy_ratio must be in [0,1]");
  }
  std::vector<std::size_t> binary_idx, taxonomy_idx;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    (pairs[i].kind == PairKind::Taxonomy ? taxonomy_idx : binary_idx).push_back(i);
  }
  const std::size_t want_taxonomy = static_cast<std::size_t>(
      std::llround(taxonomy_ratio * static_cast<double>(epoch_size)));
  const std::size_t want_binary = epoch_size - want_taxonomy;
  if (want_taxonomy > 0 && taxonomy_idx.empty()) throw EmptyStratum("taxonomy");
  if (want_binary > 0 && binary_idx.empty()) throw EmptyStratum("binary");

  Rng rng(seed);
  auto draw = [&](const std::vector<std::size_t>& stratum, std::size_t want,
                  std::vector<std::size_t>& out) {
    if (want <= stratum.size()) {
      for (std::size_t pick : rng.sample_indices(stratum.size(), want)) {
        out.push_back(stratum[pick]);
      }
    } else {
      // Exhausted stratum: fall back to drawing with replacement.
      for (std::size_t k = 0; k < want; ++k) {
        out.push_back(stratum[rng.index(stratum.size())]);
      }
    }
  };
  std::vector<std::size_t> picks;
  picks.reserve(epoch_size);
  draw(taxonomy_idx, want_taxonomy, picks);
  draw(binary_idx, want_binary, picks);
  rng.shuffle(picks);

  std::vector<PromptCompletion> epoch;
  epoch.reserve(picks.size());
  for (std::size_t i : picks) epoch.push_back(pairs[i]);
  return epoch;
}

ExportFormat parse_export_format(std::string_view name) {
  if (iequals(name, "pairs")) return ExportFormat::Pairs;
  if (iequals(name, "chat")) return ExportFormat::Chat;
  throw std::invalid_argument("unknown export format: " + std::string(name));
}

void export_corpus(const std::vector<PromptCompletion>& pairs, const std::string& path,
                   ExportFormat format, const json& extra_manifest) {
  std::string out;
  std::size_t binary_count = 0;
  for (const PromptCompletion& pair : pairs) {
    if (pair.kind == PairKind::Binary) ++binary_count;
    if (format == ExportFormat::Pairs) {
      out += pair.to_json().dump();
    } else {
      out += json{{"messages",
                   json::array({json{{"role", "user"}, {"content", pair.prompt}},
                                json{{"role", "assistant"}, {"content", pair.completion}}})},
                  {"kind", std::string(pair_kind_name(pair.kind))},
                  {"source_example_id", pair.source_example_id},
                  {"dataset_id", pair.dataset_id}}
                 .dump();
    }
    out += '\n';
  }
  write_file_atomic(path, out);

  json manifest{{"pairs", pairs.size()},
                {"binary_pairs", binary_count},
                {"taxonomy_pairs", pairs.size() - binary_count},
                {"format", format == ExportFormat::Pairs ? "pairs" : "chat"},
                {"loss", "completion_only"}};
  for (const auto& [key, value] : extra_manifest.items()) manifest[key] = value;
  write_file_atomic(path + ".manifest.json", manifest.dump(2) + "\n");
}

}  // namespace factax::distill
