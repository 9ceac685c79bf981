#include "factax/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <set>
#include <sstream>

namespace factax::corpus {

namespace {

std::string canonical_dataset_id(std::string_view id) {
  std::string out;
  for (char c : id) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out += static_cast<char>(std::tolower(u));
  }
  return out;
}

std::string describe(const json& j) {
  return j.dump().substr(0, 120);
}

}  // namespace

std::string_view domain_name(Domain domain) {
  switch (domain) {
    case Domain::CnnDm: return "CNN/DM";
    case Domain::XSum: return "XSum";
    case Domain::Dialogues: return "Dialogues";
    case Domain::Reports: return "Reports";
    case Domain::Stories: return "Stories";
  }
  return "?";
}

std::optional<Domain> parse_domain(std::string_view name) {
  const std::string canon = canonical_dataset_id(name);
  if (canon == "cnndm" || canon == "cnndailymail") return Domain::CnnDm;
  if (canon == "xsum") return Domain::XSum;
  if (canon == "dialogues" || canon == "dialogue") return Domain::Dialogues;
  if (canon == "reports" || canon == "report") return Domain::Reports;
  if (canon == "stories" || canon == "story") return Domain::Stories;
  return std::nullopt;
}

const std::vector<Domain>& dataset_domains(std::string_view dataset_id) {
  static const std::map<std::string, std::vector<Domain>> kTable = {
      {"polytope", {Domain::CnnDm}},
      {"summeval", {Domain::CnnDm}},
      {"frank", {Domain::CnnDm}},
      {"bump", {Domain::CnnDm}},
      {"cliff", {Domain::CnnDm, Domain::XSum}},
      {"xsumfaith", {Domain::XSum}},
      {"wang20", {Domain::XSum}},
      {"qags", {Domain::XSum}},
      {"goyal21", {Domain::XSum}},
      {"cao22", {Domain::XSum}},
      {"diasumfact", {Domain::Dialogues}},
      {"diasummeval", {Domain::Dialogues}},
      {"diasummfactcorr", {Domain::Dialogues}},
      {"faceval", {Domain::Dialogues}},
      {"govreport", {Domain::Reports}},
      {"squality", {Domain::Stories}},
  };
  static const std::vector<Domain> kEmpty;
  const auto it = kTable.find(canonical_dataset_id(dataset_id));
  return it == kTable.end() ? kEmpty : it->second;
}

bool domain_needs_alignment(Domain domain) {
  return domain == Domain::Reports || domain == Domain::Stories;
}

json SummaryExample::to_json() const {
  json j{{"id", id},
         {"dataset_id", dataset_id},
         {"domain", std::string(domain_name(domain))},
         {"document", document},
         {"summary", summary},
         {"gold", gold.to_json()}};
  if (!origin_model.empty()) j["origin_model"] = origin_model;
  return j;
}

SummaryExample SummaryExample::from_json(const json& j) {
  SummaryExample e;
  e.id = j.at("id").get<std::string>();
  e.dataset_id = j.at("dataset_id").get<std::string>();
  const std::string domain_text = j.at("domain").get<std::string>();
  const auto domain = parse_domain(domain_text);
  if (!domain) throw std::invalid_argument("unknown domain: " + domain_text);
  e.domain = *domain;
  e.document = j.at("document").get<std::string>();
  e.summary = j.at("summary").get<std::string>();
  e.gold = taxonomy::GoldLabel::from_json(j.at("gold"));
  e.origin_model = j.value("origin_model", std::string());

  if (trim(e.document).empty()) throw std::invalid_argument("empty document");
  if (trim(e.summary).empty()) throw std::invalid_argument("empty summary");
  const std::vector<Domain>& allowed = dataset_domains(e.dataset_id);
  if (!allowed.empty() &&
      std::find(allowed.begin(), allowed.end(), e.domain) == allowed.end()) {
    throw std::invalid_argument("domain " + domain_text + " not valid for dataset " +
                                e.dataset_id);
  }
  return e;
}

json SchemaDescriptor::to_json() const {
  json j{{"dataset_id", dataset_id},
         {"domain", std::string(domain_name(domain))},
         {"document_field", document_field},
         {"summary_field", summary_field}};
  if (!id_field.empty()) j["id_field"] = id_field;
  if (!labels_field.empty()) j["labels_field"] = labels_field;
  if (!consistent_field.empty()) j["consistent_field"] = consistent_field;
  if (!score_field.empty()) j["score_field"] = score_field;
  if (!origin_model_field.empty()) j["origin_model_field"] = origin_model_field;
  return j;
}

SchemaDescriptor SchemaDescriptor::from_json(const json& j) {
  SchemaDescriptor s;
  s.dataset_id = j.at("dataset_id").get<std::string>();
  const std::string domain_text = j.at("domain").get<std::string>();
  const auto domain = parse_domain(domain_text);
  if (!domain) throw std::invalid_argument("unknown domain: " + domain_text);
  s.domain = *domain;
  s.id_field = j.value("id_field", std::string());
  s.document_field = j.value("document_field", std::string("document"));
  s.summary_field = j.value("summary_field", std::string("summary"));
  s.labels_field = j.value("labels_field", std::string());
  s.consistent_field = j.value("consistent_field", std::string());
  s.score_field = j.value("score_field", std::string());
  s.origin_model_field = j.value("origin_model_field", std::string());
  if (s.labels_field.empty() && s.consistent_field.empty() && s.score_field.empty()) {
    throw std::invalid_argument(
        "schema needs one of labels_field / consistent_field / score_field");
  }
  return s;
}

SchemaDescriptor SchemaDescriptor::from_file(const std::string& path) {
  return from_json(json::parse(read_file(path)));
}

namespace {

// Interpret a consistency flag of varying shapes.
std::optional<bool> read_consistent_flag(const json& value) {
  if (value.is_boolean()) return value.get<bool>();
  if (value.is_number()) return value.get<double>() != 0.0;
  if (value.is_string()) {
    const std::string text = value.get<std::string>();
    if (taxonomy::is_clean_token(text)) return true;
    const std::string norm = to_lower(trim(text));
    if (norm == "incorrect" || norm == "inconsistent" || norm == "unfaithful" ||
        norm == "factually incorrect" || norm == "not consistent" || norm == "0") {
      return false;
    }
  }
  return std::nullopt;
}

std::vector<std::string> read_labels(const json& value) {
  std::vector<std::string> labels;
  if (value.is_string()) {
    labels.push_back(value.get<std::string>());
  } else if (value.is_array()) {
    for (const auto& item : value) {
      if (!item.is_string()) throw std::invalid_argument("label entries must be strings");
      labels.push_back(item.get<std::string>());
    }
  } else if (!value.is_null()) {
    throw std::invalid_argument("labels field must be a string or array");
  }
  return labels;
}

}  // namespace

LoadResult load_corpus(const std::string& path, const SchemaDescriptor& schema,
                       const taxonomy::OverrideTable& overrides) {
  LoadResult result;
  int record_index = 0;
  for (const auto& [line, value] : read_jsonl(path)) {
    if (value.is_null()) {
      result.issues.push_back({line, "malformed JSON line"});
      continue;
    }
    ++record_index;
    try {
      SummaryExample e;
      e.dataset_id = schema.dataset_id;
      e.domain = schema.domain;
      if (!schema.id_field.empty() && value.contains(schema.id_field)) {
        const json& id_value = value.at(schema.id_field);
        e.id = id_value.is_string() ? id_value.get<std::string>() : id_value.dump();
      } else {
        std::ostringstream synthesized;
        synthesized << schema.dataset_id << '-' << std::setw(6) << std::setfill('0')
                    << record_index;
        e.id = synthesized.str();
      }
      e.document = value.at(schema.document_field).get<std::string>();
      e.summary = value.at(schema.summary_field).get<std::string>();
      if (!schema.origin_model_field.empty() && value.contains(schema.origin_model_field)) {
        e.origin_model = value.at(schema.origin_model_field).get<std::string>();
      }

      std::vector<std::string> labels;
      if (!schema.labels_field.empty() && value.contains(schema.labels_field)) {
        labels = read_labels(value.at(schema.labels_field));
      }
      if (!labels.empty()) {
        e.gold = taxonomy::convert_label(e.dataset_id, labels, overrides, e.id);
      } else if (!schema.score_field.empty() && value.contains(schema.score_field)) {
        e.gold = taxonomy::GoldLabel::score_value(
            value.at(schema.score_field).get<double>());
      } else if (!schema.consistent_field.empty() &&
                 value.contains(schema.consistent_field)) {
        const auto flag = read_consistent_flag(value.at(schema.consistent_field));
        if (!flag) {
          throw std::invalid_argument("unrecognized consistency flag: " +
                                      describe(value.at(schema.consistent_field)));
        }
        e.gold = *flag ? taxonomy::GoldLabel::consistent()
                       : taxonomy::GoldLabel::inconsistent({});
      } else if (!schema.labels_field.empty()) {
        // A labels field that is configured but absent/empty on this record
        // means "no errors marked".
        e.gold = taxonomy::GoldLabel::consistent();
      } else {
        throw std::invalid_argument("record carries no gold annotation");
      }

      if (trim(e.document).empty()) throw std::invalid_argument("empty document");
      if (trim(e.summary).empty()) throw std::invalid_argument("empty summary");
      result.examples.push_back(std::move(e));
    } catch (const taxonomy::UnknownLabel& ex) {
      result.issues.push_back({line, ex.what(), true});
    } catch (const taxonomy::MissingOverride& ex) {
      result.issues.push_back({line, ex.what(), true});
    } catch (const json::exception& ex) {
      result.issues.push_back({line, ex.what(), false});
    } catch (const std::exception& ex) {
      result.issues.push_back({line, ex.what(), false});
    }
  }
  return result;
}

LoadResult load_unified(const std::string& path) {
  LoadResult result;
  for (const auto& [line, value] : read_jsonl(path)) {
    if (value.is_null()) {
      result.issues.push_back({line, "malformed JSON line"});
      continue;
    }
    try {
      result.examples.push_back(SummaryExample::from_json(value));
    } catch (const json::exception& ex) {
      result.issues.push_back({line, ex.what()});
    } catch (const std::exception& ex) {
      result.issues.push_back({line, ex.what()});
    }
  }
  return result;
}

void write_unified(const std::string& path, const std::vector<SummaryExample>& examples) {
  std::string out;
  for (const SummaryExample& e : examples) {
    out += e.to_json().dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<SummaryExample> overlap_filter(const std::vector<SummaryExample>& candidates,
                                           const std::vector<std::string>& reserved_docs) {
  std::set<std::string> reserved;
  for (const std::string& doc : reserved_docs) reserved.insert(normalize_text(doc));
  std::vector<SummaryExample> kept;
  kept.reserve(candidates.size());
  for (const SummaryExample& e : candidates) {
    if (!reserved.count(normalize_text(e.document))) kept.push_back(e);
  }
  return kept;
}

json SplitSpec::to_json() const {
  json models = json::object();
  for (const auto& [dataset, list] : sota_models) models[dataset] = list;
  return json{{"set_one", set_one},
              {"set_two", set_two},
              {"test", test},
              {"set_two_sample_size", set_two_sample_size},
              {"seed", seed},
              {"sota_models", std::move(models)}};
}

SplitSpec SplitSpec::from_json(const json& j) {
  SplitSpec s;
  s.set_one = j.value("set_one", std::vector<std::string>{});
  s.set_two = j.value("set_two", std::vector<std::string>{});
  s.test = j.value("test", std::vector<std::string>{});
  s.set_two_sample_size = j.value("set_two_sample_size", std::size_t{50000});
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("sota_models")) {
    for (const auto& [dataset, list] : j.at("sota_models").items()) {
      s.sota_models[dataset] = list.get<std::vector<std::string>>();
    }
  }
  std::set<std::string> train(s.set_one.begin(), s.set_one.end());
  train.insert(s.set_two.begin(), s.set_two.end());
  for (const std::string& dataset : s.test) {
    if (train.count(dataset)) {
      throw std::invalid_argument("test dataset also appears in a training set: " + dataset);
    }
  }
  return s;
}

SplitSpec SplitSpec::from_file(const std::string& path) {
  return from_json(json::parse(read_file(path)));
}

Splits assemble_splits(const SplitSpec& spec,
                       const std::map<std::string, std::vector<SummaryExample>>& loaded) {
  const auto lookup = [&](const std::string& dataset) -> const std::vector<SummaryExample>& {
    const auto it = loaded.find(dataset);
    if (it == loaded.end()) throw MissingDataset(dataset);
    return it->second;
  };

  Splits splits;
  for (const std::string& dataset : spec.test) {
    const auto filter = spec.sota_models.find(dataset);
    for (const SummaryExample& e : lookup(dataset)) {
      if (filter != spec.sota_models.end() && !filter->second.empty()) {
        const auto& models = filter->second;
        if (std::find(models.begin(), models.end(), e.origin_model) == models.end()) {
          continue;
        }
      }
      splits.test.push_back(e);
    }
  }

  std::vector<std::string> reserved;
  reserved.reserve(splits.test.size());
  for (const SummaryExample& e : splits.test) reserved.push_back(e.document);

  for (const std::string& dataset : spec.set_one) {
    const auto& examples = lookup(dataset);
    splits.train_one.insert(splits.train_one.end(), examples.begin(), examples.end());
  }

  for (const std::string& dataset : spec.set_two) {
    std::vector<SummaryExample> survivors = overlap_filter(lookup(dataset), reserved);
    if (survivors.size() > spec.set_two_sample_size) {
      // Per-dataset engine: the sample is stable no matter what other
      // datasets the split requests.
      Rng rng(spec.seed ^ fnv1a64(dataset));
      const std::vector<std::size_t> keep =
          rng.sample_indices(survivors.size(), spec.set_two_sample_size);
      std::vector<SummaryExample> sampled;
      sampled.reserve(keep.size());
      for (std::size_t idx : keep) sampled.push_back(std::move(survivors[idx]));
      survivors = std::move(sampled);
    }
    splits.train_two.insert(splits.train_two.end(),
                            std::make_move_iterator(survivors.begin()),
                            std::make_move_iterator(survivors.end()));
  }
  return splits;
}

}  // namespace factax::corpus
