#include "factax/taxonomy.hpp"

#include <algorithm>
#include <sstream>

namespace factax::taxonomy {

namespace {

using Target = ConversionRule::Target;

constexpr std::string_view kDefinitions[5] = {
    "the semantics expressed by a predicate in the summary are not consistent "
    "with those in the source document.",
    "any core arguments or attributes (e.g. subjects and objects in semantic "
    "frames) in the summary are not consistent accordingly.",
    "Time, duration, or the location of an event or action is not consistent.",
    "a pronoun or a reference mention in the summary cannot be resolved to "
    "refer to the correct entity.",
    "the summary expresses facts or events that have no grounding sentences in "
    "the document, thus cannot be verified (unless clearly extrapolatable by "
    "common sense).",
};

constexpr std::string_view kDisplayNames[5] = {
    "Predicate Error", "Entity Error", "Circumstantial Error",
    "Coreference Error", "Addition Error"};

constexpr std::string_view kCanonicalTokens[5] = {
    "Predicate_Error", "Entity_Error", "Circumstantial_Error",
    "Coreference_Error", "Addition_Error"};

// Normalizes a label for rule matching: trim, lowercase, '_' -> ' ',
// whitespace collapsed.
std::string normalize_label(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char ch : s) {
    const bool space_like = std::isspace(static_cast<unsigned char>(ch)) || ch == '_';
    if (space_like) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

struct RuleTable {
  std::vector<ConversionRule> rules;
  // (normalized dataset, normalized label) -> index into rules
  std::map<std::pair<std::string, std::string>, std::size_t> index;

  void add(std::string dataset, std::string label, Target target, TypeSet types = {}) {
    auto key = std::make_pair(normalize_label(dataset), normalize_label(label));
    if (index.count(key)) throw std::logic_error("duplicate conversion rule: " + label);
    index.emplace(std::move(key), rules.size());
    rules.push_back(ConversionRule{std::move(dataset), std::move(label), target, std::move(types)});
  }

  void map(std::string dataset, std::string label, TypeSet types) {
    add(std::move(dataset), std::move(label), Target::MapTo, std::move(types));
  }
};

RuleTable build_rule_table() {
  using enum ErrorType;
  RuleTable t;

  // Datasets whose labels were unified by AggreFact. Heuristic conversion:
  // NP -> Entity, Pred -> Predicate, Sent -> Addition; extrinsic errors are
  // additionally marked as Addition.
  static const char* kAggreFactDatasets[] = {"aggrefact", "frank", "cliff", "xsumfaith",
                                             "goyal21"};
  for (const char* d : kAggreFactDatasets) {
    t.add(d, "correct", Target::Consistent);
    t.map(d, "intrinsic-NP", {Entity});
    t.map(d, "extrinsic-NP", {Entity, Addition});
    t.map(d, "intrinsic-predicate", {Predicate});
    t.map(d, "extrinsic-predicate", {Predicate, Addition});
    t.map(d, "intrinsic-entire_sent", {Addition});
    t.map(d, "extrinsic-entire_sent", {Addition});
    t.map(d, "NP", {Entity});
    t.map(d, "Pred", {Predicate});
    t.map(d, "Sent", {Addition});
  }

  // BUMP
  t.map("bump", "Extrinsic Entity Error", {Entity});
  t.map("bump", "Intrinsic Entity Error", {Entity});
  t.map("bump", "Extrinsic Predicate Error", {Predicate});
  t.map("bump", "Intrinsic Predicate Error", {Predicate});
  t.map("bump", "Extrinsic Circumstance Error", {Circumstantial});
  t.map("bump", "Intrinsic Circumstance Error", {Circumstantial});
  t.map("bump", "Coreference Error", {Coreference});
  t.map("bump", "Extrinsic-related Error", {Addition});
  t.add("bump", "Other Error", Target::Manual);

  // DiaSumFact
  t.map("diasumfact", "Ex-EntE", {Entity});
  t.map("diasumfact", "In-EntE", {Entity});
  t.map("diasumfact", "Ex-PredE", {Predicate});
  t.map("diasumfact", "In-PredE", {Predicate});
  t.map("diasumfact", "LinkE", {Predicate});
  t.map("diasumfact", "Ex-CirE", {Circumstantial});
  t.map("diasumfact", "In-CirE", {Circumstantial});
  t.map("diasumfact", "CorefE", {Coreference});
  t.map("diasumfact", "Ex-Error", {Addition});
  t.add("diasumfact", "Others", Target::Manual);

  // DiaSummFactCorr
  t.map("diasummfactcorr", "EntE", {Entity});
  t.map("diasummfactcorr", "PredE", {Predicate});
  t.map("diasummfactcorr", "GramE", {Predicate});
  t.map("diasummfactcorr", "LinkE", {Predicate});
  t.map("diasummfactcorr", "CircE", {Circumstantial});
  t.map("diasummfactcorr", "CorefE", {Coreference});
  t.map("diasummfactcorr", "OutE", {Addition});
  t.add("diasummfactcorr", "OthE", Target::Manual);

  // FacEval
  t.map("faceval", "Subject Object Error", {Entity});
  t.map("faceval", "Pronoun Error", {Coreference});
  t.map("faceval", "Negation Error", {Predicate});
  t.map("faceval", "Particulars Error", {Circumstantial});
  t.map("faceval", "Hallucination Error", {Addition});
  t.add("faceval", "Other Error", Target::Manual);

  // GovReport
  t.map("govreport", "EntityE", {Entity});
  t.map("govreport", "PredE", {Predicate});
  t.map("govreport", "GramE", {Predicate});
  t.map("govreport", "LinkE", {Predicate});
  t.map("govreport", "CircE", {Circumstantial});
  t.map("govreport", "CorefE", {Coreference});
  t.map("govreport", "OutE", {Addition});

  // Clean labels, any dataset.
  for (const char* label : {"correct", "consistent", "factually correct", "faithful",
                            "no error", "factually consistent"}) {
    t.add("*", label, Target::Consistent);
  }

  // The canonical tokens map to themselves, so converting an already
  // converted label set is the identity.
  for (ErrorType type : kAllErrorTypes) {
    t.map("*", std::string(canonical_token(type)), {type});
  }

  return t;
}

const RuleTable& rule_table() {
  static const RuleTable table = build_rule_table();
  return table;
}

}  // namespace

std::string_view definition(ErrorType type) {
  return kDefinitions[static_cast<int>(type)];
}

std::string_view display_name(ErrorType type) {
  return kDisplayNames[static_cast<int>(type)];
}

std::string_view canonical_token(ErrorType type) {
  return kCanonicalTokens[static_cast<int>(type)];
}

std::optional<ErrorType> parse_error_token(std::string_view token) {
  const std::string norm = normalize_label(token);
  for (ErrorType type : kAllErrorTypes) {
    if (norm == normalize_label(canonical_token(type))) return type;
  }
  // Bare names and common shorthands.
  if (norm == "predicate") return ErrorType::Predicate;
  if (norm == "entity") return ErrorType::Entity;
  if (norm == "circumstantial" || norm == "circumstance error" || norm == "circumstance") {
    return ErrorType::Circumstantial;
  }
  if (norm == "coreference" || norm == "coref error" || norm == "coref") {
    return ErrorType::Coreference;
  }
  if (norm == "addition" || norm == "hallucination") return ErrorType::Addition;
  return std::nullopt;
}

bool is_clean_token(std::string_view token) {
  const std::string norm = normalize_label(token);
  return norm == "factually correct" || norm == "no error" || norm == "no errors" ||
         norm == "none" || norm == "correct" || norm == "consistent" ||
         norm == "factually consistent";
}

std::string format_type_list(const TypeSet& types) {
  std::string out;
  for (ErrorType type : kAllErrorTypes) {
    if (!types.count(type)) continue;
    if (!out.empty()) out += ", ";
    out += canonical_token(type);
  }
  return out;
}

json GoldLabel::to_json() const {
  json j;
  switch (kind) {
    case Kind::Consistent:
      j["kind"] = "consistent";
      break;
    case Kind::Inconsistent: {
      j["kind"] = "inconsistent";
      json arr = json::array();
      for (ErrorType type : kAllErrorTypes) {
        if (types.count(type)) arr.push_back(std::string(canonical_token(type)));
      }
      j["types"] = std::move(arr);
      break;
    }
    case Kind::Score:
      j["kind"] = "score";
      j["score"] = score;
      break;
  }
  return j;
}

GoldLabel GoldLabel::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "consistent") return consistent();
  if (kind == "inconsistent") {
    TypeSet types;
    if (j.contains("types")) {
      for (const auto& token : j.at("types")) {
        auto type = parse_error_token(token.get<std::string>());
        if (!type) throw UnknownLabel("<gold>", token.get<std::string>());
        types.insert(*type);
      }
    }
    return inconsistent(std::move(types));
  }
  if (kind == "score") return score_value(j.at("score").get<double>());
  throw std::invalid_argument("unknown gold label kind: " + kind);
}

const std::vector<ConversionRule>& builtin_rules() {
  return rule_table().rules;
}

const ConversionRule* find_rule(std::string_view dataset_id, std::string_view source_label) {
  const auto& table = rule_table();
  const std::string label = normalize_label(source_label);
  auto it = table.index.find({normalize_label(dataset_id), label});
  if (it == table.index.end()) it = table.index.find({"*", label});
  if (it == table.index.end()) return nullptr;
  return &table.rules[it->second];
}

OverrideTable parse_overrides(std::string_view content) {
  OverrideTable table;
  std::istringstream in{std::string(content)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() < 3 || fields.size() > 4) {
      throw std::invalid_argument("override line " + std::to_string(lineno) +
                                  ": expected 3 or 4 tab-separated fields");
    }
    TypeSet types;
    if (fields.size() == 4) {
      std::istringstream ts(fields[3]);
      std::string token;
      while (std::getline(ts, token, ',')) {
        const std::string trimmed = trim(token);
        if (trimmed.empty()) continue;
        auto type = parse_error_token(trimmed);
        if (!type) {
          throw std::invalid_argument("override line " + std::to_string(lineno) +
                                      ": unknown type token '" + trimmed + "'");
        }
        types.insert(*type);
      }
    }
    OverrideKey key{normalize_label(fields[0]), trim(fields[1]), normalize_label(fields[2])};
    table[std::move(key)] = std::move(types);
  }
  return table;
}

OverrideTable load_overrides(const std::string& path) {
  return parse_overrides(read_file(path));
}

GoldLabel convert_label(std::string_view dataset_id,
                        const std::vector<std::string>& source_labels,
                        const OverrideTable& overrides, std::string_view example_id) {
  const std::string dataset = normalize_label(dataset_id);
  auto find_override = [&](const std::string& label) -> const TypeSet* {
    auto it = overrides.find(OverrideKey{dataset, std::string(example_id), label});
    return it == overrides.end() ? nullptr : &it->second;
  };

  TypeSet result;
  for (const std::string& raw : source_labels) {
    const std::string label = normalize_label(raw);
    if (label.empty()) continue;
    const ConversionRule* rule = find_rule(dataset_id, label);
    if (rule == nullptr) {
      if (const TypeSet* types = find_override(label)) {
        result.insert(types->begin(), types->end());
        continue;
      }
      throw UnknownLabel(dataset, trim(raw));
    }
    switch (rule->target) {
      case ConversionRule::Target::MapTo:
        result.insert(rule->types.begin(), rule->types.end());
        break;
      case ConversionRule::Target::Consistent:
        break;
      case ConversionRule::Target::Manual: {
        const TypeSet* types = find_override(label);
        if (types == nullptr) {
          throw MissingOverride(dataset, std::string(example_id), trim(raw));
        }
        result.insert(types->begin(), types->end());
        break;
      }
    }
  }
  if (result.empty()) return GoldLabel::consistent();
  return GoldLabel::inconsistent(std::move(result));
}

const TypeSet& dataset_types(std::string_view dataset_id) {
  using enum ErrorType;
  static const TypeSet kAll = {Predicate, Entity, Circumstantial, Coreference, Addition};
  static const TypeSet kAggreFact = {Predicate, Entity, Addition};
  static const TypeSet kNone = {};
  static const std::map<std::string, const TypeSet*> kByDataset = {
      {"frank", &kAggreFact},   {"bump", &kAll},
      {"cliff", &kAggreFact},   {"xsumfaith", &kAggreFact},
      {"goyal21", &kAggreFact}, {"diasumfact", &kAll},
      {"diasummfactcorr", &kAll}, {"faceval", &kAll},
      {"govreport", &kAll},     {"aggrefact", &kAggreFact},
  };
  auto it = kByDataset.find(normalize_label(dataset_id));
  return it == kByDataset.end() ? kNone : *it->second;
}

bool dataset_has_type_annotations(std::string_view dataset_id) {
  return !dataset_types(dataset_id).empty();
}

}  // namespace factax::taxonomy
