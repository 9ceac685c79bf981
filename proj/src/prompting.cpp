#include "factax/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "factax/alignment.hpp"

namespace factax::prompting {

namespace {

constexpr std::string_view kDocumentSlot = "{{document}}";
constexpr std::string_view kSummarySlot = "{{summary}}";
constexpr std::string_view kDefinitionsSlot = "{{type_definitions}}";

constexpr std::string_view kDefaultInstruction =
    "Decide whether the summary below is factually consistent with the "
    "document. A summary is factually inconsistent if any part of it is not "
    "supported by the document. Check it against each of the following error "
    "types:";

constexpr std::string_view kDefaultResponseFormat =
    "Think step by step: for each error type, reason about whether the "
    "summary exhibits it before concluding. Then answer in exactly this "
    "format:\n"
    "- Reasoning: <your step-by-step reasoning>\n"
    "- Label: <\"Factually Correct\" if no error type applies, otherwise a "
    "comma-separated list of the error types present>";

constexpr std::string_view kScoreRequest =
    "- Score: <an integer from 1 to 10, where 1 means completely inconsistent "
    "and 10 means completely consistent>";

// Replace every occurrence of `slot` in `text` with `value`.
std::size_t replace_all_slots(std::string& text, std::string_view slot,
                              std::string_view value) {
  std::size_t replaced = 0;
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
    ++replaced;
  }
  return replaced;
}

bool is_marker_boundary(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '*' ||
         c == '"' || c == '\'' || c == '(' || c == '[' || c == ':' || c == '.';
}

// Position of the last line-ish occurrence of `word` followed by ':' in
// `lower` (a lowercased copy). Returns npos if absent. `value_begin` receives
// the index just past the colon.
std::size_t find_last_marker(const std::string& lower, std::string_view word,
                             std::size_t limit, std::size_t* value_begin) {
  std::size_t best = std::string::npos;
  std::size_t pos = 0;
  while ((pos = lower.find(word, pos)) != std::string::npos && pos < limit) {
    const std::size_t start = pos;
    pos += word.size();
    if (start > 0 && !is_marker_boundary(lower[start - 1])) continue;
    std::size_t i = start + word.size();
    while (i < lower.size() && (lower[i] == ' ' || lower[i] == '\t')) ++i;
    if (i < lower.size() && lower[i] == ':') {
      best = start;
      if (value_begin) *value_begin = i + 1;
    }
  }
  return best;
}

// Walk back from a marker over its "- " style bullet prefix to where the
// marker's own line (or inline bullet) begins.
std::size_t bullet_begin(const std::string& text, std::size_t marker) {
  std::size_t i = marker;
  while (i > 0 && (text[i - 1] == ' ' || text[i - 1] == '\t')) --i;
  if (i > 0 && (text[i - 1] == '-' || text[i - 1] == '*')) {
    --i;
    while (i > 0 && (text[i - 1] == ' ' || text[i - 1] == '\t')) --i;
  }
  return i;
}

std::string trim_copy(std::string_view s) { return trim(s); }

// View of `s` without leading/trailing whitespace (no copy, unlike trim()).
std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Strip wrapping quotes/bullets and trailing sentence punctuation from a
// label token.
std::string clean_token(std::string_view piece) {
  std::string_view s = trim_view(piece);
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '-' ||
                        s.front() == '*')) {
    s.remove_prefix(1);
    s = trim_view(s);
  }
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '.' ||
                        s.back() == '!' )) {
    s.remove_suffix(1);
    s = trim_view(s);
  }
  return std::string(s);
}

}  // namespace

Verdict Verdict::clean(std::string rationale) {
  Verdict v;
  v.consistent = true;
  v.rationale = std::move(rationale);
  return v;
}

Verdict Verdict::with_types(TypeSet types, std::string rationale) {
  if (types.empty()) throw std::logic_error("Verdict::with_types: empty type set");
  Verdict v;
  v.consistent = false;
  v.types = std::move(types);
  v.rationale = std::move(rationale);
  return v;
}

Verdict Verdict::unparsed_fallback(std::string cause) {
  Verdict v;
  v.consistent = false;
  v.rationale = std::move(cause);
  v.parse_failed = true;
  return v;
}

json Verdict::to_json() const {
  json types_json = json::array();
  for (ErrorType t : types) types_json.push_back(std::string(taxonomy::canonical_token(t)));
  json j{{"consistent", consistent},
         {"types", std::move(types_json)},
         {"rationale", rationale},
         {"parse_failed", parse_failed}};
  if (score.has_value()) j["score"] = *score;
  return j;
}

Verdict Verdict::from_json(const json& j) {
  Verdict v;
  v.consistent = j.at("consistent").get<bool>();
  for (const auto& token : j.at("types")) {
    const auto type = taxonomy::parse_error_token(token.get<std::string>());
    if (!type) throw UnknownErrorToken(token.get<std::string>());
    v.types.insert(*type);
  }
  v.rationale = j.value("rationale", std::string());
  v.parse_failed = j.value("parse_failed", false);
  if (j.contains("score")) v.score = j.at("score").get<double>();
  return v;
}

PromptTemplate PromptTemplate::standard() {
  PromptTemplate t;
  t.instruction_header = std::string(kDefaultInstruction);
  for (ErrorType type : taxonomy::kAllErrorTypes) {
    t.per_type_guidance.emplace_back(type, std::string(taxonomy::definition(type)));
  }
  t.response_format_spec = std::string(kDefaultResponseFormat);
  t.body = t.instruction_header;
  t.body += "\n\n";
  t.body += kDefinitionsSlot;
  t.body += "\n\nDocument:\n";
  t.body += kDocumentSlot;
  t.body += "\n\nSummary:\n";
  t.body += kSummarySlot;
  t.body += "\n\n";
  t.body += t.response_format_spec;
  return t;
}

PromptTemplate PromptTemplate::from_file(const std::string& path) {
  PromptTemplate t;
  t.body = read_file(path);
  if (t.body.find(kDocumentSlot) == std::string::npos ||
      t.body.find(kSummarySlot) == std::string::npos) {
    throw TemplateError("template " + path + " must contain " +
                        std::string(kDocumentSlot) + " and " + std::string(kSummarySlot));
  }
  for (ErrorType type : taxonomy::kAllErrorTypes) {
    t.per_type_guidance.emplace_back(type, std::string(taxonomy::definition(type)));
  }
  return t;
}

std::string PromptTemplate::type_definitions_text() const {
  std::string out;
  for (const auto& [type, text] : per_type_guidance) {
    if (!out.empty()) out += '\n';
    out += "- ";
    out += taxonomy::display_name(type);
    out += ": ";
    out += text;
  }
  return out;
}

std::uint64_t PromptTemplate::content_hash() const {
  std::string blob = body;
  blob += '\x1e';
  blob += type_definitions_text();
  return fnv1a64(blob);
}

std::string build_factax_prompt(std::string_view context, std::string_view summary,
                                const PromptTemplate& tmpl, PromptMode mode) {
  if (trim(context).empty()) throw TemplateError("document slot value is empty");
  if (trim(summary).empty()) throw TemplateError("summary slot value is empty");
  if (tmpl.body.find(kDocumentSlot) == std::string::npos ||
      tmpl.body.find(kSummarySlot) == std::string::npos) {
    throw TemplateError("template is missing a required placeholder");
  }
  if (tmpl.per_type_guidance.size() != taxonomy::kAllErrorTypes.size()) {
    throw TemplateError("template must carry all five error-type definitions");
  }
  std::string prompt = tmpl.body;
  replace_all_slots(prompt, kDefinitionsSlot, tmpl.type_definitions_text());
  replace_all_slots(prompt, kDocumentSlot, context);
  replace_all_slots(prompt, kSummarySlot, summary);
  if (mode == PromptMode::Score) {
    prompt += "\n\nAdditionally, append one more line rating the overall factual "
              "consistency of the summary:\n";
    prompt += kScoreRequest;
  }
  return prompt;
}

std::vector<Window> segment_windows(std::string_view summary, std::size_t target_words) {
  if (target_words < 1) throw std::invalid_argument("segment_windows: target_words >= 1");

  // Units are whole sentences, except that a sentence longer than 2x target
  // is pre-split into word chunks: full target-sized chunks, with any short
  // remainder folded into the final chunk.
  struct Unit {
    std::string text;
    std::size_t words = 0;
  };
  std::vector<Unit> units;
  const alignment::SentenceIndex index = alignment::split_sentences(summary);
  for (const alignment::Sentence& sentence : index.sentences) {
    const std::vector<std::string> words = whitespace_words(sentence.text);
    if (words.empty()) continue;
    if (words.size() <= 2 * target_words) {
      units.push_back({sentence.text, words.size()});
      continue;
    }
    std::size_t at = 0;
    while (words.size() - at > 2 * target_words) {
      Unit chunk;
      for (std::size_t k = 0; k < target_words; ++k) {
        if (!chunk.text.empty()) chunk.text += ' ';
        chunk.text += words[at + k];
      }
      chunk.words = target_words;
      units.push_back(std::move(chunk));
      at += target_words;
    }
    Unit tail;
    for (std::size_t k = at; k < words.size(); ++k) {
      if (!tail.text.empty()) tail.text += ' ';
      tail.text += words[k];
    }
    tail.words = words.size() - at;
    units.push_back(std::move(tail));
  }

  std::vector<Window> windows;
  Window current;
  auto close = [&]() {
    if (current.word_count == 0) return;
    current.index = windows.size();
    windows.push_back(std::move(current));
    current = Window{};
  };
  for (Unit& unit : units) {
    if (!current.text.empty()) current.text += ' ';
    current.text += unit.text;
    current.word_count += unit.words;
    if (current.word_count >= target_words) close();
  }
  close();
  return windows;
}

TypeSet parse_label_list(std::string_view label_text) {
  TypeSet types;
  std::size_t begin = 0;
  bool saw_token = false;
  const std::string text(label_text);
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] != ',' && text[i] != ';') continue;
    const std::string token = clean_token(std::string_view(text).substr(begin, i - begin));
    begin = i + 1;
    if (token.empty()) continue;
    saw_token = true;
    if (taxonomy::is_clean_token(token)) continue;
    const auto type = taxonomy::parse_error_token(token);
    if (!type) throw UnknownErrorToken(token);
    types.insert(*type);
  }
  if (!saw_token) throw UnparseableResponse("empty label value");
  return types;
}

Verdict parse_response(std::string_view raw_text, const ParseOptions& options) {
  const std::string text(raw_text);
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

  std::size_t label_value_begin = 0;
  const std::size_t label_pos =
      find_last_marker(lower, "label", lower.size(), &label_value_begin);
  if (label_pos == std::string::npos) {
    throw UnparseableResponse("no \"Label:\" line in response");
  }
  const std::size_t label_line_end = text.find('\n', label_value_begin);
  const std::string label_value = trim_copy(
      std::string_view(text).substr(label_value_begin,
                                    (label_line_end == std::string::npos
                                         ? text.size()
                                         : label_line_end) -
                                        label_value_begin));
  const TypeSet types = parse_label_list(label_value);

  // Rationale: the span after the last "Reasoning:" marker preceding the
  // label, up to the label's bullet.
  std::string rationale;
  std::size_t reasoning_value_begin = 0;
  const std::size_t reasoning_pos =
      find_last_marker(lower, "reasoning", label_pos, &reasoning_value_begin);
  if (reasoning_pos != std::string::npos) {
    const std::size_t end = bullet_begin(text, label_pos);
    if (end > reasoning_value_begin) {
      rationale = trim_copy(
          std::string_view(text).substr(reasoning_value_begin, end - reasoning_value_begin));
    }
  }

  std::optional<double> score;
  std::size_t score_value_begin = 0;
  if (find_last_marker(lower, "score", lower.size(), &score_value_begin) !=
      std::string::npos) {
    std::size_t i = score_value_begin;
    while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i])) &&
           text[i] != '\n' && text[i] != '-') {
      ++i;
    }
    std::size_t digits = i;
    if (digits < text.size() && text[digits] == '-') ++digits;
    while (digits < text.size() && std::isdigit(static_cast<unsigned char>(text[digits]))) {
      ++digits;
    }
    if (digits > i && !(digits == i + 1 && text[i] == '-')) {
      score = std::stod(text.substr(i, digits - i));
    }
  }
  if (options.expect_score && !score.has_value()) {
    throw UnparseableResponse("no \"Score:\" rating in response");
  }

  Verdict verdict = types.empty() ? Verdict::clean(std::move(rationale))
                                  : Verdict::with_types(types, std::move(rationale));
  verdict.score = score;
  return verdict;
}

std::string render_response(const Verdict& verdict) {
  std::string out = "- Reasoning: ";
  out += verdict.rationale;
  out += "\n- Label: ";
  if (verdict.types.empty()) {
    out += "Factually Correct";
  } else {
    out += taxonomy::format_type_list(verdict.types);
  }
  if (verdict.score.has_value()) {
    out += "\n- Score: ";
    out += std::to_string(static_cast<long long>(std::llround(*verdict.score)));
  }
  return out;
}

Verdict aggregate_windows(const std::vector<Verdict>& verdicts) {
  if (verdicts.empty()) {
    throw std::invalid_argument("aggregate_windows: empty verdict list");
  }
  Verdict out;
  std::size_t clean_count = 0;
  for (const Verdict& v : verdicts) {
    if (v.consistent) ++clean_count;
    out.consistent = out.consistent && v.consistent;
    out.types.insert(v.types.begin(), v.types.end());
    out.parse_failed = out.parse_failed || v.parse_failed;
  }
  out.score = static_cast<double>(clean_count) / static_cast<double>(verdicts.size());
  return out;
}

}  // namespace factax::prompting
