#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "factax/taxonomy.hpp"
#include "factax/util.hpp"

namespace factax::prompting {

using taxonomy::ErrorType;
using taxonomy::TypeSet;

// One segment of a summary, produced by segment_windows. Concatenating the
// windows in index order reproduces the summary's word sequence.
struct Window {
  std::size_t index = 0;
  std::string text;
  std::size_t word_count = 0;
};

// A detector's judgment for one summary (or one window of it).
//
// Constructed verdicts obey `consistent == types.empty()`. The single
// exception is unparsed_fallback(): a response that could not be parsed after
// retry maps to inconsistent-with-empty-types so the failure stays visible
// downstream instead of passing as a clean verdict.
struct Verdict {
  bool consistent = true;
  TypeSet types;
  std::string rationale;
  std::optional<double> score;
  bool parse_failed = false;

  static Verdict clean(std::string rationale = {});
  static Verdict with_types(TypeSet types, std::string rationale = {});
  static Verdict unparsed_fallback(std::string cause);

  bool operator==(const Verdict& other) const {
    return consistent == other.consistent && types == other.types &&
           rationale == other.rationale && score == other.score &&
           parse_failed == other.parse_failed;
  }

  json to_json() const;
  static Verdict from_json(const json& j);
};

struct TemplateError : std::runtime_error {
  explicit TemplateError(const std::string& what) : std::runtime_error(what) {}
};

struct UnparseableResponse : std::runtime_error {
  explicit UnparseableResponse(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownErrorToken : std::runtime_error {
  std::string token;
  explicit UnknownErrorToken(std::string token_value)
      : std::runtime_error("unknown error-type token: \"" + token_value + "\""),
        token(std::move(token_value)) {}
};

// Prompt skeleton. `body` carries the placeholders {{document}}, {{summary}}
// and optionally {{type_definitions}}; the structured fields describe the
// shipped default and feed the rendered definition block.
struct PromptTemplate {
  std::string instruction_header;
  std::vector<std::pair<ErrorType, std::string>> per_type_guidance;
  std::string response_format_spec;
  std::string body;

  // Built-in template: taxonomy definitions, per-type chain-of-thought
  // directive, and the "- Reasoning: / - Label:" response format.
  static PromptTemplate standard();

  // Loads `body` from a plain-text file. {{document}} and {{summary}} must be
  // present; {{type_definitions}} is optional so alternative prompt styles
  // (no taxonomy) can be swapped in. Throws TemplateError / IoError.
  static PromptTemplate from_file(const std::string& path);

  // The "- <Display Name>: <definition>" block substituted for
  // {{type_definitions}}.
  std::string type_definitions_text() const;

  // Stable content hash recorded in run manifests.
  std::uint64_t content_hash() const;
};

enum class PromptMode { Classify, Score };

// Renders the prompt with `context` in the document slot and `summary` in the
// summary slot. Score mode appends a request for an integer 1-10 consistency
// rating. Throws TemplateError on missing placeholders or empty slot values.
std::string build_factax_prompt(std::string_view context, std::string_view summary,
                                const PromptTemplate& tmpl,
                                PromptMode mode = PromptMode::Classify);

// Splits a summary into ~target_words windows. Whole sentences are packed in
// order and a window closes once it reaches target_words; a single sentence
// longer than 2x target_words is force-split at word boundaries (chunks of
// exactly target_words, remainder folded into the final chunk). The word
// sequence of the summary is preserved exactly across the windows.
std::vector<Window> segment_windows(std::string_view summary,
                                    std::size_t target_words = 30);

// Parses a comma-separated label value ("Entity_Error, Coreference_Error",
// "Factually Correct", ...) into a type set; clean tokens yield the empty
// set. Throws UnknownErrorToken.
TypeSet parse_label_list(std::string_view label_text);

struct ParseOptions {
  bool expect_score = false;  // require a trailing "Score:" integer
};

// Extracts the final "Label:" line (and "Reasoning:" span / "Score:" value)
// from a raw model response. Throws UnparseableResponse when no label line is
// found (or a required score is missing) and UnknownErrorToken for labels
// outside the taxonomy.
Verdict parse_response(std::string_view raw_text, const ParseOptions& options = {});

// Canonical response text for a verdict; parse_response inverts it.
std::string render_response(const Verdict& verdict);

// Union of window verdicts: consistent iff every window is consistent; types
// are unioned; score = fraction of consistent windows. Precondition: list
// non-empty.
Verdict aggregate_windows(const std::vector<Verdict>& verdicts);

}  // namespace factax::prompting
