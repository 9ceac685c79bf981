#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "factax/util.hpp"

namespace factax::alignment {

struct Sentence {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the original text
  std::size_t end = 0;
  std::vector<std::string> tokens;  // lowercase alphanumeric word tokens
};

struct SentenceIndex {
  std::vector<Sentence> sentences;
};

struct AlignmentConfig {
  std::size_t max_context_tokens = 1024;
  std::size_t per_window_sentences = 5;
};

// Rule-based segmentation: terminal punctuation followed by whitespace and an
// uppercase/quote/digit opener, with an abbreviation list ("Dr.", "e.g.",
// single initials) suppressing false boundaries. Dialogue turns — lines with
// a "speaker:" prefix — are never merged across lines.
SentenceIndex split_sentences(std::string_view text);

// ROUGE-n recall: clipped n-gram matches over total reference n-grams.
// Returns 0 when the reference has fewer than n tokens.
double ngram_recall(const std::vector<std::string>& candidate_tokens,
                    const std::vector<std::string>& reference_tokens, int n);

// Greedy selection of document sentences by marginal gain in combined
// ROUGE-1 + ROUGE-2 recall against the reference tokens. Selection stops at
// the first pick that would overflow the token budget, which keeps the chosen
// set a prefix of the unbounded greedy order (recall is monotone in the
// budget). N-grams are counted within sentences; they do not cross sentence
// boundaries. Returns selected indices in document order.
std::vector<std::size_t> select_document_sentences(const SentenceIndex& index,
                                                   const std::vector<std::string>& reference_tokens,
                                                   std::size_t max_tokens);

// Scores each sentence independently against the reference and returns the
// top_n best, ties broken toward earlier document position; document order.
std::vector<std::size_t> select_window_sentences(const SentenceIndex& index,
                                                 const std::vector<std::string>& reference_tokens,
                                                 std::size_t top_n);

// Combined R1+R2 recall of a sentence selection, per-sentence n-gram counting.
double selection_recall(const SentenceIndex& index, const std::vector<std::size_t>& selection,
                        const std::vector<std::string>& reference_tokens);

// Condenses a long document for whole-summary inference. If no sentence fits
// the budget at all, the best-scoring sentence is truncated at a word
// boundary.
std::string align_document(std::string_view document, std::string_view summary,
                           const AlignmentConfig& config = {});

// Condensed context for one summary window: the per_window_sentences best
// sentences, extracted independently.
std::string align_window(std::string_view document, std::string_view window_text,
                         const AlignmentConfig& config = {});

}  // namespace factax::alignment
