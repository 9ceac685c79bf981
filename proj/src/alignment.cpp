#include "factax/alignment.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace factax::alignment {

namespace {

bool is_abbreviation(std::string_view word) {
  static const std::set<std::string, std::less<>> kAbbreviations = {
      "mr",  "mrs", "ms",  "dr",   "prof", "sr",   "jr",   "st",   "vs",  "etc",
      "e.g", "i.e", "cf",  "fig",  "no",   "inc",  "ltd",  "co",   "corp", "gen",
      "col", "lt",  "sgt", "rev",  "hon",  "dept", "univ", "approx", "al",
      "jan", "feb", "mar", "apr",  "jun",  "jul",  "aug",  "sep",  "sept", "oct",
      "nov", "dec", "mon", "tue",  "wed",  "thu",  "fri",  "sat",  "sun",  "u.s",
      "u.k", "p",   "pp",  "vol",  "ed",   "est",  "min",  "max",  "dept"};
  // Uppercase single letters are initials ("J. Smith").
  if (word.size() == 1 && std::isupper(static_cast<unsigned char>(word[0]))) return true;
  return kAbbreviations.count(to_lower(word)) > 0;
}

// "Ana:", "phd d:" — a short prefix ending in ':' at the start of a line.
bool is_dialogue_turn(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  if (i >= line.size() || !std::isalnum(static_cast<unsigned char>(line[i]))) return false;
  const std::size_t start = i;
  while (i < line.size() && line[i] != ':' && line[i] != '\n') {
    if (i - start > 40) return false;
    ++i;
  }
  if (i >= line.size() || line[i] != ':') return false;
  // Reject "10:30"-style times: a colon directly between digits.
  if (i + 1 < line.size() && std::isdigit(static_cast<unsigned char>(line[i + 1])) &&
      i > start && std::isdigit(static_cast<unsigned char>(line[i - 1]))) {
    return false;
  }
  return true;
}

// Word immediately preceding position `pos` (exclusive), without trailing '.'.
std::string_view word_before(std::string_view text, std::size_t pos) {
  std::size_t end = pos;
  std::size_t begin = end;
  while (begin > 0) {
    const unsigned char c = static_cast<unsigned char>(text[begin - 1]);
    if (std::isspace(c)) break;
    --begin;
  }
  return text.substr(begin, end - begin);
}

bool opener_follows(std::string_view text, std::size_t i) {
  // Expect whitespace, then an uppercase letter, opening quote, or digit.
  bool saw_space = false;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
    saw_space = true;
    ++i;
  }
  if (!saw_space || i >= text.size()) return saw_space && i >= text.size();
  const unsigned char c = static_cast<unsigned char>(text[i]);
  return std::isupper(c) || std::isdigit(c) || c == '"' || c == '\'' || c == '(' ||
         c == '[' || static_cast<unsigned char>(c) >= 0x80;
}

struct NgramCounts {
  // n-gram key -> count; keys are tokens joined with '\x1f'
  std::map<std::string, int> counts;
  long total = 0;
};

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts out;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++out.counts[key];
    ++out.total;
  }
  return out;
}

// Per-sentence profile restricted to reference n-grams.
struct SentenceProfile {
  std::vector<std::pair<int, int>> unigrams;  // (ref ngram id, count)
  std::vector<std::pair<int, int>> bigrams;
};

struct RecallScorer {
  std::vector<int> ref_uni_counts, ref_bi_counts;
  long ref_uni_total = 0, ref_bi_total = 0;
  std::vector<SentenceProfile> profiles;

  RecallScorer(const SentenceIndex& index, const std::vector<std::string>& ref) {
    const NgramCounts ref1 = count_ngrams(ref, 1);
    const NgramCounts ref2 = count_ngrams(ref, 2);
    std::map<std::string, int> uni_ids, bi_ids;
    for (const auto& [key, count] : ref1.counts) {
      uni_ids.emplace(key, static_cast<int>(ref_uni_counts.size()));
      ref_uni_counts.push_back(count);
    }
    for (const auto& [key, count] : ref2.counts) {
      bi_ids.emplace(key, static_cast<int>(ref_bi_counts.size()));
      ref_bi_counts.push_back(count);
    }
    ref_uni_total = ref1.total;
    ref_bi_total = ref2.total;

    profiles.reserve(index.sentences.size());
    for (const Sentence& sentence : index.sentences) {
      SentenceProfile profile;
      for (const auto& [key, count] : count_ngrams(sentence.tokens, 1).counts) {
        auto it = uni_ids.find(key);
        if (it != uni_ids.end()) profile.unigrams.emplace_back(it->second, count);
      }
      for (const auto& [key, count] : count_ngrams(sentence.tokens, 2).counts) {
        auto it = bi_ids.find(key);
        if (it != bi_ids.end()) profile.bigrams.emplace_back(it->second, count);
      }
      profiles.push_back(std::move(profile));
    }
  }

  // Marginal gain of adding sentence s on top of accumulated counts.
  double gain(std::size_t s, const std::vector<int>& acc_uni,
              const std::vector<int>& acc_bi) const {
    double g = 0.0;
    if (ref_uni_total > 0) {
      long delta = 0;
      for (const auto& [id, count] : profiles[s].unigrams) {
        delta += std::min(acc_uni[id] + count, ref_uni_counts[id]) -
                 std::min(acc_uni[id], ref_uni_counts[id]);
      }
      g += static_cast<double>(delta) / static_cast<double>(ref_uni_total);
    }
    if (ref_bi_total > 0) {
      long delta = 0;
      for (const auto& [id, count] : profiles[s].bigrams) {
        delta += std::min(acc_bi[id] + count, ref_bi_counts[id]) -
                 std::min(acc_bi[id], ref_bi_counts[id]);
      }
      g += static_cast<double>(delta) / static_cast<double>(ref_bi_total);
    }
    return g;
  }

  void accumulate(std::size_t s, std::vector<int>& acc_uni, std::vector<int>& acc_bi) const {
    for (const auto& [id, count] : profiles[s].unigrams) acc_uni[id] += count;
    for (const auto& [id, count] : profiles[s].bigrams) acc_bi[id] += count;
  }
};

std::string join_sentences(const SentenceIndex& index, const std::vector<std::size_t>& selection) {
  std::string out;
  for (std::size_t idx : selection) {
    if (!out.empty()) out += ' ';
    out += index.sentences[idx].text;
  }
  return out;
}

std::string truncate_at_word_boundary(const std::string& text, std::size_t max_tokens) {
  std::string out;
  std::size_t token_count = 0;
  for (const std::string& word : whitespace_words(text)) {
    const std::size_t word_token_count = word_tokens(word).size();
    if (token_count + word_token_count > max_tokens && !out.empty()) break;
    if (!out.empty()) out += ' ';
    out += word;
    token_count += word_token_count;
    if (token_count >= max_tokens) break;
  }
  return out;
}

}  // namespace

SentenceIndex split_sentences(std::string_view text) {
  SentenceIndex index;

  // Line starts, and which lines are dialogue turns.
  std::vector<std::size_t> line_start = {0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') line_start.push_back(i + 1);
  }
  std::vector<bool> line_is_turn(line_start.size());
  for (std::size_t li = 0; li < line_start.size(); ++li) {
    const std::size_t end =
        (li + 1 < line_start.size()) ? line_start[li + 1] : text.size();
    line_is_turn[li] = is_dialogue_turn(text.substr(line_start[li], end - line_start[li]));
  }
  std::size_t current_line = 0;

  std::size_t sentence_begin = std::string_view::npos;
  auto emit = [&](std::size_t end) {
    if (sentence_begin == std::string_view::npos) return;
    // Trim trailing whitespace from the span.
    while (end > sentence_begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    if (end <= sentence_begin) {
      sentence_begin = std::string_view::npos;
      return;
    }
    Sentence s;
    s.begin = sentence_begin;
    s.end = end;
    s.text = std::string(text.substr(s.begin, s.end - s.begin));
    s.tokens = word_tokens(s.text);
    index.sentences.push_back(std::move(s));
    sentence_begin = std::string_view::npos;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    while (current_line + 1 < line_start.size() && i >= line_start[current_line + 1]) {
      ++current_line;
    }
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (c == '\n') {
        // A turn never merges with its neighbors.
        const bool next_is_turn =
            current_line + 1 < line_is_turn.size() && line_is_turn[current_line + 1];
        if (line_is_turn[current_line] || next_is_turn) emit(i);
      }
      continue;
    }
    if (sentence_begin == std::string_view::npos) sentence_begin = i;
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      // Closing quotes and brackets stay with the sentence.
      while (j < text.size() &&
             (text[j] == '"' || text[j] == '\'' || text[j] == ')' || text[j] == ']')) {
        ++j;
      }
      if (c == '.' && is_abbreviation(word_before(text, i))) continue;
      if (j >= text.size() || opener_follows(text, j)) {
        emit(j);
        i = j - 1;
      }
    }
  }
  emit(text.size());
  return index;
}

double ngram_recall(const std::vector<std::string>& candidate_tokens,
                    const std::vector<std::string>& reference_tokens, int n) {
  if (n < 1) throw std::invalid_argument("ngram_recall: n must be >= 1");
  const NgramCounts ref = count_ngrams(reference_tokens, n);
  if (ref.total == 0) return 0.0;
  const NgramCounts cand = count_ngrams(candidate_tokens, n);
  long matched = 0;
  for (const auto& [key, count] : ref.counts) {
    auto it = cand.counts.find(key);
    if (it != cand.counts.end()) matched += std::min(count, it->second);
  }
  return static_cast<double>(matched) / static_cast<double>(ref.total);
}

std::vector<std::size_t> select_document_sentences(
    const SentenceIndex& index, const std::vector<std::string>& reference_tokens,
    std::size_t max_tokens) {
  const std::size_t n = index.sentences.size();
  if (n == 0) return {};

  const RecallScorer scorer(index, reference_tokens);
  std::vector<int> acc_uni(scorer.ref_uni_counts.size(), 0);
  std::vector<int> acc_bi(scorer.ref_bi_counts.size(), 0);
  std::vector<bool> selected(n, false);
  std::vector<std::size_t> picks;
  std::size_t used_tokens = 0;

  for (std::size_t step = 0; step < n; ++step) {
    double best_gain = -1.0;
    std::size_t best = n;
    for (std::size_t s = 0; s < n; ++s) {
      if (selected[s]) continue;
      const double g = scorer.gain(s, acc_uni, acc_bi);
      if (g > best_gain) {
        best_gain = g;
        best = s;
      }
    }
    if (best == n) break;
    if (used_tokens + index.sentences[best].tokens.size() > max_tokens) break;
    selected[best] = true;
    picks.push_back(best);
    used_tokens += index.sentences[best].tokens.size();
    scorer.accumulate(best, acc_uni, acc_bi);
  }

  std::sort(picks.begin(), picks.end());
  return picks;
}

std::vector<std::size_t> select_window_sentences(
    const SentenceIndex& index, const std::vector<std::string>& reference_tokens,
    std::size_t top_n) {
  const std::size_t n = index.sentences.size();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double score = ngram_recall(index.sentences[s].tokens, reference_tokens, 1) +
                         ngram_recall(index.sentences[s].tokens, reference_tokens, 2);
    scored.emplace_back(score, s);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> picks;
  for (std::size_t k = 0; k < std::min(top_n, n); ++k) picks.push_back(scored[k].second);
  std::sort(picks.begin(), picks.end());
  return picks;
}

double selection_recall(const SentenceIndex& index, const std::vector<std::size_t>& selection,
                        const std::vector<std::string>& reference_tokens) {
  const RecallScorer scorer(index, reference_tokens);
  std::vector<int> acc_uni(scorer.ref_uni_counts.size(), 0);
  std::vector<int> acc_bi(scorer.ref_bi_counts.size(), 0);
  double total = 0.0;
  for (std::size_t s : selection) {
    total += scorer.gain(s, acc_uni, acc_bi);
    scorer.accumulate(s, acc_uni, acc_bi);
  }
  return total;
}

std::string align_document(std::string_view document, std::string_view summary,
                           const AlignmentConfig& config) {
  const SentenceIndex index = split_sentences(document);
  if (index.sentences.empty()) return "";
  const std::vector<std::string> ref = word_tokens(summary);
  std::vector<std::size_t> picks =
      select_document_sentences(index, ref, config.max_context_tokens);
  if (picks.empty()) {
    // Every sentence overflows the budget on its own; fall back to the best
    // one, truncated at a word boundary.
    const RecallScorer scorer(index, ref);
    std::vector<int> acc_uni(scorer.ref_uni_counts.size(), 0);
    std::vector<int> acc_bi(scorer.ref_bi_counts.size(), 0);
    double best_gain = -1.0;
    std::size_t best = 0;
    for (std::size_t s = 0; s < index.sentences.size(); ++s) {
      const double g = scorer.gain(s, acc_uni, acc_bi);
      if (g > best_gain) {
        best_gain = g;
        best = s;
      }
    }
    return truncate_at_word_boundary(index.sentences[best].text, config.max_context_tokens);
  }
  return join_sentences(index, picks);
}

std::string align_window(std::string_view document, std::string_view window_text,
                         const AlignmentConfig& config) {
  const SentenceIndex index = split_sentences(document);
  const std::vector<std::size_t> picks = select_window_sentences(
      index, word_tokens(window_text), config.per_window_sentences);
  return join_sentences(index, picks);
}

}  // namespace factax::alignment
