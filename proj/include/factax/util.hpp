#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace factax {

using json = nlohmann::json;

inline constexpr std::string_view kVersion = "0.1.0";

// Deterministic RNG (xoshiro256**). The standard <random> distributions are
// implementation-defined, which would break byte-identical outputs across
// toolchains; every sampling path in the toolkit goes through this instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Unbiased integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }
  // Uniform double in [0, 1) with 53 bits.
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // k distinct indices from [0, n), ascending. k may exceed n (clamped).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::uint64_t state_[4];
};

std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
// Lowercase + runs of whitespace collapsed to single spaces; used for
// document-overlap and oracle-key normalization.
std::string normalize_text(std::string_view s);

// Whitespace-delimited words, punctuation kept.
std::vector<std::string> whitespace_words(std::string_view s);
// Lowercased alphanumeric runs; non-ASCII bytes are treated as word
// characters so non-English text still tokenizes.
std::vector<std::string> word_tokens(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::string& path, std::string_view content);
void append_line(const std::string& path, std::string_view line);
bool file_exists(const std::string& path);

// Parses a JSON-lines file; returns (1-based line number, parsed value).
// Unparseable lines are returned with a null value so callers can report them.
std::vector<std::pair<int, json>> read_jsonl(const std::string& path);

// Stable content hash of a canonically serialized JSON value.
std::string json_hash(const json& value);

}  // namespace factax
