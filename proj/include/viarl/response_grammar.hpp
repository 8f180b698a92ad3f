#pragma once

// Selector response format: a reasoning block followed by a frame-index list,
//
//   <think> ... </think><index> [i1, i2, ..., iN] </index>
//
// plus the system prompt that asks for it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace viarl {

// Number of candidate frames shown to the selector and number it must pick.
struct PromptSpec {
  std::size_t n_candidate = 128;
  std::size_t n_select = 8;
  std::string question_text;

  // Throws std::invalid_argument unless 1 <= n_select < n_candidate and n_candidate >= 2.
  void validate() const;
};

enum class Verdict { WellFormed, FormatError, IndexError };

std::string_view to_string(Verdict v);

struct SelectorResponse {
  std::string raw_text;
  // Trimmed contents of the think block; set whenever the delimiters parse.
  std::optional<std::string> think_text;
  // Parsed list in emitted order; set whenever the delimiters and list syntax parse.
  std::optional<std::vector<std::int64_t>> indices;
  Verdict verdict = Verdict::FormatError;

  bool operator==(const SelectorResponse&) const = default;
};

std::string render_prompt(const PromptSpec& spec);

// Classifies strictest-first: delimiter or list-syntax problems are
// FormatError, then count/range/uniqueness problems are IndexError.
// Never throws on malformed input.
SelectorResponse parse_response(std::string_view raw, const PromptSpec& spec);

// Whitespace-delimited tokens of the think block; 0 when there is none.
std::size_t response_length(const SelectorResponse& resp);

// Canonical serialization used by the round-trip property.
std::string canonical_text(std::string_view think_text, std::span<const std::int64_t> indices);

// True iff the list has exactly n_select distinct entries in [0, n_candidate).
bool indices_valid(std::span<const std::int64_t> indices, const PromptSpec& spec);

}  // namespace viarl
