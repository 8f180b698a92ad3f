#pragma once

// Held-out evaluation of frame-selection strategies, end to end through the
// answer model.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "viarl/needle_env.hpp"
#include "viarl/response_grammar.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl {

enum class Strategy { Trained, Uniform, TopnSimilarity, Random };

std::string_view to_string(Strategy s);
// Accepts "trained", "uniform", "topn-similarity", "random"; throws otherwise.
Strategy strategy_from_string(std::string_view s);

struct EvalMetrics {
  std::size_t count = 0;
  double needle_recall = 0.0;
  double answer_accuracy = 0.0;
  double valid_rate = 0.0;  // responses that parsed WellFormed (1 for fixed strategies)
  std::size_t temporal_count = 0;
  double temporal_recall = 0.0;
  double temporal_accuracy = 0.0;
};

// The trained strategy greedy-decodes `selector` (required for it) and runs
// the response through the parser; malformed responses score zero recall and
// a wrong answer. The answer model draws from derive_seed(seed, record_id), so
// two evaluations with the same seed share their randomness record by record.
EvalMetrics evaluate(Strategy strategy, const PolicyParams* selector, const AnswerModelParams& answer_params,
                     std::span<const SyntheticVideo> heldout, const PromptSpec& spec, std::uint64_t seed);

}  // namespace viarl
