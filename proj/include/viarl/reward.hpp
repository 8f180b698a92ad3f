#pragma once

// Rule-based rewards for one selector rollout: format, frame index, answer
// and think-length components, gated in that order.

#include <cstddef>

#include "viarl/response_grammar.hpp"

namespace viarl {

struct RewardConfig {
  double format_value = 1.0;
  double index_value = 1.0;
  double answer_value = 2.0;
  double length_value = 0.2;
  std::size_t l_min = 80;
  std::size_t l_max = 512;

  void validate() const;
};

struct RewardBreakdown {
  double s_format = 0.0;
  double s_index = 0.0;
  double s_answer = 0.0;
  double s_length = 0.0;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

// Delimiters and list syntax parsed; index semantics are not considered.
double score_format(const SelectorResponse& resp, const RewardConfig& cfg);
double score_index(const SelectorResponse& resp, const RewardConfig& cfg);
// answer_correct is the answer model's verdict on the frames the response selected.
double score_answer(const SelectorResponse& resp, bool answer_correct, const RewardConfig& cfg);
// Needs a think block; the bounds are inclusive.
double score_length(const SelectorResponse& resp, const RewardConfig& cfg);

// Sum of the four components.
RewardBreakdown total_reward(const SelectorResponse& resp, bool answer_correct, const RewardConfig& cfg);

}  // namespace viarl
