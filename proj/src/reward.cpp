#include "viarl/reward.hpp"

#include <stdexcept>

namespace viarl {

void RewardConfig::validate() const {
  if (l_min > l_max) throw std::invalid_argument("RewardConfig: l_min must be <= l_max");
  if (format_value < 0 || index_value < 0 || answer_value < 0 || length_value < 0) {
    throw std::invalid_argument("RewardConfig: reward values must be non-negative");
  }
}

double score_format(const SelectorResponse& resp, const RewardConfig& cfg) {
  return resp.verdict != Verdict::FormatError ? cfg.format_value : 0.0;
}

double score_index(const SelectorResponse& resp, const RewardConfig& cfg) {
  return resp.verdict == Verdict::WellFormed ? cfg.index_value : 0.0;
}

double score_answer(const SelectorResponse& resp, bool answer_correct, const RewardConfig& cfg) {
  return (answer_correct && resp.verdict == Verdict::WellFormed) ? cfg.answer_value : 0.0;
}

double score_length(const SelectorResponse& resp, const RewardConfig& cfg) {
  if (!resp.think_text) return 0.0;
  const std::size_t len = response_length(resp);
  return (cfg.l_min <= len && len <= cfg.l_max) ? cfg.length_value : 0.0;
}

RewardBreakdown total_reward(const SelectorResponse& resp, bool answer_correct, const RewardConfig& cfg) {
  RewardBreakdown b;
  b.s_format = score_format(resp, cfg);
  b.s_index = score_index(resp, cfg);
  b.s_answer = score_answer(resp, answer_correct, cfg);
  b.s_length = score_length(resp, cfg);
  b.total = b.s_format + b.s_index + b.s_answer + b.s_length;
  return b;
}

}  // namespace viarl
