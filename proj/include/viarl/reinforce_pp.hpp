#pragma once

// REINFORCE++ for the frame selector: grouped rollouts scored by the rule
// rewards, per-token advantages with a suffix-summed KL penalty against a
// frozen reference policy, global batch normalization, and a PPO-style clipped
// surrogate optimized with Adam.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viarl/adam.hpp"
#include "viarl/needle_env.hpp"
#include "viarl/response_grammar.hpp"
#include "viarl/reward.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl {

struct RLConfig {
  double epsilon = 0.2;
  double beta = 1.0e-3;
  std::size_t group_size = 8;
  // Desk-scale default; a 3B-parameter selector would use something like 4e-7.
  double learning_rate = 0.05;
  std::size_t prompts_per_batch = 16;
  std::size_t total_steps = 300;
  std::size_t inner_epochs = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct Rollout {
  TokenSequence sequence;  // logprobs are under the behavior policy
  std::vector<double> old_logprobs;
  std::vector<double> ref_logprobs;
  std::string text;
  SelectorResponse response;
  RewardBreakdown reward;
  bool answer_correct = false;
  double needle_recall = 0.0;
};

struct PromptRollouts {
  const SyntheticVideo* video = nullptr;
  FrameFeatures features;
  std::vector<Rollout> rollouts;
};

struct RolloutBatch {
  PromptSpec spec;
  std::vector<PromptRollouts> prompts;

  std::size_t num_sequences() const;
  // Sequence k in prompt-major order.
  const Rollout& sequence(std::size_t k) const;
};

// One array per sequence, prompt-major.
using TokenValues = std::vector<std::vector<double>>;

RolloutBatch collect_rollouts(const PolicyParams& policy_old, const PolicyParams& reference,
                              const AnswerModelParams& answer_params, std::span<const SyntheticVideo* const> prompts,
                              const PromptSpec& spec, const RewardConfig& reward_cfg, const RLConfig& cfg,
                              std::uint64_t seed);

// KL(t) = log pi_old(t) - log pi_ref(t) for every token of every sequence.
TokenValues token_kl(const RolloutBatch& batch);

// A(t) = R - beta * sum_{j >= t} KL(j), with R the sequence's total reward at every position.
TokenValues advantages(const RolloutBatch& batch, double beta);

struct Normalized {
  TokenValues values;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation before scaling
  bool degenerate = false;  // zero variance: values were only centered
};

// Standardizes over all token positions of the whole batch.
Normalized normalize(const TokenValues& adv);

struct SurrogateResult {
  double objective = 0.0;
  std::vector<double> gradient;  // laid out like PolicyParams::values()
};

// Mean over prompts of the mean over the group of (1/|o_i|) sum_t min(rho A, clip(rho) A),
// rho = exp(log pi_theta - log pi_old). The gradient is zero on tokens where the clipped
// branch is the binding one.
SurrogateResult surrogate_and_grad(const PolicyParams& policy, const RolloutBatch& batch,
                                   const TokenValues& normalized_adv, const RLConfig& cfg);

// Weight of sequence k in the surrogate's averaging: 1 / (prompts * group * |o_k|).
std::vector<double> sequence_weights(const RolloutBatch& batch);

struct StepMetrics {
  std::size_t step = 0;
  double mean_total_reward = 0.0;
  double format_rate = 0.0;
  double index_rate = 0.0;
  double answer_rate = 0.0;
  double length_rate = 0.0;
  double mean_kl = 0.0;
  double mean_abs_kl = 0.0;
  double mean_think_length = 0.0;
  double needle_recall = 0.0;
  double objective = 0.0;
  bool degenerate = false;
  double wall_time = 0.0;
};

StepMetrics summarize(const RolloutBatch& batch);

struct TrainResult {
  PolicyParams params;
  std::vector<StepMetrics> history;
  Adam optimizer;
};

using StepCallback = std::function<void(const StepMetrics&)>;

// One iteration: snapshot pi_old, sample a batch of prompts, collect rollouts,
// compute and normalize advantages, then inner_epochs Adam ascent steps on the
// surrogate. Throws std::runtime_error if parameters become non-finite.
TrainResult train(const PolicyParams& policy_init, const PolicyParams& reference,
                  const AnswerModelParams& answer_params, std::span<const SyntheticVideo> rl_pool,
                  const PromptSpec& spec, const RewardConfig& reward_cfg, const RLConfig& cfg,
                  const StepCallback& on_step = {});

}  // namespace viarl
