#pragma once

// Iterated amplification: alternate RL on the selector (stage 1, answer model
// frozen) with tuning of the answer model on the selector's picks (stage 2,
// selector frozen). Positions run (0,0) -> (1,1) -> (1,2) -> (2,1) -> ...

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "viarl/evaluation.hpp"
#include "viarl/needle_env.hpp"
#include "viarl/reinforce_pp.hpp"
#include "viarl/reward.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl {

struct StagePosition {
  std::size_t cycle = 0;
  std::size_t stage = 0;

  auto operator<=>(const StagePosition&) const = default;
};

struct HistoryEntry {
  StagePosition position;
  EvalMetrics metrics;
};

struct CycleState {
  PolicyParams selector;
  AnswerModelParams answer;
  PolicyParams reference;  // KL anchor for stage 1
  StagePosition position;
  std::vector<HistoryEntry> eval_history;
};

CycleState initial_state(PolicyParams selector, AnswerModelParams answer);

struct TuneConfig {
  std::size_t steps = 200;
  double learning_rate = 0.5;
  // Target correctness when the selected frames hold no needle evidence: the
  // answer cannot be grounded, so the best the model can do is guess.
  double no_evidence_target = 1.0 / static_cast<double>(kNumOptions);
};

struct AmplifierConfig {
  PromptSpec spec;
  RewardConfig reward;
  RLConfig rl;
  TuneConfig tune;
  bool stage1_enabled = true;
  bool stage2_enabled = true;
  // Re-snapshot the KL reference from the selector at every stage-1 entry;
  // when false the reference taken by initial_state is kept throughout.
  bool reset_reference = true;
  std::uint64_t eval_seed = 0;
};

struct AmplifierData {
  std::span<const SyntheticVideo> rl_pool;
  std::span<const SyntheticVideo> tune_videos;
  std::span<const SyntheticVideo> heldout;
};

struct AmplifierHooks {
  // Every stage-1 training step; the position is the one being trained toward.
  std::function<void(const StagePosition&, const StepMetrics&)> on_step;
  // After each evaluated position, with the state at that position.
  std::function<void(const CycleState&)> on_checkpoint;
};

// Cross-entropy fit of the evidence-to-correctness map. targets[i] is the
// probability the answer should be right given evidence[i].
AnswerModelParams tune_answer_model(AnswerModelParams params, std::span<const std::array<double, 3>> evidence,
                                    std::span<const double> targets, const TuneConfig& cfg);

// Requires position (0,0) or (i,2); ends at (i+1,1) with an evaluation appended.
CycleState run_stage1(CycleState state, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks = {});

// Requires position (i,1); ends at (i,2) with an evaluation appended.
CycleState run_stage2(CycleState state, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks = {});

// Evaluates (0,0) when starting fresh, then runs n_cycles of stage 1 and 2.
// Disabled stages advance the position without training or evaluating.
CycleState run_cycles(CycleState state, std::size_t n_cycles, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks = {});

}  // namespace viarl
