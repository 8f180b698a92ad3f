#pragma once

// Dataset filtering with two answer-model gates: a blind prediction (Pred1)
// and a prediction from the top-N similarity frames (Pred2). Blind-correct
// records are dropped; the rest go to the RL pool (Pred2 wrong) or the SFT
// pseudo-label pool (Pred2 right).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "viarl/needle_env.hpp"

namespace viarl {

struct SftRecord {
  SyntheticVideo video;
  std::vector<std::int64_t> pseudo_label;  // baseline_topn selection
};

enum class Route { Discard, Rl, Sft };

struct GateResult {
  AnswerOutcome pred1;                 // blind
  std::optional<AnswerOutcome> pred2;  // top-N frames; absent when discarded
  std::vector<std::int64_t> topn;      // empty when discarded
  Route route = Route::Discard;
};

// Both gates for one record. Seeds derive from (seed, record_id).
GateResult evaluate_gates(const SyntheticVideo& video, const AnswerModelParams& answer_params, std::size_t n_select,
                          std::uint64_t seed);

struct FilteredPools {
  std::vector<SyntheticVideo> rl_pool;
  std::vector<SftRecord> sft_pool;
  std::size_t discarded = 0;
};

// Per-record seeds are derived from (seed, record_id), so the result does not
// depend on record order or on the worker count.
FilteredPools build_pools(std::span<const SyntheticVideo> dataset, const AnswerModelParams& answer_params,
                          std::size_t n_select, std::uint64_t seed, std::size_t workers = 1);

// Uniform subsample of each pool down to the given caps, preserving input order.
FilteredPools cap_pools(FilteredPools pools, std::size_t max_rl, std::size_t max_sft, std::uint64_t seed);

struct PoolStats {
  std::size_t input = 0;
  std::size_t rl = 0;
  std::size_t sft = 0;
  std::size_t discarded = 0;
  double discard_rate = 0.0;
  double mean_pseudo_label_recall = 0.0;
};

PoolStats pool_stats(const FilteredPools& pools);

}  // namespace viarl
