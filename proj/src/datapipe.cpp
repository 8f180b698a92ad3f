#include "viarl/datapipe.hpp"

#include <algorithm>
#include <numeric>

#include "viarl/parallel.hpp"
#include "viarl/rng.hpp"

namespace viarl {
namespace {

constexpr std::uint64_t kBlindStream = 0x5052454431ULL;   // "PRED1"
constexpr std::uint64_t kFramesStream = 0x5052454432ULL;  // "PRED2"

}  // namespace

GateResult evaluate_gates(const SyntheticVideo& video, const AnswerModelParams& answer_params, std::size_t n_select,
                          std::uint64_t seed) {
  GateResult g;
  g.pred1 = answer(video, {}, answer_params, AnswerMode::Blind, derive_seed(seed, kBlindStream, video.record_id));
  if (g.pred1.correct) return g;
  g.topn = baseline_topn(video, n_select);
  g.pred2 = answer(video, g.topn, answer_params, frame_mode(answer_params),
                   derive_seed(seed, kFramesStream, video.record_id));
  g.route = g.pred2->correct ? Route::Sft : Route::Rl;
  return g;
}

FilteredPools build_pools(std::span<const SyntheticVideo> dataset, const AnswerModelParams& answer_params,
                          std::size_t n_select, std::uint64_t seed, std::size_t workers) {
  std::vector<Route> routes(dataset.size(), Route::Discard);
  std::vector<std::vector<std::int64_t>> labels(dataset.size());

  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    GateResult g = evaluate_gates(dataset[i], answer_params, n_select, seed);
    routes[i] = g.route;
    labels[i] = std::move(g.topn);
  });

  FilteredPools pools;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    switch (routes[i]) {
      case Route::Discard: ++pools.discarded; break;
      case Route::Rl: pools.rl_pool.push_back(dataset[i]); break;
      case Route::Sft: pools.sft_pool.push_back({dataset[i], std::move(labels[i])}); break;
    }
  }
  return pools;
}

namespace {

template <typename T>
void subsample(std::vector<T>& items, std::size_t cap, Rng& rng) {
  if (items.size() <= cap) return;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<T> kept;
  kept.reserve(cap);
  for (const std::size_t i : idx) kept.push_back(std::move(items[i]));
  items = std::move(kept);
}

}  // namespace

FilteredPools cap_pools(FilteredPools pools, std::size_t max_rl, std::size_t max_sft, std::uint64_t seed) {
  Rng rng(seed);
  subsample(pools.rl_pool, max_rl, rng);
  subsample(pools.sft_pool, max_sft, rng);
  return pools;
}

PoolStats pool_stats(const FilteredPools& pools) {
  PoolStats s;
  s.rl = pools.rl_pool.size();
  s.sft = pools.sft_pool.size();
  s.discarded = pools.discarded;
  s.input = s.rl + s.sft + s.discarded;
  s.discard_rate = s.input > 0 ? static_cast<double>(s.discarded) / static_cast<double>(s.input) : 0.0;
  if (!pools.sft_pool.empty()) {
    double acc = 0.0;
    for (const auto& r : pools.sft_pool) acc += needle_recall(r.video, r.pseudo_label);
    s.mean_pseudo_label_recall = acc / static_cast<double>(pools.sft_pool.size());
  }
  return s;
}

}  // namespace viarl
