#include "viarl/reinforce_pp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "viarl/kernels.hpp"
#include "viarl/parallel.hpp"
#include "viarl/rng.hpp"

namespace viarl {
namespace {

constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kAnswerStream = 2;
constexpr std::uint64_t kStepStream = 3;

std::vector<double> flatten(const TokenValues& v) {
  std::vector<double> flat;
  for (const auto& s : v) flat.insert(flat.end(), s.begin(), s.end());
  return flat;
}

}  // namespace

void RLConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rl.epsilon must be > 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("rl.beta must be >= 0");
  if (group_size < 1) throw std::invalid_argument("rl.group_size must be >= 1");
  if (prompts_per_batch < 1) throw std::invalid_argument("rl.prompts_per_batch must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("rl.learning_rate must be >= 0");
  if (inner_epochs < 1) throw std::invalid_argument("rl.inner_epochs must be >= 1");
}

std::size_t RolloutBatch::num_sequences() const {
  std::size_t n = 0;
  for (const auto& p : prompts) n += p.rollouts.size();
  return n;
}

const Rollout& RolloutBatch::sequence(std::size_t k) const {
  for (const auto& p : prompts) {
    if (k < p.rollouts.size()) return p.rollouts[k];
    k -= p.rollouts.size();
  }
  throw std::out_of_range("RolloutBatch::sequence");
}

RolloutBatch collect_rollouts(const PolicyParams& policy_old, const PolicyParams& reference,
                              const AnswerModelParams& answer_params, std::span<const SyntheticVideo* const> prompts,
                              const PromptSpec& spec, const RewardConfig& reward_cfg, const RLConfig& cfg,
                              std::uint64_t seed) {
  RolloutBatch batch;
  batch.spec = spec;
  batch.prompts.resize(prompts.size());
  const AnswerMode mode = frame_mode(answer_params);

  parallel_for(prompts.size(), cfg.workers, [&](std::size_t p) {
    PromptRollouts& pr = batch.prompts[p];
    pr.video = prompts[p];
    pr.features = frame_features(*pr.video);
    auto seqs = sample(policy_old, pr.features, spec, derive_seed(seed, kSampleStream, p), cfg.group_size);
    pr.rollouts.resize(seqs.size());
    for (std::size_t g = 0; g < seqs.size(); ++g) {
      Rollout& r = pr.rollouts[g];
      r.sequence = std::move(seqs[g]);
      r.old_logprobs = r.sequence.logprobs;
      r.ref_logprobs = logprob(reference, r.sequence.tokens, pr.features, spec);
      r.text = render(r.sequence.tokens);
      r.response = parse_response(r.text, spec);
      if (r.response.verdict == Verdict::WellFormed) {
        const auto& idx = *r.response.indices;
        r.answer_correct =
            answer(*pr.video, idx, answer_params, mode, derive_seed(seed, kAnswerStream, p * cfg.group_size + g))
                .correct;
        r.needle_recall = needle_recall(*pr.video, idx);
      }
      r.reward = total_reward(r.response, r.answer_correct, reward_cfg);
    }
  });
  return batch;
}

TokenValues token_kl(const RolloutBatch& batch) {
  TokenValues kl;
  kl.reserve(batch.num_sequences());
  for (const auto& p : batch.prompts) {
    for (const auto& r : p.rollouts) {
      std::vector<double> k(r.old_logprobs.size());
      for (std::size_t t = 0; t < k.size(); ++t) k[t] = r.old_logprobs[t] - r.ref_logprobs[t];
      kl.push_back(std::move(k));
    }
  }
  return kl;
}

TokenValues advantages(const RolloutBatch& batch, double beta) {
  TokenValues kl = token_kl(batch);
  std::size_t k = 0;
  for (const auto& p : batch.prompts) {
    for (const auto& r : p.rollouts) {
      std::vector<double>& a = kl[k++];
      double suffix = 0.0;
      for (std::size_t t = a.size(); t-- > 0;) {
        suffix += a[t];
        a[t] = r.reward.total - beta * suffix;
      }
    }
  }
  return kl;
}

Normalized normalize(const TokenValues& adv) {
  Normalized out;
  out.values = adv;
  const std::vector<double> flat = flatten(adv);
  if (flat.empty()) {
    out.degenerate = true;
    return out;
  }
  const double n = static_cast<double>(flat.size());
  out.mean = kernels::sum(flat) / n;
  out.stddev = std::sqrt(kernels::sum_sq_dev(flat, out.mean) / n);
  // treat spread at rounding level as zero variance
  out.degenerate = !(out.stddev > 1e-12 * std::max(1.0, std::abs(out.mean)));
  if (out.degenerate) {
    std::cerr << "warning: advantage batch has zero variance; centering only\n";
  }
  for (auto& s : out.values) {
    for (double& x : s) x = out.degenerate ? x - out.mean : (x - out.mean) / out.stddev;
  }
  return out;
}

std::vector<double> sequence_weights(const RolloutBatch& batch) {
  std::vector<double> w;
  w.reserve(batch.num_sequences());
  const double np = static_cast<double>(batch.prompts.size());
  for (const auto& p : batch.prompts) {
    const double g = static_cast<double>(p.rollouts.size());
    for (const auto& r : p.rollouts) {
      w.push_back(1.0 / (np * g * static_cast<double>(r.sequence.tokens.size())));
    }
  }
  return w;
}

SurrogateResult surrogate_and_grad(const PolicyParams& policy, const RolloutBatch& batch,
                                   const TokenValues& normalized_adv, const RLConfig& cfg) {
  if (normalized_adv.size() != batch.num_sequences()) throw std::invalid_argument("surrogate: advantage shape");
  SurrogateResult res;
  res.gradient.assign(policy.size(), 0.0);
  const std::vector<double> seq_w = sequence_weights(batch);
  const auto& kt = kernels::active();

  std::size_t k = 0;
  std::vector<double> lp, ratio, term, coef;
  for (const auto& p : batch.prompts) {
    for (const auto& r : p.rollouts) {
      const std::size_t n = r.sequence.tokens.size();
      const auto& adv = normalized_adv[k];
      if (adv.size() != n) throw std::invalid_argument("surrogate: advantage length");
      lp.assign(n, 0.0);
      replay(policy, r.sequence.tokens, p.features, batch.spec, lp, {}, {});
      ratio.resize(n);
      term.resize(n);
      coef.resize(n);
      for (std::size_t t = 0; t < n; ++t) ratio[t] = std::exp(lp[t] - r.old_logprobs[t]);
      kt.clipped_surrogate(ratio.data(), adv.data(), n, cfg.epsilon, term.data(), coef.data());
      res.objective += seq_w[k] * kt.sum(term.data(), n);
      for (double& c : coef) c *= seq_w[k];
      replay(policy, r.sequence.tokens, p.features, batch.spec, {}, coef, res.gradient);
      ++k;
    }
  }
  return res;
}

StepMetrics summarize(const RolloutBatch& batch) {
  StepMetrics m;
  const double n = static_cast<double>(batch.num_sequences());
  if (n == 0) return m;
  double kl_sum = 0.0, kl_abs = 0.0, tokens = 0.0;
  for (const auto& p : batch.prompts) {
    for (const auto& r : p.rollouts) {
      m.mean_total_reward += r.reward.total;
      m.format_rate += r.reward.s_format > 0 ? 1.0 : 0.0;
      m.index_rate += r.reward.s_index > 0 ? 1.0 : 0.0;
      m.answer_rate += r.reward.s_answer > 0 ? 1.0 : 0.0;
      m.length_rate += r.reward.s_length > 0 ? 1.0 : 0.0;
      m.mean_think_length += static_cast<double>(response_length(r.response));
      m.needle_recall += r.needle_recall;
      for (std::size_t t = 0; t < r.old_logprobs.size(); ++t) {
        const double kl = r.old_logprobs[t] - r.ref_logprobs[t];
        kl_sum += kl;
        kl_abs += std::abs(kl);
      }
      tokens += static_cast<double>(r.old_logprobs.size());
    }
  }
  m.mean_total_reward /= n;
  m.format_rate /= n;
  m.index_rate /= n;
  m.answer_rate /= n;
  m.length_rate /= n;
  m.mean_think_length /= n;
  m.needle_recall /= n;
  m.mean_kl = tokens > 0 ? kl_sum / tokens : 0.0;
  m.mean_abs_kl = tokens > 0 ? kl_abs / tokens : 0.0;
  return m;
}

TrainResult train(const PolicyParams& policy_init, const PolicyParams& reference,
                  const AnswerModelParams& answer_params, std::span<const SyntheticVideo> rl_pool,
                  const PromptSpec& spec, const RewardConfig& reward_cfg, const RLConfig& cfg,
                  const StepCallback& on_step) {
  cfg.validate();
  reward_cfg.validate();
  if (rl_pool.empty()) throw std::invalid_argument("train: empty RL pool");

  TrainResult result{policy_init, {}, Adam(policy_init.size(), {.learning_rate = cfg.learning_rate})};
  PolicyParams& params = result.params;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t per_batch = cfg.prompts_per_batch;

  std::vector<std::size_t> order(rl_pool.size());
  std::vector<const SyntheticVideo*> prompts(per_batch);
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, kStepStream, step);
    Rng rng(derive_seed(step_seed, 0));
    if (rl_pool.size() >= per_batch) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = 0; i < per_batch; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
      for (std::size_t i = 0; i < per_batch; ++i) prompts[i] = &rl_pool[order[i]];
    } else {
      for (std::size_t i = 0; i < per_batch; ++i) prompts[i] = &rl_pool[rng.below(rl_pool.size())];
    }

    const PolicyParams policy_old = params;
    const RolloutBatch batch =
        collect_rollouts(policy_old, reference, answer_params, prompts, spec, reward_cfg, cfg, step_seed);
    const Normalized adv = normalize(advantages(batch, cfg.beta));

    StepMetrics m = summarize(batch);
    m.step = step;
    m.degenerate = adv.degenerate;
    for (std::size_t e = 0; e < cfg.inner_epochs; ++e) {
      const SurrogateResult s = surrogate_and_grad(params, batch, adv.values, cfg);
      if (e == 0) m.objective = s.objective;
      result.optimizer.ascend(params.values(), s.gradient);
    }
    if (!params.all_finite()) {
      throw std::runtime_error("train: non-finite policy parameters at step " + std::to_string(step));
    }
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(m);
    if (on_step) on_step(m);
  }
  return result;
}

}  // namespace viarl
