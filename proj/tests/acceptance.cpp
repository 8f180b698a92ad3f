// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "parser_golden.hpp"
#include "policy_oracle.hpp"
#include "rl_fixtures.hpp"
#include "test_support.hpp"
#include "viarl/amplifier.hpp"
#include "viarl/cli/commands.hpp"
#include "viarl/cli/config.hpp"
#include "viarl/datapipe.hpp"
#include "viarl/evaluation.hpp"
#include "viarl/reinforce_pp.hpp"
#include "viarl/reward.hpp"

using namespace viarl;
using namespace viarl::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string f4(double x) { return fmt("%.4f", x); }

double sum(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += x;
  return s;
}

double mean(const std::vector<double>& v) { return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size()); }

SyntheticVideo tiny_video(std::size_t T, std::uint64_t seed) {
  EnvConfig cfg = small_env(T, 1, 0.0);
  cfg.dim = 4;
  return generate_video(cfg, seed);
}

// ---------------------------------------------------------------- 1

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "w ";
  return s;
}

Outcome reward_conformance() {
  const RewardConfig cfg;
  if (cfg.format_value != 1.0 || cfg.index_value != 1.0 || cfg.answer_value != 2.0 || cfg.length_value != 0.2 ||
      cfg.l_min != 80 || cfg.l_max != 512) {
    return {false, "default reward config differs from 1/1/2/0.2 with band [80, 512]"};
  }
  const PromptSpec spec{128, 8, ""};
  const std::string bodies[] = {
      "<index> [1] </index>",
      "<think> %T </think><index> [1, 1, 2, 3, 4, 5, 6, 7] </index>",
      "<think> %T </think><index> [3, 17, 22, 41, 55, 78, 90, 101] </index>",
  };
  // Gate oracle: format, then index, then answer; length needs format only.
  std::set<double> seen;
  std::size_t states = 0, mismatches = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    for (const bool correct : {false, true}) {
      for (const std::size_t len : {0, 79, 80, 81, 300, 511, 512, 513, 2000}) {
        std::string text = bodies[b];
        if (const auto p = text.find("%T"); p != std::string::npos) text.replace(p, 2, words(len));
        const double total = total_reward(parse_response(text, spec), correct, cfg).total;
        const bool f = b >= 1, i = b == 2, a = i && correct, l = f && len >= 80 && len <= 512;
        const double expect = (f ? 1.0 : 0.0) + (i ? 1.0 : 0.0) + (a ? 2.0 : 0.0) + (l ? 0.2 : 0.0);
        mismatches += std::abs(total - expect) > 1e-15;
        seen.insert(total);
        ++states;
      }
    }
  }
  const std::set<double> expected{0.0, 1.0, 1.2, 2.0, 2.2, 4.0, 4.2};
  bool same = seen.size() == expected.size();
  for (auto a = seen.begin(), b = expected.begin(); same && a != seen.end(); ++a, ++b) same = std::abs(*a - *b) < 1e-12;
  std::ostringstream d;
  d << states << " gate states, " << mismatches << " mismatches, totals {";
  for (const double x : seen) d << (x == *seen.begin() ? "" : ", ") << x;
  d << "}";
  return {same && mismatches == 0, d.str()};
}

// ---------------------------------------------------------------- 2

Outcome parser_suite() {
  const auto cases = parser_golden_cases();
  std::size_t agree = 0, delimiter = 0, count = 0, range = 0, repetition = 0;
  for (const auto& c : cases) {
    const auto r = parse_response(c.text, c.spec);
    const bool ok = r.verdict == c.verdict && (!c.indices || r.indices == c.indices);
    agree += ok;
    if (c.verdict == Verdict::FormatError) ++delimiter;
    if (c.verdict == Verdict::IndexError && c.indices) {
      const auto& v = *c.indices;
      count += v.size() != c.spec.n_select;
      range += std::any_of(v.begin(), v.end(),
                           [&](std::int64_t i) { return i < 0 || i >= static_cast<std::int64_t>(c.spec.n_candidate); });
      repetition += std::set<std::int64_t>(v.begin(), v.end()).size() != v.size();
    }
  }
  std::ostringstream d;
  d << agree << "/" << cases.size() << " agree; format " << delimiter << ", count " << count << ", range " << range
    << ", repetition " << repetition;
  const bool covered = delimiter && count && range && repetition;
  return {cases.size() >= 50 && agree == cases.size() && covered, d.str()};
}

// ---------------------------------------------------------------- 3

Outcome gradient_checks() {
  Rng rng(3001);
  double worst_lp = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 3 + rng.below(30);
    const std::size_t n = 1 + rng.below(std::min<std::size_t>(T - 1, 4));
    const PolicyParams p = random_params(rng, {0, 4, 11}, {}, 1.0);
    const auto f = frame_features(tiny_video(T, 5000 + trial));
    const PromptSpec spec{T, n, ""};
    const auto seq = sample(p, f, spec, trial, 1).front();
    const auto g = grad_logprob(p, seq.tokens, f, spec);
    auto objective = [&](std::span<const double> x) {
      PolicyParams q = p;
      std::copy(x.begin(), x.end(), q.values().begin());
      return sum(logprob(q, seq.tokens, f, spec));
    };
    worst_lp = std::max(worst_lp, relative_error(g, finite_difference(objective, {p.values().begin(), p.values().end()})));
  }

  double worst_s = 0;
  int done = 0, skipped = 0;
  for (int trial = 0; done < 100; ++trial) {
    const auto fx = random_batch(rng, 12, 2, 2, 3, 7000 + trial);
    const auto adv = normalize(advantages(fx.batch, 0.01)).values;
    PolicyParams theta = fx.old_policy;
    for (double& x : theta.values()) x += 0.05 * rng.normal();
    const RLConfig cfg;
    bool near_kink = false;
    for (const auto& pr : fx.batch.prompts) {
      for (const auto& r : pr.rollouts) {
        const auto lp = logprob(theta, r.sequence.tokens, pr.features, fx.batch.spec);
        for (std::size_t t = 0; t < lp.size(); ++t) {
          const double rho = std::exp(lp[t] - r.old_logprobs[t]);
          near_kink |= std::abs(rho - 1 - cfg.epsilon) < 1e-3 || std::abs(rho - 1 + cfg.epsilon) < 1e-3;
        }
      }
    }
    if (near_kink) {
      ++skipped;
      continue;
    }
    ++done;
    const auto res = surrogate_and_grad(theta, fx.batch, adv, cfg);
    auto objective = [&](std::span<const double> x) {
      PolicyParams q = theta;
      std::copy(x.begin(), x.end(), q.values().begin());
      return surrogate_and_grad(q, fx.batch, adv, cfg).objective;
    };
    worst_s = std::max(worst_s, relative_error(res.gradient, finite_difference(objective, {theta.values().begin(), theta.values().end()})));
  }
  return {worst_lp < 1e-4 && worst_s < 1e-4,
          "max rel err log-prob " + fmt("%.2e", worst_lp) + ", surrogate " + fmt("%.2e", worst_s) + " (" +
              std::to_string(skipped) + " kink instances skipped)"};
}

// ---------------------------------------------------------------- 4

Outcome policy_normalization() {
  Rng rng(4001);
  const std::vector<std::vector<std::size_t>> bucket_sets = {{0}, {0, 3}, {1, 2, 5}};
  const PolicyMode modes[] = {{false, false}, {true, false}, {false, true}};
  double worst = 0, worst_oracle = 0;
  std::size_t configs = 0, paths = 0;
  for (std::size_t T = 2; T <= 5; ++T) {
    for (std::size_t n = 1; n <= std::min<std::size_t>(2, T - 1); ++n) {
      for (const auto& buckets : bucket_sets) {
        for (const auto& mode : modes) {
          const PolicyParams p = random_params(rng, buckets, mode, 1.5);
          const auto v = tiny_video(T, 40 + configs);
          const auto f = frame_features(v);
          const PromptSpec spec{T, n, ""};
          double total = 0;
          for_each_path(p, T, n, [&](const Decisions& d) {
            const auto tokens = build_tokens(p, d);
            const auto lp = logprob(p, tokens, f, spec);
            const auto ref = naive_logprobs(p, v, d);
            for (std::size_t i = 0; i < lp.size(); ++i) worst_oracle = std::max(worst_oracle, std::abs(lp[i] - ref[i]));
            total += std::exp(sum(lp));
            ++paths;
          });
          worst = std::max(worst, std::abs(total - 1.0));
          ++configs;
        }
      }
    }
  }
  return {worst < 1e-9 && worst_oracle < 1e-9,
          std::to_string(configs) + " configs, " + std::to_string(paths) + " paths, max |sum - 1| " +
              fmt("%.1e", worst) + ", max |lp - oracle| " + fmt("%.1e", worst_oracle)};
}

// ---------------------------------------------------------------- 5

Outcome advantage_normalization() {
  Rng rng(5001);
  double worst_suffix = 0, worst_mean = 0, worst_std = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto fx = random_batch(rng, 16, 3, 4, 4, 8000 + trial);
    const double beta = 0.05 * (trial + 1);
    const auto kl = token_kl(fx.batch);
    const auto a = advantages(fx.batch, beta);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double R = fx.batch.sequence(k).reward.total;
      double suffix = 0;
      for (std::size_t t = a[k].size(); t-- > 0;) {
        suffix += kl[k][t];
        worst_suffix = std::max(worst_suffix, std::abs(a[k][t] - (R - beta * suffix)));
      }
    }
    TokenValues raw = a;
    if (trial % 2) {
      raw.assign(1 + rng.below(8), {});
      for (auto& s : raw) {
        s.resize(1 + rng.below(50));
        for (double& x : s) x = -2.0 + 7.0 * rng.normal();
      }
    }
    const auto nrm = normalize(raw);
    double m = 0, cnt = 0;
    for (const auto& s : nrm.values) {
      for (const double x : s) {
        m += x;
        ++cnt;
      }
    }
    m /= cnt;
    double v = 0;
    for (const auto& s : nrm.values) {
      for (const double x : s) v += (x - m) * (x - m);
    }
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(std::sqrt(v / cnt) - 1.0));
  }
  // zero variance: every token advantage equal
  std::ostringstream sink;
  auto* old = std::cerr.rdbuf(sink.rdbuf());
  const auto flat = normalize({{3.5, 3.5, 3.5}, {3.5}});
  std::cerr.rdbuf(old);
  bool degenerate_ok = flat.degenerate && sink.str().find("warning") != std::string::npos;
  for (const auto& s : flat.values) {
    for (const double x : s) degenerate_ok &= x == 0.0;
  }
  return {worst_suffix < 1e-12 && worst_mean < 1e-9 && worst_std < 1e-6 && degenerate_ok,
          "suffix " + fmt("%.1e", worst_suffix) + ", |mean| " + fmt("%.1e", worst_mean) + ", |std - 1| " +
              fmt("%.1e", worst_std) + ", degenerate batch " + (degenerate_ok ? "centered with warning" : "WRONG")};
}

// ---------------------------------------------------------------- 6

// sum_k w_k sum_t rho_kt A_kt grad log pi(o_kt), token gradients taken one at a time.
std::vector<double> direct_reinforce(const PolicyParams& theta, const RolloutBatch& batch, const TokenValues& adv) {
  const double np = static_cast<double>(batch.prompts.size());
  std::vector<double> out(theta.size(), 0.0);
  std::size_t k = 0;
  for (const auto& pr : batch.prompts) {
    for (const auto& r : pr.rollouts) {
      const std::size_t n = r.sequence.tokens.size();
      const double w = 1.0 / (np * static_cast<double>(pr.rollouts.size()) * static_cast<double>(n));
      const auto lp = logprob(theta, r.sequence.tokens, pr.features, batch.spec);
      for (std::size_t t = 0; t < n; ++t) {
        std::vector<double> onehot(n, 0.0), g(theta.size(), 0.0);
        onehot[t] = 1.0;
        replay(theta, r.sequence.tokens, pr.features, batch.spec, {}, onehot, g);
        const double rho = std::exp(lp[t] - r.old_logprobs[t]);
        for (std::size_t i = 0; i < g.size(); ++i) out[i] += w * rho * adv[k][t] * g[i];
      }
      ++k;
    }
  }
  return out;
}

Outcome objective_identity() {
  Rng rng(6001);
  double worst_obj = 0, worst_grad = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto fx = random_batch(rng, 16, 3, 4, 4, 9000 + trial);
    const auto adv = normalize(advantages(fx.batch, 1e-3)).values;
    const auto res = surrogate_and_grad(fx.old_policy, fx.batch, adv, RLConfig{});
    // group-then-prompt mean of the per-sequence token means
    double expect = 0;
    std::size_t k = 0;
    for (const auto& pr : fx.batch.prompts) {
      double group = 0;
      for (std::size_t g = 0; g < pr.rollouts.size(); ++g, ++k) group += mean(adv[k]);
      expect += group / static_cast<double>(pr.rollouts.size());
    }
    expect /= static_cast<double>(fx.batch.prompts.size());
    worst_obj = std::max(worst_obj, std::abs(res.objective - expect));

    RLConfig open;
    open.epsilon = std::numeric_limits<double>::infinity();
    open.beta = 0.0;
    // random advantages keep the check non-trivial when every rollout earns the same reward
    TokenValues adv0 = advantages(fx.batch, 0.0);
    for (auto& a : adv0) {
      for (double& x : a) x = rng.normal();
    }
    adv0 = normalize(adv0).values;
    for (const double shift : {0.0, 0.2}) {
      PolicyParams theta = fx.old_policy;
      for (double& x : theta.values()) x += shift * rng.normal();
      const auto s = surrogate_and_grad(theta, fx.batch, adv0, open);
      const auto d = direct_reinforce(theta, fx.batch, adv0);
      for (std::size_t i = 0; i < d.size(); ++i) worst_grad = std::max(worst_grad, std::abs(s.gradient[i] - d[i]));
    }
  }
  return {worst_obj < 1e-10 && worst_grad < 1e-10,
          "|J - mean A| " + fmt("%.1e", worst_obj) + ", |grad - REINFORCE| " + fmt("%.1e", worst_grad)};
}

// ---------------------------------------------------------------- 7

// Expected recall of a fixed selection when the needle start is uniform on [0, T - L].
double placement_averaged_recall(std::size_t T, std::size_t L, const std::vector<std::int64_t>& picks) {
  double hits = 0;
  for (std::size_t s = 0; s + L <= T; ++s) {
    for (const std::int64_t i : picks) hits += i >= static_cast<std::int64_t>(s) && i < static_cast<std::int64_t>(s + L);
  }
  return hits / static_cast<double>((T - L + 1) * picks.size());
}

Outcome learning_run() {
  EnvConfig env = small_env(32, 8, 0.0);
  const PromptSpec spec{32, 4, ""};
  // evenly spaced picks include both end frames, which the needle covers least often
  const double uniform_expect = placement_averaged_recall(32, 8, {0, 10, 21, 31});
  const double random_expect = 8.0 / 32.0;
  AnswerModelParams answer;
  answer.deterministic_k_min = 1;
  std::ostringstream d;
  bool ok = true;
  d << "recall/uniform/random/answer-rate first->last:";
  for (const std::uint64_t seed : kSeeds) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pool = generate_dataset(env, 800, seed, 1);
    const auto heldout = generate_dataset(env, 1000, seed, 2);
    RLConfig cfg;
    cfg.total_steps = 300;
    cfg.seed = derive_seed(seed, 6);
    const PolicyParams init;
    const auto res = train(init, init, answer, pool, spec, RewardConfig{}, cfg);
    const double recall = evaluate(Strategy::Trained, &res.params, answer, heldout, spec, seed).needle_recall;
    const double uni = evaluate(Strategy::Uniform, nullptr, answer, heldout, spec, seed).needle_recall;
    const double rnd = evaluate(Strategy::Random, nullptr, answer, heldout, spec, seed).needle_recall;
    const double first = res.history.front().answer_rate;
    double last = 0;
    for (std::size_t i = res.history.size() - 20; i < res.history.size(); ++i) last += res.history[i].answer_rate / 20;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok &= recall >= 0.9 && std::abs(uni - uniform_expect) <= 0.02 && std::abs(rnd - random_expect) <= 0.02 &&
          last > first && secs < 300;
    d << " [" << f4(recall) << " " << f4(uni) << " " << f4(rnd) << " " << f4(first) << "->" << f4(last) << " "
      << fmt("%.1fs", secs) << "]";
  }
  d << "; expected uniform " << f4(uniform_expect) << ", random " << f4(random_expect);
  return {ok, d.str()};
}

// ---------------------------------------------------------------- desk runs

struct Desk {
  json cfg;
  PromptSpec spec;
  FilteredPools pools;
  std::vector<SyntheticVideo> heldout;
};

// Default desk configuration for one master seed, data generated and filtered
// the way the CLI does it.
Desk desk(std::uint64_t seed, std::vector<std::string> overrides = {}) {
  Desk k;
  k.cfg = cli::default_config();
  k.cfg["master_seed"] = seed;
  for (const auto& o : overrides) cli::apply_override(k.cfg, o);
  cli::validate_config(k.cfg);
  k.spec = cli::prompt_spec(k.cfg);
  const EnvConfig env = cli::env_config(k.cfg);
  const auto data = generate_dataset(env, k.cfg["data"]["num_records"].get<std::size_t>(), seed,
                                     static_cast<std::uint64_t>(cli::SeedStream::Dataset));
  k.pools = cap_pools(build_pools(data, cli::answer_params(k.cfg), k.spec.n_select,
                                  cli::stage_seed(k.cfg, cli::SeedStream::Filter)),
                      k.cfg["data"]["max_rl"].get<std::size_t>(), k.cfg["data"]["max_sft"].get<std::size_t>(),
                      cli::stage_seed(k.cfg, cli::SeedStream::Cap));
  k.heldout = generate_dataset(env, k.cfg["data"]["heldout_records"].get<std::size_t>(), seed,
                               static_cast<std::uint64_t>(cli::SeedStream::Heldout));
  return k;
}

PolicyParams rl_from_scratch(const Desk& k) {
  const PolicyParams init = cli::initial_policy(k.cfg);
  return train(init, init, cli::answer_params(k.cfg), k.pools.rl_pool, k.spec, cli::reward_config(k.cfg),
               cli::rl_config(k.cfg))
      .params;
}

EvalMetrics heldout_eval(const Desk& k, Strategy s, const PolicyParams* p, std::span<const SyntheticVideo> videos) {
  return evaluate(s, p, cli::answer_params(k.cfg), videos, k.spec, cli::stage_seed(k.cfg, cli::SeedStream::Eval));
}

// ---------------------------------------------------------------- 8

Outcome temporal_ablation() {
  std::vector<double> rl, topn, sft;
  std::ostringstream d;
  d << "tagged recall rl/topn/sft:";
  for (const std::uint64_t seed : kSeeds) {
    const Desk k = desk(seed);
    EnvConfig tagged_env = cli::env_config(k.cfg);
    tagged_env.temporal_prob = 1.0;
    const auto tagged = generate_dataset(tagged_env, 400, seed, 9);
    const PolicyParams p_rl = rl_from_scratch(k);
    const PolicyParams p_sft = sft_train(cli::initial_policy(k.cfg), k.pools.sft_pool, k.spec, cli::sft_config(k.cfg));
    rl.push_back(heldout_eval(k, Strategy::Trained, &p_rl, tagged).needle_recall);
    topn.push_back(heldout_eval(k, Strategy::TopnSimilarity, nullptr, tagged).needle_recall);
    sft.push_back(heldout_eval(k, Strategy::Trained, &p_sft, tagged).needle_recall);
    d << " [" << f4(rl.back()) << " " << f4(topn.back()) << " " << f4(sft.back()) << "]";
  }
  const double over_topn = mean(rl) - mean(topn), over_sft = mean(rl) - mean(sft);
  d << "; mean margin over topn " << f4(over_topn) << ", over sft " << f4(over_sft);
  return {over_topn >= 0.15 && over_sft >= 0.15, d.str()};
}

// ---------------------------------------------------------------- 9

Outcome reward_ablation() {
  std::vector<double> full, no_think, no_len;
  std::ostringstream rows;
  for (const std::uint64_t seed : kSeeds) {
    const Desk base = desk(seed);
    auto run = [&](std::vector<std::string> o) {
      const Desk k = desk(seed, std::move(o));
      const PolicyParams p = rl_from_scratch(k);
      return heldout_eval(k, Strategy::Trained, &p, k.heldout).answer_accuracy;
    };
    full.push_back(run({}));
    no_think.push_back(run({"policy.no_think=true"}));
    no_len.push_back(run({"reward.length_value=0"}));
    rows << "    seed " << seed << ": full " << f4(full.back()) << "  no-think " << f4(no_think.back())
         << "  no-length-reward " << f4(no_len.back()) << "\n";
  }
  const double f = mean(full), t = mean(no_think), l = mean(no_len);
  const bool ok = f >= t - 0.01 && f >= l - 0.01;
  std::string detail = "mean accuracy full " + f4(f) + ", no-think " + f4(t) + ", no-length-reward " + f4(l);
  if (!ok) {
    std::cout << "  discrepancy report (reward ablation):\n" << rows.str()
              << "    the full configuration is not ahead of every ablation within 0.01.\n"
                 "    In this environment the think block is a run of filler tokens whose length\n"
                 "    carries no information about the frames, so the think and length terms can\n"
                 "    only act through optimization dynamics, not through better grounding.\n";
    detail += " (discrepancy report above)";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 10

Outcome amplification_trend() {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> acc;
  std::ostringstream d;
  d << "accuracy (1,1)/(1,2)/(2,1)/(2,2):";
  for (const std::uint64_t seed : kSeeds) {
    const Desk k = desk(seed);
    std::vector<SyntheticVideo> tune;
    for (const auto& r : k.pools.sft_pool) tune.push_back(r.video);
    const auto fin = run_cycles(initial_state(cli::initial_policy(k.cfg), cli::answer_params(k.cfg)), 2,
                                {k.pools.rl_pool, tune, k.heldout}, cli::amplifier_config(k.cfg));
    d << " [";
    for (const auto& h : fin.eval_history) {
      acc[{h.position.cycle, h.position.stage}].push_back(h.metrics.answer_accuracy);
      if (h.position.cycle > 0) d << (h.position == StagePosition{1, 1} ? "" : " ") << f4(h.metrics.answer_accuracy);
    }
    d << "]";
  }
  const double a11 = mean(acc[{1, 1}]), a12 = mean(acc[{1, 2}]), a21 = mean(acc[{2, 1}]), a22 = mean(acc[{2, 2}]);
  d << "; means " << f4(a11) << " " << f4(a12) << " " << f4(a21) << " " << f4(a22);
  return {acc[{2, 2}].size() == std::size(kSeeds) && a21 >= a12 - 0.02 && a22 >= a11, d.str()};
}

// ---------------------------------------------------------------- 11

std::string strip_wall_time(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    j.erase("wall_time");
    out += j.dump() + "\n";
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome pipeline_determinism() {
  const fs::path root = fs::temp_directory_path() / ("viarl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  auto pipeline = [&](const std::string& name, const std::string& workers) {
    const std::string run = (root / name).string();
    for (std::vector<std::string> cmd : {std::vector<std::string>{"gen-data"}, {"filter"}, {"train", "--mode", "amplify"}}) {
      std::vector<std::string> args = {"viarl", "--run", run, "--set", "workers=" + workers};
      args.insert(args.end(), cmd.begin(), cmd.end());
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out, err;
      if (cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err) != 0) {
        throw std::runtime_error(name + ": " + cmd[0] + " failed: " + err.str());
      }
    }
    return root / name;
  };
  // Byte comparison of two run directories; metrics lose their wall_time fields first.
  auto compare = [](const fs::path& a, const fs::path& b, bool skip_config, std::string& first_diff) {
    std::size_t files = 0, differ = 0;
    std::set<fs::path> seen;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      const fs::path rel = fs::relative(e.path(), a);
      seen.insert(rel);
      if (skip_config && rel.filename() == "config.json") continue;
      ++files;
      std::string x = slurp(e.path()), y = fs::exists(b / rel) ? slurp(b / rel) : std::string("<missing>");
      if (rel.filename() == "metrics.jsonl") {
        x = strip_wall_time(x);
        y = strip_wall_time(y);
      }
      if (x != y) {
        ++differ;
        if (first_diff.empty()) first_diff = rel.string();
      }
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
      if (e.is_regular_file() && !seen.count(fs::relative(e.path(), b))) {
        ++differ;
        if (first_diff.empty()) first_diff = fs::relative(e.path(), b).string() + " (extra)";
      }
    }
    return std::pair{files, differ};
  };
  Outcome o;
  try {
    const fs::path a = pipeline("a", "1"), b = pipeline("b", "1"), c = pipeline("c", "4");
    std::string diff_ab, diff_ac;
    const auto [files, differ] = compare(a, b, false, diff_ab);
    // the worker count only shows up in the saved config copies
    const auto [files_c, differ_c] = compare(a, c, true, diff_ac);
    o.pass = files > 10 && differ == 0 && differ_c == 0;
    o.detail = "rerun: " + std::to_string(files) + " files, " + std::to_string(differ) + " differ" +
               (diff_ab.empty() ? "" : " (first: " + diff_ab + ")") + "; 4 workers: " + std::to_string(files_c) +
               " files, " + std::to_string(differ_c) + " differ" + (diff_ac.empty() ? "" : " (first: " + diff_ac + ")");
  } catch (const std::exception& e) {
    o = {false, e.what()};
  }
  fs::remove_all(root);
  return o;
}

// ---------------------------------------------------------------- 12

Outcome blind_calibration() {
  const auto data = generate_dataset(small_env(32, 8, 0.3), 10000, 12, 1);
  const auto stats = pool_stats(build_pools(data, AnswerModelParams{}, 4, 1212, 4));
  return {stats.input == 10000 && std::abs(stats.discard_rate - 0.25) <= 0.015,
          "discard rate " + f4(stats.discard_rate) + " over " + std::to_string(stats.input) + " records"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "reward conformance", 1, reward_conformance},
      {2, "parser suite", 1, parser_suite},
      {3, "gradient checks", 30, gradient_checks},
      {4, "policy normalization", 10, policy_normalization},
      {5, "advantage normalization", 5, advantage_normalization},
      {6, "objective identity", 5, objective_identity},
      {7, "learning run", 5 * 300, learning_run},
      {8, "temporal ablation", 600, temporal_ablation},
      {9, "reward ablation direction", 900, reward_ablation},
      {10, "amplification trend", 1800, amplification_trend},
      {11, "pipeline determinism", 1800, pipeline_determinism},
      {12, "blind-answer calibration", 60, blind_calibration},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    ++ran;
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << " (" << fmt("%.2f", secs)
              << " s): " << o.detail << std::endl;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
