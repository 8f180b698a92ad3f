#include "viarl/amplifier.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "viarl/rng.hpp"

namespace viarl {
namespace {

constexpr std::uint64_t kStage1Stream = 21;

std::string describe(const StagePosition& p) {
  return "(" + std::to_string(p.cycle) + "," + std::to_string(p.stage) + ")";
}

void record(CycleState& state, const AmplifierData& data, const AmplifierConfig& cfg, const AmplifierHooks& hooks) {
  const EvalMetrics m =
      evaluate(Strategy::Trained, &state.selector, state.answer, data.heldout, cfg.spec, cfg.eval_seed);
  state.eval_history.push_back({state.position, m});
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

CycleState initial_state(PolicyParams selector, AnswerModelParams answer) {
  PolicyParams reference = selector;
  return CycleState{std::move(selector), answer, std::move(reference), {0, 0}, {}};
}

AnswerModelParams tune_answer_model(AnswerModelParams params, std::span<const std::array<double, 3>> evidence,
                                    std::span<const double> targets, const TuneConfig& cfg) {
  if (evidence.size() != targets.size()) throw std::invalid_argument("tune_answer_model: size mismatch");
  if (evidence.empty()) throw std::invalid_argument("tune_answer_model: no data");
  const double n = static_cast<double>(evidence.size());
  auto& w = params.aptitude_weights;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::array<double, 3> grad{};
    for (std::size_t i = 0; i < evidence.size(); ++i) {
      const auto& e = evidence[i];
      const double p = sigmoid(w[0] * e[0] + w[1] * e[1] + w[2] * e[2]);
      for (std::size_t k = 0; k < 3; ++k) grad[k] += (targets[i] - p) * e[k] / n;
    }
    for (std::size_t k = 0; k < 3; ++k) w[k] += cfg.learning_rate * grad[k];
  }
  return params;
}

CycleState run_stage1(CycleState state, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks) {
  const StagePosition from = state.position;
  if (!(from == StagePosition{0, 0} || from.stage == 2)) {
    throw std::logic_error("stage 1 cannot start from " + describe(from));
  }
  if (data.rl_pool.empty()) throw std::invalid_argument("stage 1: empty RL pool");
  const StagePosition to{from.cycle + 1, 1};
  const std::uint64_t answer_sum = checksum(state.answer);

  if (cfg.reset_reference) state.reference = state.selector;
  RLConfig rl = cfg.rl;
  rl.seed = derive_seed(cfg.rl.seed, kStage1Stream, to.cycle);
  StepCallback on_step;
  if (hooks.on_step) on_step = [&](const StepMetrics& m) { hooks.on_step(to, m); };
  TrainResult result =
      train(state.selector, state.reference, state.answer, data.rl_pool, cfg.spec, cfg.reward, rl, on_step);
  state.selector = std::move(result.params);

  if (checksum(state.answer) != answer_sum) throw std::logic_error("answer model changed during stage 1");
  state.position = to;
  record(state, data, cfg, hooks);
  return state;
}

CycleState run_stage2(CycleState state, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks) {
  if (state.position.stage != 1) throw std::logic_error("stage 2 cannot start from " + describe(state.position));
  if (data.tune_videos.empty()) throw std::invalid_argument("stage 2: empty tuning set");
  const std::uint64_t selector_sum = state.selector.checksum();

  std::vector<std::array<double, 3>> evidence;
  std::vector<double> targets;
  evidence.reserve(data.tune_videos.size());
  targets.reserve(data.tune_videos.size());
  for (const SyntheticVideo& v : data.tune_videos) {
    const TokenSequence seq = greedy_decode(state.selector, frame_features(v), cfg.spec);
    const SelectorResponse resp = parse_response(render(seq.tokens), cfg.spec);
    std::vector<std::int64_t> selected;
    if (resp.verdict == Verdict::WellFormed) selected = *resp.indices;
    const auto e = answer_evidence(v, selected);
    evidence.push_back(e);
    targets.push_back(e[1] >= 1.0 ? 1.0 : cfg.tune.no_evidence_target);
  }
  state.answer = tune_answer_model(state.answer, evidence, targets, cfg.tune);

  if (state.selector.checksum() != selector_sum) throw std::logic_error("selector changed during stage 2");
  state.position.stage = 2;
  record(state, data, cfg, hooks);
  return state;
}

CycleState run_cycles(CycleState state, std::size_t n_cycles, const AmplifierData& data, const AmplifierConfig& cfg,
                      const AmplifierHooks& hooks) {
  if (n_cycles < 1) throw std::invalid_argument("run_cycles: n_cycles must be >= 1");
  if (state.position == StagePosition{0, 0} && state.eval_history.empty()) record(state, data, cfg, hooks);
  for (std::size_t c = 0; c < n_cycles; ++c) {
    if (cfg.stage1_enabled) {
      state = run_stage1(std::move(state), data, cfg, hooks);
    } else {
      state.position = {state.position.cycle + 1, 1};
    }
    if (cfg.stage2_enabled) {
      state = run_stage2(std::move(state), data, cfg, hooks);
    } else {
      state.position.stage = 2;
    }
  }
  return state;
}

}  // namespace viarl
