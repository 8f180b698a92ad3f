#include "viarl/evaluation.hpp"

#include <stdexcept>
#include <string>

#include "viarl/rng.hpp"

namespace viarl {
namespace {

constexpr std::uint64_t kEvalAnswerStream = 11;
constexpr std::uint64_t kEvalRandomStream = 12;

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Trained: return "trained";
    case Strategy::Uniform: return "uniform";
    case Strategy::TopnSimilarity: return "topn-similarity";
    case Strategy::Random: return "random";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "trained") return Strategy::Trained;
  if (s == "uniform") return Strategy::Uniform;
  if (s == "topn-similarity") return Strategy::TopnSimilarity;
  if (s == "random") return Strategy::Random;
  throw std::invalid_argument("unknown strategy '" + std::string(s) +
                              "' (expected trained, uniform, topn-similarity or random)");
}

EvalMetrics evaluate(Strategy strategy, const PolicyParams* selector, const AnswerModelParams& answer_params,
                     std::span<const SyntheticVideo> heldout, const PromptSpec& spec, std::uint64_t seed) {
  if (strategy == Strategy::Trained && selector == nullptr) {
    throw std::invalid_argument("evaluate: trained strategy needs a selector");
  }
  const AnswerMode mode = frame_mode(answer_params);
  EvalMetrics m;
  for (const SyntheticVideo& v : heldout) {
    std::vector<std::int64_t> selected;
    bool valid = true;
    switch (strategy) {
      case Strategy::Trained: {
        const TokenSequence seq = greedy_decode(*selector, frame_features(v), spec);
        const SelectorResponse resp = parse_response(render(seq.tokens), spec);
        valid = resp.verdict == Verdict::WellFormed;
        if (valid) selected = *resp.indices;
        break;
      }
      case Strategy::Uniform: selected = uniform_selection(v.num_frames, spec.n_select); break;
      case Strategy::TopnSimilarity: selected = baseline_topn(v, spec.n_select); break;
      case Strategy::Random:
        selected = random_selection(v.num_frames, spec.n_select, derive_seed(seed, kEvalRandomStream, v.record_id));
        break;
    }
    double recall = 0.0;
    bool correct = false;
    if (valid) {
      recall = needle_recall(v, selected);
      correct = answer(v, selected, answer_params, mode, derive_seed(seed, kEvalAnswerStream, v.record_id)).correct;
    }
    ++m.count;
    m.needle_recall += recall;
    m.answer_accuracy += correct ? 1.0 : 0.0;
    m.valid_rate += valid ? 1.0 : 0.0;
    if (v.question.temporal_tag != TemporalTag::None) {
      ++m.temporal_count;
      m.temporal_recall += recall;
      m.temporal_accuracy += correct ? 1.0 : 0.0;
    }
  }
  if (m.count > 0) {
    const double n = static_cast<double>(m.count);
    m.needle_recall /= n;
    m.answer_accuracy /= n;
    m.valid_rate /= n;
  }
  if (m.temporal_count > 0) {
    const double n = static_cast<double>(m.temporal_count);
    m.temporal_recall /= n;
    m.temporal_accuracy /= n;
  }
  return m;
}

}  // namespace viarl
