#include "viarl/needle_env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "viarl/kernels.hpp"
#include "viarl/rng.hpp"

namespace viarl {
namespace {

std::size_t first_quartile_len(std::size_t num_frames) { return (num_frames + 3) / 4; }

void fill_gaussian(Rng& rng, std::span<double> row, std::span<const double> mean_dir, double scale,
                   double noise) {
  for (std::size_t c = 0; c < row.size(); ++c) row[c] = scale * mean_dir[c] + noise * rng.normal();
}

void check_selection(const SyntheticVideo& video, std::span<const std::int64_t> selected) {
  std::unordered_set<std::int64_t> seen;
  for (const std::int64_t i : selected) {
    if (i < 0 || static_cast<std::size_t>(i) >= video.num_frames) {
      throw std::invalid_argument("selected frame " + std::to_string(i) + " out of range");
    }
    if (!seen.insert(i).second) {
      throw std::invalid_argument("selected frame " + std::to_string(i) + " repeated");
    }
  }
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

std::string_view to_string(TemporalTag tag) {
  switch (tag) {
    case TemporalTag::None: return "none";
    case TemporalTag::Beginning: return "beginning";
    case TemporalTag::End: return "end";
  }
  return "none";
}

TemporalTag temporal_tag_from_string(std::string_view s) {
  if (s == "none") return TemporalTag::None;
  if (s == "beginning") return TemporalTag::Beginning;
  if (s == "end") return TemporalTag::End;
  throw std::invalid_argument("unknown temporal tag '" + std::string(s) + "'");
}

std::string_view to_string(AnswerMode mode) {
  switch (mode) {
    case AnswerMode::Blind: return "blind";
    case AnswerMode::Deterministic: return "deterministic";
    case AnswerMode::Stochastic: return "stochastic";
  }
  return "?";
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("env." + msg); };
  if (num_frames < 2) fail("num_frames must be >= 2");
  if (dim < 1) fail("dim must be >= 1");
  if (needle_len_min < 1) fail("needle_len_min must be >= 1");
  if (needle_len_min > needle_len_max) fail("needle_len_min must be <= needle_len_max");
  if (needle_len_max >= num_frames) fail("needle_len_max must be < num_frames");
  if (!(temporal_prob >= 0.0 && temporal_prob <= 1.0)) fail("temporal_prob must be in [0, 1]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail("noise must be finite and >= 0");
  if (!std::isfinite(separation)) fail("separation must be finite");
  if (!std::isfinite(distractor_separation)) fail("distractor_separation must be finite");
  if (temporal_prob > 0.0) {
    const std::size_t q = first_quartile_len(num_frames);
    const std::size_t dl = distractor_len > 0 ? distractor_len : needle_len_max;
    if (needle_len_max + std::max(q, dl) + q - 1 > num_frames) {
      fail("needle and distractor do not fit at opposite ends; shrink needle_len_max/distractor_len "
           "or set temporal_prob = 0");
    }
  }
}

SyntheticVideo generate_video(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t record_id) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t T = cfg.num_frames;
  const std::size_t d = cfg.dim;

  SyntheticVideo v;
  v.record_id = record_id;
  v.seed = seed;
  v.num_frames = T;
  v.dim = d;

  std::vector<double> q(d, 0.0);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : q) x = rng.normal();
    norm = std::sqrt(std::inner_product(q.begin(), q.end(), q.begin(), 0.0));
  }
  for (double& x : q) x /= norm;
  v.question.query_vector = q;

  if (rng.uniform() < cfg.temporal_prob) {
    v.question.temporal_tag = rng.bernoulli(0.5) ? TemporalTag::Beginning : TemporalTag::End;
  }
  v.question.ground_truth = rng.below(kNumOptions);

  const std::size_t L = cfg.needle_len_min + rng.below(cfg.needle_len_max - cfg.needle_len_min + 1);
  const std::size_t qlen = first_quartile_len(T);
  std::size_t lo = 0, hi = T - L;  // inclusive range for the needle start
  switch (v.question.temporal_tag) {
    case TemporalTag::None: break;
    case TemporalTag::Beginning: hi = std::min(qlen - 1, T - L); break;
    case TemporalTag::End:
      // mirror image of the Beginning rule: the needle ends inside the last quartile
      lo = (T - qlen + 1 >= L) ? T - qlen + 1 - L : 0;
      break;
  }
  const std::size_t s = lo + rng.below(hi - lo + 1);
  v.needle = {s, s + L};

  if (v.question.temporal_tag != TemporalTag::None) {
    const std::size_t dl = cfg.distractor_len > 0 ? cfg.distractor_len : L;
    const std::size_t span = std::max(qlen, dl) - dl;  // slack inside the quartile
    const std::size_t offset = rng.below(span + 1);
    std::size_t ds = 0;
    if (v.question.temporal_tag == TemporalTag::Beginning) {
      ds = T - dl - offset;  // late distractor
    } else {
      ds = offset;  // early distractor
    }
    v.distractor = FrameSpan{ds, ds + dl};
  }

  v.frames.assign(T * d, 0.0);
  const std::vector<double> zero(d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::span<double> row(v.frames.data() + t * d, d);
    if (v.needle.contains(static_cast<std::int64_t>(t))) {
      fill_gaussian(rng, row, q, cfg.separation, cfg.noise);
    } else if (v.distractor && v.distractor->contains(static_cast<std::int64_t>(t))) {
      fill_gaussian(rng, row, q, cfg.distractor_separation, cfg.noise);
    } else {
      fill_gaussian(rng, row, zero, 0.0, cfg.noise);
    }
  }
  return v;
}

std::vector<SyntheticVideo> generate_dataset(const EnvConfig& cfg, std::size_t count, std::uint64_t seed,
                                             std::uint64_t stream) {
  cfg.validate();
  std::vector<SyntheticVideo> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_video(cfg, derive_seed(seed, stream, i), i));
  }
  return out;
}

std::vector<double> similarity_scores(const SyntheticVideo& video) {
  std::vector<double> out(video.num_frames, 0.0);
  kernels::active().cosine_rows(video.frames.data(), video.num_frames, video.dim,
                                video.question.query_vector.data(), out.data());
  return out;
}

std::vector<std::int64_t> topn_indices(std::span<const double> scores, std::size_t n) {
  if (n > scores.size()) throw std::invalid_argument("topn: n exceeds number of scores");
  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::int64_t a, std::int64_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::int64_t> baseline_topn(const SyntheticVideo& video, std::size_t n_select) {
  return topn_indices(similarity_scores(video), n_select);
}

std::vector<std::int64_t> uniform_selection(std::size_t num_frames, std::size_t n_select) {
  if (n_select == 0 || n_select > num_frames) throw std::invalid_argument("uniform_selection: bad n_select");
  if (n_select == 1) return {static_cast<std::int64_t>(std::llround((num_frames - 1) / 2.0))};
  std::vector<std::int64_t> out;
  out.reserve(n_select);
  for (std::size_t k = 0; k < n_select; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(num_frames - 1) /
                       static_cast<double>(n_select - 1);
    out.push_back(static_cast<std::int64_t>(std::llround(pos)));
  }
  return out;
}

std::vector<std::int64_t> random_selection(std::size_t num_frames, std::size_t n_select, std::uint64_t seed) {
  if (n_select > num_frames) throw std::invalid_argument("random_selection: n_select > num_frames");
  std::vector<std::int64_t> all(num_frames);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n_select; ++i) {
    const std::size_t j = i + rng.below(num_frames - i);
    std::swap(all[i], all[j]);
  }
  all.resize(n_select);
  std::sort(all.begin(), all.end());
  return all;
}

std::size_t needle_hits(const SyntheticVideo& video, std::span<const std::int64_t> selected) {
  return static_cast<std::size_t>(
      std::count_if(selected.begin(), selected.end(), [&](std::int64_t i) { return video.needle.contains(i); }));
}

double needle_recall(const SyntheticVideo& video, std::span<const std::int64_t> selected) {
  if (selected.empty()) return 0.0;
  return static_cast<double>(needle_hits(video, selected)) / static_cast<double>(selected.size());
}

AnswerMode frame_mode(const AnswerModelParams& params) {
  return params.deterministic_k_min ? AnswerMode::Deterministic : AnswerMode::Stochastic;
}

std::array<double, 3> answer_evidence(const SyntheticVideo& video, std::span<const std::int64_t> selected) {
  double mean_sim = 0.0;
  if (!selected.empty()) {
    for (const std::int64_t i : selected) {
      double s = 0.0;
      kernels::active().cosine_rows(video.frame(static_cast<std::size_t>(i)).data(), 1, video.dim,
                                    video.question.query_vector.data(), &s);
      mean_sim += s;
    }
    mean_sim /= static_cast<double>(selected.size());
  }
  return {1.0, static_cast<double>(needle_hits(video, selected)), mean_sim};
}

double correct_probability(const SyntheticVideo& video, std::span<const std::int64_t> selected,
                           const AnswerModelParams& params) {
  const auto e = answer_evidence(video, selected);
  double logit = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) logit += params.aptitude_weights[i] * e[i];
  return sigmoid(logit);
}

AnswerOutcome answer(const SyntheticVideo& video, std::span<const std::int64_t> selected,
                     const AnswerModelParams& params, AnswerMode mode, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t gt = video.question.ground_truth;
  auto wrong_option = [&] { return (gt + 1 + rng.below(kNumOptions - 1)) % kNumOptions; };

  if (mode == AnswerMode::Blind) {
    const std::size_t pred = rng.below(kNumOptions);
    return {pred, pred == gt};
  }
  check_selection(video, selected);
  bool correct = false;
  if (mode == AnswerMode::Deterministic) {
    if (!params.deterministic_k_min) {
      throw std::invalid_argument("deterministic answer mode needs deterministic_k_min");
    }
    correct = needle_hits(video, selected) >= *params.deterministic_k_min;
  } else {
    // one uniform per call, drawn first, so paired evaluations share it
    correct = rng.uniform() < correct_probability(video, selected, params);
  }
  return {correct ? gt : wrong_option(), correct};
}

std::uint64_t checksum(const AnswerModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  };
  for (const double w : params.aptitude_weights) mix(std::bit_cast<std::uint64_t>(w));
  mix(params.deterministic_k_min ? *params.deterministic_k_min + 1 : 0);
  return h;
}

}  // namespace viarl
