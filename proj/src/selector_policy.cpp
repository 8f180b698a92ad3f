#include "viarl/selector_policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "viarl/adam.hpp"
#include "viarl/kernels.hpp"
#include "viarl/rng.hpp"

namespace viarl {
namespace {

constexpr std::string_view kFillerWord = "w";

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(sigmoid(x)) without overflow
double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

std::size_t structure_offset() { return kNumScoreFeatures; }
std::size_t length_offset() { return kNumScoreFeatures + kNumStructureLogits; }

// Softmax over the unmasked entries of z. Writes probabilities into p (0 where
// masked) and returns the log-normalizer.
double masked_softmax(std::span<const double> z, const std::vector<char>& masked, std::span<double> p) {
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!masked[i]) zmax = std::max(zmax, z[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = masked[i] ? 0.0 : std::exp(z[i] - zmax);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return zmax + std::log(s);
}

// Log-softmax over length buckets; returns log-normalizer and fills probabilities.
double bucket_softmax(std::span<const double> logits, std::span<double> p) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return m + std::log(s);
}

std::vector<double> frame_scores(const PolicyParams& params, const FrameFeatures& f) {
  std::vector<double> z(f.num_frames, 0.0);
  kernels::active().gemv(f.phi.data(), f.num_frames, kNumScoreFeatures, params.score_weights().data(), z.data());
  return z;
}

void check_spec(const FrameFeatures& f, const PromptSpec& spec) {
  spec.validate();
  if (f.num_frames != spec.n_candidate) {
    throw std::invalid_argument("prompt n_candidate (" + std::to_string(spec.n_candidate) +
                                ") does not match the video (" + std::to_string(f.num_frames) + " frames)");
  }
}

// Shared state of one index chain: scores, mask and scratch probabilities.
struct IndexChain {
  IndexChain(const PolicyParams& params, const FrameFeatures& f)
      : features(f), z(frame_scores(params, f)), masked(f.num_frames, 0), p(f.num_frames, 0.0) {}

  // log-prob of choosing `a` next; if grad is non-empty adds w * (phi_a - E_p[phi]).
  double step(std::int64_t a, double w, std::span<double> grad) {
    const double lse = masked_softmax(z, masked, p);
    const double lp = z[static_cast<std::size_t>(a)] - lse;
    if (!grad.empty() && w != 0.0) {
      double expect[kNumScoreFeatures] = {};
      kernels::active().gemv_t(features.phi.data(), features.num_frames, kNumScoreFeatures, p.data(), expect);
      const auto phi_a = features.row(static_cast<std::size_t>(a));
      for (std::size_t k = 0; k < kNumScoreFeatures; ++k) grad[k] += w * (phi_a[k] - expect[k]);
    }
    masked[static_cast<std::size_t>(a)] = 1;
    return lp;
  }

  // Draws the next index from the current softmax.
  std::int64_t draw(Rng& rng) {
    masked_softmax(z, masked, p);
    const double u = rng.uniform();
    double acc = 0.0;
    std::int64_t last = -1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (masked[i]) continue;
      last = static_cast<std::int64_t>(i);
      acc += p[i];
      if (u < acc) return last;
    }
    return last;  // rounding left u beyond the accumulated mass
  }

  std::int64_t best() const {
    std::int64_t arg = -1;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (masked[i]) continue;
      if (arg < 0 || z[i] > z[static_cast<std::size_t>(arg)]) arg = static_cast<std::int64_t>(i);
    }
    return arg;
  }

  bool available(std::int64_t a) const {
    return a >= 0 && static_cast<std::size_t>(a) < masked.size() && !masked[static_cast<std::size_t>(a)];
  }

  const FrameFeatures& features;
  std::vector<double> z;
  std::vector<char> masked;
  std::vector<double> p;
};

// Decision sequence shared by sampling and greedy decoding.
struct Decisions {
  bool think_open = true;
  std::size_t bucket = 0;
  bool think_close = true;
  bool index_open = true;
  bool stop_at_n = true;
  bool index_close = true;
};

template <typename Chooser, typename IndexPicker>
TokenSequence generate(const PolicyParams& params, const FrameFeatures& f, const PromptSpec& spec,
                       Chooser&& choose, IndexPicker&& pick_index) {
  check_spec(f, spec);
  const bool forced = params.mode.compliance_forced;
  const auto c = params.structure_logits();
  TokenSequence seq;
  auto push = [&](TokenKind kind, double lp, std::int64_t value = 0) {
    seq.tokens.push_back({kind, value});
    seq.logprobs.push_back(lp);
  };
  // Returns (took correct branch, log-prob of the branch).
  auto slot = [&](std::size_t s) -> std::pair<bool, double> {
    if (forced) return {true, 0.0};
    const bool ok = choose(sigmoid(c[s]));
    return {ok, ok ? log_sigmoid(c[s]) : log_sigmoid(-c[s])};
  };

  const auto [open_ok, open_lp] = slot(kSlotThinkOpen);
  push(open_ok ? TokenKind::ThinkOpen : TokenKind::Filler, open_lp);

  double length_lp = 0.0;
  if (!params.mode.no_think) {
    const auto logits = params.length_logits();
    std::vector<double> pb(logits.size());
    const double lse = bucket_softmax(logits, pb);
    const std::size_t b = choose.bucket(pb);
    length_lp = logits[b] - lse;
    for (std::size_t i = 0; i < params.length_buckets()[b]; ++i) push(TokenKind::Filler, 0.0);
  }

  const auto [close_ok, close_lp] = slot(kSlotThinkClose);
  push(close_ok ? TokenKind::ThinkClose : TokenKind::Filler, length_lp + close_lp);

  const auto [iopen_ok, iopen_lp] = slot(kSlotIndexOpen);
  push(iopen_ok ? TokenKind::IndexOpen : TokenKind::Filler, iopen_lp);

  IndexChain chain(params, f);
  for (std::size_t k = 0; k < spec.n_select; ++k) {
    const std::int64_t a = pick_index(chain);
    push(TokenKind::Index, chain.step(a, 0.0, {}), a);
  }

  const auto [stop_ok, stop_lp] = slot(kSlotStopAtN);
  double carry = stop_lp;
  if (!stop_ok) {
    const std::int64_t a = pick_index(chain);
    push(TokenKind::Index, stop_lp + chain.step(a, 0.0, {}), a);
    carry = 0.0;
  }

  const auto [iclose_ok, iclose_lp] = slot(kSlotIndexClose);
  push(iclose_ok ? TokenKind::IndexClose : TokenKind::Filler, carry + iclose_lp);
  push(TokenKind::Stop, 0.0);
  return seq;
}

struct RandomChooser {
  Rng& rng;
  bool operator()(double p_correct) { return rng.uniform() < p_correct; }
  std::size_t bucket(std::span<const double> p) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.size() - 1;
  }
};

struct GreedyChooser {
  bool operator()(double p_correct) const { return p_correct >= 0.5; }
  std::size_t bucket(std::span<const double> p) const {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

}  // namespace

std::vector<std::size_t> PolicyParams::default_length_buckets() { return {0, 40, 120, 240, 480, 720}; }

PolicyParams::PolicyParams(std::vector<std::size_t> length_buckets, PolicyMode m, double structure_init)
    : mode(m), buckets_(std::move(length_buckets)) {
  if (buckets_.empty()) throw std::invalid_argument("PolicyParams: need at least one length bucket");
  auto sorted = buckets_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("PolicyParams: length buckets must be distinct");
  }
  values_.assign(kNumScoreFeatures + kNumStructureLogits + buckets_.size(), 0.0);
  for (double& c : structure_logits()) c = structure_init;
}

std::string PolicyParams::name(std::size_t i) const {
  static constexpr std::string_view kScore[kNumScoreFeatures] = {
      "score.similarity", "score.position", "score.position_sq",
      "score.position_begin", "score.position_end", "score.bias"};
  static constexpr std::string_view kStructure[kNumStructureLogits] = {
      "structure.think_open", "structure.think_close", "structure.index_open",
      "structure.stop_at_n", "structure.index_close"};
  if (i < kNumScoreFeatures) return std::string(kScore[i]);
  if (i < length_offset()) return std::string(kStructure[i - kNumScoreFeatures]);
  if (i < values_.size()) return "length." + std::to_string(buckets_[i - length_offset()]);
  throw std::out_of_range("PolicyParams::name");
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t PolicyParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  };
  for (const double v : values_) mix(std::bit_cast<std::uint64_t>(v));
  for (const std::size_t b : buckets_) mix(b);
  mix((mode.compliance_forced ? 1 : 0) | (mode.no_think ? 2 : 0));
  return h;
}

FrameFeatures frame_features(const SyntheticVideo& video) {
  const std::vector<double> sim = similarity_scores(video);
  const double begin = video.question.temporal_tag == TemporalTag::Beginning ? 1.0 : 0.0;
  const double end = video.question.temporal_tag == TemporalTag::End ? 1.0 : 0.0;
  FrameFeatures f;
  f.num_frames = video.num_frames;
  f.phi.resize(video.num_frames * kNumScoreFeatures);
  for (std::size_t i = 0; i < video.num_frames; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(video.num_frames);
    double* row = f.phi.data() + i * kNumScoreFeatures;
    row[0] = sim[i];
    row[1] = t;
    row[2] = t * t;
    row[3] = t * begin;
    row[4] = t * end;
    row[5] = 1.0;
  }
  return f;
}

std::vector<TokenSequence> sample(const PolicyParams& params, const FrameFeatures& features,
                                  const PromptSpec& spec, std::uint64_t seed, std::size_t group_size) {
  std::vector<TokenSequence> out;
  out.reserve(group_size);
  for (std::size_t g = 0; g < group_size; ++g) {
    Rng rng(derive_seed(seed, g));
    RandomChooser chooser{rng};
    out.push_back(generate(params, features, spec, chooser, [&](IndexChain& chain) { return chain.draw(rng); }));
  }
  return out;
}

std::vector<TokenSequence> sample(const PolicyParams& params, const SyntheticVideo& video, const PromptSpec& spec,
                                  std::uint64_t seed, std::size_t group_size) {
  return sample(params, frame_features(video), spec, seed, group_size);
}

TokenSequence greedy_decode(const PolicyParams& params, const FrameFeatures& features, const PromptSpec& spec) {
  GreedyChooser chooser;
  return generate(params, features, spec, chooser, [](IndexChain& chain) { return chain.best(); });
}

void replay(const PolicyParams& params, std::span<const Token> tokens, const FrameFeatures& features,
            const PromptSpec& spec, std::span<double> lp_out, std::span<const double> weights,
            std::span<double> grad) {
  check_spec(features, spec);
  if (!lp_out.empty() && lp_out.size() != tokens.size()) throw std::invalid_argument("replay: lp_out size");
  if (!grad.empty()) {
    if (grad.size() != params.size()) throw std::invalid_argument("replay: grad size");
    if (weights.size() != tokens.size()) throw std::invalid_argument("replay: weights size");
  }
  const bool want_grad = !grad.empty();
  const bool forced = params.mode.compliance_forced;
  const auto c = params.structure_logits();

  auto fail = [](const std::string& why) { throw NotReplayable("sequence not replayable: " + why); };
  auto at = [&](std::size_t p) -> const Token& {
    if (p >= tokens.size()) fail("truncated");
    return tokens[p];
  };
  auto add_lp = [&](std::size_t p, double v) {
    if (!lp_out.empty()) lp_out[p] += v;
  };
  auto weight = [&](std::size_t p) { return want_grad ? weights[p] : 0.0; };
  if (!lp_out.empty()) std::fill(lp_out.begin(), lp_out.end(), 0.0);

  // Bernoulli slot at token p; FILLER is the incorrect branch.
  auto slot = [&](std::size_t s, TokenKind correct, std::size_t p) {
    const Token& tok = at(p);
    const bool ok = tok.kind == correct;
    if (!ok && tok.kind != TokenKind::Filler) fail("unexpected token at structural slot");
    if (forced) {
      if (!ok) fail("structural miss under compliance-forced mode");
      return;
    }
    add_lp(p, ok ? log_sigmoid(c[s]) : log_sigmoid(-c[s]));
    if (want_grad) grad[structure_offset() + s] += weight(p) * (ok ? sigmoid(-c[s]) : -sigmoid(c[s]));
  };

  std::size_t pos = 0;
  slot(kSlotThinkOpen, TokenKind::ThinkOpen, pos++);

  // The FILLER run covers the think length plus any missed think-close and
  // index-open slots; the token that ends the run tells which.
  std::size_t run = 0;
  while (at(pos + run).kind == TokenKind::Filler) ++run;
  std::size_t length = 0;
  switch (at(pos + run).kind) {
    case TokenKind::ThinkClose: length = run; break;
    case TokenKind::IndexOpen:
      if (run < 1) fail("missing think-close slot");
      length = run - 1;
      break;
    case TokenKind::Index:
      if (run < 2) fail("missing think-close or index-open slot");
      length = run - 2;
      break;
    default: fail("unexpected token after think block");
  }
  pos += length;
  if (params.mode.no_think) {
    if (length != 0) fail("think tokens under no-think mode");
  } else {
    const auto& buckets = params.length_buckets();
    const auto it = std::find(buckets.begin(), buckets.end(), length);
    if (it == buckets.end()) fail("think length " + std::to_string(length) + " is not a bucket");
    const std::size_t b = static_cast<std::size_t>(it - buckets.begin());
    const auto logits = params.length_logits();
    std::vector<double> pb(logits.size());
    const double lse = bucket_softmax(logits, pb);
    add_lp(pos, logits[b] - lse);
    if (want_grad) {
      const double w = weight(pos);
      for (std::size_t k = 0; k < pb.size(); ++k) grad[length_offset() + k] += w * ((k == b ? 1.0 : 0.0) - pb[k]);
    }
  }
  slot(kSlotThinkClose, TokenKind::ThinkClose, pos++);
  slot(kSlotIndexOpen, TokenKind::IndexOpen, pos++);

  IndexChain chain(params, features);
  auto index_token = [&](std::size_t p) {
    const Token& tok = at(p);
    if (tok.kind != TokenKind::Index) fail("expected an index token");
    if (!chain.available(tok.value)) fail("index " + std::to_string(tok.value) + " out of range or repeated");
    add_lp(p, chain.step(tok.value, weight(p), want_grad ? grad.subspan(0, kNumScoreFeatures) : grad));
  };
  for (std::size_t k = 0; k < spec.n_select; ++k) index_token(pos++);

  // stop-at-n decision, charged to the token that follows the n-th index
  const bool extra = at(pos).kind == TokenKind::Index;
  if (forced) {
    if (extra) fail("extra index under compliance-forced mode");
  } else {
    const double cs = c[kSlotStopAtN];
    add_lp(pos, extra ? log_sigmoid(-cs) : log_sigmoid(cs));
    if (want_grad) grad[structure_offset() + kSlotStopAtN] += weight(pos) * (extra ? -sigmoid(cs) : sigmoid(-cs));
  }
  if (extra) index_token(pos++);

  slot(kSlotIndexClose, TokenKind::IndexClose, pos++);
  if (at(pos).kind != TokenKind::Stop) fail("expected STOP");
  ++pos;
  if (pos != tokens.size()) fail("tokens after STOP");
}

std::vector<double> logprob(const PolicyParams& params, std::span<const Token> tokens,
                            const FrameFeatures& features, const PromptSpec& spec) {
  std::vector<double> lp(tokens.size(), 0.0);
  replay(params, tokens, features, spec, lp, {}, {});
  return lp;
}

std::vector<double> logprob(const PolicyParams& params, const TokenSequence& seq, const SyntheticVideo& video,
                            const PromptSpec& spec) {
  return logprob(params, seq.tokens, frame_features(video), spec);
}

std::vector<double> grad_logprob(const PolicyParams& params, std::span<const Token> tokens,
                                 const FrameFeatures& features, const PromptSpec& spec) {
  std::vector<double> grad(params.size(), 0.0);
  const std::vector<double> ones(tokens.size(), 1.0);
  replay(params, tokens, features, spec, {}, ones, grad);
  return grad;
}

std::vector<double> grad_logprob(const PolicyParams& params, const TokenSequence& seq,
                                 const SyntheticVideo& video, const PromptSpec& spec) {
  return grad_logprob(params, seq.tokens, frame_features(video), spec);
}

std::string render(std::span<const Token> tokens) {
  std::string out;
  auto piece = [&](std::string_view s) {
    if (!out.empty()) out += ' ';
    out += s;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    switch (tokens[i].kind) {
      case TokenKind::ThinkOpen: piece("<think>"); break;
      case TokenKind::ThinkClose: piece("</think>"); break;
      case TokenKind::Filler: piece(kFillerWord); break;
      case TokenKind::IndexOpen: piece("<index>"); break;
      case TokenKind::IndexClose: piece("</index>"); break;
      case TokenKind::Stop: break;
      case TokenKind::Index: {
        std::string list = "[";
        for (bool first = true; i < tokens.size() && tokens[i].kind == TokenKind::Index; ++i, first = false) {
          if (!first) list += ", ";
          list += std::to_string(tokens[i].value);
        }
        --i;
        list += ']';
        piece(list);
        break;
      }
    }
  }
  return out;
}

std::vector<std::int64_t> emitted_indices(std::span<const Token> tokens) {
  std::vector<std::int64_t> out;
  for (const Token& t : tokens) {
    if (t.kind == TokenKind::Index) out.push_back(t.value);
  }
  return out;
}

PolicyParams sft_train(PolicyParams params, std::span<const SftRecord> pool, const PromptSpec& spec,
                       const SftConfig& cfg, std::vector<double>* loss_history) {
  if (pool.empty()) throw std::invalid_argument("sft_train: empty pool");
  std::vector<FrameFeatures> features;
  features.reserve(pool.size());
  for (const auto& r : pool) {
    if (r.pseudo_label.size() != spec.n_select) throw std::invalid_argument("sft_train: pseudo-label size");
    features.push_back(frame_features(r.video));
    check_spec(features.back(), spec);
  }

  Adam adam(params.size(), {.learning_rate = cfg.learning_rate});
  Rng rng(cfg.seed);
  const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, pool.size()));
  std::vector<double> grad(params.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double nll = 0.0;
    const double w = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t i = batch == pool.size() ? b : rng.below(pool.size());
      IndexChain chain(params, features[i]);
      for (const std::int64_t a : pool[i].pseudo_label) {
        nll -= w * chain.step(a, w, std::span<double>(grad).subspan(0, kNumScoreFeatures));
      }
    }
    if (loss_history) loss_history->push_back(nll);
    adam.ascend(params.values(), grad);
  }
  return params;
}

}  // namespace viarl
