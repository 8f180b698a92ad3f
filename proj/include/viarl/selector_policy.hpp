#pragma once

// Trainable frame selector: an autoregressive policy over a small symbolic
// vocabulary. A sampled response is
//
//   [think-open] FILLER*L [think-close] [index-open] INDEX*n (INDEX)? [index-close] STOP
//
// Each bracketed slot is a Bernoulli choice between the correct delimiter and
// a FILLER token (which renders as a malformed response). L comes from a
// categorical over length buckets. Index tokens are drawn without replacement
// from a softmax over linear frame scores z_i = u . phi_i. After the n-th
// index a Bernoulli decides whether to close the list or emit one extra index.
//
// Decisions that own no token of their own (the think length, the stop
// choice) are charged to the next emitted token: the think length to the
// think-close slot, the stop choice to whatever token follows the n-th index.
// FILLER tokens inside the think block carry log-probability 0.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "viarl/datapipe.hpp"
#include "viarl/needle_env.hpp"
#include "viarl/response_grammar.hpp"

namespace viarl {

enum class TokenKind : std::uint8_t { ThinkOpen, ThinkClose, Filler, IndexOpen, IndexClose, Index, Stop };

struct Token {
  TokenKind kind = TokenKind::Stop;
  std::int64_t value = 0;  // frame index for TokenKind::Index

  bool operator==(const Token&) const = default;
};

struct TokenSequence {
  std::vector<Token> tokens;
  std::vector<double> logprobs;  // same length as tokens
};

// Per-frame features: cosine similarity, t, t^2, t*[Beginning], t*[End], 1 with t = i / T.
inline constexpr std::size_t kNumScoreFeatures = 6;
// think-open, think-close, index-open, stop-at-n, index-close
inline constexpr std::size_t kNumStructureLogits = 5;

enum StructureSlot : std::size_t {
  kSlotThinkOpen = 0,
  kSlotThinkClose = 1,
  kSlotIndexOpen = 2,
  kSlotStopAtN = 3,
  kSlotIndexClose = 4,
};

struct PolicyMode {
  // Every structural choice takes its correct branch with probability 1.
  bool compliance_forced = false;
  // Empty think block, no length randomness.
  bool no_think = false;

  bool operator==(const PolicyMode&) const = default;
};

class PolicyParams {
 public:
  static std::vector<std::size_t> default_length_buckets();

  // Score weights and length logits start at zero; structure logits at structure_init.
  explicit PolicyParams(std::vector<std::size_t> length_buckets = default_length_buckets(),
                        PolicyMode mode = {}, double structure_init = 3.0);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> score_weights() { return values().subspan(0, kNumScoreFeatures); }
  std::span<const double> score_weights() const { return values().subspan(0, kNumScoreFeatures); }
  std::span<double> structure_logits() { return values().subspan(kNumScoreFeatures, kNumStructureLogits); }
  std::span<const double> structure_logits() const {
    return values().subspan(kNumScoreFeatures, kNumStructureLogits);
  }
  std::span<double> length_logits() { return values().subspan(kNumScoreFeatures + kNumStructureLogits); }
  std::span<const double> length_logits() const {
    return values().subspan(kNumScoreFeatures + kNumStructureLogits);
  }

  const std::vector<std::size_t>& length_buckets() const { return buckets_; }

  // Stable parameter names used by checkpoints, e.g. "score.similarity".
  std::string name(std::size_t flat_index) const;
  bool all_finite() const;
  std::uint64_t checksum() const;

  PolicyMode mode;

  bool operator==(const PolicyParams&) const = default;

 private:
  std::vector<std::size_t> buckets_;
  std::vector<double> values_;
};

class NotReplayable : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-major num_frames x kNumScoreFeatures feature matrix for one prompt.
struct FrameFeatures {
  std::size_t num_frames = 0;
  std::vector<double> phi;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(phi).subspan(i * kNumScoreFeatures, kNumScoreFeatures);
  }
};

FrameFeatures frame_features(const SyntheticVideo& video);

// G independent sequences; sequence g draws from derive_seed(seed, g).
std::vector<TokenSequence> sample(const PolicyParams& params, const FrameFeatures& features,
                                  const PromptSpec& spec, std::uint64_t seed, std::size_t group_size);
std::vector<TokenSequence> sample(const PolicyParams& params, const SyntheticVideo& video, const PromptSpec& spec,
                                  std::uint64_t seed, std::size_t group_size);

// Most likely branch at every decision; indices by descending score, ties to the lower index.
TokenSequence greedy_decode(const PolicyParams& params, const FrameFeatures& features, const PromptSpec& spec);

// Walks the tokens under the policy's grammar. If lp_out is non-empty it
// receives the per-token log-probabilities. If grad is non-empty it
// accumulates sum_t weights[t] * d lp_t / d params (weights must then match
// the token count). Throws NotReplayable for sequences the policy cannot emit.
void replay(const PolicyParams& params, std::span<const Token> tokens, const FrameFeatures& features,
            const PromptSpec& spec, std::span<double> lp_out, std::span<const double> weights,
            std::span<double> grad);

std::vector<double> logprob(const PolicyParams& params, std::span<const Token> tokens,
                            const FrameFeatures& features, const PromptSpec& spec);
std::vector<double> logprob(const PolicyParams& params, const TokenSequence& seq, const SyntheticVideo& video,
                            const PromptSpec& spec);

// Gradient of the summed per-token log-probability, laid out like PolicyParams::values().
std::vector<double> grad_logprob(const PolicyParams& params, std::span<const Token> tokens,
                                 const FrameFeatures& features, const PromptSpec& spec);
std::vector<double> grad_logprob(const PolicyParams& params, const TokenSequence& seq,
                                 const SyntheticVideo& video, const PromptSpec& spec);

// Response text in the canonical selector format (FILLER renders as "w").
std::string render(std::span<const Token> tokens);

// Frame indices of the first n_select Index tokens, in emitted order.
std::vector<std::int64_t> emitted_indices(std::span<const Token> tokens);

struct SftConfig {
  std::size_t steps = 300;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Maximizes the log-likelihood of each record's pseudo-label index chain under
// compliance-forced structure. Only the score weights move. loss_history, if
// given, receives the mean minibatch negative log-likelihood per step.
PolicyParams sft_train(PolicyParams params, std::span<const SftRecord> pool, const PromptSpec& spec,
                       const SftConfig& cfg, std::vector<double>* loss_history = nullptr);

}  // namespace viarl
