#pragma once

// Synthetic needle-in-video environment: Gaussian frame features with a
// planted needle segment, an optional temporal tag on the question, a cosine
// similarity scorer standing in for a CLIP ranker, and a parametric answer
// model standing in for the downstream video QA model.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace viarl {

enum class TemporalTag { None, Beginning, End };

std::string_view to_string(TemporalTag tag);
TemporalTag temporal_tag_from_string(std::string_view s);

inline constexpr std::size_t kNumOptions = 4;

struct QuestionRecord {
  std::vector<double> query_vector;
  TemporalTag temporal_tag = TemporalTag::None;
  std::array<std::string, kNumOptions> options{"A", "B", "C", "D"};
  std::size_t ground_truth = 0;  // index into options

  bool operator==(const QuestionRecord&) const = default;
};

// Half-open frame interval [begin, end).
struct FrameSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool contains(std::int64_t i) const {
    return i >= 0 && static_cast<std::size_t>(i) >= begin && static_cast<std::size_t>(i) < end;
  }
  bool operator==(const FrameSpan&) const = default;
};

struct SyntheticVideo {
  std::uint64_t record_id = 0;
  std::uint64_t seed = 0;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<double> frames;  // row-major num_frames x dim
  FrameSpan needle;
  std::optional<FrameSpan> distractor;
  QuestionRecord question;

  std::span<const double> frame(std::size_t i) const {
    return std::span<const double>(frames).subspan(i * dim, dim);
  }
  bool operator==(const SyntheticVideo&) const = default;
};

struct EnvConfig {
  std::size_t num_frames = 128;
  std::size_t dim = 16;
  std::size_t needle_len_min = 8;
  std::size_t needle_len_max = 16;
  // Needle frames are separation * q + noise * N(0, I); background is noise * N(0, I).
  double separation = 4.0;
  double noise = 1.0;
  // Probability that a question carries a Beginning or End tag (split evenly).
  double temporal_prob = 0.3;
  // Distractors are planted only on tagged questions, at the opposite end of the video.
  double distractor_separation = 6.0;
  std::size_t distractor_len = 0;  // 0 means "same as the needle"

  // Throws std::invalid_argument with a field-level message.
  void validate() const;
};

// Deterministic in (cfg, seed). record_id is copied into the result.
SyntheticVideo generate_video(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t record_id = 0);

std::vector<SyntheticVideo> generate_dataset(const EnvConfig& cfg, std::size_t count, std::uint64_t seed,
                                             std::uint64_t stream = 0);

// Cosine similarity of each frame to the query vector, in [-1, 1].
std::vector<double> similarity_scores(const SyntheticVideo& video);

// Indices of the n largest scores (ties to the lower index), ascending.
std::vector<std::int64_t> topn_indices(std::span<const double> scores, std::size_t n);
std::vector<std::int64_t> baseline_topn(const SyntheticVideo& video, std::size_t n_select);

// round(k (T-1) / (n-1)) for k = 0..n-1; the middle frame when n = 1.
std::vector<std::int64_t> uniform_selection(std::size_t num_frames, std::size_t n_select);
// n distinct frames drawn uniformly, ascending.
std::vector<std::int64_t> random_selection(std::size_t num_frames, std::size_t n_select, std::uint64_t seed);

double needle_recall(const SyntheticVideo& video, std::span<const std::int64_t> selected);
std::size_t needle_hits(const SyntheticVideo& video, std::span<const std::int64_t> selected);

enum class AnswerMode { Blind, Deterministic, Stochastic };

std::string_view to_string(AnswerMode mode);

struct AnswerModelParams {
  // Log-odds weights over the evidence vector (1, k, mean selected similarity).
  std::array<double, 3> aptitude_weights{-1.0, 0.6, 1.0};
  std::optional<std::size_t> deterministic_k_min;

  bool operator==(const AnswerModelParams&) const = default;
};

// Deterministic when a threshold is configured, stochastic otherwise.
AnswerMode frame_mode(const AnswerModelParams& params);

std::array<double, 3> answer_evidence(const SyntheticVideo& video, std::span<const std::int64_t> selected);

// Stochastic-mode probability of a correct answer.
double correct_probability(const SyntheticVideo& video, std::span<const std::int64_t> selected,
                           const AnswerModelParams& params);

struct AnswerOutcome {
  std::size_t prediction = 0;
  bool correct = false;
};

// Blind mode ignores the selection and guesses uniformly. Throws
// std::invalid_argument on out-of-range or repeated indices.
AnswerOutcome answer(const SyntheticVideo& video, std::span<const std::int64_t> selected,
                     const AnswerModelParams& params, AnswerMode mode, std::uint64_t seed);

std::uint64_t checksum(const AnswerModelParams& params);

}  // namespace viarl
