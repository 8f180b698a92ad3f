#include "viarl/response_grammar.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace viarl {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kIndexOpen = "<index>";
constexpr std::string_view kIndexClose = "</index>";

constexpr std::string_view kPromptTemplate =
    "You are an intelligent chatbot designed for selecting the relevant video frames according to "
    "a question.\n"
    "\n"
    "User will provide you a video with {N_candidate} frames and a short question.\n"
    "\n"
    "The red numbers in the bottom right corner of each frame represent the frame indice. The frame "
    "index is an integer in the range of 0 to {N_candidate_max}.\n"
    "\n"
    "Your task is to output {N_select} indices of the frames that can help you answer the question "
    "better.\n"
    "\n"
    "Here's how you can accomplish the task:\n"
    "\n"
    "1. Think about the keywords from the question:\n"
    "\n"
    "- Check if the physical entities are mentioned.\n"
    "\n"
    "- Check if the occurrence time is mentioned.\n"
    "\n"
    "- Check if the place or location is mentioned.\n"
    "\n"
    "- Check if the action is mentioned.\n"
    "\n"
    "2. Provide the appearance reference based on the keywords and video:\n"
    "\n"
    "- Describe the visual appearance of the {N_select} frames that are most relevant to the "
    "keywords.\n"
    "\n"
    "3. Provide the target list: \n"
    "\n"
    "- A list of {N_select} frame indices, that the corresponding frames are most helpful to answer "
    "the question.\n"
    "\n"
    "Your output should follow this format strictly:\n"
    "\n"
    "<think> thinking about keywords and visual appearance here </think><index> target list here "
    "</index>.\n"
    "\n"
    "Specific requirements are as follows:\n"
    "\n"
    "**Ensure that anyone can uniquely identify these target frames in the video through the "
    "references.**\n"
    "\n"
    "**Ensure that the references are complete and independent.**\n"
    "\n"
    "**Don't output the words '<think> thinking about keywords and visual appearance here "
    "</think>' directly.**\n"
    "\n"
    "**Ensure that the list consists of {N_select} values.**\n";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool all_space(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

// Parses "[ int (, int)* ]" with optional surrounding whitespace. Integers may
// carry a leading '-'. Values that overflow int64 saturate (and so fail the
// range rule later rather than the syntax rule).
std::optional<std::vector<std::int64_t>> parse_index_list(std::string_view body) {
  body = trim(body);
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') return std::nullopt;
  std::string_view inner = trim(body.substr(1, body.size() - 2));
  std::vector<std::int64_t> out;
  if (inner.empty()) return out;
  while (true) {
    inner = trim(inner);
    const std::size_t comma = inner.find(',');
    std::string_view item = trim(inner.substr(0, comma));
    if (item.empty()) return std::nullopt;
    std::size_t digits_from = item.front() == '-' ? 1 : 0;
    if (digits_from == item.size()) return std::nullopt;
    for (std::size_t i = digits_from; i < item.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(item[i]))) return std::nullopt;
    }
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec == std::errc::result_out_of_range) {
      value = item.front() == '-' ? std::numeric_limits<std::int64_t>::min()
                                  : std::numeric_limits<std::int64_t>::max();
    } else if (ec != std::errc() || ptr != item.data() + item.size()) {
      return std::nullopt;
    }
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    inner = inner.substr(comma + 1);
  }
  return out;
}

}  // namespace

void PromptSpec::validate() const {
  if (n_candidate < 2) throw std::invalid_argument("PromptSpec: n_candidate must be >= 2");
  if (n_select < 1) throw std::invalid_argument("PromptSpec: n_select must be >= 1");
  if (n_select >= n_candidate) throw std::invalid_argument("PromptSpec: n_select must be < n_candidate");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::WellFormed: return "WellFormed";
    case Verdict::FormatError: return "FormatError";
    case Verdict::IndexError: return "IndexError";
  }
  return "?";
}

std::string render_prompt(const PromptSpec& spec) {
  spec.validate();
  std::string text(kPromptTemplate);
  replace_all(text, "{N_candidate_max}", std::to_string(spec.n_candidate - 1));
  replace_all(text, "{N_candidate}", std::to_string(spec.n_candidate));
  replace_all(text, "{N_select}", std::to_string(spec.n_select));
  if (!spec.question_text.empty()) {
    text += "\nQuestion: ";
    text += spec.question_text;
    text += '\n';
  }
  return text;
}

bool indices_valid(std::span<const std::int64_t> indices, const PromptSpec& spec) {
  if (indices.size() != spec.n_select) return false;
  std::unordered_set<std::int64_t> seen;
  for (const std::int64_t i : indices) {
    if (i < 0 || static_cast<std::uint64_t>(i) >= spec.n_candidate) return false;
    if (!seen.insert(i).second) return false;
  }
  return true;
}

SelectorResponse parse_response(std::string_view raw, const PromptSpec& spec) {
  SelectorResponse resp;
  resp.raw_text = std::string(raw);
  resp.verdict = Verdict::FormatError;

  for (const std::string_view tag : {kThinkOpen, kThinkClose, kIndexOpen, kIndexClose}) {
    if (count_occurrences(raw, tag) != 1) return resp;
  }
  const std::size_t to = raw.find(kThinkOpen);
  const std::size_t tc = raw.find(kThinkClose);
  const std::size_t io = raw.find(kIndexOpen);
  const std::size_t ic = raw.find(kIndexClose);
  const std::size_t to_end = to + kThinkOpen.size();
  const std::size_t tc_end = tc + kThinkClose.size();
  const std::size_t io_end = io + kIndexOpen.size();
  const std::size_t ic_end = ic + kIndexClose.size();
  if (!(to_end <= tc && tc_end <= io && io_end <= ic)) return resp;

  // Nothing but whitespace outside the two blocks.
  if (!all_space(raw.substr(0, to)) || !all_space(raw.substr(tc_end, io - tc_end)) ||
      !all_space(raw.substr(ic_end))) {
    return resp;
  }

  auto indices = parse_index_list(raw.substr(io_end, ic - io_end));
  if (!indices) return resp;

  resp.think_text = std::string(trim(raw.substr(to_end, tc - to_end)));
  resp.verdict = indices_valid(*indices, spec) ? Verdict::WellFormed : Verdict::IndexError;
  resp.indices = std::move(indices);
  return resp;
}

std::size_t response_length(const SelectorResponse& resp) {
  if (!resp.think_text) return 0;
  std::size_t n = 0;
  bool in_token = false;
  for (const char c : *resp.think_text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::string canonical_text(std::string_view think_text, std::span<const std::int64_t> indices) {
  std::string out;
  out += kThinkOpen;
  out += ' ';
  out += think_text;
  out += ' ';
  out += kThinkClose;
  out += kIndexOpen;
  out += " [";
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(indices[i]);
  }
  out += "] ";
  out += kIndexClose;
  return out;
}

}  // namespace viarl
