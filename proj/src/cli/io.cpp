#include "viarl/cli/io.hpp"

#include <bit>
#include <charconv>
#include <fstream>

#include "viarl/cli/config.hpp"

namespace viarl::cli {
namespace {

constexpr std::string_view kPolicyFormat = "viarl-policy";
constexpr std::string_view kAnswerFormat = "viarl-answer-model";

std::string option_label(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

json span_json(const FrameSpan& s) { return json::array({s.begin, s.end}); }

FrameSpan span_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("frame span must be [begin, end]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

}  // namespace

std::string hex_double(double x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(x)));
  return buf;
}

double parse_hex_double(std::string_view hex) {
  std::uint64_t bits = 0;
  const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), bits, 16);
  if (hex.size() != 16 || ec != std::errc() || ptr != hex.data() + hex.size()) {
    throw FormatError("bad hex double '" + std::string(hex) + "'");
  }
  return std::bit_cast<double>(bits);
}

std::string hex_doubles(const std::vector<double>& xs) {
  std::string out;
  out.reserve(xs.size() * 16);
  for (const double x : xs) out += hex_double(x);
  return out;
}

std::vector<double> parse_hex_doubles(std::string_view hex) {
  if (hex.size() % 16 != 0) throw FormatError("hex array length is not a multiple of 16");
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = parse_hex_double(hex.substr(i * 16, 16));
  return out;
}

json provenance(const json& cfg) {
  return {{"schema_version", kSchemaVersion},
          {"config_hash", config_hash(cfg)},
          {"master_seed", cfg.at("master_seed")}};
}

void check_schema(const json& j, std::string_view what) {
  if (!j.contains("schema_version")) throw FormatError(std::string(what) + ": missing schema_version");
  if (j["schema_version"] != kSchemaVersion) {
    throw FormatError(std::string(what) + ": schema_version " + j["schema_version"].dump() + " is not supported");
  }
}

json video_to_json(const SyntheticVideo& v) {
  json options = json::array();
  for (const auto& o : v.question.options) options.push_back(o);
  return {
      {"record_id", v.record_id},
      {"seed", v.seed},
      {"num_frames", v.num_frames},
      {"dim", v.dim},
      {"frames_hex", hex_doubles(v.frames)},
      {"needle", span_json(v.needle)},
      {"distractor", v.distractor ? span_json(*v.distractor) : json(nullptr)},
      {"question",
       {{"query_hex", hex_doubles(v.question.query_vector)},
        {"temporal_tag", std::string(to_string(v.question.temporal_tag))},
        {"options", options},
        {"ground_truth", option_label(v.question.ground_truth)}}},
  };
}

SyntheticVideo video_from_json(const json& j) {
  try {
    SyntheticVideo v;
    v.record_id = j.at("record_id").get<std::uint64_t>();
    v.seed = j.at("seed").get<std::uint64_t>();
    v.num_frames = j.at("num_frames").get<std::size_t>();
    v.dim = j.at("dim").get<std::size_t>();
    v.frames = parse_hex_doubles(j.at("frames_hex").get<std::string>());
    if (v.frames.size() != v.num_frames * v.dim) throw FormatError("frames_hex has the wrong length");
    v.needle = span_from(j.at("needle"));
    if (!j.at("distractor").is_null()) v.distractor = span_from(j["distractor"]);
    const json& q = j.at("question");
    v.question.query_vector = parse_hex_doubles(q.at("query_hex").get<std::string>());
    if (v.question.query_vector.size() != v.dim) throw FormatError("query_hex has the wrong length");
    v.question.temporal_tag = temporal_tag_from_string(q.at("temporal_tag").get<std::string>());
    const auto opts = q.at("options").get<std::vector<std::string>>();
    if (opts.size() != kNumOptions) throw FormatError("question needs 4 options");
    std::copy(opts.begin(), opts.end(), v.question.options.begin());
    const auto gt = q.at("ground_truth").get<std::string>();
    const auto it = std::find(opts.begin(), opts.end(), gt);
    if (it == opts.end()) throw FormatError("ground_truth '" + gt + "' is not an option");
    v.question.ground_truth = static_cast<std::size_t>(it - opts.begin());
    return v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("video record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("video record: ") + e.what());
  }
}

json pool_record_to_json(const SyntheticVideo& v, std::string_view pool, const std::vector<std::int64_t>* label) {
  json j = video_to_json(v);
  j["pool"] = pool;
  j["pseudo_label"] = label ? json(*label) : json(nullptr);
  return j;
}

json policy_to_json(const PolicyParams& p) {
  json params = json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    params.push_back({{"name", p.name(i)}, {"value", p.values()[i]}, {"bits", hex_double(p.values()[i])}});
  }
  return {{"format", kPolicyFormat},
          {"version", 1},
          {"length_buckets", p.length_buckets()},
          {"mode", {{"compliance_forced", p.mode.compliance_forced}, {"no_think", p.mode.no_think}}},
          {"params", params}};
}

PolicyParams policy_from_json(const json& j) {
  try {
    if (j.at("format") != kPolicyFormat) throw FormatError("not a policy checkpoint");
    if (j.at("version") != 1) throw FormatError("unsupported policy checkpoint version " + j["version"].dump());
    PolicyMode mode;
    mode.compliance_forced = j.at("mode").at("compliance_forced").get<bool>();
    mode.no_think = j.at("mode").at("no_think").get<bool>();
    PolicyParams p(j.at("length_buckets").get<std::vector<std::size_t>>(), mode);
    const json& params = j.at("params");
    if (params.size() != p.size()) throw FormatError("policy checkpoint has the wrong parameter count");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (params[i].at("name") != p.name(i)) {
        throw FormatError("policy parameter " + std::to_string(i) + " is " + params[i]["name"].dump() +
                          ", expected " + p.name(i));
      }
      p.values()[i] = parse_hex_double(params[i].at("bits").get<std::string>());
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("policy checkpoint: ") + e.what());
  }
}

json optimizer_to_json(const Adam& opt) {
  const auto& o = opt.options();
  return {{"algorithm", "adam"},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"steps", opt.step_count()},
          {"m_hex", hex_doubles({opt.first_moment().begin(), opt.first_moment().end()})},
          {"v_hex", hex_doubles({opt.second_moment().begin(), opt.second_moment().end()})}};
}

void restore_optimizer(Adam& opt, const json& j) {
  opt.restore(j.at("steps").get<std::size_t>(), parse_hex_doubles(j.at("m_hex").get<std::string>()),
              parse_hex_doubles(j.at("v_hex").get<std::string>()));
}

json answer_to_json(const AnswerModelParams& a) {
  json weights = json::array();
  for (const double w : a.aptitude_weights) weights.push_back({{"value", w}, {"bits", hex_double(w)}});
  return {{"format", kAnswerFormat},
          {"version", 1},
          {"aptitude_weights", weights},
          {"deterministic_k_min", a.deterministic_k_min ? json(*a.deterministic_k_min) : json(nullptr)}};
}

AnswerModelParams answer_from_json(const json& j) {
  try {
    if (j.at("format") != kAnswerFormat) throw FormatError("not an answer-model file");
    AnswerModelParams a;
    const json& w = j.at("aptitude_weights");
    if (w.size() != a.aptitude_weights.size()) throw FormatError("answer model needs 3 weights");
    for (std::size_t i = 0; i < w.size(); ++i) a.aptitude_weights[i] = parse_hex_double(w[i].at("bits").get<std::string>());
    if (!j.at("deterministic_k_min").is_null()) a.deterministic_k_min = j["deterministic_k_min"].get<std::size_t>();
    return a;
  } catch (const json::exception& e) {
    throw FormatError(std::string("answer model: ") + e.what());
  }
}

json step_metrics_to_json(const StepMetrics& m) {
  return {{"step", m.step},
          {"mean_total_reward", m.mean_total_reward},
          {"format_rate", m.format_rate},
          {"index_rate", m.index_rate},
          {"answer_rate", m.answer_rate},
          {"length_rate", m.length_rate},
          {"mean_kl", m.mean_kl},
          {"mean_abs_kl", m.mean_abs_kl},
          {"mean_think_length", m.mean_think_length},
          {"needle_recall", m.needle_recall},
          {"objective", m.objective},
          {"degenerate", m.degenerate}};
}

json eval_metrics_to_json(const EvalMetrics& m) {
  return {{"count", m.count},
          {"needle_recall", m.needle_recall},
          {"answer_accuracy", m.answer_accuracy},
          {"valid_rate", m.valid_rate},
          {"temporal_count", m.temporal_count},
          {"temporal_recall", m.temporal_recall},
          {"temporal_accuracy", m.temporal_accuracy}};
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": invalid JSON");
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::vector<SyntheticVideo> read_videos(const std::filesystem::path& path) {
  std::vector<SyntheticVideo> out;
  for (const auto& row : read_jsonl(path)) {
    check_schema(row, path.string());
    out.push_back(video_from_json(row));
  }
  return out;
}

std::vector<SftRecord> read_sft_pool(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for (const auto& row : read_jsonl(path)) {
    check_schema(row, path.string());
    SftRecord r{video_from_json(row), {}};
    if (!row.contains("pseudo_label") || !row["pseudo_label"].is_array()) {
      throw FormatError(path.string() + ": record " + std::to_string(r.video.record_id) + " has no pseudo_label");
    }
    r.pseudo_label = row["pseudo_label"].get<std::vector<std::int64_t>>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace viarl::cli
