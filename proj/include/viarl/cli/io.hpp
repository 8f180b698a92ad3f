#pragma once

// On-disk formats. Doubles that must round-trip exactly are stored as 16 hex
// digits of their IEEE-754 bit pattern; human-readable copies sit next to them.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "viarl/adam.hpp"
#include "viarl/datapipe.hpp"
#include "viarl/evaluation.hpp"
#include "viarl/needle_env.hpp"
#include "viarl/reinforce_pp.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl::cli {

using json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex_double(double x);
double parse_hex_double(std::string_view hex);
std::string hex_doubles(const std::vector<double>& xs);
std::vector<double> parse_hex_doubles(std::string_view hex);

// Fields common to every record and file: schema_version, config_hash, master_seed.
json provenance(const json& cfg);
void check_schema(const json& j, std::string_view what);

json video_to_json(const SyntheticVideo& v);
SyntheticVideo video_from_json(const json& j);

json pool_record_to_json(const SyntheticVideo& v, std::string_view pool, const std::vector<std::int64_t>* label);

json policy_to_json(const PolicyParams& p);
PolicyParams policy_from_json(const json& j);
json optimizer_to_json(const Adam& opt);
void restore_optimizer(Adam& opt, const json& j);

json answer_to_json(const AnswerModelParams& a);
AnswerModelParams answer_from_json(const json& j);

json step_metrics_to_json(const StepMetrics& m);
json eval_metrics_to_json(const EvalMetrics& m);

// One JSON object per line. Blank lines are skipped.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

json read_json(const std::filesystem::path& path);
// Pretty-printed, trailing newline.
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, std::string_view text);

std::vector<SyntheticVideo> read_videos(const std::filesystem::path& path);
std::vector<SftRecord> read_sft_pool(const std::filesystem::path& path);

}  // namespace viarl::cli
