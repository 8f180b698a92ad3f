#pragma once

// Subcommands of the viarl tool. Each works inside one run directory and
// writes artifacts tagged with the schema version, config hash and master seed.

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

namespace viarl::cli {

using json = nlohmann::json;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad arguments or config
inline constexpr int kExitInvalid = 2;  // schema-invalid input lines
inline constexpr int kExitFailure = 3;  // runtime failure (I/O, non-finite parameters, ...)

// dataset.jsonl + heldout.jsonl + config.json
void cmd_gen_data(const json& cfg, const std::filesystem::path& run, std::ostream& out);

// rl_pool.jsonl + sft_pool.jsonl + pool_stats.json
void cmd_filter(const json& cfg, const std::filesystem::path& run, std::ostream& out);

struct TrainOptions {
  std::string mode = "rl";  // rl | sft-selector | amplify
  bool no_think = false;
  bool no_length_reward = false;
  std::string name;  // output subdirectory under train/; derived from the mode when empty
};

// Returns the config actually used (ablation flags folded in).
json train_config(json cfg, const TrainOptions& opts);
std::string train_name(const TrainOptions& opts);
void cmd_train(const json& cfg, const std::filesystem::path& run, const TrainOptions& opts, std::ostream& out);

struct EvalOptions {
  std::string strategy = "trained";
  std::string checkpoint;  // selector checkpoint for "trained"
  std::string answer;      // answer-model file; config answer_model when empty
};
json cmd_eval(const json& cfg, const std::filesystem::path& run, const EvalOptions& opts, std::ostream& out);

// Returns kExitInvalid if any line was schema-invalid (those lines are reported on err and skipped).
int cmd_score(const json& cfg, std::istream& in, std::ostream& out, std::ostream& err);

// Full command line, argv[0] included.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viarl::cli
