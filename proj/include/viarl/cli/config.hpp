#pragma once

// Experiment configuration: a JSON tree with one section per module. Files and
// --set overrides may only touch keys that exist in the defaults, and must keep
// their types.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "viarl/amplifier.hpp"
#include "viarl/needle_env.hpp"
#include "viarl/reinforce_pp.hpp"
#include "viarl/response_grammar.hpp"
#include "viarl/reward.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl::cli {

using json = nlohmann::json;

// Version of every file format the CLI writes.
inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json default_config();

// Applies "a.b.c=value". The value is parsed as JSON when it parses, else taken as a string.
void apply_override(json& cfg, std::string_view assignment);

// Deep-merges `patch` into `cfg` under the same key and type rules.
void merge_config(json& cfg, const json& patch);

// Defaults, then the file (if non-empty), then the overrides in order.
json load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

// FNV-1a over the canonical dump, excluding keys that cannot change results
// (output_dir, workers). 16 hex digits.
std::string config_hash(const json& cfg);

// Explicit run directory, else output_dir, else $VIARL_OUTPUT_ROOT/default, else runs/default.
std::filesystem::path run_directory(const json& cfg, const std::string& explicit_dir);

// Stream ids under master_seed for each stochastic stage of the pipeline.
enum class SeedStream : std::uint64_t {
  Dataset = 1,
  Heldout = 2,
  Filter = 4,
  Cap = 5,
  Rl = 6,
  Sft = 7,
  Eval = 8,
};
std::uint64_t stage_seed(const json& cfg, SeedStream stream);

EnvConfig env_config(const json& cfg);
PromptSpec prompt_spec(const json& cfg);
AnswerModelParams answer_params(const json& cfg);
RewardConfig reward_config(const json& cfg);
PolicyParams initial_policy(const json& cfg);
RLConfig rl_config(const json& cfg);
SftConfig sft_config(const json& cfg);
AmplifierConfig amplifier_config(const json& cfg);
std::size_t amplifier_cycles(const json& cfg);

// Runs every typed extraction so that bad values fail early with a field-level message.
void validate_config(const json& cfg);

}  // namespace viarl::cli
