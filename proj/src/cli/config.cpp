#include "viarl/cli/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "viarl/rng.hpp"

namespace viarl::cli {
namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const char* kind_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "a boolean";
  if (v.is_number_unsigned()) return "a non-negative integer";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "an array";
  return "an object";
}

// Whether `value` may replace `current` at `path`.
bool compatible(const std::string& path, const json& current, const json& value) {
  if (path == "answer_model.deterministic_k_min") return value.is_null() || value.is_number_unsigned();
  if (current.is_number_unsigned()) return value.is_number_unsigned();
  if (current.is_number_float()) return value.is_number();
  if (current.is_array()) {
    if (!value.is_array()) return false;
    for (const auto& x : value) {
      if (!x.is_number()) return false;
      if (!current.empty() && current.front().is_number_unsigned() && !x.is_number_unsigned()) return false;
    }
    return true;
  }
  return current.type() == value.type();
}

void set_path(json& cfg, const std::string& path, const json& value) {
  json* node = &cfg;
  std::string done;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + join(done, key) + "'");
    done = join(done, key);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) {
    if (!value.is_object()) throw ConfigError(path + ": expected an object");
    merge_config(*node, value);  // relative keys; errors mention the leaf only
    return;
  }
  if (!compatible(path, *node, value)) {
    throw ConfigError(path + ": expected " + std::string(kind_name(*node)) + ", got " + kind_name(value));
  }
  *node = value.is_number() && node->is_number_float() ? json(value.get<double>()) : value;
}

void merge_at(json& cfg, const json& patch, const std::string& prefix, json& root) {
  if (!patch.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = join(prefix, key);
    if (!cfg.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (cfg[key].is_object()) {
      merge_at(cfg[key], value, path, root);
    } else {
      set_path(root, path, value);
    }
  }
}

template <typename T>
T field(const json& cfg, const char* section, const char* key) {
  try {
    return cfg.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

// Runs a module validator and prefixes its message with the section name if needed.
template <typename F>
void checked(const char* section, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    if (msg.rfind(std::string(section) + ".", 0) != 0) msg = std::string(section) + ": " + msg;
    throw ConfigError(msg);
  }
}

}  // namespace

json default_config() {
  const PolicyParams policy;
  return json{
      {"schema_version", kSchemaVersion},
      {"master_seed", 1u},
      {"output_dir", ""},
      {"workers", 1u},
      {"env",
       {{"num_frames", 128u},
        {"dim", 16u},
        {"needle_len_min", 8u},
        {"needle_len_max", 16u},
        {"separation", 4.0},
        {"noise", 1.0},
        {"temporal_prob", 0.3},
        {"distractor_separation", 6.0},
        {"distractor_len", 0u}}},
      {"prompt", {{"n_select", 8u}, {"question_text", ""}}},
      // Reference scale: about 25k RL candidates (8k kept) and 30k SFT pairs.
      {"data", {{"num_records", 2000u}, {"heldout_records", 500u}, {"max_rl", 800u}, {"max_sft", 800u}}},
      {"answer_model", {{"aptitude_weights", {-1.0, 0.6, 1.0}}, {"deterministic_k_min", nullptr}}},
      {"reward",
       {{"format_value", 1.0},
        {"index_value", 1.0},
        {"answer_value", 2.0},
        {"length_value", 0.2},
        {"l_min", 80u},
        {"l_max", 512u}}},
      {"policy",
       {{"length_buckets", policy.length_buckets()},
        {"structure_init", 3.0},
        {"no_think", false},
        {"compliance_forced", false}}},
      // learning_rate: a 3B-parameter selector would use about 4e-7.
      {"rl",
       {{"epsilon", 0.2},
        {"beta", 1.0e-3},
        {"group_size", 8u},
        {"learning_rate", 0.05},
        {"prompts_per_batch", 16u},
        {"total_steps", 300u},
        {"inner_epochs", 1u}}},
      {"sft", {{"steps", 300u}, {"learning_rate", 0.05}, {"batch_size", 32u}}},
      {"amplifier",
       {{"cycles", 2u},
        {"stage1_steps", 150u},
        {"tune_steps", 200u},
        {"tune_learning_rate", 0.5},
        {"no_evidence_target", 0.25},
        {"stage1_enabled", true},
        {"stage2_enabled", true},
        {"reset_reference", true}}},
  };
}

void apply_override(json& cfg, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_path(cfg, key, value);
}

void merge_config(json& cfg, const json& patch) { merge_at(cfg, patch, "", cfg); }

json load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    json patch = json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw ConfigError("config file " + file.string() + " is not valid JSON");
    if (patch.contains("schema_version") && patch["schema_version"] != kSchemaVersion) {
      throw ConfigError("config schema_version " + patch["schema_version"].dump() + " is not supported (expected " +
                        std::to_string(kSchemaVersion) + ")");
    }
    merge_config(cfg, patch);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  validate_config(cfg);
  return cfg;
}

std::string config_hash(const json& cfg) {
  json canon = cfg;
  canon.erase("output_dir");
  canon.erase("workers");
  const std::string text = canon.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path run_directory(const json& cfg, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  const std::string configured = cfg.value("output_dir", "");
  if (!configured.empty()) return configured;
  const char* root = std::getenv("VIARL_OUTPUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / "default";
}

std::uint64_t stage_seed(const json& cfg, SeedStream stream) {
  return derive_seed(cfg.at("master_seed").get<std::uint64_t>(), static_cast<std::uint64_t>(stream));
}

EnvConfig env_config(const json& cfg) {
  EnvConfig e;
  e.num_frames = field<std::size_t>(cfg, "env", "num_frames");
  e.dim = field<std::size_t>(cfg, "env", "dim");
  e.needle_len_min = field<std::size_t>(cfg, "env", "needle_len_min");
  e.needle_len_max = field<std::size_t>(cfg, "env", "needle_len_max");
  e.separation = field<double>(cfg, "env", "separation");
  e.noise = field<double>(cfg, "env", "noise");
  e.temporal_prob = field<double>(cfg, "env", "temporal_prob");
  e.distractor_separation = field<double>(cfg, "env", "distractor_separation");
  e.distractor_len = field<std::size_t>(cfg, "env", "distractor_len");
  checked("env", [&] { e.validate(); });
  return e;
}

PromptSpec prompt_spec(const json& cfg) {
  PromptSpec s;
  s.n_candidate = field<std::size_t>(cfg, "env", "num_frames");
  s.n_select = field<std::size_t>(cfg, "prompt", "n_select");
  s.question_text = field<std::string>(cfg, "prompt", "question_text");
  checked("prompt", [&] { s.validate(); });
  return s;
}

AnswerModelParams answer_params(const json& cfg) {
  AnswerModelParams p;
  const auto w = field<std::vector<double>>(cfg, "answer_model", "aptitude_weights");
  if (w.size() != p.aptitude_weights.size()) throw ConfigError("answer_model.aptitude_weights: expected 3 values");
  std::copy(w.begin(), w.end(), p.aptitude_weights.begin());
  const json& k = cfg.at("answer_model").at("deterministic_k_min");
  if (!k.is_null()) p.deterministic_k_min = k.get<std::size_t>();
  return p;
}

RewardConfig reward_config(const json& cfg) {
  RewardConfig r;
  r.format_value = field<double>(cfg, "reward", "format_value");
  r.index_value = field<double>(cfg, "reward", "index_value");
  r.answer_value = field<double>(cfg, "reward", "answer_value");
  r.length_value = field<double>(cfg, "reward", "length_value");
  r.l_min = field<std::size_t>(cfg, "reward", "l_min");
  r.l_max = field<std::size_t>(cfg, "reward", "l_max");
  checked("reward", [&] { r.validate(); });
  return r;
}

PolicyParams initial_policy(const json& cfg) {
  PolicyMode mode;
  mode.no_think = field<bool>(cfg, "policy", "no_think");
  mode.compliance_forced = field<bool>(cfg, "policy", "compliance_forced");
  std::optional<PolicyParams> p;
  checked("policy", [&] {
    p.emplace(field<std::vector<std::size_t>>(cfg, "policy", "length_buckets"), mode,
              field<double>(cfg, "policy", "structure_init"));
  });
  return *p;
}

RLConfig rl_config(const json& cfg) {
  RLConfig r;
  r.epsilon = field<double>(cfg, "rl", "epsilon");
  r.beta = field<double>(cfg, "rl", "beta");
  r.group_size = field<std::size_t>(cfg, "rl", "group_size");
  r.learning_rate = field<double>(cfg, "rl", "learning_rate");
  r.prompts_per_batch = field<std::size_t>(cfg, "rl", "prompts_per_batch");
  r.total_steps = field<std::size_t>(cfg, "rl", "total_steps");
  r.inner_epochs = field<std::size_t>(cfg, "rl", "inner_epochs");
  r.seed = stage_seed(cfg, SeedStream::Rl);
  r.workers = std::max<std::size_t>(1, cfg.at("workers").get<std::size_t>());
  checked("rl", [&] { r.validate(); });
  return r;
}

SftConfig sft_config(const json& cfg) {
  SftConfig s;
  s.steps = field<std::size_t>(cfg, "sft", "steps");
  s.learning_rate = field<double>(cfg, "sft", "learning_rate");
  s.batch_size = field<std::size_t>(cfg, "sft", "batch_size");
  s.seed = stage_seed(cfg, SeedStream::Sft);
  return s;
}

AmplifierConfig amplifier_config(const json& cfg) {
  AmplifierConfig a;
  a.spec = prompt_spec(cfg);
  a.reward = reward_config(cfg);
  a.rl = rl_config(cfg);
  a.rl.total_steps = field<std::size_t>(cfg, "amplifier", "stage1_steps");
  a.tune.steps = field<std::size_t>(cfg, "amplifier", "tune_steps");
  a.tune.learning_rate = field<double>(cfg, "amplifier", "tune_learning_rate");
  a.tune.no_evidence_target = field<double>(cfg, "amplifier", "no_evidence_target");
  a.stage1_enabled = field<bool>(cfg, "amplifier", "stage1_enabled");
  a.stage2_enabled = field<bool>(cfg, "amplifier", "stage2_enabled");
  a.reset_reference = field<bool>(cfg, "amplifier", "reset_reference");
  a.eval_seed = stage_seed(cfg, SeedStream::Eval);
  return a;
}

std::size_t amplifier_cycles(const json& cfg) {
  const auto n = field<std::size_t>(cfg, "amplifier", "cycles");
  if (n < 1) throw ConfigError("amplifier.cycles must be >= 1");
  return n;
}

void validate_config(const json& cfg) {
  if (cfg.at("schema_version") != kSchemaVersion) throw ConfigError("schema_version must be " + std::to_string(kSchemaVersion));
  env_config(cfg);
  prompt_spec(cfg);
  answer_params(cfg);
  reward_config(cfg);
  initial_policy(cfg);
  rl_config(cfg);
  sft_config(cfg);
  amplifier_config(cfg);
  amplifier_cycles(cfg);
  if (field<std::size_t>(cfg, "data", "num_records") < 1) throw ConfigError("data.num_records must be >= 1");
}

}  // namespace viarl::cli
