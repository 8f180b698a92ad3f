#include "viarl/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "viarl/amplifier.hpp"
#include "viarl/cli/config.hpp"
#include "viarl/cli/io.hpp"
#include "viarl/cli/report.hpp"
#include "viarl/datapipe.hpp"
#include "viarl/evaluation.hpp"
#include "viarl/reinforce_pp.hpp"
#include "viarl/reward.hpp"

namespace viarl::cli {
namespace fs = std::filesystem;
namespace {

json with_provenance(const json& cfg, json body) {
  json j = provenance(cfg);
  j.update(body);
  return j;
}

// Appends one JSON line per call and flushes, so an aborted run keeps what it wrote.
class MetricsLog {
 public:
  MetricsLog(const fs::path& path, const json& cfg)
      : out_(path, std::ios::binary | std::ios::trunc), base_(provenance(cfg)),
        start_(std::chrono::steady_clock::now()) {
    if (!out_) throw FormatError("cannot write " + path.string());
  }

  void write(json row) {
    json j = base_;
    j.update(row);
    j["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
  json base_;
  std::chrono::steady_clock::time_point start_;
};

void require(const fs::path& p, std::string_view hint) {
  if (!fs::exists(p)) throw FormatError(p.string() + " not found; run '" + std::string(hint) + "' first");
}

void print_eval(std::ostream& out, std::string_view label, const EvalMetrics& m) {
  out << label << ": recall " << m.needle_recall << "  accuracy " << m.answer_accuracy << "  valid "
      << m.valid_rate << "  temporal recall " << m.temporal_recall << " (" << m.temporal_count << ")\n";
}

void write_policy_checkpoint(const fs::path& path, const json& cfg, const PolicyParams& p, const Adam* opt) {
  json j = with_provenance(cfg, {{"policy", policy_to_json(p)}});
  if (opt) j["optimizer"] = optimizer_to_json(*opt);
  write_json(path, j);
}

void train_rl(const json& cfg, const fs::path& dir, std::ostream& out) {
  const auto pool = read_videos(dir.parent_path().parent_path() / "rl_pool.jsonl");
  const auto heldout = read_videos(dir.parent_path().parent_path() / "heldout.jsonl");
  const PromptSpec spec = prompt_spec(cfg);
  const PolicyParams init = initial_policy(cfg);
  MetricsLog log(dir / "metrics.jsonl", cfg);
  const TrainResult res = train(init, init, answer_params(cfg), pool, spec, reward_config(cfg), rl_config(cfg),
                                [&](const StepMetrics& m) {
                                  json row = step_metrics_to_json(m);
                                  row["kind"] = "rl_step";
                                  log.write(row);
                                });
  write_policy_checkpoint(dir / "checkpoint.json", cfg, res.params, &res.optimizer);
  const EvalMetrics ev =
      evaluate(Strategy::Trained, &res.params, answer_params(cfg), heldout, spec, stage_seed(cfg, SeedStream::Eval));
  json summary = with_provenance(cfg, {{"mode", "rl"}, {"steps", res.history.size()}, {"heldout", eval_metrics_to_json(ev)}});
  if (!res.history.empty()) summary["final_step"] = step_metrics_to_json(res.history.back());
  write_json(dir / "summary.json", summary);
  print_eval(out, "heldout", ev);
}

void train_sft(const json& cfg, const fs::path& dir, std::ostream& out) {
  const fs::path run = dir.parent_path().parent_path();
  const auto pool = read_sft_pool(run / "sft_pool.jsonl");
  const auto heldout = read_videos(run / "heldout.jsonl");
  if (pool.empty()) throw std::runtime_error("sft pool is empty");
  const PromptSpec spec = prompt_spec(cfg);
  std::vector<double> losses;
  const PolicyParams p = sft_train(initial_policy(cfg), pool, spec, sft_config(cfg), &losses);
  {
    MetricsLog log(dir / "metrics.jsonl", cfg);
    for (std::size_t s = 0; s < losses.size(); ++s) log.write({{"kind", "sft_step"}, {"step", s}, {"loss", losses[s]}});
  }
  if (!p.all_finite()) throw std::runtime_error("sft: non-finite selector parameters");
  write_policy_checkpoint(dir / "checkpoint.json", cfg, p, nullptr);
  const EvalMetrics ev =
      evaluate(Strategy::Trained, &p, answer_params(cfg), heldout, spec, stage_seed(cfg, SeedStream::Eval));
  json summary = with_provenance(cfg, {{"mode", "sft-selector"}, {"steps", losses.size()}, {"heldout", eval_metrics_to_json(ev)}});
  if (!losses.empty()) summary["final_loss"] = losses.back();
  write_json(dir / "summary.json", summary);
  print_eval(out, "heldout", ev);
}

std::string position_dir(const StagePosition& p) {
  return "cycle" + std::to_string(p.cycle) + "_stage" + std::to_string(p.stage);
}

void train_amplify(const json& cfg, const fs::path& dir, std::ostream& out) {
  const fs::path run = dir.parent_path().parent_path();
  const auto rl_pool = read_videos(run / "rl_pool.jsonl");
  const auto sft_pool = read_sft_pool(run / "sft_pool.jsonl");
  const auto heldout = read_videos(run / "heldout.jsonl");
  std::vector<SyntheticVideo> tune;
  tune.reserve(sft_pool.size());
  for (const auto& r : sft_pool) tune.push_back(r.video);

  const AmplifierConfig acfg = amplifier_config(cfg);
  const std::string hash = config_hash(cfg);
  MetricsLog log(dir / "metrics.jsonl", cfg);
  AmplifierHooks hooks;
  hooks.on_step = [&](const StagePosition& pos, const StepMetrics& m) {
    json row = step_metrics_to_json(m);
    row["kind"] = "rl_step";
    row["cycle"] = pos.cycle;
    row["stage"] = pos.stage;
    log.write(row);
  };
  hooks.on_checkpoint = [&](const CycleState& s) {
    const fs::path d = dir / position_dir(s.position);
    fs::create_directories(d);
    write_policy_checkpoint(d / "selector.json", cfg, s.selector, nullptr);
    write_json(d / "answer.json", with_provenance(cfg, {{"answer_model", answer_to_json(s.answer)}}));
    const EvalMetrics& m = s.eval_history.back().metrics;
    write_json(d / "eval.json", with_provenance(cfg, {{"cycle", s.position.cycle},
                                                      {"stage", s.position.stage},
                                                      {"heldout", eval_metrics_to_json(m)}}));
    write_text(d / "config_hash", hash + "\n");
    log.write({{"kind", "eval"}, {"cycle", s.position.cycle}, {"stage", s.position.stage},
               {"heldout", eval_metrics_to_json(m)}});
    print_eval(out, "(" + std::to_string(s.position.cycle) + "," + std::to_string(s.position.stage) + ")", m);
  };

  const CycleState fin = run_cycles(initial_state(initial_policy(cfg), answer_params(cfg)), amplifier_cycles(cfg),
                                    {rl_pool, tune, heldout}, acfg, hooks);
  json history = json::array();
  for (const auto& h : fin.eval_history) {
    history.push_back({{"cycle", h.position.cycle}, {"stage", h.position.stage}, {"heldout", eval_metrics_to_json(h.metrics)}});
  }
  write_json(dir / "summary.json",
             with_provenance(cfg, {{"mode", "amplify"},
                                   {"final_position", {fin.position.cycle, fin.position.stage}},
                                   {"history", history}}));
}

std::vector<std::string> missing_fields(const nlohmann::ordered_json& j) {
  std::vector<std::string> bad;
  if (!j.is_object()) return {"line is not a JSON object"};
  auto need = [&](const char* key, bool ok, const char* what) {
    if (!j.contains(key)) {
      bad.push_back(std::string("missing field '") + key + "'");
    } else if (!ok) {
      bad.push_back(std::string("field '") + key + "' must be " + what);
    }
  };
  need("raw_text", j.contains("raw_text") && j["raw_text"].is_string(), "a string");
  need("n_candidate", j.contains("n_candidate") && j["n_candidate"].is_number_unsigned(), "a non-negative integer");
  need("n_select", j.contains("n_select") && j["n_select"].is_number_unsigned(), "a non-negative integer");
  need("answer_correct", j.contains("answer_correct") && j["answer_correct"].is_boolean(), "a boolean");
  return bad;
}

}  // namespace

void cmd_gen_data(const json& cfg, const fs::path& run, std::ostream& out) {
  fs::create_directories(run);
  const EnvConfig env = env_config(cfg);
  const std::uint64_t master = cfg.at("master_seed").get<std::uint64_t>();
  const json prov = provenance(cfg);
  auto dump = [&](const fs::path& path, const std::vector<SyntheticVideo>& videos) {
    std::vector<json> rows;
    rows.reserve(videos.size());
    for (const auto& v : videos) {
      json j = prov;
      j.update(video_to_json(v));
      rows.push_back(std::move(j));
    }
    write_jsonl(path, rows);
  };
  const auto data = generate_dataset(env, cfg.at("data").at("num_records").get<std::size_t>(), master,
                                     static_cast<std::uint64_t>(SeedStream::Dataset));
  const auto heldout = generate_dataset(env, cfg.at("data").at("heldout_records").get<std::size_t>(), master,
                                        static_cast<std::uint64_t>(SeedStream::Heldout));
  dump(run / "dataset.jsonl", data);
  dump(run / "heldout.jsonl", heldout);
  write_json(run / "config.json", cfg);

  std::size_t tagged = 0, with_distractor = 0;
  for (const auto& v : data) {
    tagged += v.question.temporal_tag != TemporalTag::None;
    with_distractor += v.distractor.has_value();
  }
  out << "records " << data.size() << "  heldout " << heldout.size() << "  temporal " << tagged
      << "  distractors " << with_distractor << "  frames " << env.num_frames << "x" << env.dim
      << "  config " << config_hash(cfg) << "\n";
}

void cmd_filter(const json& cfg, const fs::path& run, std::ostream& out) {
  require(run / "dataset.jsonl", "gen-data");
  const auto data = read_videos(run / "dataset.jsonl");
  const PromptSpec spec = prompt_spec(cfg);
  const std::size_t workers = std::max<std::size_t>(1, cfg.at("workers").get<std::size_t>());
  FilteredPools pools = build_pools(data, answer_params(cfg), spec.n_select, stage_seed(cfg, SeedStream::Filter), workers);
  const PoolStats before = pool_stats(pools);
  pools = cap_pools(std::move(pools), cfg.at("data").at("max_rl").get<std::size_t>(),
                    cfg.at("data").at("max_sft").get<std::size_t>(), stage_seed(cfg, SeedStream::Cap));
  const PoolStats after = pool_stats(pools);

  const json prov = provenance(cfg);
  std::vector<json> rl_rows, sft_rows;
  for (const auto& v : pools.rl_pool) {
    json j = prov;
    j.update(pool_record_to_json(v, "rl", nullptr));
    rl_rows.push_back(std::move(j));
  }
  for (const auto& r : pools.sft_pool) {
    json j = prov;
    j.update(pool_record_to_json(r.video, "sft", &r.pseudo_label));
    sft_rows.push_back(std::move(j));
  }
  write_jsonl(run / "rl_pool.jsonl", rl_rows);
  write_jsonl(run / "sft_pool.jsonl", sft_rows);
  write_json(run / "pool_stats.json",
             with_provenance(cfg, {{"input", before.input},
                                   {"rl", before.rl},
                                   {"sft", before.sft},
                                   {"discarded", before.discarded},
                                   {"discard_rate", before.discard_rate},
                                   {"mean_pseudo_label_recall", before.mean_pseudo_label_recall},
                                   {"kept_rl", after.rl},
                                   {"kept_sft", after.sft}}));
  out << "input " << before.input << "  discarded " << before.discarded << " (" << before.discard_rate
      << ")  rl " << before.rl << " -> " << after.rl << "  sft " << before.sft << " -> " << after.sft
      << "  pseudo-label recall " << before.mean_pseudo_label_recall << "\n";
}

json train_config(json cfg, const TrainOptions& opts) {
  if (opts.no_think) cfg["policy"]["no_think"] = true;
  if (opts.no_length_reward) cfg["reward"]["length_value"] = 0.0;
  return cfg;
}

std::string train_name(const TrainOptions& opts) {
  if (!opts.name.empty()) return opts.name;
  std::string n = opts.mode;
  if (opts.no_think) n += "-no-think";
  if (opts.no_length_reward) n += "-no-length-reward";
  return n;
}

void cmd_train(const json& base, const fs::path& run, const TrainOptions& opts, std::ostream& out) {
  if (opts.mode != "rl" && opts.mode != "sft-selector" && opts.mode != "amplify") {
    throw ConfigError("unknown train mode '" + opts.mode + "' (rl, sft-selector, amplify)");
  }
  const json cfg = train_config(base, opts);
  validate_config(cfg);
  require(run / "heldout.jsonl", "gen-data");
  require(run / (opts.mode == "rl" ? "rl_pool.jsonl" : "sft_pool.jsonl"), "filter");
  const fs::path dir = run / "train" / train_name(opts);
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg);
  if (opts.mode == "rl") {
    train_rl(cfg, dir, out);
  } else if (opts.mode == "sft-selector") {
    train_sft(cfg, dir, out);
  } else {
    train_amplify(cfg, dir, out);
  }
}

json cmd_eval(const json& cfg, const fs::path& run, const EvalOptions& opts, std::ostream& out) {
  const Strategy strategy = strategy_from_string(opts.strategy);
  require(run / "heldout.jsonl", "gen-data");
  const auto heldout = read_videos(run / "heldout.jsonl");
  std::optional<PolicyParams> selector;
  if (strategy == Strategy::Trained) {
    const fs::path ckpt = opts.checkpoint.empty() ? run / "train" / "rl" / "checkpoint.json" : fs::path(opts.checkpoint);
    require(ckpt, "train");
    const json j = read_json(ckpt);
    check_schema(j, ckpt.string());
    selector = policy_from_json(j.at("policy"));
  }
  AnswerModelParams answer = answer_params(cfg);
  if (!opts.answer.empty()) {
    const json j = read_json(opts.answer);
    check_schema(j, opts.answer);
    answer = answer_from_json(j.at("answer_model"));
  }
  const EvalMetrics m = evaluate(strategy, selector ? &*selector : nullptr, answer, heldout, prompt_spec(cfg),
                                 stage_seed(cfg, SeedStream::Eval));
  const json result = with_provenance(cfg, {{"strategy", opts.strategy}, {"heldout", eval_metrics_to_json(m)}});
  fs::create_directories(run / "eval");
  write_json(run / "eval" / (opts.strategy + ".json"), result);
  print_eval(out, opts.strategy, m);
  return result;
}

int cmd_score(const json& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  const RewardConfig rc = reward_config(cfg);
  std::string line;
  std::size_t lineno = 0, invalid = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::ordered_json::parse(line, nullptr, false);
    std::vector<std::string> bad =
        j.is_discarded() ? std::vector<std::string>{"invalid JSON"} : missing_fields(j);
    PromptSpec spec;
    if (bad.empty()) {
      spec.n_candidate = j["n_candidate"].get<std::size_t>();
      spec.n_select = j["n_select"].get<std::size_t>();
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        bad.emplace_back(e.what());
      }
    }
    if (!bad.empty()) {
      ++invalid;
      for (const auto& b : bad) err << "line " << lineno << ": " << b << "\n";
      continue;
    }
    const SelectorResponse resp = parse_response(j["raw_text"].get<std::string>(), spec);
    const RewardBreakdown r = total_reward(resp, j["answer_correct"].get<bool>(), rc);
    j["s_format"] = r.s_format;
    j["s_index"] = r.s_index;
    j["s_answer"] = r.s_answer;
    j["s_length"] = r.s_length;
    j["total"] = r.total;
    out << j.dump() << '\n';
  }
  if (invalid > 0) {
    err << invalid << " schema-invalid line(s)\n";
    return kExitInvalid;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RL frame selection on a synthetic needle-in-video task", "viarl"};
  app.require_subcommand(1);
  std::string config_file, run_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config value, e.g. --set rl.total_steps=50")->take_all();
  app.add_option("--run", run_dir, "run directory (default: output_dir or $VIARL_OUTPUT_ROOT/default)");

  auto* gen = app.add_subcommand("gen-data", "generate the dataset and held-out split");
  auto* filt = app.add_subcommand("filter", "split the dataset into RL and SFT pools");
  TrainOptions topts;
  auto* tr = app.add_subcommand("train", "train the selector");
  tr->add_option("--mode", topts.mode, "rl, sft-selector or amplify")
      ->check(CLI::IsMember({"rl", "sft-selector", "amplify"}));
  tr->add_flag("--no-think", topts.no_think, "empty think block");
  tr->add_flag("--no-length-reward", topts.no_length_reward, "drop the length reward");
  tr->add_option("--name", topts.name, "output name under train/");
  EvalOptions eopts;
  auto* ev = app.add_subcommand("eval", "evaluate a selection strategy on the held-out split");
  ev->add_option("--strategy", eopts.strategy, "trained, uniform, topn-similarity or random")
      ->check(CLI::IsMember({"trained", "uniform", "topn-similarity", "random"}));
  ev->add_option("--checkpoint", eopts.checkpoint, "selector checkpoint (trained strategy)");
  ev->add_option("--answer", eopts.answer, "answer-model file");
  std::string score_in = "-", score_out = "-";
  auto* sc = app.add_subcommand("score", "score selector responses from JSONL");
  sc->add_option("--input", score_in, "input JSONL ('-' for stdin)");
  sc->add_option("--output", score_out, "output JSONL ('-' for stdout)");
  ReportOptions ropts;
  auto* rep = app.add_subcommand("report", "tabulate training runs");
  rep->add_option("runs", ropts.runs, "training output directories (one or two)")->required()->expected(1, 2);
  rep->add_option("--csv", ropts.csv, "also write per-step series as CSV");
  rep->add_option("--rows", ropts.max_rows, "step rows per table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*rep) return cmd_report(ropts, out, err);
    const json cfg = load_config(config_file, overrides);
    const fs::path run = run_directory(cfg, run_dir);
    if (*gen) cmd_gen_data(cfg, run, out);
    if (*filt) cmd_filter(cfg, run, out);
    if (*tr) cmd_train(cfg, run, topts, out);
    if (*ev) cmd_eval(cfg, run, eopts, out);
    if (*sc) {
      std::ifstream fin;
      std::ofstream fout;
      if (score_in != "-") {
        fin.open(score_in);
        if (!fin) throw FormatError("cannot read " + score_in);
      }
      if (score_out != "-") {
        fout.open(score_out, std::ios::binary);
        if (!fout) throw FormatError("cannot write " + score_out);
      }
      return cmd_score(cfg, score_in == "-" ? std::cin : fin, score_out == "-" ? out : fout, err);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace viarl::cli
