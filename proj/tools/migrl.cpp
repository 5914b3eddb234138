// Copyright 2026 The migrl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// migrl command-line tool.
//
//   migrl score      --input rollouts.jsonl [--mode ES_STAR]
//   migrl train-toy  --out runs/toy [--steps 300 --seed 7 ...]
//   migrl gen-toy    --n 100 --output toy.jsonl
//   migrl eval       --dataset eval.jsonl --completions samples.jsonl --n 5 --k 1 --k 5
//   migrl render     --dataset data.jsonl --kind training
//
// Every subcommand accepts --config FILE (a JSON object keyed by flag name;
// nested objects are flattened with dots). Command-line flags win over the
// file, which wins over built-in defaults.
//
// Exit status: 0 ok, 1 invalid input data, 2 bad configuration, 3 internal.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "migrl/migrl.hpp"

namespace {

using nlohmann::json;

template <typename T>
void assign(T& var, const json& v) {
  var = v.get<T>();
}

template <typename T>
void assign(std::optional<T>& var, const json& v) {
  var = v.get<T>();
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out[key] = v;
    }
  }
}

// Registers flags and remembers how to set each one from a config file.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file providing flag values");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    auto* opt = app_->add_option("--" + name, var, desc);
    setters_[name] = {opt, [&var](const json& v) { assign(var, v); }};
    return opt;
  }

  // Fills every flag not given on the command line from the config file.
  void apply_config() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_, std::ios::binary);
    if (!in.is_open()) throw migrl::ConfigError("cannot open config file " + config_path_);
    json root;
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw migrl::ConfigError("config file " + config_path_ + ": " + e.what());
    }
    if (!root.is_object()) throw migrl::ConfigError("config file must hold a JSON object");
    std::map<std::string, json> flat;
    flatten(root, "", flat);
    for (const auto& [key, value] : flat) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) throw migrl::ConfigError("config file: unknown key '" + key + "'");
      if (it->second.opt->count() > 0) continue;
      try {
        it->second.set(value);
      } catch (const json::exception& e) {
        throw migrl::ConfigError("config file: bad value for '" + key + "': " + e.what());
      }
    }
  }

 private:
  struct Setter {
    CLI::Option* opt;
    std::function<void(const json&)> set;
  };
  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, Setter> setters_;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_.is_open()) throw migrl::IoError("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void finish(const std::string& what) {
    stream().flush();
    if (!stream()) throw migrl::IoError("write failed: " + what);
  }

 private:
  std::ofstream file_;
};

migrl::SyntaxChecker make_checker(const std::vector<std::string>& command, double timeout_secs) {
  if (command.empty()) return migrl::hermetic_syntax_checker();
  return migrl::ExternalSyntaxChecker(
      command, std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000.0)));
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string input, output;
  std::string mode = "ES_STAR";
  std::string algorithm = "GRPO";
  int max_length = migrl::RlConfig{}.max_length;
  int cache_length = migrl::RlConfig{}.cache_length;
  bool length_penalty = true;
  std::vector<std::string> checker;
  double checker_timeout = 5.0;
};

void require_flag(const std::string& value, const char* name) {
  if (value.empty()) throw migrl::ConfigError(std::string("--") + name + " is required");
}

int run_score(const ScoreArgs& a) {
  require_flag(a.input, "input");
  const auto mode = migrl::parse_correctness_mode(a.mode);
  migrl::RlConfig rl;
  rl.algorithm = migrl::parse_algorithm(a.algorithm);
  rl.max_length = a.max_length;
  rl.cache_length = a.cache_length;
  rl.length_penalty = a.length_penalty;
  rl.validate();
  const auto checker = make_checker(a.checker, a.checker_timeout);
  Output out(a.output);
  std::size_t index = 0;
  migrl::detail::for_each_record(a.input, [&](const json& rec, std::size_t line) {
    const auto completion = migrl::detail::require_string(rec, "completion", line);
    const auto target = migrl::detail::require_string(rec, "target", line);
    double pen = 0.0;
    if (auto it = rec.find("length"); it != rec.end()) {
      if (!it->is_number_unsigned()) throw migrl::ValidationError("field 'length' must be a non-negative integer", line);
      if (rl.algorithm == migrl::Algorithm::kDAPO && rl.length_penalty) {
        pen = migrl::length_penalty(it->get<std::size_t>(), rl);
      }
    }
    const auto parsed = migrl::parse_output(completion, checker);
    const auto r = migrl::composite_reward(parsed, target, mode, pen);
    json o = {{"index", index++},       {"format", r.format},           {"correctness", r.correctness},
              {"length_penalty", r.length_penalty}, {"total", r.total}, {"format_ok", parsed.format_ok},
              {"syntax_ok", parsed.syntax_ok},      {"has_code", parsed.code.has_value()}};
    if (auto it = rec.find("id"); it != rec.end()) o["id"] = *it;
    out.stream() << o.dump() << '\n';
  });
  out.finish(a.output);
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  migrl::TrainerConfig cfg;
  std::string algorithm = "GRPO";
  std::string mode = "ES_STAR";
  std::optional<int> group_size, max_length, cache_length;
  std::optional<double> beta, eps_low, eps_high, variance_floor;
  std::optional<bool> length_penalty;
  std::string task_rule = "RENAME:f1:f2";
  std::string dataset, heldout_dataset, resume;
  int start_step = 0;
  std::string out = "runs/toy";
  std::vector<std::string> checker;
  double checker_timeout = 5.0;
};

int run_train(TrainArgs a) {
  auto& cfg = a.cfg;
  const auto algo = migrl::parse_algorithm(a.algorithm);
  cfg.rl = algo == migrl::Algorithm::kDAPO ? migrl::RlConfig::dapo() : migrl::RlConfig::grpo();
  if (a.group_size) cfg.rl.group_size = *a.group_size;
  if (a.max_length) cfg.rl.max_length = *a.max_length;
  if (a.cache_length) cfg.rl.cache_length = *a.cache_length;
  if (a.beta) cfg.rl.beta = *a.beta;
  if (a.eps_low) cfg.rl.eps_low = *a.eps_low;
  if (a.eps_high) cfg.rl.eps_high = *a.eps_high;
  if (a.variance_floor) cfg.rl.variance_floor = *a.variance_floor;
  if (a.length_penalty) cfg.rl.length_penalty = *a.length_penalty;
  cfg.mode = migrl::parse_correctness_mode(a.mode);
  if (a.task_rule == "mixed") {
    cfg.task_rule.reset();
  } else {
    cfg.task_rule = migrl::parse_rewrite_rule(a.task_rule);
  }
  cfg.validate();

  migrl::TaskSource tasks = [&] {
    if (a.dataset.empty()) return migrl::TaskSource::synthetic(cfg);
    auto train = migrl::load_migration_dataset(a.dataset);
    if (a.heldout_dataset.empty()) return migrl::TaskSource::split(std::move(train));
    return migrl::TaskSource::from_entries(std::move(train), migrl::load_migration_dataset(a.heldout_dataset));
  }();
  std::optional<migrl::ToyPolicy> start;
  if (!a.resume.empty()) start = migrl::load_checkpoint(a.resume);
  migrl::Trainer trainer(cfg, std::move(tasks), std::move(start), a.start_step,
                         make_checker(a.checker, a.checker_timeout));
  const auto res = migrl::train(trainer, migrl::TrainOutputs{a.out});
  json summary = {{"out", a.out},
                  {"steps", res.metrics.size()},
                  {"initial_heldout_exact_match", res.initial_heldout_exact_match},
                  {"final_heldout_exact_match", res.final_heldout_exact_match}};
  if (!res.metrics.empty()) summary["final_mean_reward"] = res.metrics.back().mean_reward;
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int n = 16;
  std::uint64_t seed = 7;
  int difficulty = 1;
  std::string task_rule = "mixed";
  std::string output;
};

int run_gen(const GenArgs& a) {
  if (a.n < 0) throw migrl::ConfigError("n must be >= 0");
  if (a.difficulty < 1 || a.difficulty > 3) throw migrl::ConfigError("difficulty must lie in [1, 3]");
  std::optional<migrl::RewriteRule> rule;
  if (a.task_rule != "mixed") rule = migrl::parse_rewrite_rule(a.task_rule);
  Output out(a.output);
  for (int i = 0; i < a.n; ++i) {
    const auto s = migrl::KeyedRng::splitmix64(a.seed * 1000003ULL + static_cast<std::uint64_t>(i));
    const auto task = rule ? migrl::gen_task_with_rule(s, a.difficulty, *rule) : migrl::gen_task(s, a.difficulty);
    out.stream() << migrl::to_json(task.entry).dump() << '\n';
  }
  out.finish(a.output);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string dataset, completions, report, details;
  std::vector<std::string> generator;
  double generator_timeout = 300.0;
  int n = 1;
  std::vector<int> ks = {1};
  migrl::RunnerConfig runner;
  std::string scratch_root;
  int threads = 1;
  std::vector<std::string> checker;
  double checker_timeout = 5.0;
};

int run_eval(const EvalArgs& a) {
  require_flag(a.dataset, "dataset");
  if (a.completions.empty() == a.generator.empty()) {
    throw migrl::ConfigError("exactly one of --completions and --generator.command is required");
  }
  migrl::EvalOptions opt;
  opt.n = a.n;
  opt.ks = a.ks;
  opt.runner = a.runner;
  opt.runner.scratch_root = a.scratch_root;
  opt.threads = a.threads;
  opt.syntax_checker = make_checker(a.checker, a.checker_timeout);
  opt.runner.validate();
  const auto entries = migrl::load_eval_dataset(a.dataset);
  const auto source =
      a.completions.empty()
          ? migrl::completions_from_command(
                a.generator, std::chrono::milliseconds(static_cast<long long>(a.generator_timeout * 1000.0)))
          : migrl::completions_from_file(a.completions);
  const auto report = migrl::evaluate(source, entries, opt);
  if (!a.details.empty()) {
    Output d(a.details);
    for (const auto& er : report.entries) d.stream() << migrl::to_json(er).dump() << '\n';
    d.finish(a.details);
  }
  Output out(a.report);
  out.stream() << migrl::to_json(report).dump(2) << '\n';
  out.finish(a.report);
  return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string dataset, output;
  std::string kind = "training";
  std::string format = "json";
};

int run_render(const RenderArgs& a) {
  require_flag(a.dataset, "dataset");
  if (a.kind != "training" && a.kind != "eval") throw migrl::ConfigError("kind must be 'training' or 'eval'");
  if (a.format != "json" && a.format != "text") throw migrl::ConfigError("format must be 'json' or 'text'");
  std::vector<migrl::RenderedPrompt> prompts;
  if (a.kind == "training") {
    for (const auto& e : migrl::load_migration_dataset(a.dataset)) prompts.push_back(migrl::training_prompt(e));
  } else {
    for (const auto& e : migrl::load_eval_dataset(a.dataset)) prompts.push_back(migrl::eval_prompt(e));
  }
  Output out(a.output);
  for (const auto& p : prompts) {
    if (a.format == "json") {
      out.stream() << json{{"system", p.system}, {"user", p.user}, {"assistant_prefix", p.assistant_prefix}}.dump()
                   << '\n';
    } else {
      out.stream() << p.flatten() << "\n\n";
    }
  }
  out.finish(a.output);
  return 0;
}

void add_checker_flags(Flags& f, std::vector<std::string>& cmd, double& timeout) {
  f.add("syntax_checker.command", cmd, "External syntax checker argv (code on stdin; exit 0 = valid)");
  f.add("syntax_checker.timeout_secs", timeout, "Syntax checker timeout in seconds");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-based RL for API-migration code models: rewards, toy training and Pass@k evaluation"};
  app.require_subcommand(1);

  std::vector<std::pair<CLI::App*, std::unique_ptr<Flags>>> subs;
  auto make = [&](const char* name, const char* desc) {
    auto* sub = app.add_subcommand(name, desc);
    subs.emplace_back(sub, std::make_unique<Flags>(sub));
    return subs.back().second.get();
  };

  ScoreArgs score;
  {
    auto& f = *make("score", "Score completions against targets and emit one reward record per line");
    f.add("input", score.input, "JSONL with 'completion' and 'target' (optional 'length', 'id')");
    f.add("output", score.output, "Output JSONL (stdout when omitted)");
    f.add("mode", score.mode, "EM, ES, EM_STAR, ES_STAR or FORMAT_ONLY");
    f.add("algorithm", score.algorithm, "GRPO or DAPO (DAPO applies the length penalty)");
    f.add("max_length", score.max_length, "L_max for the length penalty");
    f.add("cache_length", score.cache_length, "L_cache for the length penalty");
    f.add("length_penalty", score.length_penalty, "Apply the soft overlong penalty under DAPO");
    add_checker_flags(f, score.checker, score.checker_timeout);
  }

  TrainArgs train;
  {
    auto& f = *make("train-toy", "Train the toy policy on synthetic (or supplied) migration tasks");
    auto& c = train.cfg;
    f.add("algorithm", train.algorithm, "GRPO or DAPO");
    f.add("mode", train.mode, "Correctness mode");
    f.add("group_size", train.group_size, "Rollouts per prompt (G)");
    f.add("beta", train.beta, "KL weight (GRPO)");
    f.add("eps_low", train.eps_low, "Lower clip bound");
    f.add("eps_high", train.eps_high, "Upper clip bound (DAPO)");
    f.add("variance_floor", train.variance_floor, "Reward std below which a group carries no signal");
    f.add("max_length", train.max_length, "L_max");
    f.add("cache_length", train.cache_length, "L_cache");
    f.add("length_penalty", train.length_penalty, "Soft overlong penalty (DAPO)");
    f.add("steps", c.steps, "Training steps");
    f.add("batch_size", c.batch_size, "Prompts per step");
    f.add("lr_peak", c.lr_peak, "Peak learning rate");
    f.add("warmup_steps", c.warmup_steps, "Linear warmup steps");
    f.add("seed", c.seed, "Seed");
    f.add("max_rollout_len", c.max_rollout_len, "Token budget per rollout");
    f.add("eval_every", c.eval_every, "Held-out evaluation period");
    f.add("max_resamples", c.max_resamples, "DAPO resampling rounds when every group is degenerate");
    f.add("zero_variance_exclude_solved", c.zero_variance_exclude_solved,
          "Leave groups solved by every rollout out of zero_variance_fraction");
    f.add("threads", c.threads, "Worker threads");
    f.add("order", c.order, "Toy policy context order");
    f.add("recall_bias", c.recall_bias, "Prior logit bonus for copying the old code");
    f.add("doc_bias", c.doc_bias, "Prior logit bonus for following the documented code");
    f.add("difficulty", c.difficulty, "Synthetic task difficulty (1-3)");
    f.add("task_rule", train.task_rule, "Rewrite rule (e.g. RENAME:f1:f2) or 'mixed'");
    f.add("train_pool", c.train_pool, "Synthetic training pool size");
    f.add("heldout_size", c.heldout_size, "Synthetic held-out set size");
    f.add("dataset", train.dataset, "Migration JSONL to train on instead of synthetic tasks");
    f.add("heldout_dataset", train.heldout_dataset, "Held-out migration JSONL (default: last 20% of --dataset)");
    f.add("resume", train.resume, "Checkpoint to start from");
    f.add("start_step", train.start_step, "Step index to resume at");
    f.add("out", train.out, "Output directory");
    add_checker_flags(f, train.checker, train.checker_timeout);
  }

  GenArgs gen;
  {
    auto& f = *make("gen-toy", "Emit synthetic migration records");
    f.add("n", gen.n, "Number of records");
    f.add("seed", gen.seed, "Seed");
    f.add("difficulty", gen.difficulty, "Statements per snippet (1-3)");
    f.add("task_rule", gen.task_rule, "Rewrite rule or 'mixed'");
    f.add("output", gen.output, "Output JSONL (stdout when omitted)");
  }

  EvalArgs ev;
  {
    auto& f = *make("eval", "Run test programs against completions and report Pass@k");
    f.add("dataset", ev.dataset, "Eval JSONL");
    f.add("completions", ev.completions, "JSONL of {\"completions\": [...]} per entry");
    f.add("generator.command", ev.generator, "Command producing one completion per call (prompt on stdin)");
    f.add("generator.timeout_secs", ev.generator_timeout, "Generator timeout in seconds");
    f.add("n", ev.n, "Completions per entry");
    f.add("k", ev.ks, "k values (repeatable)");
    f.add("runner.command", ev.runner.command, "Test runner argv; the program path is appended");
    f.add("runner.timeout_secs", ev.runner.timeout_secs, "Per-test wall-clock timeout");
    f.add("runner.env_allowlist", ev.runner.env_allowlist, "Environment variables passed to the runner");
    f.add("runner.source_suffix", ev.runner.source_suffix, "Extension of the assembled program file");
    f.add("runner.scratch_root", ev.scratch_root, "Directory for per-test scratch directories");
    f.add("threads", ev.threads, "Parallel test executions");
    f.add("report", ev.report, "Report JSON (stdout when omitted)");
    f.add("details", ev.details, "Per-entry detail JSONL");
    add_checker_flags(f, ev.checker, ev.checker_timeout);
  }

  RenderArgs render;
  {
    auto& f = *make("render", "Render prompts for a dataset");
    f.add("dataset", render.dataset, "Migration or eval JSONL");
    f.add("kind", render.kind, "'training' or 'eval'");
    f.add("format", render.format, "'json' (one object per line) or 'text'");
    f.add("output", render.output, "Output file (stdout when omitted)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto& [sub, flags] : subs) {
      if (!sub->parsed()) continue;
      flags->apply_config();
      const std::string name = sub->get_name();
      if (name == "score") return run_score(score);
      if (name == "train-toy") return run_train(train);
      if (name == "gen-toy") return run_gen(gen);
      if (name == "eval") return run_eval(ev);
      if (name == "render") return run_render(render);
    }
    return 3;
  } catch (const migrl::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const migrl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const migrl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
