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

// Desk-scale training loop: sample groups from the toy policy, score them with
// the rule-based reward, (DAPO) filter degenerate groups, step the policy with
// plain SGD under a warmup + cosine learning-rate schedule, log metrics.

#ifndef MIGRL_TRAINER_HPP_
#define MIGRL_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "migrl/codeval.hpp"
#include "migrl/error.hpp"
#include "migrl/parallel.hpp"
#include "migrl/policy.hpp"
#include "migrl/rlcore.hpp"
#include "migrl/toyenv.hpp"

namespace migrl {

struct TrainerConfig {
  RlConfig rl = RlConfig::grpo();
  CorrectnessMode mode = CorrectnessMode::kESStar;
  int steps = 300;
  int batch_size = 8;  // prompts per step; each gets rl.group_size rollouts
  double lr_peak = 100.0;
  int warmup_steps = 150;
  std::uint64_t seed = 7;
  int max_rollout_len = 64;
  int eval_every = 50;
  int max_resamples = 4;  // DAPO: extra sampling rounds when every group is degenerate
  bool zero_variance_exclude_solved = false;
  int threads = 1;

  // Toy policy prior.
  int order = 2;
  double recall_bias = 3.5;
  double doc_bias = 2.5;

  // Synthetic tasks.
  int difficulty = 1;
  std::optional<RewriteRule> task_rule = RewriteRule::rename("f1", "f2");
  int train_pool = 256;
  int heldout_size = 64;

  void validate() const {
    rl.validate();
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (steps > 0 && !(warmup_steps >= 0 && warmup_steps < steps)) {
      throw ConfigError("warmup_steps must lie in [0, steps)");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_peak > 0.0)) throw ConfigError("lr_peak must be > 0");
    if (max_rollout_len < 1) throw ConfigError("max_rollout_len must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (max_resamples < 0) throw ConfigError("max_resamples must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (difficulty < 1 || difficulty > 3) throw ConfigError("difficulty must be in [1, 3]");
    if (train_pool < 1 || heldout_size < 1) throw ConfigError("train_pool and heldout_size must be >= 1");
    if (task_rule) task_rule->validate();
  }
};

struct StepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double mean_format_reward = 0.0;
  double mean_correctness = 0.0;
  double mean_response_length = 0.0;
  double zero_variance_fraction = 0.0;
  int groups_kept = 0;
  double loss = 0.0;
  double lr = 0.0;
  // Every group stayed degenerate after all resamples; no update was made.
  bool skipped = false;
  std::optional<double> heldout_exact_match;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

inline nlohmann::json to_json(const StepMetrics& m) {
  nlohmann::json j = {{"step", m.step},
                      {"mean_reward", m.mean_reward},
                      {"mean_format_reward", m.mean_format_reward},
                      {"mean_correctness", m.mean_correctness},
                      {"mean_response_length", m.mean_response_length},
                      {"zero_variance_fraction", m.zero_variance_fraction},
                      {"groups_kept", m.groups_kept},
                      {"loss", m.loss},
                      {"lr", m.lr},
                      {"skipped", m.skipped}};
  j["heldout_exact_match"] = m.heldout_exact_match ? nlohmann::json(*m.heldout_exact_match) : nlohmann::json();
  return j;
}

// Linear warmup from 0 to lr_peak over [0, warmup_steps], then half-cosine
// decay that reaches 0 at step == steps.
inline double lr_at(int step, const TrainerConfig& cfg) {
  if (step < 0 || step > cfg.steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.steps) + "]");
  }
  if (step < cfg.warmup_steps) {
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double span = static_cast<double>(cfg.steps - cfg.warmup_steps);
  const double progress = span > 0 ? static_cast<double>(step - cfg.warmup_steps) / span : 1.0;
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// Training prompts and held-out evaluation prompts.
class TaskSource {
 public:
  // Fixed synthetic pools; held-out snippets never repeat a training snippet.
  static TaskSource synthetic(const TrainerConfig& cfg) {
    auto make = [&](std::uint64_t s) {
      return cfg.task_rule ? gen_task_with_rule(s, cfg.difficulty, *cfg.task_rule).entry
                           : gen_task(s, cfg.difficulty).entry;
    };
    TaskSource src;
    std::unordered_set<std::string> seen;
    for (int i = 0; i < cfg.train_pool; ++i) {
      src.train_.push_back(make(KeyedRng::splitmix64(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i))));
      seen.insert(src.train_.back().old_code);
    }
    for (std::uint64_t i = 0; src.heldout_.size() < static_cast<std::size_t>(cfg.heldout_size); ++i) {
      if (i > 100ULL * static_cast<std::uint64_t>(cfg.heldout_size) + 1000) {
        throw ConfigError("cannot draw enough held-out tasks distinct from the training pool");
      }
      auto e = make(KeyedRng::splitmix64(~cfg.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1))));
      if (seen.insert(e.old_code).second) src.heldout_.push_back(std::move(e));
    }
    return src;
  }

  static TaskSource from_entries(std::vector<MigrationEntry> train, std::vector<MigrationEntry> heldout) {
    if (train.empty()) throw ValidationError("training dataset is empty");
    if (heldout.empty()) throw ValidationError("held-out dataset is empty");
    TaskSource src;
    src.train_ = std::move(train);
    src.heldout_ = std::move(heldout);
    return src;
  }

  // The last `fraction` of the records (at least one) become the held-out set.
  static TaskSource split(std::vector<MigrationEntry> entries, double fraction = 0.2) {
    if (entries.size() < 2) throw ValidationError("need at least two records to split train/held-out");
    auto n_held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(entries.size())));
    n_held = std::clamp<std::size_t>(n_held, 1, entries.size() - 1);
    std::vector<MigrationEntry> held(entries.end() - static_cast<std::ptrdiff_t>(n_held), entries.end());
    entries.resize(entries.size() - n_held);
    return from_entries(std::move(entries), std::move(held));
  }

  const std::vector<MigrationEntry>& train() const noexcept { return train_; }
  const std::vector<MigrationEntry>& heldout() const noexcept { return heldout_; }

  // Prompts for one step, drawn without replacement (with replacement if the
  // pool is smaller than the batch). Pure in (seed, step).
  std::vector<MigrationEntry> batch(std::uint64_t seed, int step, int batch_size) const {
    KeyedRng rng{seed, static_cast<std::uint64_t>(step), 0x62617463ULL};
    std::vector<std::size_t> idx(train_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<MigrationEntry> out;
    for (int b = 0; b < batch_size; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) % idx.size();
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - base));
      std::swap(idx[base], idx[base + j]);
      out.push_back(train_[idx[base]]);
    }
    return out;
  }

 private:
  std::vector<MigrationEntry> train_;
  std::vector<MigrationEntry> heldout_;
};

struct TrainState {
  ToyPolicy policy;
  ToyPolicy reference;
  int step = 0;
};

inline ToyPolicy initial_policy(const TrainerConfig& cfg) {
  return ToyPolicy(toy_vocabulary(), cfg.order, cfg.recall_bias, cfg.doc_bias);
}

namespace detail {

struct ScoredGroup {
  ToyPromptedGroup group;
  std::vector<RewardBreakdown> rewards;
};

}  // namespace detail

// Renders a toy completion to the text a reward function sees.
inline std::string render_completion(const ToyPolicy& policy, std::span<const int> tokens) {
  return policy.vocab().detokenize(tokens);
}

// Greedy-decodes every entry and returns the fraction whose extracted code
// exactly matches the target.
inline double heldout_exact_match(const ToyPolicy& policy, std::span<const MigrationEntry> entries, int max_len,
                                  const SyntaxChecker& checker = hermetic_syntax_checker()) {
  if (entries.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : entries) {
    const auto prompt = make_toy_prompt(e, policy.vocab());
    const auto parsed = parse_output(render_completion(policy, policy.greedy(prompt, max_len)), checker);
    if (parsed.code && exact_match(*parsed.code, e.target_code)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(entries.size());
}

// One optimization step on `batch`. Deterministic in (state, batch, cfg).
inline StepMetrics train_step(TrainState& state, std::span<const MigrationEntry> batch, const TrainerConfig& cfg,
                              const SyntaxChecker& checker = hermetic_syntax_checker()) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const RlConfig& rl = cfg.rl;
  const bool dapo = rl.algorithm == Algorithm::kDAPO;
  const ToyPolicy old_policy = snapshot(state.policy);

  std::vector<ToyPrompt> prompts;
  prompts.reserve(batch.size());
  for (const auto& e : batch) prompts.push_back(make_toy_prompt(e, old_policy.vocab()));

  StepMetrics m;
  m.step = state.step;
  m.lr = lr_at(state.step, cfg);

  std::vector<detail::ScoredGroup> scored(batch.size());
  std::vector<ToyPromptedGroup> kept;
  for (int attempt = 0; attempt <= (dapo ? cfg.max_resamples : 0); ++attempt) {
    const std::uint64_t seed = KeyedRng::splitmix64(cfg.seed ^ KeyedRng::splitmix64(
        (static_cast<std::uint64_t>(state.step) << 8) | static_cast<std::uint64_t>(attempt)));
    detail::parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
      auto& sg = scored[i];
      sg.group.prompt = prompts[i];
      sg.group.group = old_policy.sample(prompts[i], rl.group_size, cfg.max_rollout_len, seed, i);
      sg.rewards.clear();
      for (auto& o : sg.group.group.rollouts) {
        const auto parsed = parse_output(render_completion(old_policy, o.token_ids), checker);
        const double pen = dapo && rl.length_penalty ? length_penalty(o.length(), rl) : 0.0;
        const auto r = composite_reward(parsed, batch[i].target_code, cfg.mode, pen);
        o.reward = r.total;
        o.logprobs_ref = state.reference.sequence_logprobs(prompts[i], o.token_ids);
        sg.rewards.push_back(r);
      }
    });

    kept.clear();
    for (const auto& sg : scored) {
      if (!dapo || has_signal(sg.group.group, rl.variance_floor)) kept.push_back(sg.group);
    }
    if (!kept.empty()) break;
  }

  double reward = 0.0, format = 0.0, correctness = 0.0, length = 0.0;
  std::size_t count = 0;
  std::vector<RolloutGroup> all;
  for (const auto& sg : scored) {
    for (std::size_t k = 0; k < sg.rewards.size(); ++k) {
      reward += sg.rewards[k].total;
      format += sg.rewards[k].format;
      correctness += sg.rewards[k].correctness;
      length += static_cast<double>(sg.group.group.rollouts[k].length());
      ++count;
    }
    all.push_back(sg.group.group);
  }
  m.mean_reward = reward / static_cast<double>(count);
  m.mean_format_reward = format / static_cast<double>(count);
  m.mean_correctness = correctness / static_cast<double>(count);
  m.mean_response_length = length / static_cast<double>(count);
  if (cfg.zero_variance_exclude_solved) {
    m.zero_variance_fraction = zero_variance_fraction(std::span<const RolloutGroup>(all), rl, [&](const RolloutGroup& g) {
      const auto& sg = scored[static_cast<std::size_t>(g.prompt_id)];
      return std::any_of(sg.rewards.begin(), sg.rewards.end(),
                         [](const RewardBreakdown& r) { return r.correctness == kCorrectnessMax; });
    });
  } else {
    m.zero_variance_fraction = zero_variance_fraction(std::span<const RolloutGroup>(all), rl);
  }
  m.groups_kept = static_cast<int>(kept.size());

  if (kept.empty()) {
    m.skipped = true;
    ++state.step;
    return m;
  }
  for (auto& pg : kept) compute_advantages(pg.group, rl);
  const auto plain = plain_groups(kept);
  m.loss = policy_loss(plain, rl);
  if (m.lr > 0.0) state.policy.apply_in_place(state.policy.loss_gradient(kept, rl), m.lr);
  ++state.step;
  return m;
}

struct TrainResult {
  std::vector<StepMetrics> metrics;
  ToyPolicy policy;
  double initial_heldout_exact_match = 0.0;
  double final_heldout_exact_match = 0.0;
};

struct TrainOutputs {
  std::filesystem::path dir;  // metrics.jsonl, checkpoint.json, manifest.json
};

inline nlohmann::json to_json(const TrainerConfig& c) {
  nlohmann::json rule = nullptr;
  if (c.task_rule) {
    rule = {{"kind", to_string(c.task_rule->kind)}, {"function", c.task_rule->function},
            {"new_name", c.task_rule->new_name}, {"param_name", c.task_rule->param_name},
            {"param_value", c.task_rule->param_value}, {"permutation", c.task_rule->permutation},
            {"ns", c.task_rule->ns}};
  }
  return {{"algorithm", to_string(c.rl.algorithm)},
          {"group_size", c.rl.group_size},
          {"beta", c.rl.beta},
          {"eps_low", c.rl.eps_low},
          {"eps_high", c.rl.eps_high},
          {"variance_floor", c.rl.variance_floor},
          {"max_length", c.rl.max_length},
          {"cache_length", c.rl.cache_length},
          {"length_penalty", c.rl.length_penalty},
          {"mode", to_string(c.mode)},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr_peak", c.lr_peak},
          {"warmup_steps", c.warmup_steps},
          {"seed", c.seed},
          {"max_rollout_len", c.max_rollout_len},
          {"eval_every", c.eval_every},
          {"max_resamples", c.max_resamples},
          {"order", c.order},
          {"recall_bias", c.recall_bias},
          {"doc_bias", c.doc_bias},
          {"difficulty", c.difficulty},
          {"task_rule", rule},
          {"train_pool", c.train_pool},
          {"heldout_size", c.heldout_size}};
}

class Trainer {
 public:
  Trainer(TrainerConfig cfg, TaskSource tasks, std::optional<ToyPolicy> start = std::nullopt, int start_step = 0,
          SyntaxChecker checker = hermetic_syntax_checker())
      : cfg_(std::move(cfg)),
        tasks_(std::move(tasks)),
        state_{start ? *start : initial_policy(cfg_), initial_policy(cfg_), start_step},
        checker_(std::move(checker)) {
    cfg_.validate();
    if (start_step < 0 || start_step > cfg_.steps) throw ConfigError("start step outside [0, steps]");
  }

  const TrainerConfig& config() const noexcept { return cfg_; }
  const TaskSource& tasks() const noexcept { return tasks_; }
  const TrainState& state() const noexcept { return state_; }
  bool done() const noexcept { return state_.step >= cfg_.steps; }

  double evaluate() const {
    return heldout_exact_match(state_.policy, tasks_.heldout(), cfg_.max_rollout_len, checker_);
  }

  StepMetrics step() {
    const auto batch = tasks_.batch(cfg_.seed, state_.step, cfg_.batch_size);
    auto m = train_step(state_, batch, cfg_, checker_);
    if (state_.step % cfg_.eval_every == 0 || state_.step == cfg_.steps) m.heldout_exact_match = evaluate();
    return m;
  }

 private:
  TrainerConfig cfg_;
  TaskSource tasks_;
  TrainState state_;
  SyntaxChecker checker_;
};

inline void append_metrics(std::ostream& out, const StepMetrics& m) { out << to_json(m).dump() << '\n'; }

// Runs every remaining step. With `outputs`, writes the metrics log, the final
// policy checkpoint and a run manifest into outputs->dir.
inline TrainResult train(Trainer& trainer, const std::optional<TrainOutputs>& outputs = std::nullopt) {
  std::ofstream log;
  if (outputs) {
    std::error_code ec;
    std::filesystem::create_directories(outputs->dir, ec);
    if (ec) throw IoError("cannot create output directory " + outputs->dir.string() + ": " + ec.message());
    const auto path = outputs->dir / "metrics.jsonl";
    log.open(path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log " + path.string());
  }
  TrainResult result{{}, trainer.state().policy, 0.0, 0.0};
  result.initial_heldout_exact_match = trainer.evaluate();
  while (!trainer.done()) {
    result.metrics.push_back(trainer.step());
    if (log.is_open()) {
      append_metrics(log, result.metrics.back());
      if (!log) throw IoError("failed writing metrics log in " + outputs->dir.string());
    }
  }
  result.policy = trainer.state().policy;
  result.final_heldout_exact_match = trainer.evaluate();
  if (outputs) {
    const auto ckpt = outputs->dir / "checkpoint.json";
    save_checkpoint(result.policy, ckpt);
    nlohmann::json manifest = {{"checkpoint", ckpt.string()},
                               {"metrics", (outputs->dir / "metrics.jsonl").string()},
                               {"seed", trainer.config().seed},
                               {"steps_completed", trainer.state().step},
                               {"initial_heldout_exact_match", result.initial_heldout_exact_match},
                               {"final_heldout_exact_match", result.final_heldout_exact_match},
                               {"config", to_json(trainer.config())}};
    const auto mpath = outputs->dir / "manifest.json";
    std::ofstream mf(mpath, std::ios::binary | std::ios::trunc);
    if (!mf || !(mf << manifest.dump(2) << '\n')) throw IoError("cannot write run manifest " + mpath.string());
  }
  return result;
}

inline TrainResult train(const TrainerConfig& cfg, TaskSource tasks,
                         const std::optional<TrainOutputs>& outputs = std::nullopt) {
  Trainer trainer(cfg, std::move(tasks));
  return train(trainer, outputs);
}

}  // namespace migrl

#endif  // MIGRL_TRAINER_HPP_
