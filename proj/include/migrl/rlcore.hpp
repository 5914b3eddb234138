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

// Group-relative policy-gradient objectives (GRPO and DAPO): advantages, the
// clipped surrogate, the k3 KL estimator, dynamic sampling and the soft
// overlong penalty.

#ifndef MIGRL_RLCORE_HPP_
#define MIGRL_RLCORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "migrl/error.hpp"

namespace migrl {

enum class Algorithm { kGRPO, kDAPO };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::kGRPO ? "GRPO" : "DAPO"; }

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "GRPO") return Algorithm::kGRPO;
  if (s == "DAPO") return Algorithm::kDAPO;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected GRPO or DAPO)");
}

struct Rollout {
  std::vector<int> token_ids;
  std::vector<double> logprobs_new;  // under the policy being optimized
  std::vector<double> logprobs_old;  // under the sampling snapshot
  std::vector<double> logprobs_ref;  // under the frozen reference
  double reward = 0.0;

  std::size_t length() const noexcept { return token_ids.size(); }
};

struct RolloutGroup {
  std::uint64_t prompt_id = 0;
  std::vector<Rollout> rollouts;
  std::optional<std::vector<double>> advantages;

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(rollouts.size());
    for (const auto& o : rollouts) r.push_back(o.reward);
    return r;
  }
};

struct RlConfig {
  Algorithm algorithm = Algorithm::kGRPO;
  int group_size = 8;
  double beta = 0.001;
  double eps_low = 0.2;
  double eps_high = 0.2;
  double variance_floor = 1e-6;
  int max_length = 128;    // L_max
  int cache_length = 32;   // L_cache
  bool length_penalty = true;  // DAPO only

  static RlConfig grpo() { return RlConfig{}; }
  static RlConfig dapo() {
    RlConfig c;
    c.algorithm = Algorithm::kDAPO;
    c.beta = 0.0;
    c.eps_high = 0.28;
    return c;
  }

  void validate() const {
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (!(eps_low > 0.0 && eps_low <= eps_high && eps_high < 1.0)) {
      throw ConfigError("clip bounds must satisfy 0 < eps_low <= eps_high < 1");
    }
    if (!(cache_length > 0 && cache_length < max_length)) {
      throw ConfigError("length bounds must satisfy 0 < cache_length < max_length");
    }
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(variance_floor > 0.0)) throw ConfigError("variance_floor must be > 0");
  }
};

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Population standard deviation.
inline double population_std(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

// (r - mean) / std with population std; all zeros when the group carries no
// signal (std below the floor).
inline std::vector<double> group_advantages(std::span<const double> rewards, double variance_floor = 1e-6) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");
  std::vector<double> adv(rewards.size(), 0.0);
  const double sd = population_std(rewards);
  if (sd < variance_floor) return adv;
  const double m = mean_of(rewards);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - m) / sd;
  return adv;
}

inline void compute_advantages(RolloutGroup& group, const RlConfig& cfg) {
  const auto r = group.rewards();
  group.advantages = group_advantages(r, cfg.variance_floor);
}

// Per-token k3 term r - log r - 1 with r = pi_ref / pi.
inline double k3_term(double logprob_new, double logprob_ref) {
  const double x = logprob_ref - logprob_new;
  return std::exp(x) - x - 1.0;
}

inline double kl_estimate(std::span<const double> logprobs_new, std::span<const double> logprobs_ref) {
  if (logprobs_new.size() != logprobs_ref.size()) throw std::invalid_argument("kl_estimate: length mismatch");
  if (logprobs_new.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < logprobs_new.size(); ++t) s += k3_term(logprobs_new[t], logprobs_ref[t]);
  return s / static_cast<double>(logprobs_new.size());
}

inline double clipped_term(double ratio, double advantage, double eps_low, double eps_high) {
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

// d clipped_term / d ratio: the advantage where the unclipped branch is the
// minimum, zero where the clip binds.
inline double clipped_term_slope(double ratio, double advantage, double eps_low, double eps_high) {
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return ratio * advantage <= clipped * advantage ? advantage : 0.0;
}

namespace detail {

inline void check_rollout(const Rollout& o) {
  const auto n = o.token_ids.size();
  if (n == 0 || o.logprobs_new.size() != n || o.logprobs_old.size() != n || o.logprobs_ref.size() != n) {
    throw std::invalid_argument("rollout log-probability sequences must match a non-empty token sequence");
  }
}

inline const std::vector<double>& require_advantages(const RolloutGroup& g) {
  if (!g.advantages) throw std::invalid_argument("rollout group has no advantages");
  if (g.advantages->size() != g.rollouts.size()) {
    throw std::invalid_argument("rollout group advantages do not match its rollouts");
  }
  return *g.advantages;
}

}  // namespace detail

// Negative GRPO objective for one group: tokens averaged within each rollout,
// rollouts averaged across the group, symmetric clip at eps_low, k3 penalty
// weighted by beta.
inline double grpo_loss(const RolloutGroup& group, const RlConfig& cfg) {
  const auto& adv = detail::require_advantages(group);
  if (group.rollouts.empty()) throw std::invalid_argument("grpo_loss: empty group");
  double objective = 0.0;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const auto& o = group.rollouts[i];
    detail::check_rollout(o);
    double seq = 0.0;
    for (std::size_t t = 0; t < o.length(); ++t) {
      const double ratio = std::exp(o.logprobs_new[t] - o.logprobs_old[t]);
      seq += clipped_term(ratio, adv[i], cfg.eps_low, cfg.eps_low) -
             cfg.beta * k3_term(o.logprobs_new[t], o.logprobs_ref[t]);
    }
    objective += seq / static_cast<double>(o.length());
  }
  return -objective / static_cast<double>(group.rollouts.size());
}

// Batch GRPO loss: mean of the per-group losses, reduced left to right.
inline double grpo_loss(std::span<const RolloutGroup> groups, const RlConfig& cfg) {
  if (groups.empty()) throw std::invalid_argument("grpo_loss: empty batch");
  double s = 0.0;
  for (const auto& g : groups) s += grpo_loss(g, cfg);
  return s / static_cast<double>(groups.size());
}

// Negative DAPO objective: clipped terms summed over every token of every
// rollout in the batch, divided by the total token count. No KL term.
inline double dapo_loss(std::span<const RolloutGroup> groups, const RlConfig& cfg) {
  if (groups.empty()) throw std::invalid_argument("dapo_loss: empty batch");
  double objective = 0.0;
  std::size_t tokens = 0;
  for (const auto& g : groups) {
    const auto& adv = detail::require_advantages(g);
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const auto& o = g.rollouts[i];
      detail::check_rollout(o);
      for (std::size_t t = 0; t < o.length(); ++t) {
        const double ratio = std::exp(o.logprobs_new[t] - o.logprobs_old[t]);
        objective += clipped_term(ratio, adv[i], cfg.eps_low, cfg.eps_high);
      }
      tokens += o.length();
    }
  }
  if (tokens == 0) throw std::invalid_argument("dapo_loss: no tokens");
  return -objective / static_cast<double>(tokens);
}

inline double policy_loss(std::span<const RolloutGroup> groups, const RlConfig& cfg) {
  return cfg.algorithm == Algorithm::kGRPO ? grpo_loss(groups, cfg) : dapo_loss(groups, cfg);
}

inline bool has_signal(const RolloutGroup& g, double variance_floor) {
  const auto r = g.rewards();
  return population_std(r) >= variance_floor;
}

// Keeps only the groups whose rewards vary (std >= variance_floor), in order.
inline std::vector<RolloutGroup> dynamic_sample_filter(std::span<const RolloutGroup> groups, const RlConfig& cfg) {
  std::vector<RolloutGroup> kept;
  for (const auto& g : groups) {
    if (has_signal(g, cfg.variance_floor)) kept.push_back(g);
  }
  return kept;
}

// Soft overlong penalty: 0 up to L_max - L_cache, linear down to -1 at L_max,
// -1 beyond.
inline double length_penalty(std::size_t length, const RlConfig& cfg) {
  const double len = static_cast<double>(length);
  const double soft_start = static_cast<double>(cfg.max_length - cfg.cache_length);
  if (len <= soft_start) return 0.0;
  if (len > static_cast<double>(cfg.max_length)) return -1.0;
  return (soft_start - len) / static_cast<double>(cfg.cache_length);
}

// Fraction of groups with no reward variance.
inline double zero_variance_fraction(std::span<const RolloutGroup> groups, const RlConfig& cfg) {
  if (groups.empty()) throw std::invalid_argument("zero_variance_fraction: empty batch");
  std::size_t degenerate = 0;
  for (const auto& g : groups) {
    if (!has_signal(g, cfg.variance_floor)) ++degenerate;
  }
  return static_cast<double>(degenerate) / static_cast<double>(groups.size());
}

// Same, but groups for which `at_ceiling(group)` holds (already solved before
// training) are left out of both numerator and denominator.
template <typename CeilingPredicate>
double zero_variance_fraction(std::span<const RolloutGroup> groups, const RlConfig& cfg,
                              CeilingPredicate at_ceiling) {
  if (groups.empty()) throw std::invalid_argument("zero_variance_fraction: empty batch");
  std::size_t counted = 0, degenerate = 0;
  for (const auto& g : groups) {
    if (at_ceiling(g)) continue;
    ++counted;
    if (!has_signal(g, cfg.variance_floor)) ++degenerate;
  }
  return counted == 0 ? 0.0 : static_cast<double>(degenerate) / static_cast<double>(counted);
}

}  // namespace migrl

#endif  // MIGRL_RLCORE_HPP_
