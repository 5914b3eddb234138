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

// Policy abstraction plus a tiny autoregressive softmax-table policy with
// analytic gradients, used to exercise the objectives at desk scale.
//
// The toy policy reads its prompt position-aligned: at output position t it
// sees the t-th token of two prompt streams, `recalled` (what habit would
// write, e.g. the old code) and `documented` (what the prompt's update note
// implies). The context window is those two aligned tokens followed by the
// previous order-1 emitted tokens (BOS-padded). Logits are
//
//   table[context][v] + recall_bias * [v == recalled_t] + doc_bias * [v == documented_t]
//
// The two biases are fixed (not trained); they model a pretrained prior. With
// both at zero an empty table is the uniform distribution.

#ifndef MIGRL_POLICY_HPP_
#define MIGRL_POLICY_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "migrl/error.hpp"
#include "migrl/rlcore.hpp"
#include "migrl/vocabulary.hpp"

namespace migrl {

// Anything that can sample groups, score completions and differentiate the
// batch loss with respect to its own parameters.
template <typename P>
concept Policy = requires(const P& policy, const typename P::Prompt& prompt, std::span<const int> completion,
                          std::span<const typename P::PromptedGroup> groups, const RlConfig& cfg,
                          const typename P::Gradient& grad) {
  { policy.sample(prompt, 2, 1, std::uint64_t{}, std::uint64_t{}) } -> std::same_as<RolloutGroup>;
  { policy.sequence_logprobs(prompt, completion) } -> std::same_as<std::vector<double>>;
  { policy.loss_gradient(groups, cfg) } -> std::same_as<typename P::Gradient>;
  { policy.updated(grad, 1.0) } -> std::same_as<P>;
};

// Counter-keyed random stream: the sequence depends only on the key parts, so
// rollouts can be sampled in any order or in parallel.
class KeyedRng {
 public:
  explicit KeyedRng(std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto part : key) {
      h ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h = splitmix64(h);
    }
    engine_.seed(h);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

struct ToyPrompt {
  std::vector<int> recalled;
  std::vector<int> documented;

  // Both streams equal: a plain single-stream prompt.
  static ToyPrompt single(std::vector<int> tokens) { return ToyPrompt{tokens, std::move(tokens)}; }

  friend bool operator==(const ToyPrompt&, const ToyPrompt&) = default;
};

struct ToyPromptedGroup {
  ToyPrompt prompt;
  RolloutGroup group;
};

using LogitTable = std::unordered_map<std::uint64_t, std::vector<double>>;

class ToyPolicy {
 public:
  using Prompt = ToyPrompt;
  using PromptedGroup = ToyPromptedGroup;
  using Gradient = LogitTable;

  static constexpr int kMaxOrder = 3;
  static constexpr int kCheckpointVersion = 1;

  ToyPolicy(Vocabulary vocab, int order = 2, double recall_bias = 0.0, double doc_bias = 0.0)
      : vocab_(std::move(vocab)), order_(order), recall_bias_(recall_bias), doc_bias_(doc_bias) {
    if (vocab_.size() < 4) throw std::invalid_argument("ToyPolicy: empty vocabulary");
    if (vocab_.size() > 0xffff) throw std::invalid_argument("ToyPolicy: vocabulary too large");
    if (order_ < 1 || order_ > kMaxOrder) throw std::invalid_argument("ToyPolicy: order must be in [1, 3]");
    if (!std::isfinite(recall_bias_) || !std::isfinite(doc_bias_)) {
      throw std::invalid_argument("ToyPolicy: biases must be finite");
    }
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  int order() const noexcept { return order_; }
  double recall_bias() const noexcept { return recall_bias_; }
  double doc_bias() const noexcept { return doc_bias_; }
  const LogitTable& table() const noexcept { return table_; }

  // Materializes (zero-initialized) and returns the logit row of a context.
  std::vector<double>& row(std::uint64_t key) {
    auto [it, inserted] = table_.try_emplace(key);
    if (inserted) it->second.assign(vocab_.size(), 0.0);
    return it->second;
  }

  static int aligned(std::span<const int> stream, std::size_t t) {
    return t < stream.size() ? stream[t] : Vocabulary::kEos;
  }

  // Context key for the token at position t, given the tokens emitted before it.
  std::uint64_t context_key(const ToyPrompt& prompt, std::span<const int> emitted, std::size_t t) const {
    std::uint64_t key = static_cast<std::uint64_t>(aligned(prompt.recalled, t)) |
                        static_cast<std::uint64_t>(aligned(prompt.documented, t)) << 16;
    for (int k = 1; k < order_; ++k) {
      const int prev = t >= static_cast<std::size_t>(k) ? emitted[t - static_cast<std::size_t>(k)] : Vocabulary::kBos;
      key |= static_cast<std::uint64_t>(prev) << (16 * (k + 1));
    }
    return key;
  }

  // Decodes a key into its slots: recalled, documented, prev1, prev2, ...
  std::vector<int> key_slots(std::uint64_t key) const {
    std::vector<int> slots;
    for (int k = 0; k < order_ + 1; ++k) slots.push_back(static_cast<int>((key >> (16 * k)) & 0xffff));
    return slots;
  }

  std::uint64_t key_from_slots(std::span<const int> slots) const {
    if (slots.size() != static_cast<std::size_t>(order_ + 1)) throw ValidationError("context key has wrong arity");
    std::uint64_t key = 0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (!vocab_.contains(slots[k])) throw ValidationError("context key slot outside vocabulary");
      key |= static_cast<std::uint64_t>(slots[k]) << (16 * k);
    }
    return key;
  }

  // Log-probabilities over the vocabulary for position t.
  void log_distribution(const ToyPrompt& prompt, std::span<const int> emitted, std::size_t t,
                        std::vector<double>& out) const {
    const auto v = vocab_.size();
    out.assign(v, 0.0);
    if (auto it = table_.find(context_key(prompt, emitted, t)); it != table_.end()) {
      std::copy(it->second.begin(), it->second.end(), out.begin());
    }
    out[static_cast<std::size_t>(aligned(prompt.recalled, t))] += recall_bias_;
    out[static_cast<std::size_t>(aligned(prompt.documented, t))] += doc_bias_;
    const double mx = *std::max_element(out.begin(), out.end());
    double z = 0.0;
    for (double x : out) z += std::exp(x - mx);
    const double lse = mx + std::log(z);
    for (double& x : out) x -= lse;
  }

  std::vector<double> probabilities(const ToyPrompt& prompt, std::span<const int> emitted, std::size_t t) const {
    std::vector<double> lp;
    log_distribution(prompt, emitted, t, lp);
    for (double& x : lp) x = std::exp(x);
    return lp;
  }

  // G independent ancestral samples, each ending at EOS (inclusive) or at
  // max_len tokens. Randomness is keyed by (seed, prompt_id, rollout index).
  // logprobs_new and logprobs_old both hold the sampling log-probabilities.
  RolloutGroup sample(const ToyPrompt& prompt, int group_size, int max_len, std::uint64_t seed,
                      std::uint64_t prompt_id = 0) const {
    if (group_size < 2) throw std::invalid_argument("sample: group size must be >= 2");
    if (max_len < 1) throw std::invalid_argument("sample: max_len must be >= 1");
    RolloutGroup group;
    group.prompt_id = prompt_id;
    std::vector<double> lp;
    for (int i = 0; i < group_size; ++i) {
      KeyedRng rng{seed, prompt_id, static_cast<std::uint64_t>(i)};
      Rollout o;
      for (int t = 0; t < max_len; ++t) {
        log_distribution(prompt, o.token_ids, static_cast<std::size_t>(t), lp);
        const double u = rng.uniform();
        double cdf = 0.0;
        std::size_t pick = lp.size() - 1;
        for (std::size_t v = 0; v < lp.size(); ++v) {
          cdf += std::exp(lp[v]);
          if (u < cdf) {
            pick = v;
            break;
          }
        }
        // Never land on a zero-probability tail entry through rounding.
        while (pick > 0 && std::exp(lp[pick]) == 0.0) --pick;
        o.token_ids.push_back(static_cast<int>(pick));
        o.logprobs_new.push_back(lp[pick]);
        if (static_cast<int>(pick) == Vocabulary::kEos) break;
      }
      o.logprobs_old = o.logprobs_new;
      group.rollouts.push_back(std::move(o));
    }
    return group;
  }

  // Argmax decoding (ties go to the lowest token id).
  std::vector<int> greedy(const ToyPrompt& prompt, int max_len) const {
    std::vector<int> out;
    std::vector<double> lp;
    for (int t = 0; t < max_len; ++t) {
      log_distribution(prompt, out, static_cast<std::size_t>(t), lp);
      const auto pick = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      out.push_back(pick);
      if (pick == Vocabulary::kEos) break;
    }
    return out;
  }

  std::vector<double> sequence_logprobs(const ToyPrompt& prompt, std::span<const int> completion) const {
    if (completion.empty()) throw std::invalid_argument("sequence_logprobs: empty completion");
    std::vector<double> result;
    result.reserve(completion.size());
    std::vector<double> lp;
    for (std::size_t t = 0; t < completion.size(); ++t) {
      if (!vocab_.contains(completion[t])) {
        throw ValidationError("token id " + std::to_string(completion[t]) + " at position " + std::to_string(t) +
                              " outside vocabulary");
      }
      log_distribution(prompt, completion, t, lp);
      result.push_back(lp[static_cast<std::size_t>(completion[t])]);
    }
    return result;
  }

  // Analytic gradient of the batch loss (GRPO: mean of per-group losses;
  // DAPO: token-level) with respect to every touched table entry. Log-probs
  // under the current parameters are recomputed; logprobs_old/ref are taken
  // from the rollouts.
  LogitTable loss_gradient(std::span<const ToyPromptedGroup> groups, const RlConfig& cfg) const {
    if (groups.empty()) throw std::invalid_argument("loss_gradient: empty batch");
    std::size_t total_tokens = 0;
    for (const auto& pg : groups) {
      for (const auto& o : pg.group.rollouts) total_tokens += o.length();
    }
    LogitTable grad;
    std::vector<double> lp;
    for (const auto& pg : groups) {
      const auto& g = pg.group;
      if (!g.advantages || g.advantages->size() != g.rollouts.size()) {
        throw std::invalid_argument("loss_gradient: rollout group has no advantages");
      }
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const auto& o = g.rollouts[i];
        if (o.length() == 0 || o.logprobs_old.size() != o.length() ||
            (cfg.algorithm == Algorithm::kGRPO && o.logprobs_ref.size() != o.length())) {
          throw std::invalid_argument("loss_gradient: rollout log-probabilities incomplete");
        }
        const double adv = (*g.advantages)[i];
        const double scale = cfg.algorithm == Algorithm::kGRPO
                                 ? 1.0 / (static_cast<double>(groups.size()) * static_cast<double>(g.rollouts.size()) *
                                          static_cast<double>(o.length()))
                                 : 1.0 / static_cast<double>(total_tokens);
        const double eps_high = cfg.algorithm == Algorithm::kGRPO ? cfg.eps_low : cfg.eps_high;
        for (std::size_t t = 0; t < o.length(); ++t) {
          log_distribution(pg.prompt, o.token_ids, t, lp);
          const int tok = o.token_ids[t];
          const double lp_new = lp[static_cast<std::size_t>(tok)];
          const double ratio = std::exp(lp_new - o.logprobs_old[t]);
          // d(-objective)/d logprob_new at this token.
          double w = -clipped_term_slope(ratio, adv, cfg.eps_low, eps_high) * ratio;
          if (cfg.algorithm == Algorithm::kGRPO && cfg.beta != 0.0) {
            w += cfg.beta * (1.0 - std::exp(o.logprobs_ref[t] - lp_new));
          }
          w *= scale;
          if (w == 0.0) continue;
          auto [it, inserted] = grad.try_emplace(context_key(pg.prompt, o.token_ids, t));
          if (inserted) it->second.assign(vocab_.size(), 0.0);
          auto& gr = it->second;
          for (std::size_t v = 0; v < gr.size(); ++v) gr[v] -= w * std::exp(lp[v]);
          gr[static_cast<std::size_t>(tok)] += w;
        }
      }
    }
    return grad;
  }

  // logits <- logits - lr * gradient, as a new value.
  ToyPolicy updated(const LogitTable& gradient, double lr) const {
    ToyPolicy next = *this;
    next.apply_in_place(gradient, lr);
    return next;
  }

  void apply_in_place(const LogitTable& gradient, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("apply_update: lr must be > 0");
    for (const auto& [key, g] : gradient) {
      auto& r = row(key);
      for (std::size_t v = 0; v < r.size(); ++v) r[v] -= lr * g[v];
    }
  }

  nlohmann::json to_json() const {
    std::vector<std::uint64_t> keys;
    keys.reserve(table_.size());
    for (const auto& [k, _] : table_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    nlohmann::json contexts = nlohmann::json::array();
    for (auto k : keys) contexts.push_back({{"key", key_slots(k)}, {"logits", table_.at(k)}});
    return {{"format", "migrl-toy-policy"},
            {"format_version", kCheckpointVersion},
            {"vocabulary", vocab_.symbols()},
            {"order", order_},
            {"recall_bias", recall_bias_},
            {"doc_bias", doc_bias_},
            {"contexts", std::move(contexts)}};
  }

  static ToyPolicy from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "migrl-toy-policy") throw ValidationError("not a toy policy checkpoint");
      const int version = j.at("format_version").get<int>();
      if (version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint format_version " + std::to_string(version));
      }
      ToyPolicy p(Vocabulary::from_symbols(j.at("vocabulary").get<std::vector<std::string>>()),
                  j.at("order").get<int>(), j.at("recall_bias").get<double>(), j.at("doc_bias").get<double>());
      for (const auto& c : j.at("contexts")) {
        const auto slots = c.at("key").get<std::vector<int>>();
        auto logits = c.at("logits").get<std::vector<double>>();
        if (logits.size() != p.vocab_size()) throw ValidationError("checkpoint logit row has wrong width");
        for (double x : logits) {
          if (!std::isfinite(x)) throw ValidationError("checkpoint holds a non-finite logit");
        }
        p.table_[p.key_from_slots(slots)] = std::move(logits);
      }
      return p;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed checkpoint: ") + e.what());
    }
  }

  friend bool operator==(const ToyPolicy& a, const ToyPolicy& b) {
    return a.vocab_ == b.vocab_ && a.order_ == b.order_ && a.recall_bias_ == b.recall_bias_ &&
           a.doc_bias_ == b.doc_bias_ && a.table_ == b.table_;
  }

 private:
  Vocabulary vocab_;
  int order_;
  double recall_bias_;
  double doc_bias_;
  LogitTable table_;
};

static_assert(Policy<ToyPolicy>);

// Free-function surface.

inline RolloutGroup sample_rollouts(const ToyPolicy& policy, const ToyPrompt& prompt, int group_size, int max_len,
                                    std::uint64_t seed, std::uint64_t prompt_id = 0) {
  return policy.sample(prompt, group_size, max_len, seed, prompt_id);
}

inline std::vector<double> sequence_logprobs(const ToyPolicy& policy, const ToyPrompt& prompt,
                                             std::span<const int> completion) {
  return policy.sequence_logprobs(prompt, completion);
}

inline LogitTable loss_gradient(const ToyPolicy& policy, std::span<const ToyPromptedGroup> groups,
                                const RlConfig& cfg) {
  return policy.loss_gradient(groups, cfg);
}

inline ToyPolicy apply_update(const ToyPolicy& policy, const LogitTable& gradient, double lr) {
  return policy.updated(gradient, lr);
}

// Frozen copy used as the sampling snapshot or the reference policy.
inline const ToyPolicy snapshot(const ToyPolicy& policy) { return policy; }

// Recomputes logprobs_new of every rollout under `policy`.
inline void refresh_logprobs(const ToyPolicy& policy, std::span<ToyPromptedGroup> groups) {
  for (auto& pg : groups) {
    for (auto& o : pg.group.rollouts) o.logprobs_new = policy.sequence_logprobs(pg.prompt, o.token_ids);
  }
}

inline std::vector<RolloutGroup> plain_groups(std::span<const ToyPromptedGroup> groups) {
  std::vector<RolloutGroup> out;
  out.reserve(groups.size());
  for (const auto& pg : groups) out.push_back(pg.group);
  return out;
}

inline void save_checkpoint(const ToyPolicy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << policy.to_json().dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

inline ToyPolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return ToyPolicy::from_json(j);
}

}  // namespace migrl

#endif  // MIGRL_POLICY_HPP_
