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

// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero when any criterion fails.

#include <stdlib.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "migrl/migrl.hpp"
#include "oracles.hpp"
#include "reward_fixtures.hpp"

namespace {

using namespace migrl;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kRewardTol = 1e-12;
constexpr double kAdvantageTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kObjectiveTol = 1e-9;
constexpr double kPenaltyTol = 1e-12;
constexpr double kPassAtKTol = 1e-12;
constexpr double kVarianceFloor = 1e-6;
constexpr double kMinRewardRise = 2.5;
constexpr double kMinHeldoutEM = 0.9;
constexpr double kMaxFormatOnlyGain = 0.05;
constexpr double kBudget1 = 1.0, kBudget2 = 30.0, kBudget4 = 60.0, kBudget9 = 300.0;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& why) {
    if (!cond && ok) {
      ok = false;
      detail = why;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ---------------------------------------------------------------------------

Outcome reward_exactness() {
  Outcome out;
  const auto t0 = Clock::now();
  const auto cases = fixtures::reward_cases();
  out.require(cases.size() >= 30, "fewer than 30 fixtures");
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto p = parse_output(c.output);
    const bool has = c.code.has_value();
    const std::string code = c.code.value_or("");
    out.require(format_reward(p) == (c.format_ok ? 1.0 : -1.0), c.name + ": format reward");
    const double em = correctness_reward(p, c.target, CorrectnessMode::kEMStar);
    out.require(em == oracle::em_star(has, c.valid, code, c.target), c.name + ": EM*");
    const double es = correctness_reward(p, c.target, CorrectnessMode::kESStar);
    const double err = std::abs(es - oracle::es_star(has, c.valid, code, c.target));
    worst = std::max(worst, err);
    out.require(err <= kRewardTol, c.name + ": ES*");
  }
  const double secs = seconds_since(t0);
  out.require(secs < kBudget1, "over the 1 s budget");
  if (out.ok) out.detail = fmt("%zu fixtures, max ES* error %.2e, %.3f s", cases.size(), worst, secs);
  return out;
}

// 2 ---------------------------------------------------------------------------

// Every string over {a,b,c} of length <= 8, indexed by enumeration order.
struct EditGraph {
  static constexpr int kMaxLen = 8;
  std::vector<std::string> strings;
  std::map<std::string, int> index;
  std::vector<std::vector<int>> neighbours;  // one insertion, deletion or substitution away

  EditGraph() {
    std::vector<std::string> layer = {""};
    for (int len = 0; len <= kMaxLen; ++len) {
      std::vector<std::string> next;
      for (const auto& s : layer) {
        index.emplace(s, static_cast<int>(strings.size()));
        strings.push_back(s);
        if (len < kMaxLen) {
          for (char ch : {'a', 'b', 'c'}) next.push_back(s + ch);
        }
      }
      layer = std::move(next);
    }
    neighbours.resize(strings.size());
    for (std::size_t id = 0; id < strings.size(); ++id) {
      const auto& s = strings[id];
      auto link = [&](const std::string& t) {
        if (t.size() <= kMaxLen) neighbours[id].push_back(index.at(t));
      };
      for (std::size_t i = 0; i < s.size(); ++i) link(s.substr(0, i) + s.substr(i + 1));
      for (std::size_t i = 0; i < s.size(); ++i) {
        for (char ch : {'a', 'b', 'c'}) {
          if (ch != s[i]) link(s.substr(0, i) + ch + s.substr(i + 1));
        }
      }
      for (std::size_t i = 0; i <= s.size(); ++i) {
        for (char ch : {'a', 'b', 'c'}) link(s.substr(0, i) + ch + s.substr(i));
      }
    }
  }

  // Fewest single-character edits from `source` to every string. An optimal
  // edit script never needs an intermediate string longer than both ends, so
  // the bounded graph gives exact distances.
  std::vector<int> distances_from(int source) const {
    std::vector<int> dist(strings.size(), -1);
    std::vector<int> queue = {source};
    dist[source] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int u = queue[head];
      for (int v : neighbours[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    return dist;
  }
};

std::string relabel(const std::string& s, const std::array<char, 3>& perm) {
  std::string t = s;
  for (auto& ch : t) ch = perm[ch - 'a'];
  return t;
}

// Canonical under relabelling: symbols first appear in the order a, b, c.
bool canonical(const std::string& s) {
  char next = 'a';
  for (char ch : s) {
    if (ch > next) return false;
    if (ch == next) ++next;
  }
  return true;
}

Outcome edit_distance_oracle() {
  Outcome out;
  const auto t0 = Clock::now();
  const EditGraph g;
  const std::array<std::array<char, 3>, 6> perms = {{{'a', 'b', 'c'},
                                                     {'a', 'c', 'b'},
                                                     {'b', 'a', 'c'},
                                                     {'b', 'c', 'a'},
                                                     {'c', 'a', 'b'},
                                                     {'c', 'b', 'a'}}};
  // Exhaustive: distances from each canonical source by breadth-first search;
  // relabelling both strings preserves distance, which covers every source.
  std::uint64_t pairs = 0;
  for (std::size_t s = 0; s < g.strings.size() && out.ok; ++s) {
    if (!canonical(g.strings[s])) continue;
    const auto dist = g.distances_from(static_cast<int>(s));
    for (const auto& perm : perms) {
      const auto a = relabel(g.strings[s], perm);
      for (std::size_t t = 0; t < g.strings.size(); ++t) {
        const auto b = relabel(g.strings[t], perm);
        ++pairs;
        if (levenshtein(a, b) != static_cast<std::size_t>(dist[t])) {
          out.require(false, "mismatch on '" + a + "' / '" + b + "'");
          break;
        }
      }
    }
  }
  // The plain exponential recursion on a random sample of the exhaustive set.
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, g.strings.size() - 1);
  for (int i = 0; i < 2000 && out.ok; ++i) {
    const auto& a = g.strings[pick(rng)];
    const auto& b = g.strings[pick(rng)];
    out.require(levenshtein(a, b) == static_cast<std::size_t>(oracle::levenshtein(a, b)),
                "recursive oracle mismatch on '" + a + "' / '" + b + "'");
  }
  // Random pairs up to length 12 against the memoised recursion.
  std::uniform_int_distribution<int> len(0, 12), sym(0, 4);
  for (int i = 0; i < 1000 && out.ok; ++i) {
    std::string a(len(rng), ' '), b(len(rng), ' ');
    for (auto& ch : a) ch = static_cast<char>('a' + sym(rng));
    for (auto& ch : b) ch = static_cast<char>('a' + sym(rng));
    out.require(levenshtein(a, b) == static_cast<std::size_t>(oracle::levenshtein_memo(a, b)),
                "random pair mismatch on '" + a + "' / '" + b + "'");
  }
  const double secs = seconds_since(t0);
  out.require(secs < kBudget2, fmt("over the 30 s budget (%.1f s)", secs));
  if (out.ok) out.detail = fmt("%llu exhaustive pairs, 2000 recursive, 1000 random, %.2f s",
                               static_cast<unsigned long long>(pairs), secs);
  return out;
}

// 3 ---------------------------------------------------------------------------

Outcome advantage_normalization() {
  Outcome out;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> reward(-4.0, 4.0);
  double worst_mean = 0.0, worst_std = 0.0;
  int tested = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(size(rng));
    for (auto& x : r) x = reward(rng);
    if (population_std(r) < kVarianceFloor) continue;
    ++tested;
    const auto a = group_advantages(r, kVarianceFloor);
    double m = 0.0;
    for (double x : a) m += x;
    m /= static_cast<double>(a.size());
    double ss = 0.0;
    for (double x : a) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(a.size()));
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(sd - 1.0));
  }
  out.require(tested == 1000, "a random group fell below the variance floor");
  out.require(worst_mean < kAdvantageTol, fmt("|mean| reached %.2e", worst_mean));
  out.require(worst_std < kAdvantageTol, fmt("|std - 1| reached %.2e", worst_std));
  for (int g = 2; g <= 16; ++g) {
    const std::vector<double> flat(g, reward(rng));
    for (double x : group_advantages(flat, kVarianceFloor)) out.require(x == 0.0, "zero-variance group not zeroed");
  }
  if (out.ok) out.detail = fmt("max |mean| %.1e, max |std-1| %.1e", worst_mean, worst_std);
  return out;
}

// 4 ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome out;
  const auto t0 = Clock::now();
  double worst = 0.0;
  int coords = 0;
  RlConfig grpo = RlConfig::grpo();
  grpo.beta = 0.1;
  const RlConfig dapo = RlConfig::dapo();
  for (const RlConfig* cfg : std::array<const RlConfig*, 2>{&grpo, &dapo}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto r = gradcheck::run(*cfg, seed, 50, kGradStep);
      out.require(r.coordinates >= 50, "fewer than 50 coordinates checked");
      coords += r.coordinates;
      worst = std::max(worst, r.max_relative_error);
    }
  }
  const double secs = seconds_since(t0);
  out.require(worst < kGradTol, fmt("relative error %.2e", worst));
  out.require(secs < kBudget4, "over the 60 s budget");
  if (out.ok) out.detail = fmt("%d coordinates over 2x10 settings, max rel error %.2e, %.2f s", coords, worst, secs);
  return out;
}

// 5 ---------------------------------------------------------------------------

Outcome objective_agreement() {
  Outcome out;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::uniform_int_distribution<int> count(1, 5), gsize(2, 8), length(1, 20);
  RlConfig cfg = RlConfig::grpo();
  cfg.beta = 0.0;
  cfg.eps_high = cfg.eps_low;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    // One group size and one rollout length per batch.
    const int len = length(rng);
    const int group_size = gsize(rng);
    std::vector<RolloutGroup> groups(count(rng));
    for (auto& g : groups) {
      g.rollouts.resize(group_size);
      for (auto& o : g.rollouts) {
        o.token_ids.assign(len, 0);
        for (int t = 0; t < len; ++t) {
          const double lp = -1.0 + nd(rng);
          o.logprobs_new.push_back(lp);
          o.logprobs_old.push_back(lp + nd(rng));
          o.logprobs_ref.push_back(lp + nd(rng));
        }
        o.reward = nd(rng);
      }
      compute_advantages(g, cfg);
    }
    cfg.algorithm = Algorithm::kDAPO;
    const double d = dapo_loss(groups, cfg);
    cfg.algorithm = Algorithm::kGRPO;
    double mean_grpo = 0.0;
    for (const auto& g : groups) mean_grpo += grpo_loss(g, cfg);
    mean_grpo /= static_cast<double>(groups.size());
    worst = std::max(worst, std::abs(d - mean_grpo));
  }
  out.require(worst <= kObjectiveTol, fmt("difference %.2e", worst));
  if (out.ok) out.detail = fmt("1000 batches, max |dapo - mean grpo| %.1e", worst);
  return out;
}

// 6 ---------------------------------------------------------------------------

Outcome length_penalty_shape() {
  Outcome out;
  double worst = 0.0;
  for (auto [lmax, lcache] : std::vector<std::pair<int, int>>{{128, 32}, {20, 5}, {4096, 512}, {2, 1}}) {
    RlConfig cfg;
    cfg.max_length = lmax;
    cfg.cache_length = lcache;
    const auto knee = static_cast<std::size_t>(lmax - lcache);
    const auto end = static_cast<std::size_t>(lmax);
    out.require(std::abs(length_penalty(knee, cfg)) <= kPenaltyTol, "nonzero at L_max - L_cache");
    out.require(std::abs(length_penalty(end, cfg) + 1.0) <= kPenaltyTol, "not -1 at L_max");
    out.require(std::abs(length_penalty(end + 1, cfg) + 1.0) <= kPenaltyTol, "not -1 beyond L_max");
    // The linear piece, extended to each knee, meets the flat pieces.
    const auto ramp = [&](double len) { return ((lmax - lcache) - len) / lcache; };
    out.require(std::abs(ramp(static_cast<double>(knee)) - 0.0) <= kPenaltyTol, "discontinuous at L_max - L_cache");
    out.require(std::abs(ramp(static_cast<double>(end)) + 1.0) <= kPenaltyTol, "discontinuous at L_max");
    out.require(std::abs(length_penalty(knee + 1, cfg) - ramp(static_cast<double>(knee + 1))) <= kPenaltyTol,
                "first step after the knee off the ramp");
    for (std::size_t len = 0; len <= end + 2 * static_cast<std::size_t>(lcache) && len < 10000; ++len) {
      const double err = std::abs(length_penalty(len, cfg) - oracle::soft_overlong(len, lmax, lcache));
      worst = std::max(worst, err);
    }
  }
  out.require(worst <= kPenaltyTol, fmt("max error %.2e", worst));
  if (out.ok) out.detail = fmt("4 (L_max, L_cache) settings, max error %.1e", worst);
  return out;
}

// 7 ---------------------------------------------------------------------------

Outcome dynamic_sampling() {
  Outcome out;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ngroups(1, 12), gsize(2, 16), level(0, 7);
  std::bernoulli_distribution flat(0.4);
  const RlConfig cfg = RlConfig::dapo();
  int total_groups = 0, total_degenerate = 0;
  for (int batch = 0; batch < 1000; ++batch) {
    std::vector<RolloutGroup> groups(ngroups(rng));
    int degenerate = 0;
    for (auto& g : groups) {
      g.rollouts.resize(gsize(rng));
      // Rewards sit on a grid of spacing 0.5, so distinct values are far
      // above the floor and equal values are exactly equal.
      const bool all_same = flat(rng);
      const double base = -2.0 + 0.5 * level(rng);
      for (auto& o : g.rollouts) o.reward = all_same ? base : -2.0 + 0.5 * level(rng);
      bool same = true;
      for (const auto& o : g.rollouts) same = same && o.reward == g.rollouts.front().reward;
      degenerate += same ? 1 : 0;
    }
    const auto kept = dynamic_sample_filter(groups, cfg);
    for (const auto& g : kept) {
      bool same = true;
      for (const auto& o : g.rollouts) same = same && o.reward == g.rollouts.front().reward;
      out.require(!same, "a degenerate group survived the filter");
    }
    out.require(kept.size() == groups.size() - static_cast<std::size_t>(degenerate), "filter dropped a live group");
    const double expected = static_cast<double>(degenerate) / static_cast<double>(groups.size());
    out.require(zero_variance_fraction(groups, cfg) == expected, "zero_variance_fraction differs from the count");
    total_groups += static_cast<int>(groups.size());
    total_degenerate += degenerate;
  }
  if (out.ok) out.detail = fmt("1000 batches, %d of %d groups degenerate", total_degenerate, total_groups);
  return out;
}

// 8 ---------------------------------------------------------------------------

Outcome pass_at_k_exact() {
  Outcome out;
  double worst = 0.0;
  int triples = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        worst = std::max(worst, std::abs(pass_at_k(n, c, k) - oracle::pass_at_k(n, c, k)));
        ++triples;
      }
    }
  }
  out.require(worst <= kPassAtKTol, fmt("max error %.2e", worst));
  if (out.ok) out.detail = fmt("%d (n, c, k) triples, max error %.1e", triples, worst);
  return out;
}

// 9 and 10 --------------------------------------------------------------------

double window_mean(const std::vector<StepMetrics>& m, std::size_t from, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = from; i < from + count; ++i) s += m[i].mean_reward;
  return s / static_cast<double>(count);
}

Outcome toy_training() {
  Outcome out;
  const auto t0 = Clock::now();
  const TrainerConfig cfg;  // the reference configuration
  out.require(cfg.seed == 7 && cfg.steps == 300 && cfg.rl.group_size == 8 && cfg.batch_size == 8 &&
                  cfg.mode == CorrectnessMode::kESStar && cfg.rl.algorithm == Algorithm::kGRPO,
              "reference configuration drifted");
  const auto run = train(cfg, TaskSource::synthetic(cfg));
  const auto& m = run.metrics;
  out.require(m.size() == 300, "wrong number of steps");
  if (!out.ok) return out;
  const double rise = window_mean(m, m.size() - 20, 20) - window_mean(m, 0, 20);
  const double em = run.final_heldout_exact_match;

  TrainerConfig fo = cfg;
  fo.mode = CorrectnessMode::kFormatOnly;
  const auto baseline = train(fo, TaskSource::synthetic(fo));
  const double gain = baseline.final_heldout_exact_match - baseline.initial_heldout_exact_match;
  const double secs = seconds_since(t0);

  out.require(rise >= kMinRewardRise, fmt("reward rise %.3f < %.1f", rise, kMinRewardRise));
  out.require(em >= kMinHeldoutEM, fmt("held-out exact match %.3f < %.2f", em, kMinHeldoutEM));
  out.require(gain <= kMaxFormatOnlyGain, fmt("FORMAT_ONLY exact-match gain %.3f", gain));
  out.require(secs < kBudget9, "over the 5 min budget");
  if (out.ok) {
    out.detail = fmt("reward rise %.3f, held-out EM %.3f -> %.3f, FORMAT_ONLY EM %.3f -> %.3f, %.2f s", rise,
                     run.initial_heldout_exact_match, em, baseline.initial_heldout_exact_match,
                     baseline.final_heldout_exact_match, secs);
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  Outcome out;
  std::string tmpl = (std::filesystem::temp_directory_path() / "migrl-accept-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) {
    out.require(false, "cannot create a scratch directory");
    return out;
  }
  const std::filesystem::path dir = tmpl;
  const TrainerConfig cfg;
  train(cfg, TaskSource::synthetic(cfg), TrainOutputs{dir / "a"});
  train(cfg, TaskSource::synthetic(cfg), TrainOutputs{dir / "b"});
  const auto ma = slurp(dir / "a" / "metrics.jsonl"), mb = slurp(dir / "b" / "metrics.jsonl");
  const auto ca = slurp(dir / "a" / "checkpoint.json"), cb = slurp(dir / "b" / "checkpoint.json");
  std::filesystem::remove_all(dir);
  out.require(!ma.empty() && !ca.empty(), "missing outputs");
  out.require(ma == mb, "metrics logs differ");
  out.require(ca == cb, "checkpoints differ");
  if (out.ok) out.detail = fmt("metrics %zu bytes, checkpoint %zu bytes, identical", ma.size(), ca.size());
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*check)();
  };
  const Criterion criteria[] = {
      {1, "reward exactness", reward_exactness},
      {2, "edit distance matches oracles", edit_distance_oracle},
      {3, "advantage normalization", advantage_normalization},
      {4, "gradients match finite differences", gradient_correctness},
      {5, "DAPO equals mean GRPO on equal lengths", objective_agreement},
      {6, "soft overlong penalty", length_penalty_shape},
      {7, "dynamic sampling", dynamic_sampling},
      {8, "pass@k matches enumeration", pass_at_k_exact},
      {9, "toy end-to-end training", toy_training},
      {10, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.ok ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
