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

// Synthetic code-migration tasks in a miniature call language, with a
// deterministic rewrite oracle that produces the ground-truth target code.
//
// A snippet is one to three lines of the form `<var> = <fn>(<args>)`.

#ifndef MIGRL_TOYENV_HPP_
#define MIGRL_TOYENV_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "migrl/error.hpp"
#include "migrl/policy.hpp"
#include "migrl/vocabulary.hpp"

namespace migrl {

struct MigrationEntry {
  std::string dependency;
  std::string target_version;
  std::string update_info;
  std::string old_code;
  std::string target_code;
  // Fields of a loaded record that the schema does not know about.
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const MigrationEntry&, const MigrationEntry&) = default;
};

enum class RuleKind { kRename, kAddParam, kReorderParams, kWrapNamespace };

inline std::string_view to_string(RuleKind k) {
  switch (k) {
    case RuleKind::kRename: return "RENAME";
    case RuleKind::kAddParam: return "ADD_PARAM";
    case RuleKind::kReorderParams: return "REORDER_PARAMS";
    case RuleKind::kWrapNamespace: return "WRAP_NAMESPACE";
  }
  return "?";
}

struct RewriteRule {
  RuleKind kind = RuleKind::kRename;
  std::string function;           // the API the rule rewrites
  std::string new_name;           // RENAME
  std::string param_name;         // ADD_PARAM
  std::string param_value;        // ADD_PARAM
  std::vector<int> permutation;   // REORDER_PARAMS: new arg i = old arg permutation[i]
  std::string ns;                 // WRAP_NAMESPACE

  static RewriteRule rename(std::string from, std::string to) {
    RewriteRule r;
    r.kind = RuleKind::kRename;
    r.function = std::move(from);
    r.new_name = std::move(to);
    return r;
  }
  static RewriteRule add_param(std::string fn, std::string name, std::string value) {
    RewriteRule r;
    r.kind = RuleKind::kAddParam;
    r.function = std::move(fn);
    r.param_name = std::move(name);
    r.param_value = std::move(value);
    return r;
  }
  static RewriteRule reorder(std::string fn, std::vector<int> perm) {
    RewriteRule r;
    r.kind = RuleKind::kReorderParams;
    r.function = std::move(fn);
    r.permutation = std::move(perm);
    return r;
  }
  static RewriteRule wrap(std::string fn, std::string ns) {
    RewriteRule r;
    r.kind = RuleKind::kWrapNamespace;
    r.function = std::move(fn);
    r.ns = std::move(ns);
    return r;
  }

  // Throws ValidationError if the payload does not fit the kind.
  void validate() const {
    auto identifier = [](std::string_view s) {
      return !s.empty() && !(s[0] >= '0' && s[0] <= '9') &&
             std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
             });
    };
    if (!identifier(function)) throw ValidationError("rewrite rule: bad function name '" + function + "'");
    switch (kind) {
      case RuleKind::kRename:
        if (!identifier(new_name)) throw ValidationError("rewrite rule: bad new name '" + new_name + "'");
        break;
      case RuleKind::kAddParam:
        if (!identifier(param_name) || param_value.empty()) throw ValidationError("rewrite rule: bad parameter");
        break;
      case RuleKind::kReorderParams: {
        std::vector<int> sorted = permutation;
        std::sort(sorted.begin(), sorted.end());
        std::vector<int> iota(permutation.size());
        std::iota(iota.begin(), iota.end(), 0);
        if (permutation.size() < 2 || sorted != iota) throw ValidationError("rewrite rule: bad permutation");
        break;
      }
      case RuleKind::kWrapNamespace:
        if (!identifier(ns)) throw ValidationError("rewrite rule: bad namespace '" + ns + "'");
        break;
    }
  }

  std::string describe() const {
    switch (kind) {
      case RuleKind::kRename:
        return function + "() was renamed to " + new_name + "(); call " + new_name + " instead.";
      case RuleKind::kAddParam:
        return function + "() gained a required keyword argument " + param_name + "; pass " + param_name + "=" +
               param_value + ".";
      case RuleKind::kReorderParams: {
        std::string order;
        for (std::size_t i = 0; i < permutation.size(); ++i) {
          if (i) order += ", ";
          order += "arg" + std::to_string(permutation[i]);
        }
        return function + "() now takes its positional arguments in the order (" + order + ").";
      }
      case RuleKind::kWrapNamespace:
        return function + "() moved into the " + ns + " namespace; call " + ns + "." + function + " instead.";
    }
    return {};
  }

  friend bool operator==(const RewriteRule&, const RewriteRule&) = default;
};

// Compact text form used on the command line:
//   RENAME:old:new  ADD_PARAM:fn:name:value  REORDER_PARAMS:fn:1,0  WRAP_NAMESPACE:fn:ns
inline RewriteRule parse_rewrite_rule(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.emplace_back(text.substr(start, colon == std::string_view::npos ? text.npos : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  auto bad = [&] { return ConfigError("bad rewrite rule '" + std::string(text) + "'"); };
  RewriteRule r;
  if (parts[0] == "RENAME" && parts.size() == 3) {
    r = RewriteRule::rename(parts[1], parts[2]);
  } else if (parts[0] == "ADD_PARAM" && parts.size() == 4) {
    r = RewriteRule::add_param(parts[1], parts[2], parts[3]);
  } else if (parts[0] == "WRAP_NAMESPACE" && parts.size() == 3) {
    r = RewriteRule::wrap(parts[1], parts[2]);
  } else if (parts[0] == "REORDER_PARAMS" && parts.size() == 3) {
    std::vector<int> perm;
    std::size_t pos = 0;
    const std::string& list = parts[2];
    while (pos <= list.size()) {
      const auto comma = std::min(list.find(',', pos), list.size());
      try {
        std::size_t used = 0;
        const auto item = list.substr(pos, comma - pos);
        perm.push_back(std::stoi(item, &used));
        if (used != item.size()) throw bad();
      } catch (const std::logic_error&) {
        throw bad();
      }
      pos = comma + 1;
    }
    r = RewriteRule::reorder(parts[1], std::move(perm));
  } else {
    throw bad();
  }
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return r;
}

inline std::string format_rewrite_rule(const RewriteRule& r) {
  std::string s(to_string(r.kind));
  s += ":" + r.function + ":";
  switch (r.kind) {
    case RuleKind::kRename: return s + r.new_name;
    case RuleKind::kAddParam: return s + r.param_name + ":" + r.param_value;
    case RuleKind::kWrapNamespace: return s + r.ns;
    case RuleKind::kReorderParams:
      for (std::size_t i = 0; i < r.permutation.size(); ++i) s += (i ? "," : "") + std::to_string(r.permutation[i]);
      return s;
  }
  return s;
}

namespace detail {

inline bool ident_char(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; }

// Offsets of `name(` call sites not preceded by an identifier char or '.'.
inline std::vector<std::size_t> call_sites(std::string_view code, std::string_view name) {
  std::vector<std::size_t> sites;
  for (auto pos = code.find(name); pos != std::string_view::npos; pos = code.find(name, pos + 1)) {
    const bool left_ok = pos == 0 || (!ident_char(code[pos - 1]) && code[pos - 1] != '.');
    const auto after = pos + name.size();
    if (left_ok && after < code.size() && code[after] == '(') sites.push_back(pos);
  }
  return sites;
}

// Index of the ')' matching the '(' at `open`.
inline std::size_t matching_paren(std::string_view code, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < code.size(); ++i) {
    if (code[i] == '(') ++depth;
    if (code[i] == ')' && --depth == 0) return i;
  }
  throw ValidationError("unbalanced call in code");
}

inline std::vector<std::string> split_args(std::string_view args) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : args) {
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
      continue;
    }
    cur.push_back(c);
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  for (auto& a : out) {
    auto b = a.find_first_not_of(' ');
    auto e = a.find_last_not_of(' ');
    a = b == std::string::npos ? std::string() : a.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace detail

// Rewrites every call site of rule.function once. Text outside call sites is
// left byte-identical. Throws if the code has no call site for the rule,
// unless `require_match` is false (then the input comes back unchanged).
inline std::string oracle_migrate(std::string_view old_code, const RewriteRule& rule, bool require_match = true) {
  rule.validate();
  const auto sites = detail::call_sites(old_code, rule.function);
  if (sites.empty()) {
    if (require_match) throw ValidationError("rewrite rule references '" + rule.function + "', absent from code");
    return std::string(old_code);
  }
  std::string out;
  std::size_t copied = 0;
  for (auto site : sites) {
    if (site < copied) continue;  // inside an argument list we already rewrote
    const auto open = site + rule.function.size();
    const auto close = detail::matching_paren(old_code, open);
    out.append(old_code.substr(copied, site - copied));
    const auto args_text = old_code.substr(open + 1, close - open - 1);
    switch (rule.kind) {
      case RuleKind::kRename:
        out += rule.new_name;
        out.append(old_code.substr(open, close + 1 - open));
        break;
      case RuleKind::kWrapNamespace:
        out += rule.ns + "." + rule.function;
        out.append(old_code.substr(open, close + 1 - open));
        break;
      case RuleKind::kAddParam:
        out += rule.function + "(";
        out.append(args_text);
        if (!detail::split_args(args_text).empty()) out += ", ";
        out += rule.param_name + "=" + rule.param_value + ")";
        break;
      case RuleKind::kReorderParams: {
        const auto args = detail::split_args(args_text);
        if (args.size() != rule.permutation.size()) {
          throw ValidationError("call to " + rule.function + " has " + std::to_string(args.size()) +
                                " arguments, rule expects " + std::to_string(rule.permutation.size()));
        }
        out += rule.function + "(";
        for (std::size_t i = 0; i < args.size(); ++i) {
          if (i) out += ", ";
          out += args[static_cast<std::size_t>(rule.permutation[i])];
        }
        out += ")";
        break;
      }
    }
    copied = close + 1;
  }
  out.append(old_code.substr(copied));
  return out;
}

namespace toy {

inline const std::vector<std::string>& variables() {
  static const std::vector<std::string> v = {"a", "b", "c", "x", "y", "z", "n", "k", "m", "w",
                                             "arr", "data", "out", "res", "val", "idx"};
  return v;
}

inline const std::vector<std::string>& functions() {
  static const std::vector<std::string> f = {"f1", "f2", "f3", "g", "h", "load", "read", "mean", "total", "scale"};
  return f;
}

inline const std::vector<std::string>& namespaces() {
  static const std::vector<std::string> n = {"np", "pd", "tl", "io"};
  return n;
}

struct Param {
  const char* name;
  const char* value;
};

inline const std::vector<Param>& params() {
  static const std::vector<Param> p = {{"axis", "0"}, {"keepdims", "1"}, {"copy", "0"}, {"mode", "2"}};
  return p;
}

// Structural tokens the toy policy emits as single symbols.
inline const std::vector<std::string>& structural_tokens() {
  static const std::vector<std::string> s = {"</think>", "<answer>", "```python\n", "\n```", "</answer>"};
  return s;
}

inline constexpr std::string_view kAnswerOpen = "</think><answer>```python\n";
inline constexpr std::string_view kAnswerClose = "\n```</answer>";

class Rng {
 public:
  explicit Rng(std::initializer_list<std::uint64_t> key) : rng_(key) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_.uniform() * static_cast<double>(n)); }
  template <typename T>
  const T& pick(const std::vector<T>& xs) { return xs[below(xs.size())]; }
  bool coin(double p) { return rng_.uniform() < p; }

 private:
  KeyedRng rng_;
};

inline std::string render_call(const std::string& fn, const std::vector<std::string>& args) {
  std::string s = fn + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) s += ", ";
    s += args[i];
  }
  return s + ")";
}

inline std::vector<std::string> random_args(Rng& rng, std::size_t count) {
  std::vector<std::string> args;
  while (args.size() < count) {
    std::string a = rng.coin(0.2) ? std::to_string(rng.below(10)) : rng.pick(variables());
    if (std::find(args.begin(), args.end(), a) == args.end()) args.push_back(a);
  }
  return args;
}

// Snippet of `statements` lines; at least one line calls rule.function and no
// line mentions a name the rule introduces.
inline std::string random_snippet(Rng& rng, int statements, const RewriteRule& rule) {
  std::vector<std::string> banned = {rule.function, rule.new_name};
  std::vector<std::string> others;
  for (const auto& f : functions()) {
    if (std::find(banned.begin(), banned.end(), f) == banned.end()) others.push_back(f);
  }
  const std::size_t arity = rule.kind == RuleKind::kReorderParams ? rule.permutation.size() : 0;
  const auto target_line = rng.below(static_cast<std::size_t>(statements));
  std::string code;
  for (int s = 0; s < statements; ++s) {
    const bool call_target = static_cast<std::size_t>(s) == target_line || rng.coin(0.25);
    const std::string fn = call_target ? rule.function : rng.pick(others);
    const std::size_t nargs = call_target && arity ? arity : 1 + rng.below(3);
    std::string lhs = rng.pick(variables());
    if (s) code += "\n";
    code += lhs + " = " + render_call(fn, random_args(rng, nargs));
  }
  return code;
}

inline RewriteRule random_rule(Rng& rng, int difficulty) {
  const std::vector<RuleKind> kinds_by_difficulty[] = {
      {RuleKind::kRename, RuleKind::kWrapNamespace},
      {RuleKind::kRename, RuleKind::kWrapNamespace, RuleKind::kAddParam},
      {RuleKind::kRename, RuleKind::kWrapNamespace, RuleKind::kAddParam, RuleKind::kReorderParams}};
  const auto& kinds = kinds_by_difficulty[difficulty - 1];
  const auto kind = kinds[rng.below(kinds.size())];
  const std::string fn = rng.pick(functions());
  switch (kind) {
    case RuleKind::kRename: {
      std::string to;
      do {
        to = rng.pick(functions());
      } while (to == fn);
      return RewriteRule::rename(fn, to);
    }
    case RuleKind::kWrapNamespace:
      return RewriteRule::wrap(fn, rng.pick(namespaces()));
    case RuleKind::kAddParam: {
      const auto& p = rng.pick(params());
      return RewriteRule::add_param(fn, p.name, p.value);
    }
    case RuleKind::kReorderParams: {
      const std::size_t n = 2 + rng.below(2);
      std::vector<int> perm(n);
      do {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      } while (std::is_sorted(perm.begin(), perm.end()));
      return RewriteRule::reorder(fn, perm);
    }
  }
  return {};
}

inline void check_difficulty(int difficulty) {
  if (difficulty < 1 || difficulty > 3) throw std::invalid_argument("difficulty must be in [1, 3]");
}

}  // namespace toy

struct GeneratedTask {
  MigrationEntry entry;
  RewriteRule rule;
};

// A task whose snippet exercises the given rule. Pure in (seed, difficulty, rule).
inline GeneratedTask gen_task_with_rule(std::uint64_t seed, int difficulty, const RewriteRule& rule) {
  toy::check_difficulty(difficulty);
  rule.validate();
  toy::Rng rng{seed, static_cast<std::uint64_t>(difficulty), 0x736e6970ULL};
  GeneratedTask task;
  task.rule = rule;
  task.entry.dependency = "toylib";
  task.entry.target_version = "2." + std::to_string(seed % 10) + ".0";
  task.entry.update_info = rule.describe();
  task.entry.old_code = toy::random_snippet(rng, difficulty, rule);
  task.entry.target_code = oracle_migrate(task.entry.old_code, rule);
  return task;
}

// Draws a rule (kind mix widens with difficulty) and a snippet for it.
// Pure in (seed, difficulty).
inline GeneratedTask gen_task(std::uint64_t seed, int difficulty) {
  toy::check_difficulty(difficulty);
  toy::Rng rng{seed, static_cast<std::uint64_t>(difficulty), 0x72756c65ULL};
  return gen_task_with_rule(seed, difficulty, toy::random_rule(rng, difficulty));
}

// Letters, digits, `_=(),. \n"`, BOS/EOS and the five answer-scaffold tokens.
inline Vocabulary toy_vocabulary() {
  std::vector<std::string> symbols = toy::structural_tokens();
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
  for (char c : std::string_view("_=(),. \n\"")) symbols.emplace_back(1, c);
  return Vocabulary(symbols);
}

// The answer a completion should contain, wrapped in the answer scaffold (the
// think block is pre-opened by the prompt).
inline std::string answer_text(std::string_view code) {
  return std::string(toy::kAnswerOpen) + std::string(code) + std::string(toy::kAnswerClose);
}

// Position-aligned toy prompt: recalled = scaffolded old code, documented =
// scaffolded code after the documented update.
inline ToyPrompt make_toy_prompt(const MigrationEntry& e, const Vocabulary& vocab) {
  return ToyPrompt{vocab.tokenize(answer_text(e.old_code)), vocab.tokenize(answer_text(e.target_code))};
}

}  // namespace migrl

#endif  // MIGRL_TOYENV_HPP_
