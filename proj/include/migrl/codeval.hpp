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

// Rule-based rewards for code-migration rollouts: output parsing, a hermetic
// structural syntax checker, string-similarity metrics and the composite
// format + correctness reward.

#ifndef MIGRL_CODEVAL_HPP_
#define MIGRL_CODEVAL_HPP_

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "migrl/error.hpp"
#include "migrl/process.hpp"

namespace migrl {

enum class CorrectnessMode { kEM, kES, kEMStar, kESStar, kFormatOnly };

inline std::string_view to_string(CorrectnessMode m) {
  switch (m) {
    case CorrectnessMode::kEM: return "EM";
    case CorrectnessMode::kES: return "ES";
    case CorrectnessMode::kEMStar: return "EM_STAR";
    case CorrectnessMode::kESStar: return "ES_STAR";
    case CorrectnessMode::kFormatOnly: return "FORMAT_ONLY";
  }
  return "?";
}

inline CorrectnessMode parse_correctness_mode(std::string_view s) {
  for (auto m : {CorrectnessMode::kEM, CorrectnessMode::kES, CorrectnessMode::kEMStar,
                 CorrectnessMode::kESStar, CorrectnessMode::kFormatOnly}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown correctness mode '" + std::string(s) +
                    "' (expected EM, ES, EM_STAR, ES_STAR or FORMAT_ONLY)");
}

struct ParsedOutput {
  std::string raw_text;
  std::optional<std::string> think_text;
  std::optional<std::string> answer_text;
  // Body of the first fenced block, without the fence lines.
  std::optional<std::string> code;
  bool format_ok = false;
  bool syntax_ok = false;
};

struct RewardBreakdown {
  double format = 0.0;
  double correctness = 0.0;
  double length_penalty = 0.0;
  double total = 0.0;
};

// Decides whether a code snippet is syntactically acceptable.
using SyntaxChecker = std::function<bool(std::string_view)>;

namespace detail {

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; });
}

inline std::string_view rstrip(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (true) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      return lines;
    }
    lines.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
}

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

struct FencedBlocks {
  std::size_t count = 0;
  std::optional<std::string> first;
};

// Scans `text` line by line for ```-fenced blocks. An opening fence is a line
// starting with three backticks; the closing fence is a line that is exactly
// three backticks (trailing whitespace ignored).
inline FencedBlocks find_fenced_blocks(std::string_view text) {
  FencedBlocks result;
  std::size_t pos = 0;
  std::optional<std::size_t> body_start;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    auto line = text.substr(pos, end - pos);
    if (!body_start) {
      if (line.starts_with("```")) body_start = nl == std::string_view::npos ? text.size() : nl + 1;
    } else if (rstrip(line) == "```") {
      if (result.count++ == 0) {
        std::string body(text.substr(*body_start, pos - std::min(pos, *body_start)));
        if (!body.empty() && body.back() == '\n') body.pop_back();
        result.first = std::move(body);
      }
      body_start.reset();
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return result;
}

}  // namespace detail

// Normalizes code for comparison: LF line endings, no trailing whitespace, no
// leading/trailing blank lines, common indentation removed.
inline std::string normalize_code(std::string_view code) {
  std::string lf;
  lf.reserve(code.size());
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i] == '\r') {
      lf.push_back('\n');
      if (i + 1 < code.size() && code[i + 1] == '\n') ++i;
    } else {
      lf.push_back(code[i]);
    }
  }
  std::vector<std::string_view> lines;
  for (auto line : detail::split_lines(lf)) lines.push_back(detail::rstrip(line));
  while (!lines.empty() && lines.front().empty()) lines.erase(lines.begin());
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  std::optional<std::string_view> common;
  for (auto line : lines) {
    if (line.empty()) continue;
    auto indent = line.substr(0, line.find_first_not_of(" \t"));
    if (!common) {
      common = indent;
    } else {
      std::size_t k = 0;
      while (k < common->size() && k < indent.size() && (*common)[k] == indent[k]) ++k;
      common = common->substr(0, k);
    }
  }
  const std::size_t strip = common ? common->size() : 0;
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    if (!lines[i].empty()) out.append(lines[i].substr(strip));
  }
  return out;
}

// Hermetic Python-shaped syntax check. Accepts code iff brackets balance
// outside strings and comments, single-line strings close on their line,
// triple-quoted strings close before EOF, no indentation mixes tabs and
// spaces, every block header (a depth-0 line ending in ':') is followed by a
// more-indented non-blank line, and the normalized code is non-empty.
inline bool structural_syntax_check(std::string_view code) {
  if (normalize_code(code).empty()) return false;

  const auto lines = detail::split_lines(code);
  std::vector<char> brackets;
  std::optional<std::string> open_triple;  // delimiter of a multi-line string

  auto indent_of = [](std::string_view line) { return line.substr(0, line.find_first_not_of(" \t")); };

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto line = detail::rstrip(lines[li]);
    if (!open_triple) {
      auto indent = indent_of(line);
      if (indent.find(' ') != std::string_view::npos && indent.find('\t') != std::string_view::npos) return false;
    }
    char last_significant = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      if (open_triple) {
        auto close = line.find(*open_triple, i);
        if (close == std::string_view::npos) break;
        i = close + 3;
        open_triple.reset();
        last_significant = '"';
        continue;
      }
      const char c = line[i];
      if (c == '#') break;
      if (c == '\'' || c == '"') {
        std::string triple(3, c);
        if (line.substr(i, 3) == triple) {
          open_triple = triple;
          i += 3;
          continue;
        }
        std::size_t j = i + 1;
        bool closed = false;
        while (j < line.size()) {
          if (line[j] == '\\') {
            j += 2;
            continue;
          }
          if (line[j] == c) {
            closed = true;
            break;
          }
          ++j;
        }
        if (!closed) return false;
        i = j + 1;
        last_significant = c;
        continue;
      }
      if (c == '(' || c == '[' || c == '{') {
        brackets.push_back(c);
      } else if (c == ')' || c == ']' || c == '}') {
        const char want = c == ')' ? '(' : c == ']' ? '[' : '{';
        if (brackets.empty() || brackets.back() != want) return false;
        brackets.pop_back();
      }
      if (c != ' ' && c != '\t') last_significant = c;
      ++i;
    }
    if (last_significant == ':' && brackets.empty() && !open_triple) {
      const auto header_indent = indent_of(line).size();
      std::size_t next = li + 1;
      while (next < lines.size() && detail::is_blank(lines[next])) ++next;
      if (next == lines.size()) return false;
      if (indent_of(lines[next]).size() <= header_indent) return false;
    }
  }
  return brackets.empty() && !open_triple;
}

inline SyntaxChecker hermetic_syntax_checker() {
  return [](std::string_view code) { return structural_syntax_check(code); };
}

// Pipes the code to an external command; exit status 0 means valid, any other
// status or a timeout means invalid.
class ExternalSyntaxChecker {
 public:
  explicit ExternalSyntaxChecker(std::vector<std::string> argv,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(5))
      : argv_(std::move(argv)), timeout_(timeout) {
    if (argv_.empty()) throw ConfigError("syntax_checker.command is empty");
    if (!find_executable(argv_.front())) {
      throw ConfigError("syntax_checker.command: executable not found: " + argv_.front());
    }
  }

  bool operator()(std::string_view code) const {
    ProcessOptions opts;
    opts.argv = argv_;
    opts.stdin_data = std::string(code);
    opts.timeout = timeout_;
    return run_process(opts).ok();
  }

 private:
  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
};

// Splits a rollout into think/answer/code. Never throws; malformed text just
// comes back with format_ok = false. Text that has no "<think>" but closes one
// before "<answer>" is treated as opening the think block at offset 0, which is
// the shape produced when the prompt pre-seeds "<think>".
inline ParsedOutput parse_output(std::string_view raw, const SyntaxChecker& checker) {
  static constexpr std::string_view kThinkOpen = "<think>", kThinkClose = "</think>";
  static constexpr std::string_view kAnswerOpen = "<answer>", kAnswerClose = "</answer>";
  constexpr auto npos = std::string_view::npos;

  ParsedOutput p;
  p.raw_text = std::string(raw);

  const auto think_open = raw.find(kThinkOpen);
  const auto think_close = raw.find(kThinkClose);
  const auto answer_open = raw.find(kAnswerOpen);
  const auto answer_close = answer_open == npos ? npos : raw.find(kAnswerClose, answer_open + kAnswerOpen.size());

  const bool implicit_think =
      think_open == npos && think_close != npos && (answer_open == npos || think_close < answer_open);
  std::optional<std::size_t> think_body;
  if (think_open != npos) {
    think_body = think_open + kThinkOpen.size();
  } else if (implicit_think) {
    think_body = 0;
  }
  if (think_body && think_close != npos && think_close >= *think_body) {
    p.think_text = std::string(raw.substr(*think_body, think_close - *think_body));
  } else if (think_body) {
    const auto later_close = raw.find(kThinkClose, *think_body);
    if (later_close != npos) p.think_text = std::string(raw.substr(*think_body, later_close - *think_body));
  }

  if (answer_open != npos && answer_close != npos) {
    const auto body = answer_open + kAnswerOpen.size();
    p.answer_text = std::string(raw.substr(body, answer_close - body));
  }

  detail::FencedBlocks blocks;
  if (p.answer_text) {
    blocks = detail::find_fenced_blocks(*p.answer_text);
  } else if (answer_open != npos) {
    blocks = detail::find_fenced_blocks(raw.substr(answer_open + kAnswerOpen.size()));
  } else {
    blocks = detail::find_fenced_blocks(raw);
  }
  p.code = blocks.first;

  const bool tags_unique = detail::count_occurrences(raw, kThinkOpen) == (implicit_think ? 0u : 1u) &&
                           detail::count_occurrences(raw, kThinkClose) == 1 &&
                           detail::count_occurrences(raw, kAnswerOpen) == 1 &&
                           detail::count_occurrences(raw, kAnswerClose) == 1;
  if (tags_unique && think_body && think_close != npos && answer_open != npos && answer_close != npos &&
      *think_body <= think_close && think_close < answer_open) {
    const auto gap_start = think_close + kThinkClose.size();
    const bool gap_blank = detail::is_blank(raw.substr(gap_start, answer_open - gap_start));
    const bool tail_blank = detail::is_blank(raw.substr(answer_close + kAnswerClose.size()));
    p.format_ok = gap_blank && tail_blank && blocks.count == 1;
  }

  p.syntax_ok = p.code.has_value() && checker(*p.code);
  return p;
}

inline ParsedOutput parse_output(std::string_view raw) { return parse_output(raw, hermetic_syntax_checker()); }

inline double format_reward(const ParsedOutput& p) { return p.format_ok ? 1.0 : -1.0; }

// Minimum number of single-byte insertions, deletions and substitutions.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

// 1 - levenshtein / max length, on normalized code. Two empty snippets are
// identical (similarity 1).
inline double edit_similarity(std::string_view pred, std::string_view target) {
  const auto a = normalize_code(pred);
  const auto b = normalize_code(target);
  const auto longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

inline bool exact_match(std::string_view pred, std::string_view target) {
  return normalize_code(pred) == normalize_code(target);
}

inline constexpr double kCorrectnessMax = 2.0;
inline constexpr double kCorrectnessMin = -2.0;
inline constexpr double kValidNoMatch = -1.5;

// Correctness term. The starred modes gate the string metric on syntax
// validity; the plain modes are the ungated ablation arms scaled to [-2, 2].
// Missing code always scores the minimum.
inline double correctness_reward(const ParsedOutput& p, std::string_view target, CorrectnessMode mode) {
  if (mode == CorrectnessMode::kFormatOnly) {
    throw std::invalid_argument("correctness_reward: FORMAT_ONLY has no correctness term");
  }
  if (!p.code) return kCorrectnessMin;
  const std::string& code = *p.code;
  switch (mode) {
    case CorrectnessMode::kEMStar:
      if (!p.syntax_ok) return kCorrectnessMin;
      return exact_match(code, target) ? kCorrectnessMax : kValidNoMatch;
    case CorrectnessMode::kESStar:
      if (!p.syntax_ok) return kCorrectnessMin;
      return edit_similarity(code, target) * 3.5 - 1.5;
    case CorrectnessMode::kEM:
      return exact_match(code, target) ? kCorrectnessMax : kCorrectnessMin;
    case CorrectnessMode::kES:
      return edit_similarity(code, target) * 4.0 - 2.0;
    case CorrectnessMode::kFormatOnly:
      break;
  }
  return 0.0;
}

inline RewardBreakdown composite_reward(const ParsedOutput& p, std::string_view target, CorrectnessMode mode,
                                        double length_pen = 0.0) {
  if (!(length_pen >= -1.0 && length_pen <= 0.0)) {
    throw std::invalid_argument("composite_reward: length penalty must lie in [-1, 0]");
  }
  RewardBreakdown r;
  r.format = format_reward(p);
  r.correctness = mode == CorrectnessMode::kFormatOnly ? 0.0 : correctness_reward(p, target, mode);
  r.length_penalty = length_pen;
  r.total = r.format + r.correctness + r.length_penalty;
  return r;
}

}  // namespace migrl

#endif  // MIGRL_CODEVAL_HPP_
