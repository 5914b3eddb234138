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

// (output, target) pairs with hand-labelled parse results. Correctness values
// are derived from the labels by the oracles, never by the library.

#ifndef MIGRL_TESTS_REWARD_FIXTURES_HPP_
#define MIGRL_TESTS_REWARD_FIXTURES_HPP_

#include <optional>
#include <string>
#include <vector>

namespace fixtures {

struct RewardCase {
  std::string name;
  std::string output;
  std::string target;
  bool format_ok;
  std::optional<std::string> code;  // normalized
  bool valid;
};

inline std::string wrap(const std::string& code) {
  return "<think>reasoning</think>\n<answer>\n```python\n" + code + "\n```\n</answer>";
}

inline std::vector<RewardCase> reward_cases() {
  return {
      {"exact", wrap("y = f2(x)"), "y = f2(x)", true, "y = f2(x)", true},
      {"stale_call", wrap("y = f1(x)"), "y = f2(x)", true, "y = f1(x)", true},
      {"unbalanced_paren", wrap("y = f2(x"), "y = f2(x)", true, "y = f2(x", false},
      {"no_tags_no_fence", "y = f2(x)", "y = f2(x)", false, std::nullopt, false},
      {"answer_only", "<answer>```python\ny = f2(x)\n```</answer>", "y = f2(x)", false, "y = f2(x)", true},
      {"implicit_think", "reasoning</think><answer>```python\ny = f2(x)\n```</answer>", "y = f2(x)", true,
       "y = f2(x)", true},
      {"two_blocks", "<think>a</think><answer>```python\nx = 1\n```\n```python\ny = 2\n```</answer>", "x = 1",
       false, "x = 1", true},
      {"trailing_text", wrap("x = 1") + " thanks", "x = 1", false, "x = 1", true},
      {"text_between_blocks", "<think>a</think> so <answer>```python\nx = 1\n```</answer>", "x = 1", false,
       "x = 1", true},
      {"duplicate_think", "<think>a<think>b</think><answer>```python\nx = 1\n```</answer>", "x = 1", false,
       "x = 1", true},
      {"answer_before_think", "<answer>```python\nx = 1\n```</answer><think>a</think>", "x = 1", false, "x = 1",
       true},
      {"unclosed_answer", "<think>a</think><answer>```python\nx = 1\n```", "x = 1", false, "x = 1", true},
      {"empty_block", "<think>a</think><answer>```python\n```</answer>", "x = 1", true, "", false},
      {"unterminated_string", wrap("s = \"abc"), "s = \"abc\"", true, "s = \"abc", false},
      {"colon_without_body", wrap("if x:"), "if x:\n    y = 1", true, "if x:", false},
      {"indented_body", wrap("if x:\n    y = 1"), "if x:\n    y = 2", true, "if x:\n    y = 1", true},
      {"mixed_indent", wrap("if x:\n\t y = 1"), "if x:\n    y = 1", true, "if x:\n\t y = 1", false},
      {"open_triple_quote", wrap("s = \"\"\"abc"), "s = 1", true, "s = \"\"\"abc", false},
      {"bracket_kind_mismatch", wrap("y = f2(x]"), "y = f2(x)", true, "y = f2(x]", false},
      {"bracket_in_comment", wrap("y = f2(x)  # ("), "y = f2(x)", true, "y = f2(x)  # (", true},
      {"bracket_in_string", wrap("s = \"(\""), "s = \"(\"", true, "s = \"(\"", true},
      {"swapped_args", wrap("z = np.f1(a, b)"), "z = np.f1(b, a)", true, "z = np.f1(a, b)", true},
      {"empty_target", wrap("x = 1"), "", true, "x = 1", true},
      {"two_statements", wrap("a = load(p)\nb = mean(a, axis=0)"), "a = load(p)\nb = mean(a, axis=0)", true,
       "a = load(p)\nb = mean(a, axis=0)", true},
      {"trailing_spaces", wrap("x = 1   "), "x = 1", true, "x = 1", true},
      {"common_indent", wrap("    x = 1\n    y = 2"), "x = 1\ny = 2", true, "x = 1\ny = 2", true},
      {"surrounding_blank_lines", wrap("\n\nx = 1\n\n"), "x = 1", true, "x = 1", true},
      {"case_differs", wrap("X = 1"), "x = 1", true, "X = 1", true},
      {"bare_fence", "<think>a</think><answer>```\nx = 1\n```</answer>", "x = 1", true, "x = 1", true},
      {"fence_in_think", "<think>```python\nx = 0\n```</think><answer>```python\nx = 1\n```</answer>", "x = 1",
       true, "x = 1", true},
      {"empty_output", "", "x = 1", false, std::nullopt, false},
      {"nested_tags", "<think>a<answer>```python\nx = 1\n```</answer></think>", "x = 1", false, "x = 1", true},
      {"function_def", wrap("def f(a):\n    return a"), "def f(a):\n    return a + 1", true,
       "def f(a):\n    return a", true},
      {"colon_inside_brackets", wrap("d = {\n  1:\n  2}"), "d = {1: 2}", true, "d = {\n  1:\n  2}", true},
      {"escaped_quote", wrap("s = \"a\\\"b\""), "s = \"a\\\"b\"", true, "s = \"a\\\"b\"", true},
      {"crlf_lines", "<think>a</think><answer>```python\r\nx = 1\r\ny = 2\r\n```</answer>", "x = 1\ny = 2", true,
       "x = 1\ny = 2", true},
  };
}

}  // namespace fixtures

#endif  // MIGRL_TESTS_REWARD_FIXTURES_HPP_
