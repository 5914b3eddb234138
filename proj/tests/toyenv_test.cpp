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

#include "migrl/toyenv.hpp"

#include <gtest/gtest.h>

#include <string>

#include "migrl/codeval.hpp"

namespace migrl {
namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

TEST(OracleMigrate, Examples) {
  EXPECT_EQ(oracle_migrate("y = f1(a, b)", RewriteRule::rename("f1", "f2")), "y = f2(a, b)");
  EXPECT_EQ(oracle_migrate("z = g(x)", RewriteRule::add_param("g", "axis", "0")), "z = g(x, axis=0)");
  EXPECT_EQ(oracle_migrate("z = g()", RewriteRule::add_param("g", "axis", "0")), "z = g(axis=0)");
  EXPECT_EQ(oracle_migrate("f(a)", RewriteRule::wrap("f", "ns")), "ns.f(a)");
  EXPECT_EQ(oracle_migrate("r = h(a, b, c)", RewriteRule::reorder("h", {2, 0, 1})), "r = h(c, a, b)");
}

TEST(OracleMigrate, IdentityRename) {
  const std::string code = "a = f1(x)\nb = g(f1(y))";
  EXPECT_EQ(oracle_migrate(code, RewriteRule::rename("f1", "f1")), code);
}

TEST(OracleMigrate, EveryCallSiteOnce) {
  const std::string code = "a = f1(x)\nb = f1(y, 2)\nc = xf1(z)\nd = np.f1(w)";
  const auto out = oracle_migrate(code, RewriteRule::rename("f1", "f2"));
  EXPECT_EQ(out, "a = f2(x)\nb = f2(y, 2)\nc = xf1(z)\nd = np.f1(w)");
  EXPECT_EQ(count(out, "f2("), 2u);
  // Idempotent once the new name is in place.
  EXPECT_EQ(oracle_migrate(out, RewriteRule::rename("f1", "f2"), false), out);
}

TEST(OracleMigrate, Errors) {
  EXPECT_THROW(oracle_migrate("a = g(x)", RewriteRule::rename("f1", "f2")), ValidationError);
  EXPECT_EQ(oracle_migrate("a = g(x)", RewriteRule::rename("f1", "f2"), false), "a = g(x)");
  EXPECT_THROW(oracle_migrate("a = h(x)", RewriteRule::reorder("h", {1, 0})), ValidationError);
  EXPECT_THROW(oracle_migrate("a = h(x)", RewriteRule::rename("h", "Bad!")), ValidationError);
}

TEST(RewriteRuleText, ParsesAndFormats) {
  for (const auto& r : {RewriteRule::rename("f1", "f2"), RewriteRule::add_param("g", "axis", "0"),
                        RewriteRule::reorder("h", {1, 0}), RewriteRule::wrap("load", "io")}) {
    EXPECT_EQ(parse_rewrite_rule(format_rewrite_rule(r)), r);
  }
  EXPECT_EQ(parse_rewrite_rule("REORDER_PARAMS:h:2,0,1").permutation, (std::vector<int>{2, 0, 1}));
  EXPECT_THROW(parse_rewrite_rule("RENAME:f1"), ConfigError);
  EXPECT_THROW(parse_rewrite_rule("REORDER_PARAMS:h:0,0"), ConfigError);
  EXPECT_THROW(parse_rewrite_rule("REORDER_PARAMS:h:1,x"), ConfigError);
  EXPECT_THROW(parse_rewrite_rule("SHUFFLE:h"), ConfigError);
}

TEST(GenTask, InvariantsOverManySeeds) {
  const auto vocab = toy_vocabulary();
  for (int difficulty = 1; difficulty <= 3; ++difficulty) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const auto t = gen_task(seed, difficulty);
      const auto& e = t.entry;
      SCOPED_TRACE(e.old_code);
      EXPECT_FALSE(e.dependency.empty() || e.target_version.empty() || e.update_info.empty() ||
                   e.old_code.empty() || e.target_code.empty());
      EXPECT_TRUE(exact_match(oracle_migrate(e.old_code, t.rule), e.target_code));
      EXPECT_TRUE(structural_syntax_check(e.old_code));
      EXPECT_TRUE(structural_syntax_check(e.target_code));
      EXPECT_LT(edit_similarity(e.old_code, e.target_code), 1.0);
      EXPECT_EQ(static_cast<int>(count(e.old_code, "\n")) + 1, difficulty);
      EXPECT_EQ(vocab.detokenize(vocab.tokenize(e.old_code)), e.old_code);
      EXPECT_EQ(vocab.detokenize(vocab.tokenize(answer_text(e.target_code))), answer_text(e.target_code));
      const auto again = gen_task(seed, difficulty);
      EXPECT_EQ(again.entry, e);
      EXPECT_EQ(again.rule, t.rule);
    }
  }
}

TEST(GenTask, RuleKindsFollowDifficulty) {
  bool seen_reorder_at_1 = false, seen_reorder_at_3 = false;
  for (std::uint64_t s = 0; s < 200; ++s) {
    seen_reorder_at_1 |= gen_task(s, 1).rule.kind == RuleKind::kReorderParams;
    seen_reorder_at_3 |= gen_task(s, 3).rule.kind == RuleKind::kReorderParams;
  }
  EXPECT_FALSE(seen_reorder_at_1);
  EXPECT_TRUE(seen_reorder_at_3);
  EXPECT_THROW(gen_task(1, 0), std::invalid_argument);
  EXPECT_THROW(gen_task(1, 4), std::invalid_argument);
}

TEST(GenTask, FixedRule) {
  const auto t = gen_task_with_rule(3, 2, RewriteRule::rename("f1", "f2"));
  EXPECT_NE(t.entry.old_code.find("f1("), std::string::npos);
  EXPECT_EQ(t.entry.target_code.find("f1("), std::string::npos);
  EXPECT_EQ(t.entry.update_info, "f1() was renamed to f2(); call f2 instead.");
}

TEST(ToyVocabulary, Contents) {
  const auto v = toy_vocabulary();
  EXPECT_TRUE(v.tokenize("").empty());
  EXPECT_EQ(v.tokenize(std::string(toy::kAnswerOpen)).size(), 3u);
  EXPECT_THROW(v.tokenize("X"), TokenizeError);
  EXPECT_EQ(v.size(), 2u + 5u + 26u + 10u + 9u);
}

TEST(ToyPrompt, StreamsAreAligned) {
  const auto e = gen_task_with_rule(1, 1, RewriteRule::rename("f1", "f2")).entry;
  const auto v = toy_vocabulary();
  const auto p = make_toy_prompt(e, v);
  EXPECT_EQ(v.detokenize(p.recalled), answer_text(e.old_code));
  EXPECT_EQ(v.detokenize(p.documented), answer_text(e.target_code));
  EXPECT_EQ(p.recalled.size(), p.documented.size());
}

}  // namespace
}  // namespace migrl
