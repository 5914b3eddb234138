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

// Dataset I/O, prompt rendering, Pass@k and out-of-process test execution.

#ifndef MIGRL_HARNESS_HPP_
#define MIGRL_HARNESS_HPP_

#include <stdlib.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "migrl/codeval.hpp"
#include "migrl/error.hpp"
#include "migrl/parallel.hpp"
#include "migrl/process.hpp"
#include "migrl/toyenv.hpp"

namespace migrl {

struct EvalEntry {
  std::string update_api_path;
  std::string update_description;
  std::string update_signature;
  std::string update_docstring;
  std::string scenario;
  std::string problem;
  std::string solution_signature;
  std::vector<std::string> test_programs;  // "tests" on disk
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const EvalEntry&, const EvalEntry&) = default;
};

namespace detail {

inline std::string require_string(const nlohmann::json& rec, const char* field, std::size_t line) {
  const auto it = rec.find(field);
  if (it == rec.end()) throw ValidationError(std::string("missing field '") + field + "'", line);
  if (!it->is_string()) throw ValidationError(std::string("field '") + field + "' must be a string", line);
  return it->get<std::string>();
}

inline nlohmann::json extra_fields(const nlohmann::json& rec, std::span<const std::string_view> known) {
  nlohmann::json extra = nlohmann::json::object();
  for (const auto& [k, v] : rec.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) extra[k] = v;
  }
  return extra;
}

// Calls fn(record, line_number) for every non-blank line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw IoError("cannot open " + path.string());
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("malformed record: ") + e.what(), n);
    }
    if (!rec.is_object()) throw ValidationError("record must be an object", n);
    fn(rec, n);
  }
  if (in.bad()) throw IoError("read error on " + path.string());
}

template <typename T, typename ToJson>
void write_records(const std::filesystem::path& path, std::span<const T> records, ToJson&& to_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write error on " + path.string());
}

}  // namespace detail

inline constexpr std::array<std::string_view, 5> kMigrationFields = {
    "dependency", "target_version", "update_info", "old_code", "target_code"};
inline constexpr std::array<std::string_view, 8> kEvalFields = {
    "update_api_path", "update_description", "update_signature", "update_docstring",
    "scenario",        "problem",            "solution_signature", "tests"};

inline MigrationEntry migration_entry_from_json(const nlohmann::json& rec, std::size_t line = 0) {
  if (!rec.is_object()) throw ValidationError("record must be an object", line);
  MigrationEntry e;
  e.dependency = detail::require_string(rec, "dependency", line);
  e.target_version = detail::require_string(rec, "target_version", line);
  e.update_info = detail::require_string(rec, "update_info", line);
  e.old_code = detail::require_string(rec, "old_code", line);
  e.target_code = detail::require_string(rec, "target_code", line);
  e.extra = detail::extra_fields(rec, kMigrationFields);
  return e;
}

inline nlohmann::json to_json(const MigrationEntry& e) {
  nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
  j["dependency"] = e.dependency;
  j["target_version"] = e.target_version;
  j["update_info"] = e.update_info;
  j["old_code"] = e.old_code;
  j["target_code"] = e.target_code;
  return j;
}

inline EvalEntry eval_entry_from_json(const nlohmann::json& rec, std::size_t line = 0) {
  if (!rec.is_object()) throw ValidationError("record must be an object", line);
  EvalEntry e;
  e.update_api_path = detail::require_string(rec, "update_api_path", line);
  e.update_description = detail::require_string(rec, "update_description", line);
  e.update_signature = detail::require_string(rec, "update_signature", line);
  e.update_docstring = detail::require_string(rec, "update_docstring", line);
  e.scenario = detail::require_string(rec, "scenario", line);
  e.problem = detail::require_string(rec, "problem", line);
  e.solution_signature = detail::require_string(rec, "solution_signature", line);
  if (e.solution_signature.empty()) throw ValidationError("field 'solution_signature' must be non-empty", line);
  const auto it = rec.find("tests");
  if (it == rec.end()) throw ValidationError("missing field 'tests'", line);
  if (!it->is_array() || it->empty()) throw ValidationError("field 'tests' must be a non-empty array", line);
  for (const auto& t : *it) {
    if (!t.is_string()) throw ValidationError("field 'tests' must contain only strings", line);
    e.test_programs.push_back(t.get<std::string>());
  }
  e.extra = detail::extra_fields(rec, kEvalFields);
  return e;
}

inline nlohmann::json to_json(const EvalEntry& e) {
  nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
  j["update_api_path"] = e.update_api_path;
  j["update_description"] = e.update_description;
  j["update_signature"] = e.update_signature;
  j["update_docstring"] = e.update_docstring;
  j["scenario"] = e.scenario;
  j["problem"] = e.problem;
  j["solution_signature"] = e.solution_signature;
  j["tests"] = e.test_programs;
  return j;
}

inline std::vector<MigrationEntry> load_migration_dataset(const std::filesystem::path& path) {
  std::vector<MigrationEntry> out;
  detail::for_each_record(path, [&](const nlohmann::json& rec, std::size_t line) {
    out.push_back(migration_entry_from_json(rec, line));
  });
  return out;
}

inline std::vector<EvalEntry> load_eval_dataset(const std::filesystem::path& path) {
  std::vector<EvalEntry> out;
  detail::for_each_record(path, [&](const nlohmann::json& rec, std::size_t line) {
    out.push_back(eval_entry_from_json(rec, line));
  });
  return out;
}

inline void save_migration_dataset(const std::filesystem::path& path, std::span<const MigrationEntry> entries) {
  detail::write_records(path, entries, [](const MigrationEntry& e) { return to_json(e); });
}

inline void save_eval_dataset(const std::filesystem::path& path, std::span<const EvalEntry> entries) {
  detail::write_records(path, entries, [](const EvalEntry& e) { return to_json(e); });
}

// ---------------------------------------------------------------------------
// Prompts

struct RenderedPrompt {
  std::string system;
  std::string user;
  std::string assistant_prefix;

  // Single-string form used when a chat template is not available.
  std::string flatten() const {
    return "System:\n" + system + "\n\nUser:\n" + user + "\n\nAssistant:\n" + assistant_prefix;
  }

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

inline constexpr std::string_view kAssistantPrefix = "Let me solve this step by step.\n<think>";

inline constexpr std::string_view kTrainingSystem =
    "You are a helpful coding assistant. Your task is to transform the old version of the code into the new "
    "version specified, based on the update information. You first thinks about the reasoning process in the "
    "mind and then provides the solution.";

inline constexpr std::string_view kEvalSystem =
    "You are a helpful code assistant. You first think about the reasoning process in the mind and then provide "
    "a Python solution to a problem in a real-world scenario.";

inline constexpr std::string_view kAnswerInstruction =
    "Show your work in <think> </think> tags. And return the final code in <answer> </answer>, the code within "
    "<answer></answer> should be enclosed in ```python ``` tags.";

inline RenderedPrompt training_prompt(const MigrationEntry& e) {
  std::string user;
  user += "Dependency " + e.dependency + " performed an API update in version " + e.target_version +
          ", and the update content includes:\n";
  user += "<doc>\n" + e.update_info + "\n</doc>\n";
  user += "The old version of the code is:\n```python\n" + e.old_code + "\n```\n";
  user += kAnswerInstruction;
  return {std::string(kTrainingSystem), std::move(user), std::string(kAssistantPrefix)};
}

inline RenderedPrompt eval_prompt(const EvalEntry& e) {
  std::string user;
  user += "Update Note:\n";
  user += "There's an recent update to a function " + e.update_api_path + " -- " + e.update_description + ".\n";
  user += "The function now has a new function signature -- " + e.update_signature + ".\n";
  user += "Here is a detailed documentation about the update:\n";
  user += "<doc>\n" + e.update_docstring + "\n</doc>\n";
  user += "Scenario: " + e.scenario + "\n";
  user += "Problem: " + e.problem + "\n";
  user += "Solution Signature: " + e.solution_signature + "\n";
  user += kAnswerInstruction;
  return {std::string(kEvalSystem), std::move(user), std::string(kAssistantPrefix)};
}

inline std::string render_training_prompt(const MigrationEntry& e) { return training_prompt(e).flatten(); }
inline std::string render_eval_prompt(const EvalEntry& e) { return eval_prompt(e).flatten(); }

// ---------------------------------------------------------------------------
// Pass@k

// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated as a product.
inline double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n and n >= 1");
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

// ---------------------------------------------------------------------------
// Test execution

struct RunnerConfig {
  std::vector<std::string> command = {"python3"};
  double timeout_secs = 10.0;
  std::vector<std::string> env_allowlist = {"PATH", "LANG", "LC_ALL"};
  std::string source_suffix = ".py";
  // Scratch directories are created under this root (system temp when empty).
  std::filesystem::path scratch_root;

  std::chrono::milliseconds timeout() const {
    return std::chrono::milliseconds(static_cast<long long>(std::ceil(timeout_secs * 1000.0)));
  }

  void validate() const {
    if (command.empty()) throw ConfigError("runner.command is empty");
    if (!find_executable(command.front())) throw ConfigError("runner.command: executable not found: " + command.front());
    if (!(timeout_secs > 0.0)) throw ConfigError("runner.timeout_secs must be > 0");
  }
};

struct TestOutcome {
  bool passed = false;
  // "pass", "timeout", "exit:<code>" or "signal:<n>".
  std::string marker;
  std::string stderr_tail;
};

struct TestRunResult {
  std::vector<TestOutcome> tests;
  bool overall = false;
};

namespace detail {

class ScratchDir {
 public:
  explicit ScratchDir(const std::filesystem::path& root) {
    auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
    std::string tmpl = (base / "migrl-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw IoError("cannot create scratch directory under " + base.string());
    path_ = tmpl;
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string tail(const std::string& s, std::size_t n = 2000) {
  return s.size() <= n ? s : s.substr(s.size() - n);
}

inline TestOutcome run_one_test(std::string_view candidate, const std::string& test, const RunnerConfig& runner) {
  ScratchDir dir(runner.scratch_root);
  const auto src = dir.path() / ("program" + runner.source_suffix);
  {
    std::ofstream out(src, std::ios::binary);
    if (!out.is_open()) throw IoError("cannot write " + src.string());
    out << candidate;
    if (!candidate.empty() && candidate.back() != '\n') out << '\n';
    out << '\n' << test << '\n';
  }
  ProcessOptions opts;
  opts.argv = runner.command;
  opts.argv.push_back(src.string());
  opts.timeout = runner.timeout();
  opts.cwd = dir.path();
  opts.env_allowlist = runner.env_allowlist;
  const auto res = run_process(opts);
  TestOutcome o;
  o.passed = res.ok();
  if (res.timed_out) {
    o.marker = "timeout";
  } else if (res.term_signal != 0) {
    o.marker = "signal:" + std::to_string(res.term_signal);
  } else if (res.exit_code != 0) {
    o.marker = "exit:" + std::to_string(res.exit_code);
  } else {
    o.marker = "pass";
  }
  o.stderr_tail = tail(res.err);
  return o;
}

}  // namespace detail

// Runs every test program of `entry` against `candidate_code`, each in its own
// process and scratch directory.
inline TestRunResult run_tests(std::string_view candidate_code, const EvalEntry& entry, const RunnerConfig& runner) {
  runner.validate();
  TestRunResult r;
  r.overall = true;
  for (const auto& t : entry.test_programs) {
    r.tests.push_back(detail::run_one_test(candidate_code, t, runner));
    r.overall = r.overall && r.tests.back().passed;
  }
  r.overall = r.overall && !r.tests.empty();
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

// Yields the raw completions for one entry. Should return exactly n strings.
using CompletionSource = std::function<std::vector<std::string>(std::size_t index, const EvalEntry&, int n)>;

// JSONL with one {"completions": [...]} record per entry, optionally keyed by
// an explicit "index" (line order otherwise).
inline CompletionSource completions_from_file(const std::filesystem::path& path) {
  auto table = std::make_shared<std::map<std::size_t, std::vector<std::string>>>();
  std::size_t ordinal = 0;
  detail::for_each_record(path, [&](const nlohmann::json& rec, std::size_t line) {
    std::size_t index = ordinal++;
    if (auto it = rec.find("index"); it != rec.end()) {
      if (!it->is_number_unsigned()) throw ValidationError("field 'index' must be a non-negative integer", line);
      index = it->get<std::size_t>();
    }
    const auto it = rec.find("completions");
    if (it == rec.end() || !it->is_array()) throw ValidationError("field 'completions' must be an array", line);
    std::vector<std::string> cs;
    for (const auto& c : *it) {
      if (!c.is_string()) throw ValidationError("field 'completions' must contain only strings", line);
      cs.push_back(c.get<std::string>());
    }
    if (!table->emplace(index, std::move(cs)).second) {
      throw ValidationError("duplicate completions for entry " + std::to_string(index), line);
    }
  });
  return [table](std::size_t index, const EvalEntry&, int) {
    const auto it = table->find(index);
    if (it == table->end()) throw ValidationError("no completions for entry " + std::to_string(index));
    return it->second;
  };
}

// Runs `argv` once per sample with the flattened eval prompt on stdin and the
// sample index appended as the last argument; stdout is the completion.
inline CompletionSource completions_from_command(std::vector<std::string> argv,
                                                 std::chrono::milliseconds timeout = std::chrono::seconds(300)) {
  if (argv.empty()) throw ConfigError("generator.command is empty");
  if (!find_executable(argv.front())) throw ConfigError("generator.command: executable not found: " + argv.front());
  return [argv = std::move(argv), timeout](std::size_t, const EvalEntry& e, int n) {
    std::vector<std::string> out;
    const auto prompt = render_eval_prompt(e);
    for (int j = 0; j < n; ++j) {
      ProcessOptions opts;
      opts.argv = argv;
      opts.argv.push_back(std::to_string(j));
      opts.stdin_data = prompt;
      opts.timeout = timeout;
      auto res = run_process(opts);
      if (!res.ok()) throw Error("generator failed on sample " + std::to_string(j) + ": " + detail::tail(res.err, 500));
      out.push_back(std::move(res.out));
    }
    return out;
  };
}

struct CompletionDetail {
  bool format_ok = false;
  bool has_code = false;
  bool passed = false;
  std::vector<std::string> markers;
};

struct EntryResult {
  std::size_t index = 0;
  int n = 0;
  int c = 0;
  std::optional<std::string> error;
  std::vector<CompletionDetail> completions;
  std::map<int, double> pass_at;
};

struct PassAtKReport {
  std::vector<int> ks;
  std::vector<EntryResult> entries;
  std::map<int, double> aggregate;
};

struct EvalOptions {
  int n = 1;
  std::vector<int> ks = {1};
  RunnerConfig runner;
  int threads = 1;
  SyntaxChecker syntax_checker = hermetic_syntax_checker();
};

// A completion counts as correct only when it is well formed, yields code, and
// that code passes every test of its entry.
inline PassAtKReport evaluate(const CompletionSource& source, std::span<const EvalEntry> entries,
                              const EvalOptions& opt) {
  if (opt.n < 1) throw ConfigError("n must be >= 1");
  if (opt.ks.empty()) throw ConfigError("at least one k is required");
  for (int k : opt.ks) {
    if (k < 1 || k > opt.n) throw ConfigError("every k must satisfy 1 <= k <= n");
  }
  opt.runner.validate();

  PassAtKReport report;
  report.ks = opt.ks;
  report.entries.resize(entries.size());

  struct Job {
    std::size_t entry, completion, test;
  };
  std::vector<std::vector<std::optional<std::string>>> code(entries.size());
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& er = report.entries[i];
    er.index = i;
    er.n = opt.n;
    std::vector<std::string> raw;
    try {
      raw = source(i, entries[i], opt.n);
      if (raw.size() != static_cast<std::size_t>(opt.n)) {
        throw ValidationError("expected " + std::to_string(opt.n) + " completions, got " + std::to_string(raw.size()));
      }
    } catch (const std::exception& e) {
      er.error = e.what();
      continue;
    }
    er.completions.resize(raw.size());
    code[i].resize(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const auto parsed = parse_output(raw[j], opt.syntax_checker);
      auto& d = er.completions[j];
      d.format_ok = parsed.format_ok;
      d.has_code = parsed.code.has_value();
      if (!d.format_ok || !d.has_code) {
        d.markers.push_back(d.format_ok ? "no_code" : "malformed");
        continue;
      }
      code[i][j] = parsed.code;
      d.markers.resize(entries[i].test_programs.size());
      for (std::size_t t = 0; t < entries[i].test_programs.size(); ++t) jobs.push_back({i, j, t});
    }
  }

  std::vector<TestOutcome> outcomes(jobs.size());
  detail::parallel_for(jobs.size(), opt.threads, [&](std::size_t q) {
    const auto& jb = jobs[q];
    try {
      outcomes[q] = detail::run_one_test(*code[jb.entry][jb.completion], entries[jb.entry].test_programs[jb.test],
                                         opt.runner);
    } catch (const std::exception& e) {
      outcomes[q] = TestOutcome{false, std::string("error:") + e.what(), {}};
    }
  });

  for (auto& er : report.entries) {
    for (auto& d : er.completions) d.passed = d.format_ok && d.has_code;
  }
  for (std::size_t q = 0; q < jobs.size(); ++q) {
    auto& d = report.entries[jobs[q].entry].completions[jobs[q].completion];
    d.markers[jobs[q].test] = outcomes[q].marker;
    d.passed = d.passed && outcomes[q].passed;
  }
  for (auto& er : report.entries) {
    er.c = static_cast<int>(std::count_if(er.completions.begin(), er.completions.end(),
                                          [](const CompletionDetail& d) { return d.passed; }));
    for (int k : opt.ks) er.pass_at[k] = pass_at_k(er.n, er.c, k);
  }
  for (int k : opt.ks) {
    double s = 0.0;
    for (const auto& er : report.entries) s += er.pass_at.at(k);
    report.aggregate[k] = report.entries.empty() ? 0.0 : s / static_cast<double>(report.entries.size());
  }
  return report;
}

inline nlohmann::json to_json(const EntryResult& er) {
  nlohmann::json j;
  j["index"] = er.index;
  j["n"] = er.n;
  j["c"] = er.c;
  j["error"] = er.error ? nlohmann::json(*er.error) : nlohmann::json(nullptr);
  nlohmann::json pa = nlohmann::json::object();
  for (const auto& [k, v] : er.pass_at) pa["pass@" + std::to_string(k)] = v;
  j["pass_at"] = pa;
  j["completions"] = nlohmann::json::array();
  for (const auto& d : er.completions) {
    j["completions"].push_back(
        {{"format_ok", d.format_ok}, {"has_code", d.has_code}, {"passed", d.passed}, {"markers", d.markers}});
  }
  return j;
}

// Aggregate summary only; per-entry detail goes through to_json(EntryResult).
inline nlohmann::json to_json(const PassAtKReport& r) {
  nlohmann::json j;
  j["entries"] = r.entries.size();
  j["ks"] = r.ks;
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [k, v] : r.aggregate) agg["pass@" + std::to_string(k)] = v;
  j["pass_at"] = agg;
  j["per_entry"] = nlohmann::json::array();
  for (const auto& er : r.entries) j["per_entry"].push_back({{"index", er.index}, {"n", er.n}, {"c", er.c}});
  return j;
}

}  // namespace migrl

#endif  // MIGRL_HARNESS_HPP_
