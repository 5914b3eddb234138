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

#ifndef MIGRL_VOCABULARY_HPP_
#define MIGRL_VOCABULARY_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "migrl/error.hpp"

namespace migrl {

class TokenizeError : public ValidationError {
 public:
  TokenizeError(const std::string& what, std::size_t position)
      : ValidationError(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Ordered token inventory. Index 0 is BOS and index 1 is EOS; the remaining
// symbols are literal strings (usually single characters, a few multi-char
// structural tokens). Tokenization is greedy longest-match.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr std::string_view kBosSymbol = "<bos>";
  static constexpr std::string_view kEosSymbol = "<eos>";

  Vocabulary() = default;

  // `symbols` excludes BOS/EOS, which are prepended.
  explicit Vocabulary(const std::vector<std::string>& symbols) {
    symbols_.emplace_back(kBosSymbol);
    symbols_.emplace_back(kEosSymbol);
    for (const auto& s : symbols) {
      if (s.empty()) throw ValidationError("vocabulary symbols must be non-empty");
      symbols_.push_back(s);
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (!index_.emplace(symbols_[i], static_cast<int>(i)).second) {
        throw ValidationError("duplicate vocabulary symbol '" + symbols_[i] + "'");
      }
      if (i >= 2) max_symbol_len_ = std::max(max_symbol_len_, symbols_[i].size());
    }
    if (symbols_.size() < 4) throw ValidationError("vocabulary needs at least 4 symbols including BOS/EOS");
  }

  // Rebuilds from a full symbol list as written by `symbols()`.
  static Vocabulary from_symbols(const std::vector<std::string>& all) {
    if (all.size() < 2 || all[0] != kBosSymbol || all[1] != kEosSymbol) {
      throw ValidationError("vocabulary must start with <bos>, <eos>");
    }
    return Vocabulary(std::vector<std::string>(all.begin() + 2, all.end()));
  }

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  bool contains(int id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < symbols_.size(); }

  int id(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    if (it == index_.end()) throw ValidationError("unknown symbol '" + std::string(symbol) + "'");
    return it->second;
  }

  std::vector<int> tokenize(std::string_view text) const {
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos < text.size()) {
      int found = -1;
      for (std::size_t len = std::min(max_symbol_len_, text.size() - pos); len > 0; --len) {
        auto it = index_.find(std::string(text.substr(pos, len)));
        if (it != index_.end() && it->second >= 2) {
          found = it->second;
          pos += len;
          break;
        }
      }
      if (found < 0) {
        throw TokenizeError("out-of-vocabulary character '" + std::string(1, text[pos]) + "' at position " +
                                std::to_string(pos),
                            pos);
      }
      ids.push_back(found);
    }
    return ids;
  }

  // BOS/EOS render as nothing.
  std::string detokenize(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
      if (!contains(id)) throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
      if (id >= 2) out += symbols_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_symbol_len_ = 1;
};

inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) { return vocab.tokenize(text); }
inline std::string detokenize(std::span<const int> ids, const Vocabulary& vocab) { return vocab.detokenize(ids); }

}  // namespace migrl

#endif  // MIGRL_VOCABULARY_HPP_
