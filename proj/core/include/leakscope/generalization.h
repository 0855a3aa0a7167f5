/*
 * Copyright 2026 The leakscope Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Token prefix trees over the patterns of one opcode and the matchers
// compiled from them.

#ifndef LEAKSCOPE_GENERALIZATION_H_
#define LEAKSCOPE_GENERALIZATION_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakscope/matcher.h"
#include "leakscope/profiling.h"

namespace leakscope {

struct TrieNode {
  Token token;  // unused for the root
  std::map<Token, size_t> children;
  uint64_t count = 0;              // patterns passing through
  std::vector<size_t> terminals;   // indices into TokenTrie::sources
};

class TokenTrie {
 public:
  // Patterns must share label and phase (Error kInvalidArgument otherwise).
  // A reversed trie is built over the reversed token strings.
  static TokenTrie Build(std::span<const Pattern> patterns,
                         bool reversed = false);

  const std::vector<TrieNode>& nodes() const { return nodes_; }
  const TrieNode& root() const { return nodes_[0]; }
  const std::vector<Pattern>& sources() const { return sources_; }
  bool reversed() const { return reversed_; }

  // Tokens from the root down to the first node that branches or ends a
  // pattern.
  TokenString CommonPath() const;

 private:
  std::vector<TrieNode> nodes_;
  std::vector<Pattern> sources_;
  bool reversed_ = false;
};

TokenTrie BuildTrie(std::span<const Pattern> patterns);
TokenTrie BuildSuffixTrie(std::span<const Pattern> patterns);

// Collapses every pattern of the tries into one prefix/wildcard/suffix
// matcher. Returns nullopt when the patterns share no leading or trailing
// token, in which case they must be kept verbatim. Throws
// Error(kInvalidArgument) for max_splits == 0.
std::optional<GeneralizedMatcher> Generalize(const TokenTrie& trie,
                                             const TokenTrie& suffix_trie,
                                             size_t max_splits,
                                             size_t slack = 0);

// Walks each opcode's trie and keeps separate exact matchers for the
// branches seen before the `max_splits`-th split; everything below it is
// collapsed with Generalize.
std::vector<GeneralizedMatcher> CompileMatchers(const PatternDatabase& db,
                                                size_t max_splits,
                                                size_t slack);

}  // namespace leakscope

#endif  // LEAKSCOPE_GENERALIZATION_H_
