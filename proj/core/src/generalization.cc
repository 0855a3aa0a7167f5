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

#include "leakscope/generalization.h"

#include <algorithm>
#include <functional>

#include "leakscope/error.h"

namespace leakscope {

TokenTrie TokenTrie::Build(std::span<const Pattern> patterns, bool reversed) {
  TokenTrie trie;
  trie.reversed_ = reversed;
  trie.nodes_.emplace_back();
  for (const Pattern& p : patterns) {
    const Pattern& first = patterns.front();
    if (p.label != first.label || p.phase != first.phase)
      throw Error(ErrorCode::kInvalidArgument,
                  "trie patterns mix '" + first.label + "' and '" + p.label +
                      "'");
    const size_t index = trie.sources_.size();
    trie.sources_.push_back(p);
    TokenString tokens = p.tokens;
    if (reversed) std::reverse(tokens.begin(), tokens.end());
    size_t node = 0;
    trie.nodes_[0].count += p.source_count;
    for (const Token& t : tokens) {
      auto it = trie.nodes_[node].children.find(t);
      if (it == trie.nodes_[node].children.end()) {
        trie.nodes_.emplace_back();
        trie.nodes_.back().token = t;
        it = trie.nodes_[node]
                 .children.emplace(t, trie.nodes_.size() - 1)
                 .first;
      }
      node = it->second;
      trie.nodes_[node].count += p.source_count;
    }
    trie.nodes_[node].terminals.push_back(index);
  }
  return trie;
}

TokenString TokenTrie::CommonPath() const {
  TokenString path;
  size_t node = 0;
  while (nodes_[node].children.size() == 1 && nodes_[node].terminals.empty()) {
    node = nodes_[node].children.begin()->second;
    path.push_back(nodes_[node].token);
  }
  return path;
}

TokenTrie BuildTrie(std::span<const Pattern> patterns) {
  return TokenTrie::Build(patterns, false);
}

TokenTrie BuildSuffixTrie(std::span<const Pattern> patterns) {
  return TokenTrie::Build(patterns, true);
}

std::optional<GeneralizedMatcher> Generalize(const TokenTrie& trie,
                                             const TokenTrie& suffix_trie,
                                             size_t max_splits, size_t slack) {
  if (max_splits == 0)
    throw Error(ErrorCode::kInvalidArgument,
                "max_splits must be positive (the prefix would be empty)");
  const auto& sources = trie.sources();
  if (sources.empty()) return std::nullopt;
  if (sources.size() == 1) return GeneralizedMatcher::Exact(sources.front());

  size_t min_len = SIZE_MAX;
  size_t max_len = 0;
  for (const Pattern& p : sources) {
    min_len = std::min(min_len, p.tokens.size());
    max_len = std::max(max_len, p.tokens.size());
  }
  size_t pre = trie.CommonPath().size();
  size_t suf = suffix_trie.CommonPath().size();
  if (pre + suf > min_len) {
    suf = std::min(suf, std::max<size_t>(1, min_len - std::min(pre, min_len)));
    pre = std::min(pre, min_len - suf);
  }
  if (pre == 0 || suf == 0) return std::nullopt;

  const Pattern& any = sources.front();
  GeneralizedMatcher m;
  m.label = any.label;
  m.phase = any.phase;
  m.prefix.assign(any.tokens.begin(), any.tokens.begin() + pre);
  m.suffix.assign(any.tokens.end() - suf, any.tokens.end());
  size_t extra = 0;
  for (const Pattern& p : sources) {
    const size_t n = p.tokens.size();
    for (size_t i = pre; i < n - suf; ++i) m.middle_alphabet.insert(p.tokens[i]);
    size_t splits = 0;
    for (const auto& [pos, pair] : p.unfuse) {
      if (pos < pre) {
        m.prefix_unfuse.emplace(pos, pair);
      } else if (pos >= n - suf) {
        m.suffix_unfuse.emplace(pos - (n - suf), pair);
      } else {
        m.middle_alphabet.insert(pair.first);
        m.middle_alphabet.insert(pair.second);
        ++splits;
      }
    }
    extra = std::max(extra, splits);
  }
  const size_t lo = min_len - pre - suf;
  const size_t hi = max_len - pre - suf + extra;
  if (m.middle_alphabet.empty()) {
    m.middle_min = m.middle_max = 0;
  } else {
    m.middle_min = lo > slack ? lo - slack : 0;
    m.middle_max = hi + slack;
  }
  return m;
}

std::vector<GeneralizedMatcher> CompileMatchers(const PatternDatabase& db,
                                                size_t max_splits,
                                                size_t slack) {
  if (max_splits == 0)
    throw Error(ErrorCode::kInvalidArgument, "max_splits must be positive");
  std::vector<GeneralizedMatcher> out;
  for (Phase phase : {Phase::kLoad, Phase::kInterpret, Phase::kNative}) {
    for (const std::string& label : db.Labels(phase)) {
      std::vector<Pattern> group;
      for (const Pattern* p : db.For(phase, label)) group.push_back(*p);
      std::sort(group.begin(), group.end(),
                [](const Pattern& a, const Pattern& b) {
                  return a.tokens < b.tokens;
                });

      auto collapse = [&](const std::vector<size_t>& members) {
        std::vector<Pattern> subset;
        for (size_t i : members) subset.push_back(group[i]);
        auto m = Generalize(BuildTrie(subset), BuildSuffixTrie(subset),
                            max_splits, slack);
        if (m) {
          out.push_back(std::move(*m));
        } else {
          for (const Pattern& p : subset)
            out.push_back(GeneralizedMatcher::Exact(p));
        }
      };

      // members: patterns sharing their first `depth` tokens.
      std::function<void(std::vector<size_t>, size_t, size_t)> partition =
          [&](std::vector<size_t> members, size_t depth, size_t splits) {
            if (members.size() == 1) {
              out.push_back(GeneralizedMatcher::Exact(group[members[0]]));
              return;
            }
            // Skip the shared run up to the next branching point.
            while (true) {
              bool branches = false;
              for (size_t i : members) {
                if (group[i].tokens.size() == depth ||
                    group[i].tokens[depth] !=
                        group[members[0]].tokens[depth]) {
                  branches = true;
                  break;
                }
              }
              if (branches || group[members[0]].tokens.size() == depth) break;
              ++depth;
            }
            if (++splits >= max_splits) {
              collapse(members);
              return;
            }
            std::map<Token, std::vector<size_t>> branches;
            for (size_t i : members) {
              if (group[i].tokens.size() == depth)
                out.push_back(GeneralizedMatcher::Exact(group[i]));
              else
                branches[group[i].tokens[depth]].push_back(i);
            }
            for (auto& [token, sub] : branches)
              partition(std::move(sub), depth + 1, splits);
          };

      std::vector<size_t> all(group.size());
      for (size_t i = 0; i < all.size(); ++i) all[i] = i;
      if (!all.empty()) partition(std::move(all), 0, 0);
    }
  }
  return out;
}

}  // namespace leakscope
