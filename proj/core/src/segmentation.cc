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

#include "leakscope/segmentation.h"

#include <algorithm>
#include <set>

#include "leakscope/bytecode.h"

namespace leakscope {

namespace {

std::vector<std::string> Classes(const std::set<std::string>& labels) {
  std::set<std::string> classes;
  for (const std::string& l : labels) classes.insert(SemanticClassOf(l));
  return {classes.begin(), classes.end()};
}

std::string Context(std::span<const Token> tokens, size_t at) {
  const size_t end = std::min(tokens.size(), at + 8);
  std::string s = FormatTokens(tokens.subspan(at, end - at));
  if (end < tokens.size()) s += "...";
  return s;
}

}  // namespace

bool Segmentation::SameTiling(const Segmentation& other) const {
  if (segments.size() != other.segments.size()) return false;
  for (size_t i = 0; i < segments.size(); ++i) {
    const Segment& a = segments[i];
    const Segment& b = other.segments[i];
    if (a.start != b.start || a.end != b.end || a.candidates != b.candidates)
      return false;
  }
  return complete == other.complete;
}

MatcherIndex::MatcherIndex(std::span<const GeneralizedMatcher> matchers,
                           Phase phase) {
  for (const GeneralizedMatcher& m : matchers) {
    if (m.phase != phase) continue;
    const size_t i = matchers_.size();
    matchers_.push_back(m);
    by_first_[m.prefix.front()].push_back(i);
    auto split = m.prefix_unfuse.find(0);
    if (split != m.prefix_unfuse.end() &&
        split->second.first != m.prefix.front())
      by_first_[split->second.first].push_back(i);
  }
}

std::vector<MatcherIndex::Hit> MatcherIndex::HitsAt(
    std::span<const Token> tokens, size_t start) const {
  std::map<size_t, std::set<std::string>, std::greater<>> by_end;
  if (start >= tokens.size()) return {};
  auto it = by_first_.find(tokens[start]);
  if (it == by_first_.end()) return {};
  std::vector<size_t> ends;
  for (size_t i : it->second) {
    ends.clear();
    matchers_[i].MatchEnds(tokens, start, ends);
    for (size_t e : ends) by_end[e].insert(matchers_[i].label);
  }
  std::vector<Hit> hits;
  hits.reserve(by_end.size());
  for (const auto& [end, labels] : by_end) hits.push_back({end, Classes(labels)});
  return hits;
}

Segmentation SegmentTokens(std::span<const Token> tokens,
                           const MatcherIndex& index) {
  const size_t n = tokens.size();
  Segmentation result;
  result.trace_length = n;
  if (n == 0) {
    result.complete = true;
    return result;
  }
  struct Frame {
    size_t pos;
    std::vector<MatcherIndex::Hit> hits;
    size_t next = 0;
  };
  std::vector<bool> dead(n + 1, false);
  std::vector<Frame> stack;
  stack.push_back({0, index.HitsAt(tokens, 0)});
  size_t deepest = 0;
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next == top.hits.size()) {
      dead[top.pos] = true;
      stack.pop_back();
      continue;
    }
    const size_t end = top.hits[top.next++].end;
    if (end == n) {
      for (const Frame& f : stack) {
        const MatcherIndex::Hit& h = f.hits[f.next - 1];
        result.segments.push_back({f.pos, h.end, h.labels, {}});
      }
      result.complete = true;
      return result;
    }
    if (dead[end]) continue;
    deepest = std::max(deepest, end);
    stack.push_back({end, index.HitsAt(tokens, end)});
  }
  throw SegmentationError(deepest, Context(tokens, deepest));
}

Segmentation SegmentTrace(const ExecutionTrace& trace,
                          std::span<const GeneralizedMatcher> matchers) {
  const MatcherIndex index(matchers, trace.phase);
  if (index.size() == 0 && !trace.empty())
    throw Error(ErrorCode::kInvalidArgument,
                std::string("no matchers for phase ") + PhaseName(trace.phase));
  return SegmentTokens(Tokenize(trace), index);
}

Enumeration EnumerateSegmentations(
    std::span<const Token> tokens,
    std::span<const GeneralizedMatcher> matchers, Phase phase, size_t cap) {
  if (tokens.size() > 500)
    throw Error(ErrorCode::kInvalidArgument,
                "enumeration is limited to 500 tokens");
  if (cap == 0) throw Error(ErrorCode::kInvalidArgument, "cap must be positive");
  const size_t n = tokens.size();
  std::vector<const GeneralizedMatcher*> active;
  size_t longest = 0;
  for (const GeneralizedMatcher& m : matchers) {
    if (m.phase != phase) continue;
    active.push_back(&m);
    longest = std::max(longest, m.MaxLength());
  }
  // spans[s]: (end, classes) for every accepted [s, end).
  std::vector<std::vector<std::pair<size_t, std::vector<std::string>>>> spans(
      n);
  for (size_t s = 0; s < n; ++s) {
    for (size_t len = std::min(longest, n - s); len >= 1; --len) {
      std::set<std::string> labels;
      for (const GeneralizedMatcher* m : active)
        if (m->Accepts(tokens.subspan(s, len))) labels.insert(m->label);
      if (!labels.empty()) spans[s].push_back({s + len, Classes(labels)});
    }
  }
  std::vector<bool> reach(n + 1, false);
  reach[n] = true;
  for (size_t s = n; s-- > 0;)
    for (const auto& [end, labels] : spans[s])
      if (reach[end]) reach[s] = true;

  Enumeration out;
  if (!reach[0]) return out;
  std::vector<Segment> path;
  // Explicit recursion depth is bounded by n <= 500.
  auto walk = [&](auto&& self, size_t pos) -> bool {
    if (pos == n) {
      if (out.tilings.size() == cap) {
        out.truncated = true;
        return false;
      }
      Segmentation seg;
      seg.segments = path;
      seg.complete = true;
      seg.trace_length = n;
      out.tilings.push_back(std::move(seg));
      return true;
    }
    for (const auto& [end, labels] : spans[pos]) {
      if (!reach[end]) continue;
      path.push_back({pos, end, labels, {}});
      const bool go_on = self(self, end);
      path.pop_back();
      if (!go_on) return false;
    }
    return true;
  };
  walk(walk, 0);
  return out;
}

}  // namespace leakscope
