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

// Profiling: cut labeled traces into per-instruction segments and collect
// token patterns per opcode, folding fused/unfused observations together.

#ifndef LEAKSCOPE_PROFILING_H_
#define LEAKSCOPE_PROFILING_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leakscope/trace.h"

namespace leakscope {

// A fuseable pair inside a segment, in segment coordinates. When `fused` the
// token at `position` is the collapsed pair, otherwise the pair occupies
// `position` and `position + 1`.
struct SegmentFusion {
  size_t position = 0;
  bool fused = false;
  Token first;
  Token second;
};

struct LabeledSegment {
  std::string label;
  Phase phase = Phase::kInterpret;
  TokenString tokens;
  std::vector<uint64_t> latencies;
  std::vector<SegmentFusion> fusions;  // empty for production traces
};

// Cuts a labeled trace along its label spans after checking the spans
// against the structural anchors the attacker would use: the loader loop
// entry IP in load traces and the trailing control-flow step in interpreter
// traces. Throws Error(kIntegrity) naming the first offending IM index.
std::vector<LabeledSegment> SegmentWithGroundTruth(
    const ExecutionTrace& trace);

using UnfuseMap = std::map<size_t, std::pair<Token, Token>>;

struct Pattern {
  std::string label;
  Phase phase = Phase::kInterpret;
  TokenString tokens;  // fused form
  UnfuseMap unfuse;
  uint64_t source_count = 1;

  // True if `observed` equals `tokens` with any subset of the unfuse
  // positions expanded.
  bool Accepts(std::span<const Token> observed) const;
  // All 2^k variants. Throws Error(kInvalidArgument) for k > 20.
  std::vector<TokenString> Variants() const;
  void Validate() const;
};

class PatternDatabase {
 public:
  // Folds one observation in: re-observations bump counts, single-position
  // fusion differences become unfuse entries, anything else is new.
  void Insert(const LabeledSegment& segment);
  // Same fold for an already canonical pattern (its count is carried over).
  void Add(Pattern pattern);
  // Associative, commutative union.
  void Merge(const PatternDatabase& other);

  const std::vector<Pattern>& patterns() const { return patterns_; }
  std::vector<const Pattern*> For(Phase phase, std::string_view label) const;
  std::vector<std::string> Labels(Phase phase) const;

  std::string spec_hash;
  uint64_t trace_count = 0;

  // Sorts patterns by (phase, label, tokens) for stable output.
  void Normalize();

 private:
  std::vector<Pattern> patterns_;
};

PatternDatabase ExtractPatterns(std::span<const LabeledSegment> segments,
                                PatternDatabase db = {});

std::string FormatUnfuse(const UnfuseMap& unfuse);
UnfuseMap ParseUnfuse(std::string_view text);

void WritePatternDatabase(std::ostream& out, const PatternDatabase& db);
PatternDatabase ReadPatternDatabase(std::istream& in,
                                    std::string_view source = "patterns");

}  // namespace leakscope

#endif  // LEAKSCOPE_PROFILING_H_
