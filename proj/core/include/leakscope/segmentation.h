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

// Segmentation of unlabeled traces into per-instruction spans by
// backtracking search over matcher hits.

#ifndef LEAKSCOPE_SEGMENTATION_H_
#define LEAKSCOPE_SEGMENTATION_H_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "leakscope/error.h"
#include "leakscope/matcher.h"
#include "leakscope/trace.h"

namespace leakscope {

struct Segment {
  size_t start = 0;
  size_t end = 0;
  // Semantic classes of every matcher accepting exactly [start, end),
  // sorted.
  std::vector<std::string> candidates;
  // Parallel to `candidates` once a timing model has ranked them.
  std::vector<double> confidence;

  size_t size() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Segmentation {
  std::vector<Segment> segments;
  bool complete = false;
  size_t trace_length = 0;

  // Boundaries and candidate sets only.
  bool SameTiling(const Segmentation& other) const;
  friend bool operator==(const Segmentation&, const Segmentation&) = default;
};

class SegmentationError : public Error {
 public:
  SegmentationError(size_t deepest, const std::string& context)
      : Error(ErrorCode::kSegmentation,
              "no complete segmentation; deepest offset " +
                  std::to_string(deepest) + " at tokens '" + context + "'"),
        deepest_(deepest) {}
  size_t deepest() const { return deepest_; }

 private:
  size_t deepest_;
};

// Matchers of one phase indexed by the tokens they can start with.
class MatcherIndex {
 public:
  MatcherIndex(std::span<const GeneralizedMatcher> matchers, Phase phase);

  struct Hit {
    size_t end;
    std::vector<std::string> labels;  // semantic classes, sorted
  };
  // Distinct match ends at `start`, longest first.
  std::vector<Hit> HitsAt(std::span<const Token> tokens, size_t start) const;

  size_t size() const { return matchers_.size(); }

 private:
  std::vector<GeneralizedMatcher> matchers_;
  std::map<Token, std::vector<size_t>> by_first_;
};

// Depth-first, longest match first, backtracking on dead ends. Returns the
// first complete segmentation or throws SegmentationError.
Segmentation SegmentTokens(std::span<const Token> tokens,
                           const MatcherIndex& index);
Segmentation SegmentTrace(const ExecutionTrace& trace,
                          std::span<const GeneralizedMatcher> matchers);

struct Enumeration {
  std::vector<Segmentation> tilings;
  bool truncated = false;
};

// Every complete tiling (up to `cap`) found by exhaustive search with
// Accepts(). Test oracle; limited to 500 tokens.
Enumeration EnumerateSegmentations(std::span<const Token> tokens,
                                   std::span<const GeneralizedMatcher> matchers,
                                   Phase phase, size_t cap);

}  // namespace leakscope

#endif  // LEAKSCOPE_SEGMENTATION_H_
