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

// Bounded matchers over token strings: a fixed prefix, a wildcard middle of
// bounded length over a small alphabet, and a fixed suffix. Prefix and
// suffix positions may carry an unfuse alternative.

#ifndef LEAKSCOPE_MATCHER_H_
#define LEAKSCOPE_MATCHER_H_

#include <cstddef>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "leakscope/profiling.h"
#include "leakscope/trace.h"

namespace leakscope {

struct GeneralizedMatcher {
  std::string label;
  Phase phase = Phase::kInterpret;
  TokenString prefix;
  UnfuseMap prefix_unfuse;
  size_t middle_min = 0;
  size_t middle_max = 0;
  std::set<Token> middle_alphabet;
  TokenString suffix;
  UnfuseMap suffix_unfuse;

  // Matcher accepting exactly `p` and its unfuse variants.
  static GeneralizedMatcher Exact(const Pattern& p);

  bool IsExact() const { return middle_max == 0; }
  // Longest string this matcher can accept.
  size_t MaxLength() const;
  size_t MinLength() const;

  // Appends to `ends` every offset e such that text[start, e) is accepted,
  // in ascending order without duplicates.
  void MatchEnds(std::span<const Token> text, size_t start,
                 std::vector<size_t>& ends) const;
  // Whole-string acceptance by plain backtracking. Deliberately shares no
  // code with MatchEnds so the two can check each other.
  bool Accepts(std::span<const Token> text) const;

  // Throws Error(kStructure) on a violated invariant.
  void Validate() const;

  friend bool operator==(const GeneralizedMatcher&,
                         const GeneralizedMatcher&) = default;
};

// One matcher per line:
// phase,label,prefix,middle-min,middle-max,middle-alphabet,suffix,unfuse
// where unfuse entries are `p<i>=(a,b)` or `s<i>=(a,b)` joined by ';'.
void WriteMatchers(std::ostream& out,
                   std::span<const GeneralizedMatcher> matchers);
std::vector<GeneralizedMatcher> ReadMatchers(
    std::istream& in, std::string_view source = "matchers");

}  // namespace leakscope

#endif  // LEAKSCOPE_MATCHER_H_
