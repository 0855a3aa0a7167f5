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

#include <gtest/gtest.h>

#include "leakscope/error.h"
#include "leakscope/rng.h"
#include "leakscope/segmentation.h"
#include "test_util.h"

namespace leakscope {
namespace {

using testing::ExactMatcher;
using testing::T;

std::vector<GeneralizedMatcher> Abc() {
  return {ExactMatcher("A", "1r1w"), ExactMatcher("B", "1r"),
          ExactMatcher("C", "1w")};
}

TEST(SegmentTest, LongestFirst) {
  auto ms = Abc();
  MatcherIndex index(ms, Phase::kInterpret);
  auto seg = SegmentTokens(T("1r1w"), index);
  ASSERT_TRUE(seg.complete);
  ASSERT_EQ(seg.segments.size(), 1u);
  EXPECT_EQ(seg.segments[0].start, 0u);
  EXPECT_EQ(seg.segments[0].end, 2u);
  EXPECT_EQ(seg.segments[0].candidates, std::vector<std::string>{"A"});
}

TEST(SegmentTest, EnumerationOfTheSmallExample) {
  auto e = EnumerateSegmentations(T("1r1w"), Abc(), Phase::kInterpret, 100);
  EXPECT_FALSE(e.truncated);
  ASSERT_EQ(e.tilings.size(), 2u);
  EXPECT_EQ(e.tilings[0].segments.size(), 1u);
  EXPECT_EQ(e.tilings[1].segments.size(), 2u);
}

TEST(SegmentTest, EmptyTrace) {
  auto ms = Abc();
  MatcherIndex index(ms, Phase::kInterpret);
  auto seg = SegmentTokens(TokenString{}, index);
  EXPECT_TRUE(seg.complete);
  EXPECT_TRUE(seg.segments.empty());
  ExecutionTrace t;
  EXPECT_TRUE(SegmentTrace(t, {}).complete);
}

TEST(SegmentTest, UnmatchedTokenReportsDeepestOffset) {
  auto ms = Abc();
  MatcherIndex index(ms, Phase::kInterpret);
  const auto tokens = T("1r1w1r5-1w");
  EXPECT_TRUE(
      EnumerateSegmentations(tokens, ms, Phase::kInterpret, 10).tilings.empty());
  try {
    SegmentTokens(tokens, index);
    FAIL();
  } catch (const SegmentationError& e) {
    EXPECT_EQ(e.deepest(), 3u);
    EXPECT_EQ(e.code(), ErrorCode::kSegmentation);
    EXPECT_NE(std::string(e.what()).find("5-1w"), std::string::npos);
  }
}

TEST(SegmentTest, WholeTraceMatcher) {
  std::vector<GeneralizedMatcher> ms = {ExactMatcher("W", "1r2-3w4-")};
  auto e = EnumerateSegmentations(T("1r2-3w4-"), ms, Phase::kInterpret, 10);
  EXPECT_EQ(e.tilings.size(), 1u);
}

TEST(SegmentTest, PhaseFilter) {
  std::vector<GeneralizedMatcher> ms = {
      ExactMatcher("L", "0r", Phase::kLoad)};
  ExecutionTrace t;
  t.phase = Phase::kInterpret;
  t.measurements = {testing::Im(1, MemAccess::kRead)};
  EXPECT_THROW(SegmentTrace(t, ms), Error);
  t.phase = Phase::kLoad;
  EXPECT_TRUE(SegmentTrace(t, ms).complete);
}

TEST(SegmentTest, CandidatesMergeSemanticClasses) {
  std::vector<GeneralizedMatcher> ms = {
      ExactMatcher("f64.div", "1r2-"), ExactMatcher("f32.div", "1r2-"),
      ExactMatcher("add", "1r2-"), ExactMatcher("sub", "1r2w")};
  MatcherIndex index(ms, Phase::kInterpret);
  auto seg = SegmentTokens(T("1r2-1r2w"), index);
  ASSERT_EQ(seg.segments.size(), 2u);
  EXPECT_EQ(seg.segments[0].candidates,
            (std::vector<std::string>{"add", "f.div"}));
  EXPECT_EQ(seg.segments[1].candidates, std::vector<std::string>{"sub"});
}

TEST(SegmentTest, UnfusedFirstTokenIsIndexed) {
  std::vector<GeneralizedMatcher> ms = {GeneralizedMatcher::Exact(
      testing::MakePattern("X", "1r2-", "0=(1-,1r)"))};
  MatcherIndex index(ms, Phase::kInterpret);
  EXPECT_TRUE(SegmentTokens(T("1-1r2-1r2-"), index).complete);
}

TEST(EnumerateTest, CapSetsTruncated) {
  std::vector<GeneralizedMatcher> ms = {ExactMatcher("A", "1-"),
                                        ExactMatcher("B", "1-1-")};
  TokenString t(20, Token{1, MemAccess::kNone});
  auto e = EnumerateSegmentations(t, ms, Phase::kInterpret, 50);
  EXPECT_TRUE(e.truncated);
  EXPECT_EQ(e.tilings.size(), 50u);
  EXPECT_THROW(EnumerateSegmentations(TokenString(501, Token{}), ms,
                                      Phase::kInterpret, 1),
               Error);
}

// Random matchers and traces: the greedy result is always one of the
// enumerated tilings, and it is the only one when the tiling is unique.
TEST(SegmentPropertyTest, GreedyIsAmongEnumerated) {
  Rng rng(77);
  size_t complete = 0;
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<GeneralizedMatcher> ms;
    std::vector<TokenString> pieces;
    const int count = static_cast<int>(rng.UniformInt(1, 5));
    for (int k = 0; k < count; ++k) {
      TokenString p;
      for (int i = 0, n = static_cast<int>(rng.UniformInt(1, 4)); i < n; ++i)
        p.push_back(Token{rng.UniformInt(0, 2),
                          static_cast<MemAccess>(rng.UniformInt(0, 1))});
      pieces.push_back(p);
      ms.push_back(GeneralizedMatcher::Exact(
          testing::MakePattern("m" + std::to_string(k), FormatTokens(p))));
    }
    TokenString text;
    for (int i = 0, n = static_cast<int>(rng.UniformInt(0, 12)); i < n; ++i) {
      const auto& p = pieces[rng.UniformIndex(pieces.size())];
      text.insert(text.end(), p.begin(), p.end());
    }
    if (rng.Bernoulli(0.1)) text.push_back(Token{7, MemAccess::kWrite});
    auto all = EnumerateSegmentations(text, ms, Phase::kInterpret, 100000);
    MatcherIndex index(ms, Phase::kInterpret);
    try {
      auto greedy = SegmentTokens(text, index);
      ++complete;
      bool found = false;
      for (const auto& t : all.tilings) found = found || t.SameTiling(greedy);
      ASSERT_TRUE(found) << iter;
      if (all.tilings.size() == 1) {
        ASSERT_TRUE(all.tilings[0].SameTiling(greedy));
      }
    } catch (const SegmentationError&) {
      ASSERT_TRUE(all.tilings.empty()) << iter;
    }
  }
  EXPECT_GT(complete, 200u);
}

}  // namespace
}  // namespace leakscope
