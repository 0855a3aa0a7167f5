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

#include <sstream>

#include <gtest/gtest.h>

#include "leakscope/attack.h"
#include "leakscope/error.h"
#include "leakscope/rng.h"
#include "leakscope/timing_classifier.h"
#include "test_util.h"

namespace leakscope {
namespace {

using Labels = std::vector<std::string>;

// Five classes whose latencies never overlap: class k sits near 20*k.
TimingClassifier SeparatedClassifier() {
  Rng rng(4);
  std::vector<LatencySample> samples;
  for (int k = 0; k < 5; ++k)
    for (int i = 0; i < 60; ++i) {
      LatencySample s;
      s.label = "op" + std::to_string(k);
      for (int j = 0; j < 3; ++j)
        s.features.push_back(static_cast<double>(20 * k + rng.UniformInt(0, 4)));
      samples.push_back(std::move(s));
    }
  ForestParams p;
  p.trees = 20;
  return TimingClassifier::Fit(samples, p);
}

ExecutionTrace TraceWithLatencies(std::vector<uint64_t> lat) {
  ExecutionTrace t;
  for (uint64_t l : lat) t.measurements.push_back(testing::Im(1, MemAccess::kNone, l));
  return t;
}

Segmentation OneSegment(Labels candidates, size_t len) {
  Segmentation s;
  s.complete = true;
  s.trace_length = len;
  s.segments.push_back({0, len, std::move(candidates), {}});
  return s;
}

TEST(PruneTest, SeparatedLatenciesLeaveOne) {
  auto clf = SeparatedClassifier();
  auto seg = OneSegment({"op0", "op1", "op2", "op3", "op4"}, 3);
  auto pruned = PruneWithTiming(seg, TraceWithLatencies({61, 62, 60}), clf);
  ASSERT_EQ(pruned.segments[0].candidates, Labels{"op3"});
  EXPECT_EQ(TopCandidate(pruned.segments[0]), "op3");
  EXPECT_TRUE(pruned.SameTiling(seg) == false);
  EXPECT_EQ(pruned.segments[0].start, 0u);
}

TEST(PruneTest, SingletonUnchanged) {
  auto clf = SeparatedClassifier();
  auto seg = OneSegment({"op1"}, 3);
  auto pruned = PruneWithTiming(seg, TraceWithLatencies({61, 62, 60}), clf);
  EXPECT_EQ(pruned.segments[0].candidates, Labels{"op1"});
  EXPECT_EQ(pruned.segments[0].confidence, std::vector<double>{1.0});
}

TEST(PruneTest, UnknownClassesAreLeftAlone) {
  auto clf = SeparatedClassifier();
  auto seg = OneSegment({"op1", "mystery"}, 3);
  auto pruned = PruneWithTiming(seg, TraceWithLatencies({1, 2, 3}), clf);
  EXPECT_EQ(pruned.segments[0].candidates, (Labels{"op1", "mystery"}));
}

TEST(PruneTest, NeverEmptiesASet) {
  auto clf = SeparatedClassifier();
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    auto seg = OneSegment({"op0", "op2", "op4"}, 3);
    std::vector<uint64_t> lat;
    for (int k = 0; k < 3; ++k) lat.push_back(static_cast<uint64_t>(rng.UniformInt(0, 120)));
    auto pruned = PruneWithTiming(seg, TraceWithLatencies(lat), clf, 0.99);
    ASSERT_FALSE(pruned.segments[0].candidates.empty());
    // Unscored sets (no probability mass at all) carry no confidences.
    const auto& conf = pruned.segments[0].confidence;
    ASSERT_TRUE(conf.empty() ||
                conf.size() == pruned.segments[0].candidates.size());
  }
}

// Float handlers: the two divisions separate from the rest, while add,
// sub and mul stay ambiguous.
TEST(PruneTest, DivisionsSeparateFromOtherFloatOps) {
  auto train = testing::FloatLatencySamples(300, 2, 11);
  ForestParams p;
  p.seed = 1;
  auto clf = TimingClassifier::Fit(train, p);
  auto test = testing::FloatLatencySamples(100, 2, 12);
  const Labels all = {"f.div", "f64.add", "f64.mul", "f64.sub"};
  size_t div_alone = 0, divs = 0, others_kept = 0, others = 0;
  for (const auto& s : test) {
    std::vector<uint64_t> lat(s.features.begin(), s.features.end());
    auto pruned = PruneWithTiming(OneSegment(all, lat.size()),
                                  TraceWithLatencies(lat), clf);
    const Labels& c = pruned.segments[0].candidates;
    const bool has_div = std::find(c.begin(), c.end(), "f.div") != c.end();
    if (SemanticClassOf(s.label) == "f.div") {
      ++divs;
      div_alone += c == Labels{"f.div"};
    } else {
      ++others;
      others_kept += !has_div && c.size() >= 2;
    }
  }
  // Most divisions end up alone; the slow tail of mul overlaps the fast
  // tail of f32.div, so not all of them.
  EXPECT_GE(static_cast<double>(div_alone) / static_cast<double>(divs), 0.7);
  EXPECT_GE(static_cast<double>(others_kept) / static_cast<double>(others), 0.6);
}

TEST(MatchTest, Basics) {
  const Labels hay = {"func", "add", "mul", "func", "sub", "add", "mul"};
  EXPECT_TRUE(MatchFunction(Labels{"div"}, hay).empty());
  EXPECT_EQ(MatchFunction(hay, hay), std::vector<size_t>{0});
  EXPECT_EQ(MatchFunction(Labels{"add", "mul"}, hay),
            (std::vector<size_t>{1, 5}));
  EXPECT_THROW(MatchFunction(Labels{}, hay), Error);
  auto fns = SplitFunctions(hay);
  ASSERT_EQ(fns.size(), 2u);
  EXPECT_EQ(fns[1].first_segment, 3u);
  EXPECT_EQ(fns[1].labels, (Labels{"func", "sub", "add", "mul"}));
}

TEST(MatchTest, TenFunctionsInALibrary) {
  Rng rng(10);
  const Labels ops = {"add", "sub", "mul", "div", "lt_s", "eq", "clz", "store"};
  Labels hay;
  std::vector<std::pair<size_t, Labels>> planted;
  for (int f = 0; f < 30; ++f) {
    Labels fn = {"func"};
    // Planted functions get a distinctive tail so no random one repeats them.
    for (int i = 0, n = static_cast<int>(rng.UniformInt(3, 8)); i < n; ++i)
      fn.push_back(ops[rng.UniformIndex(ops.size())]);
    if (f % 3 == 0) {
      for (int i = 0; i <= f / 3; ++i) fn.push_back("nop");
      fn.push_back("return");
      planted.push_back({hay.size(), fn});
    }
    hay.insert(hay.end(), fn.begin(), fn.end());
  }
  ASSERT_EQ(planted.size(), 10u);
  for (const auto& [offset, fn] : planted)
    EXPECT_EQ(MatchFunction(fn, hay), std::vector<size_t>{offset});
}

TEST(ResultTest, JsonRoundTrip) {
  AttackResult r;
  r.source = "target.interpret";
  r.phase = Phase::kInterpret;
  r.segmentation.complete = true;
  r.segmentation.trace_length = 9;
  r.segmentation.segments = {{0, 4, {"add", "sub"}, {0.75, 0.25}},
                             {4, 9, {"mul"}, {}}};
  std::stringstream ss;
  WriteAttackResult(ss, r);
  AttackResult back = ReadAttackResult(ss);
  EXPECT_EQ(back.source, r.source);
  EXPECT_EQ(back.segmentation, r.segmentation);
  std::stringstream gap(
      R"({"phase":"load","complete":true,"trace_length":5,)"
      R"("segments":[{"start":1,"end":5,"candidates":["a"]}]})");
  EXPECT_THROW(ReadAttackResult(gap), ParseError);
}

TEST(RecoveryTest, Stats) {
  Segmentation s;
  s.complete = true;
  s.trace_length = 6;
  s.segments = {{0, 2, {"add"}, {}},
                {2, 4, {"add", "sub"}, {}},
                {4, 6, {"f.div", "f64.add", "f64.mul"}, {}}};
  std::vector<LabelSpan> truth = {{0, 2, "add"}, {2, 4, "sub"}, {4, 6, "f32.div"}};
  auto st = ComputeRecovery(s, truth);
  EXPECT_EQ(st.segments, 3u);
  EXPECT_DOUBLE_EQ(st.size1, 1.0 / 3);
  EXPECT_DOUBLE_EQ(st.size_le2, 2.0 / 3);
  EXPECT_DOUBLE_EQ(st.size_le3, 1.0);
  EXPECT_DOUBLE_EQ(st.mean_set_size, 2.0);
  EXPECT_TRUE(*st.boundaries_exact);
  EXPECT_DOUBLE_EQ(*st.true_in_set, 1.0);
  truth[1].end = 3;
  truth[2].start = 3;
  st = ComputeRecovery(s, truth);
  EXPECT_FALSE(*st.boundaries_exact);
  EXPECT_FALSE(ComputeRecovery(s).boundaries_exact);

  std::stringstream csv;
  st.source = "x";
  WriteRecoveryCsv(csv, std::vector<RecoveryStats>{st});
  EXPECT_NE(csv.str().find("x,3,0.333333,0.666667,1.000000,2.000000,0,"),
            std::string::npos);
}

}  // namespace
}  // namespace leakscope
