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

#include "leakscope/error.h"
#include "leakscope/generalization.h"
#include "leakscope/matcher.h"
#include "leakscope/rng.h"
#include "leakscope/simulator.h"
#include "test_util.h"

namespace leakscope {
namespace {

using testing::MakePattern;
using testing::Program;
using testing::T;

TEST(TrieTest, SharedPrefixThenBranch) {
  std::vector<Pattern> ps = {MakePattern("X", "1-2-3-"),
                             MakePattern("X", "1-2-4-")};
  auto trie = BuildTrie(ps);
  EXPECT_EQ(FormatTokens(trie.CommonPath()), "1-2-");
  // root, a, b, c, d
  EXPECT_EQ(trie.nodes().size(), 5u);
  EXPECT_EQ(trie.root().count, 2u);
  auto rev = BuildSuffixTrie(ps);
  EXPECT_TRUE(rev.CommonPath().empty());
}

TEST(TrieTest, SinglePatternIsLinear) {
  std::vector<Pattern> ps = {MakePattern("X", "1-2r3w")};
  auto trie = BuildTrie(ps);
  EXPECT_EQ(trie.nodes().size(), 4u);
  for (const auto& n : trie.nodes()) EXPECT_LE(n.children.size(), 1u);
  EXPECT_EQ(FormatTokens(trie.CommonPath()), "1-2r3w");
}

TEST(TrieTest, MixedLabelsRejected) {
  std::vector<Pattern> ps = {MakePattern("X", "1-"), MakePattern("Y", "1-")};
  EXPECT_THROW(BuildTrie(ps), Error);
}

std::vector<Pattern> ClzPatterns(std::initializer_list<int> zero_counts) {
  auto prog = Program("func f params=1\n local.get 0\n clz\nendfunc\n").program;
  PatternDatabase db;
  for (int z : zero_counts) {
    const int64_t in[] = {z == 32 ? 0 : int64_t{1} << (31 - z)};
    auto r = InterpretPhase(prog, in, DefaultExpansionSpec(), NoiseModel{}, 10);
    for (const auto& s : SegmentWithGroundTruth(r.trace)) db.Insert(s);
  }
  std::vector<Pattern> out;
  for (const Pattern* p : db.For(Phase::kInterpret, "clz")) out.push_back(*p);
  return out;
}

TEST(TrieTest, ClzBranchesAtTheLoopEntry) {
  auto ps = ClzPatterns({0, 2, 5, 9});
  ASSERT_EQ(ps.size(), 4u);
  auto trie = BuildTrie(ps);
  // Walk the shared head; the branch node must offer the loop body (4-)
  // and the exit store (4w).
  size_t node = 0;
  for (size_t i = 0; i < trie.CommonPath().size(); ++i)
    node = trie.nodes()[node].children.begin()->second;
  const auto& kids = trie.nodes()[node].children;
  ASSERT_EQ(kids.size(), 2u);
  EXPECT_TRUE(kids.count(Token{4, MemAccess::kNone}));
  EXPECT_TRUE(kids.count(Token{4, MemAccess::kWrite}));
}

TEST(GeneralizeTest, LoopCountDifference) {
  std::vector<Pattern> ps = {
      MakePattern("X", "1r1-1-1-1-" "5-5-5-" "2-2w2-9-"),
      MakePattern("X", "1r1-1-1-1-" "4-4-4-4-4-4-4-" "2-2w2-9-")};
  ASSERT_EQ(ps[0].tokens.size(), 12u);
  ASSERT_EQ(ps[1].tokens.size(), 16u);
  auto m = Generalize(BuildTrie(ps), BuildSuffixTrie(ps), 3);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->prefix.size(), 5u);
  EXPECT_EQ(m->suffix.size(), 4u);
  EXPECT_EQ(m->middle_min, 3u);
  EXPECT_EQ(m->middle_max, 7u);
  for (const auto& p : ps) EXPECT_TRUE(m->Accepts(p.tokens));
  // Brute force over middle lengths 0..9 of a single symbol.
  for (size_t len = 0; len < 10; ++len) {
    TokenString t = T("1r1-1-1-1-");
    for (size_t i = 0; i < len; ++i) t.push_back(T("4-")[0]);
    auto s = T("2-2w2-9-");
    t.insert(t.end(), s.begin(), s.end());
    EXPECT_EQ(m->Accepts(t), len >= 3 && len <= 7) << len;
  }
}

TEST(GeneralizeTest, IdenticalPatterns) {
  std::vector<Pattern> ps = {MakePattern("X", "1r2-3w"),
                             MakePattern("X", "1r2-3w")};
  auto m = Generalize(BuildTrie(ps), BuildSuffixTrie(ps), 2);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->middle_min, 0u);
  EXPECT_EQ(m->middle_max, 0u);
  EXPECT_TRUE(m->Accepts(T("1r2-3w")));
  EXPECT_FALSE(m->Accepts(T("1r2-2-3w")));
}

TEST(GeneralizeTest, NoCommonFirstTokenIsRefused) {
  std::vector<Pattern> ps = {MakePattern("X", "1r2-3w"),
                             MakePattern("X", "2r2-3w")};
  EXPECT_FALSE(Generalize(BuildTrie(ps), BuildSuffixTrie(ps), 2));
  PatternDatabase db;
  for (auto& p : ps) db.Add(p);
  auto ms = CompileMatchers(db, 1, 0);
  ASSERT_EQ(ms.size(), 2u);
  for (const auto& m : ms) EXPECT_TRUE(m.IsExact());
}

TEST(GeneralizeTest, ZeroSplitsIsAnError) {
  std::vector<Pattern> ps = {MakePattern("X", "1r")};
  EXPECT_THROW(Generalize(BuildTrie(ps), BuildSuffixTrie(ps), 0), Error);
  EXPECT_THROW(CompileMatchers(PatternDatabase{}, 0, 0), Error);
}

TEST(GeneralizeTest, SlackWidensOnlyGeneralizedMatchers) {
  std::vector<Pattern> ps = {MakePattern("X", "1r5-5-9-"),
                             MakePattern("X", "1r5-5-5-5-9-")};
  auto m = Generalize(BuildTrie(ps), BuildSuffixTrie(ps), 1, 3);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->middle_min, 0u);
  EXPECT_EQ(m->middle_max, 5u);
}

PatternDatabase SuiteDatabase(double fusion, uint64_t seeds) {
  PatternDatabase db;
  const auto& spec = DefaultExpansionSpec();
  for (const char* name : {"arith.prog", "floats.prog", "clz.prog",
                           "control.prog", "memory.prog", "consts.prog",
                           "calls.prog"}) {
    auto file = LoadProgram(testing::SourcePath(std::string("testsuite/") + name));
    for (uint64_t seed = 0; seed < seeds; ++seed) {
      NoiseModel n{fusion, 2, seed};
      for (const auto& s :
           SegmentWithGroundTruth(LoadPhase(file.program, spec, n).trace))
        db.Insert(s);
      for (const auto& in : file.input_sets)
        for (const auto& s : SegmentWithGroundTruth(
                 InterpretPhase(file.program, in, spec, n, 1000000).trace))
          db.Insert(s);
    }
  }
  return db;
}

TEST(CompileTest, MatcherCountBound) {
  const auto db = SuiteDatabase(0.2, 2);
  auto ms = CompileMatchers(db, 3, DefaultExpansionSpec().MaxRepeatBodyLength());
  EXPECT_LE(ms.size(), 2u * kOpcodeCount * 2u);
  for (const auto& m : ms) EXPECT_NO_THROW(m.Validate());
}

TEST(CompileTest, SoundOnProfiledObservations) {
  const auto db = SuiteDatabase(0.3, 2);
  auto ms = CompileMatchers(db, 3, 0);
  for (const Pattern& p : db.patterns())
    for (const auto& v : p.Variants()) {
      bool ok = false;
      for (const auto& m : ms)
        ok = ok || (m.label == p.label && m.phase == p.phase && m.Accepts(v));
      EXPECT_TRUE(ok) << p.label << " " << FormatTokens(v);
    }
}

TEST(CompileTest, LinearOnlyDatabaseKeepsPatterns) {
  PatternDatabase db;
  db.Add(MakePattern("add", "0r0r1-1w0-0-9r9-"));
  db.Add(MakePattern("drop", "0-0-9r9-"));
  db.Add(MakePattern("nop", "0-9r9-", "", Phase::kLoad));
  auto ms = CompileMatchers(db, 3, 4);
  ASSERT_EQ(ms.size(), 3u);
  for (const auto& m : ms) {
    EXPECT_TRUE(m.IsExact());
    EXPECT_EQ(m, GeneralizedMatcher::Exact(*db.For(m.phase, m.label)[0]));
  }
  EXPECT_TRUE(CompileMatchers(PatternDatabase{}, 3, 0).empty());
}

TEST(CompileTest, HeldOutClzInputsAccepted) {
  PatternDatabase db;
  for (const auto& p : ClzPatterns({0, 1, 3, 8, 20, 31})) db.Add(p);
  auto ms = CompileMatchers(db, 3, DefaultExpansionSpec().MaxRepeatBodyLength());
  for (const auto& held : ClzPatterns({5, 13, 27, 32})) {
    bool ok = false;
    for (const auto& m : ms) ok = ok || m.Accepts(held.tokens);
    EXPECT_TRUE(ok) << FormatTokens(held.tokens);
  }
}

GeneralizedMatcher RandomMatcher(Rng& rng) {
  auto tok = [&] {
    return Token{rng.UniformInt(0, 2), static_cast<MemAccess>(rng.UniformInt(0, 2))};
  };
  GeneralizedMatcher m;
  m.label = "r";
  for (int i = 0, n = static_cast<int>(rng.UniformInt(1, 3)); i < n; ++i)
    m.prefix.push_back(tok());
  for (int i = 0, n = static_cast<int>(rng.UniformInt(1, 2)); i < n; ++i)
    m.suffix.push_back(tok());
  if (rng.Bernoulli(0.5)) {
    for (int i = 0; i < 2; ++i) m.middle_alphabet.insert(tok());
    m.middle_min = static_cast<size_t>(rng.UniformInt(0, 2));
    m.middle_max = m.middle_min + static_cast<size_t>(rng.UniformInt(0, 3));
  }
  if (m.prefix[0].mem != MemAccess::kNone && rng.Bernoulli(0.5))
    m.prefix_unfuse[0] = {Token{m.prefix[0].page, MemAccess::kNone}, m.prefix[0]};
  return m;
}

TEST(MatcherTest, MatchEndsAgreesWithAccepts) {
  Rng rng(21);
  for (int iter = 0; iter < 500; ++iter) {
    auto m = RandomMatcher(rng);
    TokenString text;
    for (int i = 0, n = static_cast<int>(rng.UniformInt(0, 12)); i < n; ++i)
      text.push_back(Token{rng.UniformInt(0, 2),
                           static_cast<MemAccess>(rng.UniformInt(0, 2))});
    for (size_t start = 0; start <= text.size(); ++start) {
      std::vector<size_t> ends;
      m.MatchEnds(text, start, ends);
      for (size_t e = start; e <= text.size(); ++e) {
        const bool in = std::binary_search(ends.begin(), ends.end(), e);
        ASSERT_EQ(in, m.Accepts(std::span<const Token>(text).subspan(start, e - start)))
            << iter;
      }
    }
  }
}

TEST(MatcherTest, ExactShape) {
  auto m = GeneralizedMatcher::Exact(MakePattern("X", "1r2-3w", "0=(1-,1r)"));
  EXPECT_EQ(FormatTokens(m.prefix), "1r2-");
  EXPECT_EQ(FormatTokens(m.suffix), "3w");
  EXPECT_TRUE(m.Accepts(T("1-1r2-3w")));
  EXPECT_EQ(m.MaxLength(), 4u);
  EXPECT_EQ(m.MinLength(), 3u);
  auto one = GeneralizedMatcher::Exact(MakePattern("X", "1r"));
  EXPECT_TRUE(one.suffix.empty());
  EXPECT_NO_THROW(one.Validate());
  EXPECT_TRUE(one.Accepts(T("1r")));
}

TEST(MatcherTest, FileRoundTrip) {
  const auto db = SuiteDatabase(0.2, 1);
  auto ms = CompileMatchers(db, 3, 4);
  std::stringstream ss;
  WriteMatchers(ss, ms);
  EXPECT_EQ(ReadMatchers(ss), ms);
}

}  // namespace
}  // namespace leakscope
