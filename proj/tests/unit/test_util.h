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

#ifndef LEAKSCOPE_TESTS_TEST_UTIL_H_
#define LEAKSCOPE_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "leakscope/bytecode.h"
#include "leakscope/expansion_spec.h"
#include "leakscope/matcher.h"
#include "leakscope/profiling.h"
#include "leakscope/simulator.h"
#include "leakscope/timing_classifier.h"
#include "leakscope/trace.h"

namespace leakscope::testing {

inline std::string SourcePath(const std::string& rel) {
  return std::string(LEAKSCOPE_SOURCE_DIR) + "/" + rel;
}

inline std::filesystem::path ScratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "leakscope_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline InstructionMeasurement Im(uint64_t page, MemAccess mem,
                                 uint64_t latency = 1, bool stack = false,
                                 bool cf = false) {
  InstructionMeasurement im;
  im.code_page = page;
  im.mem_access = mem;
  if (mem != MemAccess::kNone) im.data_page = stack ? 0x7f0 : 0x500;
  im.stack_access = stack;
  im.is_control_flow = cf;
  im.latency_cycles = latency;
  return im;
}

inline TokenString T(std::string_view text) { return ParseTokens(text); }

inline Pattern MakePattern(const std::string& label, std::string_view tokens,
                           std::string_view unfuse = "",
                           Phase phase = Phase::kInterpret) {
  Pattern p;
  p.label = label;
  p.phase = phase;
  p.tokens = ParseTokens(tokens);
  p.unfuse = ParseUnfuse(unfuse);
  return p;
}

inline GeneralizedMatcher ExactMatcher(const std::string& label,
                                       std::string_view tokens,
                                       Phase phase = Phase::kInterpret) {
  return GeneralizedMatcher::Exact(MakePattern(label, tokens, "", phase));
}

inline ProgramFile Program(const std::string& text) {
  std::istringstream in(text);
  return ParseProgram(in, "test");
}

// Per-handler latency vectors of the five float opcodes, simulated with
// the default spec under latency jitter.
inline std::vector<LatencySample> FloatLatencySamples(size_t runs,
                                                      uint32_t jitter,
                                                      uint64_t seed) {
  const auto file = LoadProgram(SourcePath("testsuite/floats.prog"));
  std::vector<LatencySample> out;
  for (size_t r = 0; r < runs; ++r) {
    NoiseModel noise{0.0, jitter, seed * 1000003 + r};
    auto sim = InterpretPhase(file.program, file.input_sets[r % file.input_sets.size()],
                              DefaultExpansionSpec(), noise, 10000);
    for (auto& s : SegmentWithGroundTruth(sim.trace)) {
      LatencySample sample;
      sample.label = s.label;
      sample.features.assign(s.latencies.begin(), s.latencies.end());
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace leakscope::testing

#endif  // LEAKSCOPE_TESTS_TEST_UTIL_H_
