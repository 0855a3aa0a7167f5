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

// End-to-end run: simulate the test suite, profile, generalize, attack a
// target program and score the result.

#ifndef LEAKSCOPE_PIPELINE_H_
#define LEAKSCOPE_PIPELINE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "leakscope/attack.h"
#include "leakscope/bytecode.h"
#include "leakscope/expansion_spec.h"
#include "leakscope/matcher.h"
#include "leakscope/profiling.h"
#include "leakscope/simulator.h"

namespace leakscope {

struct RunConfig {
  uint64_t seed = 1;
  std::string testsuite = "testsuite";
  std::string target;
  std::vector<int64_t> target_inputs;
  std::optional<std::string> spec;  // default spec when absent
  double fusion_probability = 0.2;
  uint32_t latency_jitter = 2;
  uint64_t max_steps = 1000000;
  size_t max_splits = 3;
  std::optional<size_t> slack;  // spec's longest repeat body when absent
  bool timing_prune = false;
  double confidence_floor = kDefaultConfidenceFloor;
  size_t workers = 1;
  std::string out_dir = "out";

  // Throws Error(kInvalidArgument) naming the first bad field.
  void Validate() const;
};

std::string RunConfigToJson(const RunConfig& config);
// Unknown keys are rejected. Relative paths are kept as written.
RunConfig RunConfigFromJson(std::string_view text,
                            std::string_view source = "config");
// Reads a config file and resolves its relative paths against the file's
// directory.
RunConfig LoadRunConfig(const std::string& path);

// Seed for one named stream, derived from the run seed.
uint64_t DeriveSeed(uint64_t seed, std::string_view stream);

struct SuiteProgram {
  std::string name;  // file stem
  ProgramFile file;
};
// Every *.prog file of `dir`, sorted by name.
std::vector<SuiteProgram> LoadTestSuite(const std::string& dir);

struct NamedTrace {
  std::string name;
  ExecutionTrace trace;
};
// Load trace of every program plus one interpreter trace per input set,
// with ground truth. Ordered by program then input set.
std::vector<NamedTrace> SimulateSuite(const std::vector<SuiteProgram>& suite,
                                      const ExpansionSpec& spec,
                                      double fusion_probability,
                                      uint32_t latency_jitter, uint64_t seed,
                                      uint64_t max_steps, size_t workers);

// Segments and folds traces into one database; per-trace work runs on the
// worker pool, the fold is in input order.
PatternDatabase ProfileTraces(const std::vector<NamedTrace>& traces,
                              const std::string& spec_hash, size_t workers);

struct PipelineSummary {
  size_t suite_programs = 0;
  size_t suite_traces = 0;
  size_t patterns = 0;
  size_t matchers = 0;
  double amplification = 0;
  size_t executed_instructions = 0;
  std::optional<double> holdout_accuracy;
  std::vector<RecoveryStats> traces;  // load, interpret
};

void WriteSummaryJson(std::ostream& out, const RunConfig& config,
                      const PipelineSummary& summary);

// Writes patterns.db, matchers.db, attack_{load,interpret}.json,
// summary.json and summary.csv to config.out_dir. Stage failures are
// rethrown as Error(kStage) prefixed with the stage name. Progress and
// wall-clock timings go to `log` when given.
PipelineSummary RunPipeline(const RunConfig& config,
                            std::ostream* log = nullptr);

}  // namespace leakscope

#endif  // LEAKSCOPE_PIPELINE_H_
