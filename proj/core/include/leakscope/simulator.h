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

// Ground-truth victim: a loader and an interpreter for the mini bytecode
// that emit one instruction measurement per simulated native step.

#ifndef LEAKSCOPE_SIMULATOR_H_
#define LEAKSCOPE_SIMULATOR_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leakscope/bytecode.h"
#include "leakscope/error.h"
#include "leakscope/expansion_spec.h"
#include "leakscope/trace.h"

namespace leakscope {

struct NoiseModel {
  // Probability that a fuseable pair is observed as one step.
  double fusion_probability = 0.0;
  // Uniform +/- range added to every step. Zero disables all timing noise,
  // including the per-step jitter of the expansion templates.
  uint32_t latency_jitter = 0;
  uint64_t seed = 0;
};

struct SimulationResult {
  // Always carries labels, IPs and fuse marks; use WithoutGroundTruth() for
  // the attacker's view.
  ExecutionTrace trace;
  // (function, instruction) pairs that produce no interpreter steps.
  std::vector<std::pair<size_t, size_t>> optimized_away;
  std::optional<std::string> trap;
  size_t executed_instructions = 0;
  size_t emitting_instructions = 0;

  // Native steps per executed bytecode instruction.
  double Amplification() const;
};

class TruncationError : public Error {
 public:
  TruncationError(const std::string& message, SimulationResult partial)
      : Error(ErrorCode::kTruncated, message), partial_(std::move(partial)) {}

  const SimulationResult& partial() const { return partial_; }

 private:
  SimulationResult partial_;
};

// Static pass over every instruction in program order, each function
// preceded by its header.
SimulationResult LoadPhase(const BytecodeProgram& program,
                           const ExpansionSpec& spec, const NoiseModel& noise);

// Executes the first function with `inputs` as its parameters. Throws
// TruncationError once `max_steps` instructions have executed.
SimulationResult InterpretPhase(const BytecodeProgram& program,
                                std::span<const int64_t> inputs,
                                const ExpansionSpec& spec,
                                const NoiseModel& noise, uint64_t max_steps);

// Number of extra bytes of the LEB128 encoding of an immediate.
uint64_t LebContinuationBytes(int64_t value, bool is_signed);

}  // namespace leakscope

#endif  // LEAKSCOPE_SIMULATOR_H_
