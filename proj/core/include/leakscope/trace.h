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

// Core observation types: instruction measurements, execution traces, the
// token alphabet used for pattern matching, and attacker-model feature keys.

#ifndef LEAKSCOPE_TRACE_H_
#define LEAKSCOPE_TRACE_H_

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leakscope {

enum class MemAccess : uint8_t { kNone, kRead, kWrite };

// 'r', 'w' or '-'.
char MemTag(MemAccess mem);
MemAccess ParseMemTag(char tag);

enum class Phase : uint8_t { kLoad, kInterpret, kNative };

const char* PhaseName(Phase phase);  // "load", "interpret", "native"
Phase ParsePhase(std::string_view name);

// One observed native instruction.
struct InstructionMeasurement {
  uint64_t latency_cycles = 0;
  uint64_t code_page = 0;
  MemAccess mem_access = MemAccess::kNone;
  std::optional<uint64_t> data_page;  // present iff mem_access != kNone
  bool stack_access = false;          // implies a memory access
  bool is_control_flow = false;
  std::optional<uint64_t> ip;  // ground truth, profiling mode only

  // Throws Error(kStructure) when an invariant is violated.
  void Validate() const;

  friend bool operator==(const InstructionMeasurement&,
                         const InstructionMeasurement&) = default;
};

using IM = InstructionMeasurement;

// Ground-truth span [start, end) of IMs belonging to one bytecode
// instruction.
struct LabelSpan {
  size_t start = 0;
  size_t end = 0;
  std::string opcode;

  friend bool operator==(const LabelSpan&, const LabelSpan&) = default;
};

// Profiling-only record of a fuseable native pair. kFused: the IM at `index`
// is the collapsed pair. kSplit: IMs `index` and `index + 1` are the pair,
// observed separately.
struct FuseMark {
  enum class Kind : uint8_t { kFused, kSplit };

  size_t index = 0;
  Kind kind = Kind::kFused;
  uint64_t first_page = 0;
  MemAccess first_mem = MemAccess::kNone;
  uint64_t second_page = 0;
  MemAccess second_mem = MemAccess::kNone;

  friend bool operator==(const FuseMark&, const FuseMark&) = default;
};

struct ExecutionTrace {
  std::vector<InstructionMeasurement> measurements;
  Phase phase = Phase::kInterpret;
  std::optional<std::vector<LabelSpan>> labels;
  std::vector<FuseMark> fuse_marks;

  size_t size() const { return measurements.size(); }
  bool empty() const { return measurements.empty(); }

  // Checks IM invariants, label-span ordering/bounds, and that traces
  // without labels carry no ground truth (IPs or fuse marks).
  void Validate() const;

  // Copy with every piece of ground truth removed.
  ExecutionTrace WithoutGroundTruth() const;

  friend bool operator==(const ExecutionTrace&,
                         const ExecutionTrace&) = default;
};

// The attacker's segmentation alphabet: code page (relative to the first
// code page of the trace) and memory access type.
struct Token {
  int64_t page = 0;
  MemAccess mem = MemAccess::kNone;

  std::string ToString() const;
  static Token Parse(std::string_view text);

  friend auto operator<=>(const Token&, const Token&) = default;
};

using TokenString = std::vector<Token>;

// "1r2-0w" <-> {1r, 2-, 0w}.
std::string FormatTokens(std::span<const Token> tokens);
TokenString ParseTokens(std::string_view text);

// Token produced when a fuseable pair executes as one step: the page of the
// first instruction and the pair's single memory access (if any).
Token MergeFused(const Token& first, const Token& second);
bool CanFuse(const Token& first, const Token& second);

// One token per IM, pages made relative to the first IM's code page.
TokenString Tokenize(const ExecutionTrace& trace);
TokenString Tokenize(std::span<const InstructionMeasurement> ims,
                     uint64_t base_page);

struct AttackerModel {
  enum class Kind : uint8_t { kSotA, kIdeal };

  Kind kind = Kind::kSotA;
  uint64_t latency_resolution_cycles = 10;
  bool observe_fu = false;
  bool observe_stack = true;
  bool observe_cf = true;

  static AttackerModel SotA(uint64_t resolution_cycles = 10);
  static AttackerModel Ideal();

  void Validate() const;
};

// Attacker-observable equivalence key. Two observations with equal keys are
// indistinguishable under the model that produced them.
struct FeatureKey {
  uint64_t latency_bucket = 0;
  MemAccess mem_access = MemAccess::kNone;
  std::optional<bool> stack_access;
  std::optional<bool> is_control_flow;
  std::optional<std::string> fu_usage;
  // Set only for observations leaked through a system interface (e.g. a
  // hypervisor intercept); isolates them from every other key.
  std::optional<std::string> intercepted;

  std::string ToString() const;

  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
};

FeatureKey MakeFeatureKey(const InstructionMeasurement& im,
                          const AttackerModel& model);

// Latency bucket for a half-open interval [k*r, (k+1)*r).
inline uint64_t LatencyBucket(uint64_t latency, uint64_t resolution) {
  return latency / resolution;
}

// Trace text format. See README for the line layout.
void WriteTrace(std::ostream& out, const ExecutionTrace& trace);
ExecutionTrace ReadTrace(std::istream& in, std::string_view source = "trace");
void WriteLabels(std::ostream& out, std::span<const LabelSpan> labels);
std::vector<LabelSpan> ReadLabels(std::istream& in,
                                  std::string_view source = "labels");
void WriteFuseMarks(std::ostream& out, std::span<const FuseMark> marks);
std::vector<FuseMark> ReadFuseMarks(std::istream& in,
                                    std::string_view source = "fuse");

// Writes `<stem>.trace` plus `<stem>.labels` / `<stem>.fuse` sidecars when
// the trace carries them.
void SaveTraceFiles(const std::string& stem, const ExecutionTrace& trace);

// Loads `path` (a .trace file). Sidecars next to it are attached only when
// `with_ground_truth` is set; otherwise IPs are stripped as well.
ExecutionTrace LoadTraceFiles(const std::string& path, bool with_ground_truth);

}  // namespace leakscope

#endif  // LEAKSCOPE_TRACE_H_
