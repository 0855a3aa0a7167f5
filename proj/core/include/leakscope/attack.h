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

// Attack-side helpers on top of segmentation: timing-based pruning of
// candidate sets, function signature matching in load traces, result files
// and recovery statistics.

#ifndef LEAKSCOPE_ATTACK_H_
#define LEAKSCOPE_ATTACK_H_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakscope/segmentation.h"
#include "leakscope/timing_classifier.h"
#include "leakscope/trace.h"

namespace leakscope {

inline constexpr double kDefaultConfidenceFloor = 0.15;

// Ranks members of every multi-member candidate set by the classifier's
// probability (renormalized over the set) and drops those below `floor`.
// Sets with members the classifier was not trained on are left alone, and a
// set is never emptied.
Segmentation PruneWithTiming(const Segmentation& segmentation,
                             const ExecutionTrace& trace,
                             const TimingClassifier& clf,
                             double floor = kDefaultConfidenceFloor);

// Most likely member of a segment: highest confidence, else the first.
const std::string& TopCandidate(const Segment& segment);
std::vector<std::string> TopLabels(const Segmentation& segmentation);

// Label runs of each function in a load-trace label sequence, each starting
// at its header segment.
struct FunctionSpan {
  size_t first_segment = 0;
  std::vector<std::string> labels;
};
std::vector<FunctionSpan> SplitFunctions(std::span<const std::string> labels);

// Every offset at which `needle` occurs contiguously in `haystack`. Throws
// Error(kInvalidArgument) on an empty needle.
std::vector<size_t> MatchFunction(std::span<const std::string> needle,
                                  std::span<const std::string> haystack);

struct AttackResult {
  std::string source;
  Phase phase = Phase::kInterpret;
  Segmentation segmentation;
};

void WriteAttackResult(std::ostream& out, const AttackResult& result);
AttackResult ReadAttackResult(std::istream& in,
                              std::string_view source = "result");

struct RecoveryStats {
  std::string source;
  size_t segments = 0;
  double size1 = 0;
  double size_le2 = 0;
  double size_le3 = 0;
  double mean_set_size = 0;
  // Scored against withheld labels when available.
  std::optional<bool> boundaries_exact;
  std::optional<double> true_in_set;
};

RecoveryStats ComputeRecovery(
    const Segmentation& segmentation,
    const std::optional<std::vector<LabelSpan>>& truth = std::nullopt);

void WriteRecoveryCsv(std::ostream& out, std::span<const RecoveryStats> rows);

}  // namespace leakscope

#endif  // LEAKSCOPE_ATTACK_H_
