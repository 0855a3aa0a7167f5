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

// Candidate-set analysis over an ISA feature dataset.

#ifndef LEAKSCOPE_LEAKAGE_H_
#define LEAKSCOPE_LEAKAGE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "leakscope/isa_dataset.h"
#include "leakscope/trace.h"

namespace leakscope {

// Instructions an attacker cannot tell apart from one observation. Members
// are semantic classes; `variants` keeps the raw records for per-variant
// weighting.
struct CandidateSet {
  std::set<std::string> members;
  std::vector<std::string> variants;

  size_t size() const { return members.size(); }
};

using ClassMap = std::map<FeatureKey, CandidateSet>;

// Observation key of a dataset record. Under SEV an intercepted record is
// keyed by its semantic class alone, which isolates it.
FeatureKey MakeFeatureKey(const IsaRecord& record, const AttackerModel& model,
                          Tee tee);

// Partitions the dataset by feature key. Throws on an empty dataset.
ClassMap BuildClasses(const IsaDataset& dataset, const AttackerModel& model);

// Classes under the ideal attacker. Throws naming the first record that
// lacks functional-unit data.
ClassMap IdealClasses(const IsaDataset& dataset);

enum class Weighting : uint8_t { kSemanticClass, kVariant };

struct SizeDistribution {
  // (percentile, minimum candidate-set size covering that percentile), for
  // percentiles 1..100. Empty when there is nothing to weigh.
  std::vector<std::pair<int, size_t>> points;

  size_t At(int percentile) const;

  friend bool operator==(const SizeDistribution&,
                         const SizeDistribution&) = default;
};

// Percentile curve over one set size per weighted unit.
SizeDistribution DistributionFromSizes(std::vector<size_t> unit_sizes);

// kSemanticClass: one unit per semantic class, sized by the smallest
// candidate set that contains it. kVariant: one unit per record.
SizeDistribution ComputeSizeDistribution(
    const ClassMap& classes, Weighting weighting = Weighting::kSemanticClass);

// SotA model at each resolution, everything else fixed.
std::map<uint64_t, SizeDistribution> ResolutionSweep(
    const IsaDataset& dataset, const std::vector<uint64_t>& resolutions,
    Weighting weighting = Weighting::kSemanticClass);

void WriteDistributionCsv(std::ostream& out, const SizeDistribution& dist);
void WriteSweepCsv(std::ostream& out,
                   const std::map<uint64_t, SizeDistribution>& sweep);

}  // namespace leakscope

#endif  // LEAKSCOPE_LEAKAGE_H_
