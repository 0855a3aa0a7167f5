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

#include "leakscope/leakage.h"

#include <algorithm>
#include <ostream>

#include "leakscope/error.h"

namespace leakscope {

FeatureKey MakeFeatureKey(const IsaRecord& record, const AttackerModel& model,
                          Tee tee) {
  model.Validate();
  FeatureKey key;
  if (tee == Tee::kSev && record.sev_intercepted) {
    key.intercepted = record.semantic_class;
    return key;
  }
  key.latency_bucket =
      LatencyBucket(record.latency_cycles, model.latency_resolution_cycles);
  key.mem_access = record.mem_access;
  if (model.observe_stack) key.stack_access = record.stack_access;
  if (model.observe_cf) key.is_control_flow = record.is_control_flow;
  if (model.observe_fu) {
    if (!record.fu_sequence)
      throw Error(ErrorCode::kDataset, "record '" + record.variant_id +
                                           "' has no functional-unit data");
    key.fu_usage = FormatFuSequence(*record.fu_sequence);
  }
  return key;
}

ClassMap BuildClasses(const IsaDataset& dataset, const AttackerModel& model) {
  if (dataset.records.empty())
    throw Error(ErrorCode::kInvalidArgument, "dataset is empty");
  ClassMap classes;
  for (const auto& r : dataset.records) {
    CandidateSet& set = classes[MakeFeatureKey(r, model, dataset.tee)];
    set.members.insert(r.semantic_class);
    set.variants.push_back(r.variant_id);
  }
  return classes;
}

ClassMap IdealClasses(const IsaDataset& dataset) {
  return BuildClasses(dataset, AttackerModel::Ideal());
}

size_t SizeDistribution::At(int percentile) const {
  for (const auto& [p, s] : points)
    if (p == percentile) return s;
  throw Error(ErrorCode::kInvalidArgument,
              "percentile " + std::to_string(percentile) + " not in curve");
}

SizeDistribution DistributionFromSizes(std::vector<size_t> unit_sizes) {
  SizeDistribution dist;
  if (unit_sizes.empty()) return dist;
  std::sort(unit_sizes.begin(), unit_sizes.end());
  const size_t n = unit_sizes.size();
  for (int x = 1; x <= 100; ++x) {
    // Smallest k with k/n >= x/100; the k-th smallest size covers it.
    size_t k = (static_cast<size_t>(x) * n + 99) / 100;
    dist.points.emplace_back(x, unit_sizes[k - 1]);
  }
  return dist;
}

SizeDistribution ComputeSizeDistribution(const ClassMap& classes,
                                         Weighting weighting) {
  std::vector<size_t> sizes;
  if (weighting == Weighting::kVariant) {
    for (const auto& [key, set] : classes)
      sizes.insert(sizes.end(), set.variants.size(), set.size());
  } else {
    std::map<std::string, size_t> smallest;
    for (const auto& [key, set] : classes)
      for (const auto& member : set.members) {
        auto [it, inserted] = smallest.emplace(member, set.size());
        if (!inserted) it->second = std::min(it->second, set.size());
      }
    for (const auto& [member, size] : smallest) sizes.push_back(size);
  }
  return DistributionFromSizes(std::move(sizes));
}

std::map<uint64_t, SizeDistribution> ResolutionSweep(
    const IsaDataset& dataset, const std::vector<uint64_t>& resolutions,
    Weighting weighting) {
  if (resolutions.empty())
    throw Error(ErrorCode::kInvalidArgument, "no resolutions given");
  std::map<uint64_t, SizeDistribution> out;
  for (uint64_t r : resolutions)
    out[r] = ComputeSizeDistribution(
        BuildClasses(dataset, AttackerModel::SotA(r)), weighting);
  return out;
}

void WriteDistributionCsv(std::ostream& out, const SizeDistribution& dist) {
  out << "percentile,min_set_size\n";
  for (const auto& [p, s] : dist.points) out << p << ',' << s << '\n';
}

void WriteSweepCsv(std::ostream& out,
                   const std::map<uint64_t, SizeDistribution>& sweep) {
  out << "resolution,percentile,min_set_size\n";
  for (const auto& [r, dist] : sweep)
    for (const auto& [p, s] : dist.points)
      out << r << ',' << p << ',' << s << '\n';
}

}  // namespace leakscope
