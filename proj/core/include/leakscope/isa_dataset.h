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

// Per-native-instruction feature tables and TEE legality filtering.
//
// File format: a comma-separated table whose first non-comment row names the
// columns (any order):
//
//   mnemonic,variant_id,semantic_class,latency,mem,stack,cf,fu_sequence,
//   sgx_legal,sev_intercepted,microarchitecture
//
// `mem` is r/w/-; flags are 0/1; `fu_sequence` lists pipeline stages
// separated by ';', each stage naming the unit used followed by the
// alternative units it could have used, separated by '|' (e.g. "p0|p1;p4").
// An empty fu_sequence means the record carries no functional-unit data.

#ifndef LEAKSCOPE_ISA_DATASET_H_
#define LEAKSCOPE_ISA_DATASET_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "leakscope/trace.h"

namespace leakscope {

struct FuStage {
  std::string unit;
  std::set<std::string> alternatives;  // includes `unit`

  friend bool operator==(const FuStage&, const FuStage&) = default;
};

std::string FormatFuSequence(const std::vector<FuStage>& stages);
std::vector<FuStage> ParseFuSequence(std::string_view text);

struct IsaRecord {
  std::string mnemonic;
  std::string variant_id;
  std::string semantic_class;
  uint64_t latency_cycles = 0;
  MemAccess mem_access = MemAccess::kNone;
  bool stack_access = false;
  bool is_control_flow = false;
  std::optional<std::vector<FuStage>> fu_sequence;
  bool sgx_legal = true;
  bool sev_intercepted = false;
  std::string microarchitecture;

  friend bool operator==(const IsaRecord&, const IsaRecord&) = default;
};

enum class Tee : uint8_t { kSgx, kSev, kUnrestricted };

Tee ParseTee(std::string_view name);  // "sgx", "sev", "none"
const char* TeeName(Tee tee);

struct IsaDataset {
  std::vector<IsaRecord> records;
  Tee tee = Tee::kUnrestricted;
  std::string microarchitecture;

  const IsaRecord* Find(std::string_view variant_id) const;
};

// Parses every row of a dataset table, all microarchitectures included.
std::vector<IsaRecord> ParseIsaRecords(std::istream& in,
                                       std::string_view source = "dataset");

// SGX drops illegal records; SEV and Unrestricted keep everything (SEV
// intercepts stay flagged). Idempotent.
std::vector<IsaRecord> FilterForTee(std::vector<IsaRecord> records, Tee tee);

// Selects one microarchitecture and applies the TEE filter. An empty
// `microarchitecture` is accepted when the table holds exactly one.
IsaDataset MakeDataset(std::vector<IsaRecord> records, Tee tee,
                       const std::string& microarchitecture);

IsaDataset LoadDataset(const std::string& path, Tee tee,
                       const std::string& microarchitecture);

// Distinct semantic classes of the given variants. Throws on unknown ids.
std::set<std::string> SemanticMerge(const std::set<std::string>& variant_ids,
                                    const IsaDataset& dataset);

struct DatasetSummary {
  size_t records = 0;
  std::map<std::string, size_t> per_microarchitecture;
  size_t sgx_illegal = 0;
  size_t sev_intercepted = 0;
  size_t missing_fu = 0;
};

// Parses and checks the whole file; throws ParseError on the first bad row.
DatasetSummary ValidateDatasetFile(const std::string& path);

}  // namespace leakscope

#endif  // LEAKSCOPE_ISA_DATASET_H_
