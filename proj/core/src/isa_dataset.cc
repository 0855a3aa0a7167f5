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

#include "leakscope/isa_dataset.h"

#include <algorithm>
#include <fstream>
#include <istream>

#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

using internal::ParseFlag;
using internal::ParseU64;
using internal::Split;
using internal::Trim;

std::string FormatFuSequence(const std::vector<FuStage>& stages) {
  std::string out;
  for (size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ';';
    out += stages[i].unit;
    for (const auto& alt : stages[i].alternatives)
      if (alt != stages[i].unit) out += '|' + alt;
  }
  return out;
}

std::vector<FuStage> ParseFuSequence(std::string_view text) {
  std::vector<FuStage> out;
  text = Trim(text);
  if (text.empty()) return out;
  for (auto stage_text : Split(text, ';')) {
    FuStage stage;
    for (auto unit : Split(stage_text, '|')) {
      unit = Trim(unit);
      if (unit.empty())
        throw Error(ErrorCode::kParse,
                    "empty functional unit in '" + std::string(text) + "'");
      if (stage.unit.empty()) stage.unit = std::string(unit);
      stage.alternatives.insert(std::string(unit));
    }
    out.push_back(std::move(stage));
  }
  return out;
}

Tee ParseTee(std::string_view name) {
  name = Trim(name);
  if (name == "sgx") return Tee::kSgx;
  if (name == "sev") return Tee::kSev;
  if (name == "none" || name == "unrestricted") return Tee::kUnrestricted;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown TEE '" + std::string(name) + "' (sgx|sev|none)");
}

const char* TeeName(Tee tee) {
  switch (tee) {
    case Tee::kSgx: return "sgx";
    case Tee::kSev: return "sev";
    case Tee::kUnrestricted: return "none";
  }
  return "?";
}

const IsaRecord* IsaDataset::Find(std::string_view variant_id) const {
  for (const auto& r : records)
    if (r.variant_id == variant_id) return &r;
  return nullptr;
}

namespace {

constexpr const char* kColumns[] = {
    "mnemonic", "variant_id",      "semantic_class",   "latency",
    "mem",      "stack",           "cf",               "fu_sequence",
    "sgx_legal", "sev_intercepted", "microarchitecture"};

}  // namespace

std::vector<IsaRecord> ParseIsaRecords(std::istream& in,
                                       std::string_view source) {
  std::vector<IsaRecord> out;
  std::map<std::string, size_t> column;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = Trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto fields = Split(l, ',');
    if (!have_header) {
      for (size_t i = 0; i < fields.size(); ++i)
        column[std::string(Trim(fields[i]))] = i;
      for (const char* name : kColumns)
        if (!column.count(name))
          throw ParseError(source, lineno,
                           std::string("header lacks column '") + name + "'");
      have_header = true;
      continue;
    }
    if (fields.size() != column.size())
      throw ParseError(source, lineno,
                       "expected " + std::to_string(column.size()) +
                           " fields, got " + std::to_string(fields.size()));
    auto get = [&](const char* name) { return Trim(fields[column[name]]); };
    IsaRecord r;
    r.mnemonic = get("mnemonic");
    r.variant_id = get("variant_id");
    r.semantic_class = get("semantic_class");
    r.microarchitecture = get("microarchitecture");
    if (r.mnemonic.empty() || r.variant_id.empty() ||
        r.semantic_class.empty() || r.microarchitecture.empty())
      throw ParseError(source, lineno, "empty identifier field");
    auto latency = ParseU64(get("latency"));
    auto stack = ParseFlag(get("stack"));
    auto cf = ParseFlag(get("cf"));
    auto legal = ParseFlag(get("sgx_legal"));
    auto intercepted = ParseFlag(get("sev_intercepted"));
    auto mem = get("mem");
    if (!latency || !stack || !cf || !legal || !intercepted || mem.size() != 1)
      throw ParseError(source, lineno, "malformed record");
    try {
      r.mem_access = ParseMemTag(mem[0]);
      auto fu = get("fu_sequence");
      if (!fu.empty()) r.fu_sequence = ParseFuSequence(fu);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    r.latency_cycles = *latency;
    r.stack_access = *stack;
    r.is_control_flow = *cf;
    r.sgx_legal = *legal;
    r.sev_intercepted = *intercepted;
    if (r.stack_access && r.mem_access == MemAccess::kNone)
      throw ParseError(source, lineno, "stack access without memory access");
    if (!seen.insert({r.microarchitecture, r.variant_id}).second)
      throw ParseError(source, lineno,
                       "duplicate variant_id '" + r.variant_id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<IsaRecord> FilterForTee(std::vector<IsaRecord> records, Tee tee) {
  if (tee == Tee::kSgx)
    std::erase_if(records, [](const IsaRecord& r) { return !r.sgx_legal; });
  return records;
}

IsaDataset MakeDataset(std::vector<IsaRecord> records, Tee tee,
                       const std::string& microarchitecture) {
  std::set<std::string> available;
  for (const auto& r : records) available.insert(r.microarchitecture);
  std::string uarch = microarchitecture;
  if (uarch.empty() && available.size() == 1) uarch = *available.begin();
  if (!available.empty() && !available.count(uarch)) {
    std::string list;
    for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
    throw Error(ErrorCode::kDataset, "unknown microarchitecture '" + uarch +
                                         "'; available: " + list);
  }
  IsaDataset ds;
  ds.tee = tee;
  ds.microarchitecture = uarch;
  std::erase_if(records, [&](const IsaRecord& r) {
    return r.microarchitecture != uarch;
  });
  ds.records = FilterForTee(std::move(records), tee);
  return ds;
}

IsaDataset LoadDataset(const std::string& path, Tee tee,
                       const std::string& microarchitecture) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return MakeDataset(ParseIsaRecords(in, path), tee, microarchitecture);
}

std::set<std::string> SemanticMerge(const std::set<std::string>& variant_ids,
                                    const IsaDataset& dataset) {
  std::set<std::string> out;
  for (const auto& id : variant_ids) {
    const IsaRecord* r = dataset.Find(id);
    if (!r)
      throw Error(ErrorCode::kDataset, "unknown variant_id '" + id + "'");
    out.insert(r->semantic_class);
  }
  return out;
}

DatasetSummary ValidateDatasetFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  DatasetSummary s;
  for (const auto& r : ParseIsaRecords(in, path)) {
    ++s.records;
    ++s.per_microarchitecture[r.microarchitecture];
    if (!r.sgx_legal) ++s.sgx_illegal;
    if (r.sev_intercepted) ++s.sev_intercepted;
    if (!r.fu_sequence) ++s.missing_fu;
  }
  return s;
}

}  // namespace leakscope
