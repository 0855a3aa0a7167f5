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

#include "leakscope/trace.h"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

using internal::ParseFlag;
using internal::ParseU64;
using internal::Split;
using internal::Trim;

char MemTag(MemAccess mem) {
  switch (mem) {
    case MemAccess::kRead: return 'r';
    case MemAccess::kWrite: return 'w';
    case MemAccess::kNone: return '-';
  }
  return '-';
}

MemAccess ParseMemTag(char tag) {
  switch (tag) {
    case 'r': case 'R': return MemAccess::kRead;
    case 'w': case 'W': return MemAccess::kWrite;
    case '-': return MemAccess::kNone;
  }
  throw Error(ErrorCode::kParse,
              std::string("unknown memory access tag '") + tag + "'");
}

const char* PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kLoad: return "load";
    case Phase::kInterpret: return "interpret";
    case Phase::kNative: return "native";
  }
  return "?";
}

Phase ParsePhase(std::string_view name) {
  name = Trim(name);
  if (name == "load") return Phase::kLoad;
  if (name == "interpret" || name == "interp") return Phase::kInterpret;
  if (name == "native") return Phase::kNative;
  throw Error(ErrorCode::kParse, "unknown phase '" + std::string(name) + "'");
}

void InstructionMeasurement::Validate() const {
  if (data_page.has_value() != (mem_access != MemAccess::kNone))
    throw Error(ErrorCode::kStructure,
                "data_page must be present iff the IM accesses memory");
  if (stack_access && mem_access == MemAccess::kNone)
    throw Error(ErrorCode::kStructure,
                "stack access without a memory access");
}

void ExecutionTrace::Validate() const {
  for (const auto& im : measurements) im.Validate();
  if (labels) {
    size_t prev_end = 0;
    for (size_t i = 0; i < labels->size(); ++i) {
      const LabelSpan& span = (*labels)[i];
      if (span.start > span.end || span.end > measurements.size())
        throw Error(ErrorCode::kStructure,
                    "label span " + std::to_string(i) + " out of bounds");
      if (span.start < prev_end)
        throw Error(ErrorCode::kStructure,
                    "label span " + std::to_string(i) +
                        " overlaps or is out of order");
      prev_end = span.end;
    }
  } else {
    for (const auto& im : measurements)
      if (im.ip)
        throw Error(ErrorCode::kStructure,
                    "production trace carries instruction pointers");
    if (!fuse_marks.empty())
      throw Error(ErrorCode::kStructure,
                  "production trace carries fuse metadata");
  }
}

ExecutionTrace ExecutionTrace::WithoutGroundTruth() const {
  ExecutionTrace out;
  out.phase = phase;
  out.measurements = measurements;
  for (auto& im : out.measurements) im.ip.reset();
  return out;
}

std::string Token::ToString() const {
  return std::to_string(page) + MemTag(mem);
}

Token Token::Parse(std::string_view text) {
  text = Trim(text);
  if (text.size() < 2)
    throw Error(ErrorCode::kParse, "bad token '" + std::string(text) + "'");
  Token t;
  t.mem = ParseMemTag(text.back());
  auto page = internal::ParseI64(text.substr(0, text.size() - 1));
  if (!page)
    throw Error(ErrorCode::kParse, "bad token '" + std::string(text) + "'");
  t.page = *page;
  return t;
}

std::string FormatTokens(std::span<const Token> tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.ToString();
  return out;
}

TokenString ParseTokens(std::string_view text) {
  TokenString out;
  size_t i = 0;
  text = Trim(text);
  while (i < text.size()) {
    size_t start = i;
    if (text[i] == '-' && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i + 1])))
      ++i;
    size_t digits = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
      ++i;
    if (i == digits || i >= text.size())
      throw Error(ErrorCode::kParse,
                  "malformed token string near offset " +
                      std::to_string(start) + " in '" + std::string(text) +
                      "'");
    out.push_back(Token::Parse(text.substr(start, i + 1 - start)));
    ++i;
  }
  return out;
}

bool CanFuse(const Token& first, const Token& second) {
  return first.page == second.page &&
         (first.mem == MemAccess::kNone || second.mem == MemAccess::kNone);
}

Token MergeFused(const Token& first, const Token& second) {
  Token t;
  t.page = first.page;
  t.mem = first.mem != MemAccess::kNone ? first.mem : second.mem;
  return t;
}

TokenString Tokenize(std::span<const InstructionMeasurement> ims,
                     uint64_t base_page) {
  TokenString out;
  out.reserve(ims.size());
  for (const auto& im : ims)
    out.push_back(Token{static_cast<int64_t>(im.code_page) -
                            static_cast<int64_t>(base_page),
                        im.mem_access});
  return out;
}

TokenString Tokenize(const ExecutionTrace& trace) {
  if (trace.empty()) return {};
  return Tokenize(trace.measurements, trace.measurements.front().code_page);
}

AttackerModel AttackerModel::SotA(uint64_t resolution_cycles) {
  AttackerModel m;
  m.kind = Kind::kSotA;
  m.latency_resolution_cycles = resolution_cycles;
  m.Validate();
  return m;
}

AttackerModel AttackerModel::Ideal() {
  AttackerModel m;
  m.kind = Kind::kIdeal;
  m.latency_resolution_cycles = 1;
  m.observe_fu = true;
  return m;
}

void AttackerModel::Validate() const {
  if (latency_resolution_cycles == 0)
    throw Error(ErrorCode::kInvalidArgument,
                "latency resolution must be positive");
  if (kind == Kind::kIdeal && (latency_resolution_cycles != 1 || !observe_fu))
    throw Error(ErrorCode::kInvalidArgument,
                "the ideal attacker has 1-cycle resolution and sees FUs");
}

std::string FeatureKey::ToString() const {
  std::ostringstream os;
  os << "lat=" << latency_bucket << " mem=" << MemTag(mem_access);
  if (stack_access) os << " stack=" << (*stack_access ? 1 : 0);
  if (is_control_flow) os << " cf=" << (*is_control_flow ? 1 : 0);
  if (fu_usage) os << " fu=" << *fu_usage;
  if (intercepted) os << " intercepted=" << *intercepted;
  return os.str();
}

FeatureKey MakeFeatureKey(const InstructionMeasurement& im,
                          const AttackerModel& model) {
  model.Validate();
  FeatureKey key;
  key.latency_bucket =
      LatencyBucket(im.latency_cycles, model.latency_resolution_cycles);
  key.mem_access = im.mem_access;
  if (model.observe_stack) key.stack_access = im.stack_access;
  if (model.observe_cf) key.is_control_flow = im.is_control_flow;
  return key;
}

// ---- text formats ----------------------------------------------------------

void WriteTrace(std::ostream& out, const ExecutionTrace& trace) {
  out << "#phase=" << PhaseName(trace.phase) << '\n';
  for (const auto& im : trace.measurements) {
    out << im.latency_cycles << ',' << im.code_page << ','
        << MemTag(im.mem_access) << ',';
    if (im.data_page)
      out << *im.data_page;
    else
      out << '-';
    out << ',' << (im.stack_access ? 1 : 0) << ','
        << (im.is_control_flow ? 1 : 0);
    if (im.ip) out << ',' << *im.ip;
    out << '\n';
  }
}

ExecutionTrace ReadTrace(std::istream& in, std::string_view source) {
  ExecutionTrace trace;
  bool have_phase = false;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = Trim(line);
    if (l.empty()) continue;
    if (l.front() == '#') {
      if (l.substr(0, 7) == "#phase=") {
        try {
          trace.phase = ParsePhase(l.substr(7));
        } catch (const Error& e) {
          throw ParseError(source, lineno, e.what());
        }
        have_phase = true;
      }
      continue;
    }
    auto fields = Split(l, ',');
    if (fields.size() != 6 && fields.size() != 7)
      throw ParseError(source, lineno,
                       "expected 6 or 7 fields, got " +
                           std::to_string(fields.size()));
    InstructionMeasurement im;
    auto latency = ParseU64(fields[0]);
    auto page = ParseU64(fields[1]);
    auto tag = Trim(fields[2]);
    auto stack = ParseFlag(fields[4]);
    auto cf = ParseFlag(fields[5]);
    if (!latency || !page || tag.size() != 1 || !stack || !cf)
      throw ParseError(source, lineno, "malformed measurement");
    im.latency_cycles = *latency;
    im.code_page = *page;
    try {
      im.mem_access = ParseMemTag(tag[0]);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (Trim(fields[3]) != "-") {
      auto dp = ParseU64(fields[3]);
      if (!dp) throw ParseError(source, lineno, "malformed data page");
      im.data_page = *dp;
    }
    im.stack_access = *stack;
    im.is_control_flow = *cf;
    if (fields.size() == 7) {
      auto ip = ParseU64(fields[6]);
      if (!ip) throw ParseError(source, lineno, "malformed ip");
      im.ip = *ip;
    }
    try {
      im.Validate();
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    trace.measurements.push_back(im);
  }
  if (!have_phase && !trace.measurements.empty())
    throw ParseError(source, 0, "missing #phase header");
  return trace;
}

void WriteLabels(std::ostream& out, std::span<const LabelSpan> labels) {
  for (const auto& l : labels)
    out << l.start << ',' << l.end << ',' << l.opcode << '\n';
}

std::vector<LabelSpan> ReadLabels(std::istream& in, std::string_view source) {
  std::vector<LabelSpan> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = Trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto fields = Split(l, ',');
    if (fields.size() != 3)
      throw ParseError(source, lineno, "expected start,end,opcode");
    auto start = ParseU64(fields[0]);
    auto end = ParseU64(fields[1]);
    auto op = Trim(fields[2]);
    if (!start || !end || op.empty())
      throw ParseError(source, lineno, "malformed label span");
    out.push_back({*start, *end, std::string(op)});
  }
  return out;
}

void WriteFuseMarks(std::ostream& out, std::span<const FuseMark> marks) {
  for (const auto& m : marks)
    out << m.index << ',' << (m.kind == FuseMark::Kind::kFused ? 'F' : 'U')
        << ',' << m.first_page << ',' << MemTag(m.first_mem) << ','
        << m.second_page << ',' << MemTag(m.second_mem) << '\n';
}

std::vector<FuseMark> ReadFuseMarks(std::istream& in,
                                    std::string_view source) {
  std::vector<FuseMark> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = Trim(line);
    if (l.empty() || l.front() == '#') continue;
    auto f = Split(l, ',');
    if (f.size() != 6) throw ParseError(source, lineno, "expected 6 fields");
    auto index = ParseU64(f[0]);
    auto kind = Trim(f[1]);
    auto p1 = ParseU64(f[2]);
    auto p2 = ParseU64(f[4]);
    auto t1 = Trim(f[3]);
    auto t2 = Trim(f[5]);
    if (!index || !p1 || !p2 || t1.size() != 1 || t2.size() != 1 ||
        (kind != "F" && kind != "U"))
      throw ParseError(source, lineno, "malformed fuse mark");
    FuseMark m;
    m.index = *index;
    m.kind = kind == "F" ? FuseMark::Kind::kFused : FuseMark::Kind::kSplit;
    m.first_page = *p1;
    m.second_page = *p2;
    try {
      m.first_mem = ParseMemTag(t1[0]);
      m.second_mem = ParseMemTag(t2[0]);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    out.push_back(m);
  }
  return out;
}

namespace {

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

std::string StemOf(const std::string& path) {
  const std::string ext = ".trace";
  if (path.size() > ext.size() &&
      path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
    return path.substr(0, path.size() - ext.size());
  return path;
}

}  // namespace

void SaveTraceFiles(const std::string& stem, const ExecutionTrace& trace) {
  {
    auto out = OpenOut(stem + ".trace");
    WriteTrace(out, trace);
  }
  if (trace.labels) {
    auto out = OpenOut(stem + ".labels");
    WriteLabels(out, *trace.labels);
  }
  if (!trace.fuse_marks.empty()) {
    auto out = OpenOut(stem + ".fuse");
    WriteFuseMarks(out, trace.fuse_marks);
  }
}

ExecutionTrace LoadTraceFiles(const std::string& path,
                              bool with_ground_truth) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  ExecutionTrace trace = ReadTrace(in, path);
  if (!with_ground_truth) return trace.WithoutGroundTruth();
  const std::string stem = StemOf(path);
  if (std::ifstream labels(stem + ".labels"); labels)
    trace.labels = ReadLabels(labels, stem + ".labels");
  if (std::ifstream fuse(stem + ".fuse"); fuse)
    trace.fuse_marks = ReadFuseMarks(fuse, stem + ".fuse");
  trace.Validate();
  return trace;
}

}  // namespace leakscope
