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

#include "leakscope/expansion_spec.h"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "leakscope/bytecode.h"
#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

using internal::ParseU64;
using internal::Split;
using internal::Trim;

namespace {

Error SpecError(const std::string& msg) {
  return Error(ErrorCode::kStructure, "expansion spec: " + msg);
}

// Parses one step word; returns the step and its multiplicity.
std::pair<StepTemplate, size_t> ParseStep(std::string_view word) {
  StepTemplate step;
  size_t i = 0;
  while (i < word.size() && std::isdigit(static_cast<unsigned char>(word[i])))
    ++i;
  if (i == 0 || i >= word.size())
    throw SpecError("bad step '" + std::string(word) + "'");
  step.page = *ParseU64(word.substr(0, i));
  try {
    step.mem = ParseMemTag(word[i++]);
  } catch (const Error&) {
    throw SpecError("bad memory tag in '" + std::string(word) + "'");
  }
  size_t count = 1;
  while (i < word.size()) {
    char c = word[i];
    if (c == 'S') {
      step.stack = true;
      ++i;
    } else if (c == 'C') {
      step.is_control_flow = true;
      ++i;
    } else if (c == 'F') {
      step.fuse_with_next = true;
      ++i;
    } else if (c == '@' || c == '~' || c == 'x') {
      size_t j = ++i;
      while (j < word.size() &&
             std::isdigit(static_cast<unsigned char>(word[j])))
        ++j;
      auto v = ParseU64(word.substr(i, j - i));
      if (!v) throw SpecError("bad number in '" + std::string(word) + "'");
      if (c == '@') step.latency_mean = static_cast<uint32_t>(*v);
      if (c == '~') step.latency_jitter = static_cast<uint32_t>(*v);
      if (c == 'x') count = *v;
      i = j;
    } else {
      throw SpecError("bad step '" + std::string(word) + "'");
    }
  }
  if (step.stack && step.mem == MemAccess::kNone)
    throw SpecError("stack flag without memory access in '" +
                    std::string(word) + "'");
  if (count == 0) throw SpecError("zero repeat in '" + std::string(word) + "'");
  return {step, count};
}

std::string FormatStep(const StepTemplate& s) {
  std::string out = std::to_string(s.page) + MemTag(s.mem);
  if (s.stack) out += 'S';
  if (s.is_control_flow) out += 'C';
  if (s.fuse_with_next) out += 'F';
  if (s.latency_mean != 1 || s.latency_jitter != 0)
    out += '@' + std::to_string(s.latency_mean);
  if (s.latency_jitter != 0) out += '~' + std::to_string(s.latency_jitter);
  return out;
}

std::string FormatSteps(const std::vector<StepTemplate>& steps) {
  std::string out;
  for (size_t i = 0; i < steps.size();) {
    size_t j = i;
    while (j < steps.size() && steps[j] == steps[i]) ++j;
    if (!out.empty()) out += ' ';
    out += FormatStep(steps[i]);
    if (j - i > 1) out += 'x' + std::to_string(j - i);
    i = j;
  }
  return out;
}

void CheckFusePairs(const std::vector<StepTemplate>& steps,
                    const std::string& where) {
  for (size_t i = 0; i < steps.size(); ++i) {
    const StepTemplate& s = steps[i];
    if (!s.fuse_with_next) continue;
    if (i + 1 >= steps.size())
      throw SpecError(where + ": fuse flag on the last step of a part");
    const StepTemplate& n = steps[i + 1];
    if (n.fuse_with_next)
      throw SpecError(where + ": fused chains longer than a pair");
    if (n.page != s.page)
      throw SpecError(where + ": fuseable pair spans two code pages");
    if (s.mem != MemAccess::kNone && n.mem != MemAccess::kNone)
      throw SpecError(where + ": fuseable pair with two memory accesses");
  }
}

}  // namespace

std::vector<StepTemplate> Expansion::Instantiate(uint64_t repeat,
                                                 bool taken) const {
  std::vector<StepTemplate> out;
  for (const auto& part : parts) {
    switch (part.kind) {
      case ExpansionPart::Kind::kFixed:
        out.insert(out.end(), part.steps.begin(), part.steps.end());
        break;
      case ExpansionPart::Kind::kRepeat:
        for (uint64_t i = 0; i < repeat; ++i)
          out.insert(out.end(), part.steps.begin(), part.steps.end());
        break;
      case ExpansionPart::Kind::kBranch: {
        const auto& arm = taken ? part.steps : part.fallthrough;
        out.insert(out.end(), arm.begin(), arm.end());
        break;
      }
    }
  }
  return out;
}

size_t Expansion::MaxRepeatBodyLength() const {
  size_t n = 0;
  for (const auto& part : parts)
    if (part.kind == ExpansionPart::Kind::kRepeat)
      n = std::max(n, part.steps.size());
  return n;
}

bool Expansion::HasRepeat() const { return MaxRepeatBodyLength() > 0; }

Expansion ParseExpansion(std::string_view text) {
  Expansion exp;
  std::vector<StepTemplate> fixed;
  auto flush = [&] {
    if (!fixed.empty()) {
      exp.parts.push_back({ExpansionPart::Kind::kFixed, std::move(fixed), {}});
      fixed.clear();
    }
  };
  enum class Mode { kTop, kRepeat, kTaken, kFallthrough } mode = Mode::kTop;
  ExpansionPart open;
  std::istringstream words{std::string(text)};
  std::string word;
  while (words >> word) {
    if (word == "(") {
      if (mode != Mode::kTop) throw SpecError("nested '('");
      flush();
      open = {ExpansionPart::Kind::kRepeat, {}, {}};
      mode = Mode::kRepeat;
    } else if (word == ")*") {
      if (mode != Mode::kRepeat) throw SpecError("unbalanced ')*'");
      if (open.steps.empty()) throw SpecError("empty loop body");
      exp.parts.push_back(std::move(open));
      mode = Mode::kTop;
    } else if (word == "<") {
      if (mode != Mode::kTop) throw SpecError("nested '<'");
      flush();
      open = {ExpansionPart::Kind::kBranch, {}, {}};
      mode = Mode::kTaken;
    } else if (word == "|") {
      if (mode != Mode::kTaken) throw SpecError("'|' outside a branch");
      mode = Mode::kFallthrough;
    } else if (word == ">") {
      if (mode != Mode::kFallthrough) throw SpecError("unbalanced '>'");
      exp.parts.push_back(std::move(open));
      mode = Mode::kTop;
    } else {
      auto [step, count] = ParseStep(word);
      auto& target = mode == Mode::kTop           ? fixed
                     : mode == Mode::kFallthrough ? open.fallthrough
                                                  : open.steps;
      target.insert(target.end(), count, step);
    }
  }
  if (mode != Mode::kTop) throw SpecError("unterminated loop or branch");
  flush();
  return exp;
}

std::string FormatExpansion(const Expansion& exp) {
  std::string out;
  auto add = [&](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out += ' ';
    out += s;
  };
  for (const auto& part : exp.parts) {
    switch (part.kind) {
      case ExpansionPart::Kind::kFixed:
        add(FormatSteps(part.steps));
        break;
      case ExpansionPart::Kind::kRepeat:
        add("( " + FormatSteps(part.steps) + " )*");
        break;
      case ExpansionPart::Kind::kBranch:
        add("< " + FormatSteps(part.steps) + " | " +
            FormatSteps(part.fallthrough) + " >");
        break;
    }
  }
  return out;
}

const OpcodeExpansion& ExpansionSpec::For(std::string_view label) const {
  auto it = opcodes.find(std::string(label));
  if (it == opcodes.end())
    throw SpecError("no expansion for '" + std::string(label) + "'");
  return it->second;
}

size_t ExpansionSpec::MaxRepeatBodyLength() const {
  size_t n = 0;
  for (const auto& [label, e] : opcodes) {
    n = std::max(n, e.load.MaxRepeatBodyLength());
    if (e.interpret) n = std::max(n, e.interpret->MaxRepeatBodyLength());
  }
  return n;
}

void ExpansionSpec::Validate() const {
  std::vector<std::string> required;
  for (Opcode op : AllOpcodes()) required.emplace_back(OpcodeName(op));
  required.emplace_back(kFunctionHeaderLabel);
  for (const auto& label : required) {
    auto it = opcodes.find(label);
    if (it == opcodes.end())
      throw SpecError("missing expansion for '" + label + "'");
    if (it->second.load.parts.empty())
      throw SpecError("'" + label + "' has an empty load expansion");
  }
  if (opcodes.at(std::string(kFunctionHeaderLabel)).interpret)
    throw SpecError("the function header has no interpreter expansion");
  for (const auto& [label, e] : opcodes) {
    if (!ParseOpcode(label) && label != kFunctionHeaderLabel)
      throw SpecError("unknown opcode '" + label + "'");
    auto check = [&](const Expansion& exp, const char* phase) {
      const std::string where = label + "/" + phase;
      for (const auto& part : exp.parts) {
        CheckFusePairs(part.steps, where);
        CheckFusePairs(part.fallthrough, where);
      }
    };
    check(e.load, "load");
    if (e.interpret) {
      check(*e.interpret, "interpret");
      const auto& parts = e.interpret->parts;
      if (parts.empty() || parts.back().kind != ExpansionPart::Kind::kFixed ||
          !parts.back().steps.back().is_control_flow)
        throw SpecError(label +
                        "/interpret must end in a fixed control-flow step");
    }
  }
}

std::string ExpansionSpecToJson(const ExpansionSpec& spec) {
  nlohmann::ordered_json j;
  j["load_base_page"] = spec.load_base_page;
  j["interpret_base_page"] = spec.interpret_base_page;
  j["stack_page"] = spec.stack_page;
  j["heap_page"] = spec.heap_page;
  nlohmann::ordered_json ops = nlohmann::ordered_json::object();
  for (const auto& [label, e] : spec.opcodes) {
    nlohmann::ordered_json o;
    o["load"] = FormatExpansion(e.load);
    if (e.interpret) o["interpret"] = FormatExpansion(*e.interpret);
    ops[label] = o;
  }
  j["opcodes"] = ops;
  return j.dump(2) + "\n";
}

ExpansionSpec ExpansionSpecFromJson(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("expansion spec: ") + e.what());
  }
  ExpansionSpec spec;
  try {
    spec.load_base_page = j.value("load_base_page", spec.load_base_page);
    spec.interpret_base_page =
        j.value("interpret_base_page", spec.interpret_base_page);
    spec.stack_page = j.value("stack_page", spec.stack_page);
    spec.heap_page = j.value("heap_page", spec.heap_page);
    for (const auto& [label, o] : j.at("opcodes").items()) {
      OpcodeExpansion e;
      e.load = ParseExpansion(o.at("load").get<std::string>());
      if (o.contains("interpret"))
        e.interpret = ParseExpansion(o.at("interpret").get<std::string>());
      spec.opcodes[label] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("expansion spec: ") + e.what());
  }
  spec.Validate();
  return spec;
}

ExpansionSpec LoadExpansionSpec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ExpansionSpecFromJson(ss.str());
}

std::string ExpansionSpec::Hash() const {
  const std::string canonical = ExpansionSpecToJson(*this);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace leakscope
