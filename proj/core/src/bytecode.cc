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

#include "leakscope/bytecode.h"

#include <fstream>
#include <istream>
#include <ostream>

#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

using internal::ParseI64;
using internal::ParseU64;
using internal::Split;
using internal::Trim;

namespace {

struct OpInfo {
  Opcode op;
  std::string_view name;
  bool operand;
};

constexpr OpInfo kOps[kOpcodeCount] = {
    {Opcode::kConst, "const", true},
    {Opcode::kLocalGet, "local.get", true},
    {Opcode::kLocalSet, "local.set", true},
    {Opcode::kLocalTee, "local.tee", true},
    {Opcode::kAdd, "add", false},
    {Opcode::kSub, "sub", false},
    {Opcode::kMul, "mul", false},
    {Opcode::kDiv, "div", false},
    {Opcode::kLtS, "lt_s", false},
    {Opcode::kEq, "eq", false},
    {Opcode::kClz, "clz", false},
    {Opcode::kLoad, "load", false},
    {Opcode::kStore, "store", false},
    {Opcode::kLoop, "loop", false},
    {Opcode::kEnd, "end", false},
    {Opcode::kBrIf, "br_if", true},
    {Opcode::kBr, "br", true},
    {Opcode::kIf, "if", false},
    {Opcode::kElse, "else", false},
    {Opcode::kCall, "call", true},
    {Opcode::kReturn, "return", false},
    {Opcode::kDrop, "drop", false},
    {Opcode::kNop, "nop", false},
    {Opcode::kBlock, "block", false},
    {Opcode::kF32Div, "f32.div", false},
    {Opcode::kF64Add, "f64.add", false},
    {Opcode::kF64Div, "f64.div", false},
    {Opcode::kF64Mul, "f64.mul", false},
    {Opcode::kF64Sub, "f64.sub", false},
};

Error StructureError(const Function& f, size_t index, const std::string& msg) {
  return Error(ErrorCode::kStructure, "func " + f.name + ": instruction " +
                                          std::to_string(index) + ": " + msg);
}

}  // namespace

const std::array<Opcode, kOpcodeCount>& AllOpcodes() {
  static const std::array<Opcode, kOpcodeCount> ops = [] {
    std::array<Opcode, kOpcodeCount> a{};
    for (size_t i = 0; i < kOpcodeCount; ++i) a[i] = kOps[i].op;
    return a;
  }();
  return ops;
}

std::string_view OpcodeName(Opcode op) {
  return kOps[static_cast<size_t>(op)].name;
}

std::optional<Opcode> ParseOpcode(std::string_view name) {
  for (const auto& info : kOps)
    if (info.name == name) return info.op;
  return std::nullopt;
}

bool HasOperand(Opcode op) { return kOps[static_cast<size_t>(op)].operand; }

std::string SemanticClassOf(std::string_view label) {
  if (label == "f32.div" || label == "f64.div") return "f.div";
  return std::string(label);
}

std::optional<size_t> BytecodeProgram::FindFunction(
    std::string_view name) const {
  for (size_t i = 0; i < functions.size(); ++i)
    if (functions[i].name == name) return i;
  return std::nullopt;
}

size_t BytecodeProgram::InstructionCount() const {
  size_t n = 0;
  for (const auto& f : functions) n += f.body.size();
  return n;
}

ControlMap BuildControlMap(const Function& f) {
  ControlMap map;
  const size_t n = f.body.size();
  map.end_of.assign(n, n);
  map.else_of.assign(n, n);
  map.open_of.assign(n, n);
  std::vector<size_t> open;
  for (size_t i = 0; i < n; ++i) {
    const Instruction& ins = f.body[i];
    switch (ins.op) {
      case Opcode::kBlock:
      case Opcode::kLoop:
      case Opcode::kIf:
        open.push_back(i);
        break;
      case Opcode::kElse: {
        if (open.empty() || f.body[open.back()].op != Opcode::kIf ||
            map.else_of[open.back()] != n)
          throw StructureError(f, i, "else without matching if");
        map.else_of[open.back()] = i;
        map.open_of[i] = open.back();
        break;
      }
      case Opcode::kEnd: {
        if (open.empty()) throw StructureError(f, i, "end without block");
        size_t o = open.back();
        open.pop_back();
        map.end_of[o] = i;
        map.open_of[i] = o;
        if (f.body[o].op == Opcode::kIf && map.else_of[o] != n)
          map.end_of[map.else_of[o]] = i;
        if (f.body[o].op == Opcode::kIf && map.else_of[o] == n)
          map.else_of[o] = i;
        break;
      }
      case Opcode::kBr:
      case Opcode::kBrIf:
        if (ins.operand < 0 ||
            static_cast<size_t>(ins.operand) >= open.size())
          throw StructureError(f, i,
                               "branch depth " + std::to_string(ins.operand) +
                                   " out of range");
        break;
      default:
        break;
    }
  }
  if (!open.empty())
    throw StructureError(f, open.back(),
                         std::string(OpcodeName(f.body[open.back()].op)) +
                             " is never closed");
  return map;
}

void ValidateProgram(const BytecodeProgram& program) {
  for (const auto& f : program.functions) {
    BuildControlMap(f);
    const int64_t nlocals = static_cast<int64_t>(f.params) + f.locals;
    for (size_t i = 0; i < f.body.size(); ++i) {
      const Instruction& ins = f.body[i];
      switch (ins.op) {
        case Opcode::kLocalGet:
        case Opcode::kLocalSet:
        case Opcode::kLocalTee:
          if (ins.operand < 0 || ins.operand >= nlocals)
            throw StructureError(f, i, "local index out of range");
          break;
        case Opcode::kCall:
          if (ins.operand < 0 ||
              static_cast<size_t>(ins.operand) >= program.functions.size())
            throw StructureError(f, i, "unknown callee");
          break;
        default:
          break;
      }
    }
  }
}

ProgramFile ParseProgram(std::istream& in, std::string_view source) {
  ProgramFile file;
  struct PendingCall {
    size_t func, index, line;
    std::string callee;
  };
  std::vector<PendingCall> calls;
  Function* current = nullptr;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos)
      l = l.substr(0, hash);
    l = Trim(l);
    if (l.empty()) continue;
    std::vector<std::string_view> words;
    for (auto w : Split(l, ' '))
      if (!Trim(w).empty()) words.push_back(Trim(w));

    if (words[0] == "@inputs") {
      std::vector<int64_t> inputs;
      if (words.size() > 1) {
        for (auto v : Split(words[1], ',')) {
          auto x = ParseI64(v);
          if (!x) throw ParseError(source, lineno, "bad input value");
          inputs.push_back(*x);
        }
      }
      file.input_sets.push_back(std::move(inputs));
      continue;
    }
    if (words[0] == "func") {
      if (current) throw ParseError(source, lineno, "nested func");
      if (words.size() < 2) throw ParseError(source, lineno, "func needs a name");
      Function f;
      f.name = std::string(words[1]);
      if (file.program.FindFunction(f.name))
        throw ParseError(source, lineno, "duplicate function " + f.name);
      for (size_t i = 2; i < words.size(); ++i) {
        auto kv = Split(words[i], '=');
        auto v = kv.size() == 2 ? ParseU64(kv[1]) : std::nullopt;
        if (!v) throw ParseError(source, lineno, "bad func attribute");
        if (kv[0] == "params")
          f.params = static_cast<uint32_t>(*v);
        else if (kv[0] == "locals")
          f.locals = static_cast<uint32_t>(*v);
        else
          throw ParseError(source, lineno, "unknown func attribute");
      }
      file.program.functions.push_back(std::move(f));
      current = &file.program.functions.back();
      continue;
    }
    if (words[0] == "endfunc") {
      if (!current) throw ParseError(source, lineno, "endfunc outside func");
      current = nullptr;
      continue;
    }
    if (!current)
      throw ParseError(source, lineno, "instruction outside of a function");
    auto op = ParseOpcode(words[0]);
    if (!op)
      throw ParseError(source, lineno,
                       "unknown opcode '" + std::string(words[0]) + "'");
    Instruction ins;
    ins.op = *op;
    if (HasOperand(*op)) {
      if (words.size() != 2)
        throw ParseError(source, lineno,
                         std::string(words[0]) + " takes one operand");
      if (*op == Opcode::kCall) {
        calls.push_back({file.program.functions.size() - 1,
                         current->body.size(), lineno, std::string(words[1])});
      } else {
        auto v = ParseI64(words[1]);
        if (!v) throw ParseError(source, lineno, "bad operand");
        ins.operand = *v;
      }
    } else if (words.size() != 1) {
      throw ParseError(source, lineno,
                       std::string(words[0]) + " takes no operand");
    }
    current->body.push_back(ins);
  }
  if (current) throw ParseError(source, lineno, "missing endfunc");
  for (const auto& c : calls) {
    auto target = file.program.FindFunction(c.callee);
    if (!target)
      throw ParseError(source, c.line, "unknown function " + c.callee);
    file.program.functions[c.func].body[c.index].operand =
        static_cast<int64_t>(*target);
  }
  return file;
}

ProgramFile LoadProgram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return ParseProgram(in, path);
}

void WriteProgram(std::ostream& out, const BytecodeProgram& program) {
  for (const auto& f : program.functions) {
    out << "func " << f.name << " params=" << f.params << " locals=" << f.locals
        << '\n';
    for (const auto& ins : f.body) {
      out << "  " << OpcodeName(ins.op);
      if (ins.op == Opcode::kCall)
        out << ' ' << program.functions.at(ins.operand).name;
      else if (HasOperand(ins.op))
        out << ' ' << ins.operand;
      out << '\n';
    }
    out << "endfunc\n";
  }
}

}  // namespace leakscope
