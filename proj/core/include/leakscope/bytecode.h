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

// The mini stack-bytecode language executed by the victim simulator.
//
// Program text: one instruction per line, `opcode [operand]`, functions
// delimited by `func <name> [params=N] [locals=M]` and `endfunc`. `#` starts
// a comment. `@inputs a,b,...` lines attach input vectors (used by the test
// suite). `call` takes a function name.

#ifndef LEAKSCOPE_BYTECODE_H_
#define LEAKSCOPE_BYTECODE_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace leakscope {

enum class Opcode : uint8_t {
  kConst,
  kLocalGet,
  kLocalSet,
  kLocalTee,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kLtS,
  kEq,
  kClz,
  kLoad,
  kStore,
  kLoop,
  kEnd,
  kBrIf,
  kBr,
  kIf,
  kElse,
  kCall,
  kReturn,
  kDrop,
  kNop,
  kBlock,
  // Floating-point arithmetic, executed with integer semantics; they differ
  // from each other only in timing.
  kF32Div,
  kF64Add,
  kF64Div,
  kF64Mul,
  kF64Sub,
};

inline constexpr size_t kOpcodeCount = 29;

const std::array<Opcode, kOpcodeCount>& AllOpcodes();
std::string_view OpcodeName(Opcode op);
std::optional<Opcode> ParseOpcode(std::string_view name);
bool HasOperand(Opcode op);

// Label of the function-header pseudo instruction in load traces.
inline constexpr std::string_view kFunctionHeaderLabel = "func";

// Semantic class of an opcode label: operand-width variants collapse
// (f32.div and f64.div are the same operation).
std::string SemanticClassOf(std::string_view opcode_label);

struct Instruction {
  Opcode op = Opcode::kNop;
  int64_t operand = 0;  // const value, local index, branch depth or callee

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Function {
  std::string name;
  uint32_t params = 0;
  uint32_t locals = 0;
  std::vector<Instruction> body;

  friend bool operator==(const Function&, const Function&) = default;
};

struct BytecodeProgram {
  std::vector<Function> functions;

  std::optional<size_t> FindFunction(std::string_view name) const;
  size_t InstructionCount() const;

  friend bool operator==(const BytecodeProgram&,
                         const BytecodeProgram&) = default;
};

// Jump targets of one function's structured control flow.
struct ControlMap {
  std::vector<size_t> end_of;   // block/loop/if index -> matching end
  std::vector<size_t> else_of;  // if index -> else index (or end)
  std::vector<size_t> open_of;  // end/else index -> opening instruction
};

// Throws Error(kStructure) naming the function and instruction index.
void ValidateProgram(const BytecodeProgram& program);
ControlMap BuildControlMap(const Function& function);

struct ProgramFile {
  BytecodeProgram program;
  std::vector<std::vector<int64_t>> input_sets;
};

ProgramFile ParseProgram(std::istream& in, std::string_view source = "program");
ProgramFile LoadProgram(const std::string& path);
void WriteProgram(std::ostream& out, const BytecodeProgram& program);

}  // namespace leakscope

#endif  // LEAKSCOPE_BYTECODE_H_
