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

#include <sstream>

#include <gtest/gtest.h>

#include "leakscope/bytecode.h"
#include "leakscope/error.h"
#include "leakscope/simulator.h"
#include "test_util.h"

namespace leakscope {
namespace {

using testing::Program;

TEST(BytecodeTest, ParsesFunctionsAndCalls) {
  auto file = Program(
      "func main params=1 locals=1\n"
      "  local.get 0   # comment\n"
      "  call helper\n"
      "endfunc\n"
      "func helper params=1\n"
      "  const -5\n"
      "  add\n"
      "endfunc\n"
      "@inputs 4\n"
      "@inputs\n");
  ASSERT_EQ(file.program.functions.size(), 2u);
  EXPECT_EQ(file.program.functions[0].locals, 1u);
  EXPECT_EQ(file.program.functions[0].body[1],
            (Instruction{Opcode::kCall, 1}));
  EXPECT_EQ(file.program.functions[1].body[0],
            (Instruction{Opcode::kConst, -5}));
  EXPECT_EQ(file.input_sets,
            (std::vector<std::vector<int64_t>>{{4}, {}}));
  EXPECT_EQ(file.program.InstructionCount(), 4u);
}

TEST(BytecodeTest, OpcodeTable) {
  EXPECT_EQ(AllOpcodes().size(), 29u);
  for (Opcode op : AllOpcodes())
    EXPECT_EQ(ParseOpcode(OpcodeName(op)), op);
  EXPECT_FALSE(ParseOpcode("i32.add"));
  EXPECT_EQ(SemanticClassOf("f32.div"), "f.div");
  EXPECT_EQ(SemanticClassOf("f64.div"), "f.div");
  EXPECT_EQ(SemanticClassOf("f64.add"), "f64.add");
}

TEST(BytecodeTest, ParseErrorsCarryLines) {
  auto line_of = [](const std::string& text) -> size_t {
    try {
      Program(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("func f\n  bogus\nendfunc\n"), 2u);
  EXPECT_EQ(line_of("func f\n  add 3\nendfunc\n"), 2u);
  EXPECT_EQ(line_of("func f\n  const\nendfunc\n"), 2u);
  EXPECT_EQ(line_of("add\n"), 1u);
  EXPECT_EQ(line_of("func f\n  call g\nendfunc\n"), 2u);
  EXPECT_EQ(line_of("func f\nfunc g\n"), 2u);
  EXPECT_NE(line_of("func f\n  nop\n"), 0u);
}

TEST(BytecodeTest, StructuralErrorsNameTheInstruction) {
  auto check = [](const std::string& text, const std::string& needle) {
    auto file = Program(text);
    try {
      ValidateProgram(file.program);
      ADD_FAILURE() << "no error for " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kStructure);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
          << e.what();
    }
  };
  check("func f\n  loop\n  nop\nendfunc\n", "instruction 0");
  check("func f\n  end\nendfunc\n", "instruction 0");
  check("func f\n  nop\n  else\nendfunc\n", "instruction 1");
  check("func f\n  block\n  br 1\n  end\nendfunc\n", "instruction 1");
  check("func f params=1\n  local.get 1\nendfunc\n", "instruction 0");
}

TEST(BytecodeTest, ControlMap) {
  auto file = Program(
      "func f params=1\n"
      "  local.get 0\n"  // 0
      "  if\n"           // 1
      "  nop\n"          // 2
      "  else\n"         // 3
      "  nop\n"          // 4
      "  end\n"          // 5
      "  loop\n"         // 6
      "  br_if 0\n"      // 7
      "  end\n"          // 8
      "endfunc\n");
  auto cm = BuildControlMap(file.program.functions[0]);
  EXPECT_EQ(cm.else_of[1], 3u);
  EXPECT_EQ(cm.end_of[1], 5u);
  EXPECT_EQ(cm.end_of[3], 5u);
  EXPECT_EQ(cm.end_of[6], 8u);
  EXPECT_EQ(cm.open_of[8], 6u);
}

TEST(BytecodeTest, WriteParseRoundTrip) {
  for (const char* path :
       {"testsuite/control.prog", "testsuite/calls.prog",
        "data/programs/loop.prog", "testsuite/consts.prog"}) {
    auto file = LoadProgram(testing::SourcePath(path));
    std::stringstream ss;
    WriteProgram(ss, file.program);
    EXPECT_EQ(ParseProgram(ss).program, file.program) << path;
  }
}

TEST(LebTest, ContinuationBytes) {
  EXPECT_EQ(LebContinuationBytes(0, false), 0u);
  EXPECT_EQ(LebContinuationBytes(127, false), 0u);
  EXPECT_EQ(LebContinuationBytes(128, false), 1u);
  EXPECT_EQ(LebContinuationBytes(16383, false), 1u);
  EXPECT_EQ(LebContinuationBytes(16384, false), 2u);
  EXPECT_EQ(LebContinuationBytes(63, true), 0u);
  EXPECT_EQ(LebContinuationBytes(64, true), 1u);
  EXPECT_EQ(LebContinuationBytes(-64, true), 0u);
  EXPECT_EQ(LebContinuationBytes(-65, true), 1u);
  EXPECT_EQ(LebContinuationBytes(INT64_MIN, true), 9u);
}

}  // namespace
}  // namespace leakscope
