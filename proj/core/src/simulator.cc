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

#include "leakscope/simulator.h"

#include <algorithm>
#include <bit>

#include "leakscope/rng.h"

namespace leakscope {
namespace {

constexpr uint64_t kLoadSalt = 0x6c6f6164;       // "load"
constexpr uint64_t kInterpretSalt = 0x696e7470;  // "intp"
constexpr size_t kMemoryWords = 4096;

uint64_t Fnv(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct PlacedStep {
  StepTemplate step;
  uint64_t ip;
};

// Instantiates an expansion and gives every step a stable synthetic IP.
std::vector<PlacedStep> Place(const Expansion& exp, std::string_view label,
                              Phase phase, uint64_t base_page, uint64_t repeat,
                              bool taken) {
  std::vector<PlacedStep> out;
  const uint64_t seed = Fnv(PhaseName(phase), Fnv(label));
  auto ip_of = [&](const StepTemplate& s, size_t part, size_t arm,
                   size_t index) {
    uint64_t h = seed ^ (part * 0x9E3779B97F4A7C15ULL) ^ (arm << 40) ^
                 (index * 0xBF58476D1CE4E5B9ULL);
    h ^= h >> 31;
    return ((base_page + s.page) << 12) | (1 + h % 4095);
  };
  for (size_t p = 0; p < exp.parts.size(); ++p) {
    const ExpansionPart& part = exp.parts[p];
    switch (part.kind) {
      case ExpansionPart::Kind::kFixed:
        for (size_t i = 0; i < part.steps.size(); ++i)
          out.push_back({part.steps[i], ip_of(part.steps[i], p, 0, i)});
        break;
      case ExpansionPart::Kind::kRepeat:
        for (uint64_t r = 0; r < repeat; ++r)
          for (size_t i = 0; i < part.steps.size(); ++i)
            out.push_back({part.steps[i], ip_of(part.steps[i], p, 0, i)});
        break;
      case ExpansionPart::Kind::kBranch: {
        const auto& arm = taken ? part.steps : part.fallthrough;
        for (size_t i = 0; i < arm.size(); ++i)
          out.push_back({arm[i], ip_of(arm[i], p, taken ? 1 : 2, i)});
        break;
      }
    }
  }
  return out;
}

class Emitter {
 public:
  Emitter(const ExpansionSpec& spec, Phase phase, const NoiseModel& noise,
          uint64_t salt)
      : spec_(spec),
        noise_(noise),
        rng_(noise.seed ^ (salt * 0x9E3779B97F4A7C15ULL)),
        base_page_(phase == Phase::kLoad ? spec.load_base_page
                                         : spec.interpret_base_page) {
    trace_.phase = phase;
    trace_.labels.emplace();
  }

  void Emit(std::string_view label, const Expansion& exp, uint64_t repeat,
            bool taken, bool loop_entry) {
    std::vector<PlacedStep> steps =
        Place(exp, label, trace_.phase, base_page_, repeat, taken);
    if (loop_entry && !steps.empty()) steps.front().ip = spec_.LoopEntryIp();
    const size_t start = trace_.measurements.size();
    for (size_t i = 0; i < steps.size(); ++i) {
      const PlacedStep& a = steps[i];
      if (a.step.fuse_with_next && i + 1 < steps.size()) {
        const PlacedStep& b = steps[i + 1];
        FuseMark mark;
        mark.index = trace_.measurements.size();
        mark.first_page = base_page_ + a.step.page;
        mark.first_mem = a.step.mem;
        mark.second_page = base_page_ + b.step.page;
        mark.second_mem = b.step.mem;
        if (rng_.Bernoulli(noise_.fusion_probability)) {
          mark.kind = FuseMark::Kind::kFused;
          trace_.measurements.push_back(Fused(a, b));
        } else {
          mark.kind = FuseMark::Kind::kSplit;
          trace_.measurements.push_back(Single(a));
          trace_.measurements.push_back(Single(b));
        }
        trace_.fuse_marks.push_back(mark);
        ++i;
        continue;
      }
      trace_.measurements.push_back(Single(a));
    }
    if (trace_.measurements.size() > start)
      trace_.labels->push_back(
          {start, trace_.measurements.size(), std::string(label)});
  }

  ExecutionTrace Take() { return std::move(trace_); }
  size_t size() const { return trace_.measurements.size(); }

 private:
  uint64_t Latency(const StepTemplate& s) {
    if (noise_.latency_jitter == 0) return s.latency_mean;
    const int64_t j = static_cast<int64_t>(noise_.latency_jitter) +
                      static_cast<int64_t>(s.latency_jitter);
    const int64_t v =
        static_cast<int64_t>(s.latency_mean) + rng_.UniformInt(-j, j);
    return static_cast<uint64_t>(std::max<int64_t>(v, 0));
  }

  InstructionMeasurement Single(const PlacedStep& p) {
    InstructionMeasurement im;
    im.latency_cycles = Latency(p.step);
    im.code_page = base_page_ + p.step.page;
    im.mem_access = p.step.mem;
    if (p.step.mem != MemAccess::kNone)
      im.data_page = p.step.stack ? spec_.stack_page : spec_.heap_page;
    im.stack_access = p.step.stack;
    im.is_control_flow = p.step.is_control_flow;
    im.ip = p.ip;
    return im;
  }

  InstructionMeasurement Fused(const PlacedStep& a, const PlacedStep& b) {
    InstructionMeasurement first = Single(a);
    InstructionMeasurement second = Single(b);
    InstructionMeasurement im = first;
    im.latency_cycles = first.latency_cycles + second.latency_cycles;
    if (first.mem_access == MemAccess::kNone) {
      im.mem_access = second.mem_access;
      im.data_page = second.data_page;
      im.stack_access = second.stack_access;
    }
    im.is_control_flow = first.is_control_flow || second.is_control_flow;
    return im;
  }

  const ExpansionSpec& spec_;
  NoiseModel noise_;
  Rng rng_;
  uint64_t base_page_;
  ExecutionTrace trace_;
};

}  // namespace

double SimulationResult::Amplification() const {
  if (executed_instructions == 0) return 0.0;
  return static_cast<double>(trace.size()) /
         static_cast<double>(executed_instructions);
}

uint64_t LebContinuationBytes(int64_t value, bool is_signed) {
  uint64_t bytes = 1;
  if (is_signed) {
    while (value < -64 || value > 63) {
      value >>= 7;
      ++bytes;
    }
  } else {
    uint64_t v = static_cast<uint64_t>(value);
    while (v >= 128) {
      v >>= 7;
      ++bytes;
    }
  }
  return bytes - 1;
}

SimulationResult LoadPhase(const BytecodeProgram& program,
                           const ExpansionSpec& spec,
                           const NoiseModel& noise) {
  ValidateProgram(program);
  Emitter emitter(spec, Phase::kLoad, noise, kLoadSalt);
  SimulationResult result;
  const auto& header = spec.For(kFunctionHeaderLabel);
  for (size_t f = 0; f < program.functions.size(); ++f) {
    const Function& fn = program.functions[f];
    emitter.Emit(kFunctionHeaderLabel, header.load, 0, false, false);
    for (size_t i = 0; i < fn.body.size(); ++i) {
      const Instruction& ins = fn.body[i];
      const std::string_view label = OpcodeName(ins.op);
      const OpcodeExpansion& e = spec.For(label);
      const uint64_t repeat =
          HasOperand(ins.op)
              ? LebContinuationBytes(ins.operand, ins.op == Opcode::kConst)
              : 0;
      emitter.Emit(label, e.load, repeat, false, true);
      if (!e.interpret) result.optimized_away.emplace_back(f, i);
      ++result.executed_instructions;
      ++result.emitting_instructions;
    }
  }
  result.trace = emitter.Take();
  return result;
}

namespace {

struct Frame {
  size_t function = 0;
  size_t pc = 0;
  std::vector<int64_t> locals;
  std::vector<int64_t> stack;
  std::vector<size_t> control;  // indices of open block/loop/if
};

class Trap {
 public:
  explicit Trap(std::string why) : why_(std::move(why)) {}
  const std::string& why() const { return why_; }

 private:
  std::string why_;
};

int64_t Pop(Frame& f) {
  if (f.stack.empty()) throw Trap("operand stack underflow");
  int64_t v = f.stack.back();
  f.stack.pop_back();
  return v;
}

}  // namespace

SimulationResult InterpretPhase(const BytecodeProgram& program,
                                std::span<const int64_t> inputs,
                                const ExpansionSpec& spec,
                                const NoiseModel& noise, uint64_t max_steps) {
  ValidateProgram(program);
  if (program.functions.empty())
    throw Error(ErrorCode::kStructure, "program has no functions");
  const Function& entry = program.functions.front();
  if (inputs.size() != entry.params)
    throw Error(ErrorCode::kInvalidArgument,
                "func " + entry.name + " takes " +
                    std::to_string(entry.params) + " inputs, got " +
                    std::to_string(inputs.size()));

  std::vector<ControlMap> maps;
  for (const auto& fn : program.functions) maps.push_back(BuildControlMap(fn));

  Emitter emitter(spec, Phase::kInterpret, noise, kInterpretSalt);
  SimulationResult result;
  for (size_t f = 0; f < program.functions.size(); ++f)
    for (size_t i = 0; i < program.functions[f].body.size(); ++i)
      if (!spec.For(OpcodeName(program.functions[f].body[i].op)).interpret)
        result.optimized_away.emplace_back(f, i);

  std::vector<int64_t> memory(kMemoryWords, 0);
  std::vector<Frame> frames;
  auto push_frame = [&](size_t func, std::span<const int64_t> args) {
    const Function& fn = program.functions[func];
    Frame frame;
    frame.function = func;
    frame.locals.assign(fn.params + fn.locals, 0);
    std::copy(args.begin(), args.end(), frame.locals.begin());
    frames.push_back(std::move(frame));
  };
  push_frame(0, inputs);

  auto finish = [&] { result.trace = emitter.Take(); };

  try {
    while (!frames.empty()) {
      Frame& fr = frames.back();
      const Function& fn = program.functions[fr.function];
      const ControlMap& cm = maps[fr.function];
      if (fr.pc >= fn.body.size()) {
        int64_t ret = fr.stack.empty() ? 0 : fr.stack.back();
        frames.pop_back();
        if (!frames.empty()) frames.back().stack.push_back(ret);
        continue;
      }
      if (result.executed_instructions >= max_steps) {
        finish();
        throw TruncationError("step budget of " + std::to_string(max_steps) +
                                  " instructions exhausted",
                              std::move(result));
      }
      const size_t pc = fr.pc;
      const Instruction ins = fn.body[pc];
      ++result.executed_instructions;
      uint64_t repeat = 0;
      bool taken = false;
      size_t next = pc + 1;
      std::optional<size_t> call_target;
      bool do_return = false;

      auto branch = [&](int64_t depth) {
        size_t target = fr.control[fr.control.size() - 1 - depth];
        if (fn.body[target].op == Opcode::kLoop) {
          fr.control.resize(fr.control.size() - depth);
          next = target + 1;
        } else {
          fr.control.resize(fr.control.size() - 1 - depth);
          next = cm.end_of[target] + 1;
        }
      };

      switch (ins.op) {
        case Opcode::kConst:
          fr.stack.push_back(ins.operand);
          break;
        case Opcode::kLocalGet:
          fr.stack.push_back(fr.locals[ins.operand]);
          break;
        case Opcode::kLocalSet:
          fr.locals[ins.operand] = Pop(fr);
          break;
        case Opcode::kLocalTee:
          if (fr.stack.empty()) throw Trap("operand stack underflow");
          fr.locals[ins.operand] = fr.stack.back();
          break;
        case Opcode::kAdd:
        case Opcode::kF64Add:
        case Opcode::kSub:
        case Opcode::kF64Sub:
        case Opcode::kMul:
        case Opcode::kF64Mul:
        case Opcode::kDiv:
        case Opcode::kF32Div:
        case Opcode::kF64Div:
        case Opcode::kLtS:
        case Opcode::kEq: {
          const uint64_t b = static_cast<uint64_t>(Pop(fr));
          const uint64_t a = static_cast<uint64_t>(Pop(fr));
          uint64_t r = 0;
          switch (ins.op) {
            case Opcode::kAdd:
            case Opcode::kF64Add:
              r = a + b;
              break;
            case Opcode::kSub:
            case Opcode::kF64Sub:
              r = a - b;
              break;
            case Opcode::kMul:
            case Opcode::kF64Mul:
              r = a * b;
              break;
            case Opcode::kLtS:
              r = static_cast<int64_t>(a) < static_cast<int64_t>(b);
              break;
            case Opcode::kEq:
              r = a == b;
              break;
            default: {
              const int64_t sa = static_cast<int64_t>(a);
              const int64_t sb = static_cast<int64_t>(b);
              if (sb == 0) throw Trap("integer divide by zero");
              if (sa == INT64_MIN && sb == -1) throw Trap("integer overflow");
              r = static_cast<uint64_t>(sa / sb);
            }
          }
          fr.stack.push_back(static_cast<int64_t>(r));
          break;
        }
        case Opcode::kClz: {
          const uint32_t v = static_cast<uint32_t>(Pop(fr));
          const int zeros = std::countl_zero(v);
          repeat = static_cast<uint64_t>(zeros);
          fr.stack.push_back(zeros);
          break;
        }
        case Opcode::kLoad: {
          const int64_t addr = Pop(fr);
          if (addr < 0 || static_cast<size_t>(addr) >= kMemoryWords)
            throw Trap("memory access out of bounds");
          fr.stack.push_back(memory[addr]);
          break;
        }
        case Opcode::kStore: {
          const int64_t value = Pop(fr);
          const int64_t addr = Pop(fr);
          if (addr < 0 || static_cast<size_t>(addr) >= kMemoryWords)
            throw Trap("memory access out of bounds");
          memory[addr] = value;
          break;
        }
        case Opcode::kBlock:
        case Opcode::kLoop:
          fr.control.push_back(pc);
          break;
        case Opcode::kEnd:
          if (!fr.control.empty()) fr.control.pop_back();
          break;
        case Opcode::kIf: {
          taken = Pop(fr) != 0;
          if (taken) {
            fr.control.push_back(pc);
          } else if (cm.else_of[pc] != cm.end_of[pc]) {
            fr.control.push_back(pc);
            next = cm.else_of[pc] + 1;
          } else {
            next = cm.end_of[pc] + 1;
          }
          break;
        }
        case Opcode::kElse:
          // Reached from the end of the then-arm.
          if (!fr.control.empty()) fr.control.pop_back();
          next = cm.end_of[pc] + 1;
          break;
        case Opcode::kBr:
          taken = true;
          branch(ins.operand);
          break;
        case Opcode::kBrIf:
          taken = Pop(fr) != 0;
          if (taken) branch(ins.operand);
          break;
        case Opcode::kCall:
          call_target = static_cast<size_t>(ins.operand);
          break;
        case Opcode::kReturn:
          do_return = true;
          break;
        case Opcode::kDrop:
          Pop(fr);
          break;
        case Opcode::kNop:
          break;
      }

      const std::string_view label = OpcodeName(ins.op);
      if (const auto& exp = spec.For(label).interpret) {
        emitter.Emit(label, *exp, repeat, taken, false);
        ++result.emitting_instructions;
      }

      if (do_return) {
        fr.pc = fn.body.size();
        continue;
      }
      fr.pc = next;
      if (call_target) {
        const Function& callee = program.functions[*call_target];
        if (fr.stack.size() < callee.params)
          throw Trap("operand stack underflow");
        std::vector<int64_t> args(fr.stack.end() - callee.params,
                                  fr.stack.end());
        fr.stack.resize(fr.stack.size() - callee.params);
        if (frames.size() >= 1024) throw Trap("call stack exhausted");
        push_frame(*call_target, args);
      }
    }
  } catch (const Trap& trap) {
    result.trap = trap.why();
  }
  finish();
  return result;
}

}  // namespace leakscope
