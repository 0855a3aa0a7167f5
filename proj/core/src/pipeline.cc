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

#include "leakscope/pipeline.h"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "leakscope/error.h"
#include "leakscope/generalization.h"
#include "leakscope/parallel.h"
#include "leakscope/segmentation.h"
#include "leakscope/timing_classifier.h"

namespace leakscope {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto Stage(const char* name, std::ostream* log, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  auto done = [&] {
    if (!log) return;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    *log << "stage " << name << ": " << ms << " ms\n";
  };
  try {
    auto result = body();
    done();
    return result;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kStage) throw;
    throw Error(ErrorCode::kStage, std::string(name) + ": " +
                                       ErrorCodeName(e.code()) + ": " +
                                       e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kStage, std::string(name) + ": " + e.what());
  }
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::string Resolve(const fs::path& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

void RunConfig::Validate() const {
  auto bad = [](const std::string& what) {
    return Error(ErrorCode::kInvalidArgument, "config: " + what);
  };
  if (testsuite.empty()) throw bad("testsuite must be set");
  if (target.empty()) throw bad("target must be set");
  if (!(fusion_probability >= 0.0 && fusion_probability <= 1.0))
    throw bad("fusion_probability must be in [0, 1]");
  if (max_steps == 0) throw bad("max_steps must be positive");
  if (max_splits == 0) throw bad("max_splits must be positive");
  if (!(confidence_floor >= 0.0 && confidence_floor < 1.0))
    throw bad("confidence_floor must be in [0, 1)");
  if (workers == 0) throw bad("workers must be positive");
  if (out_dir.empty()) throw bad("out_dir must be set");
}

std::string RunConfigToJson(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["testsuite"] = c.testsuite;
  j["target"] = c.target;
  j["target_inputs"] = c.target_inputs;
  j["spec"] = c.spec ? nlohmann::ordered_json(*c.spec) : nullptr;
  j["fusion_probability"] = c.fusion_probability;
  j["latency_jitter"] = c.latency_jitter;
  j["max_steps"] = c.max_steps;
  j["max_splits"] = c.max_splits;
  j["slack"] = c.slack ? nlohmann::ordered_json(*c.slack) : nullptr;
  j["timing_prune"] = c.timing_prune;
  j["confidence_floor"] = c.confidence_floor;
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

RunConfig RunConfigFromJson(std::string_view text, std::string_view source) {
  static const std::set<std::string> kKeys = {
      "seed",         "testsuite",        "target",  "target_inputs",
      "spec",         "fusion_probability", "latency_jitter", "max_steps",
      "max_splits",   "slack",            "timing_prune", "confidence_floor",
      "workers",      "out_dir"};
  RunConfig c;
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::kParse, "expected an object");
    for (const auto& [key, value] : j.items())
      if (!kKeys.count(key))
        throw Error(ErrorCode::kParse, "unknown key '" + key + "'");
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key) && !j.at(key).is_null())
        field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("testsuite", c.testsuite);
    get("target", c.target);
    get("target_inputs", c.target_inputs);
    if (j.contains("spec") && !j["spec"].is_null())
      c.spec = j["spec"].get<std::string>();
    get("fusion_probability", c.fusion_probability);
    get("latency_jitter", c.latency_jitter);
    get("max_steps", c.max_steps);
    get("max_splits", c.max_splits);
    if (j.contains("slack") && !j["slack"].is_null())
      c.slack = j["slack"].get<size_t>();
    get("timing_prune", c.timing_prune);
    get("confidence_floor", c.confidence_floor);
    get("workers", c.workers);
    get("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
  return c;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = RunConfigFromJson(ss.str(), path);
  const fs::path base = fs::path(path).parent_path();
  c.testsuite = Resolve(base, c.testsuite);
  c.target = Resolve(base, c.target);
  if (c.spec) c.spec = Resolve(base, *c.spec);
  c.out_dir = Resolve(base, c.out_dir);
  return c;
}

uint64_t DeriveSeed(uint64_t seed, std::string_view stream) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : stream) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer over the combination
  uint64_t z = seed ^ h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<SuiteProgram> LoadTestSuite(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw Error(ErrorCode::kIo, "test suite directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".prog")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SuiteProgram> out;
  for (const fs::path& f : files)
    out.push_back({f.stem().string(), LoadProgram(f.string())});
  return out;
}

std::vector<NamedTrace> SimulateSuite(const std::vector<SuiteProgram>& suite,
                                      const ExpansionSpec& spec,
                                      double fusion_probability,
                                      uint32_t latency_jitter, uint64_t seed,
                                      uint64_t max_steps, size_t workers) {
  struct Job {
    const SuiteProgram* program;
    std::optional<size_t> input_set;  // nullopt: load phase
    std::string name;
  };
  std::vector<Job> jobs;
  for (const SuiteProgram& p : suite) {
    jobs.push_back({&p, std::nullopt, p.name + ".load"});
    const auto& fns = p.file.program.functions;
    if (!fns.empty() && p.file.input_sets.empty() && fns.front().params == 0)
      jobs.push_back({&p, size_t{0}, p.name + ".run0"});
    for (size_t k = 0; k < p.file.input_sets.size(); ++k)
      jobs.push_back({&p, k, p.name + ".run" + std::to_string(k)});
  }
  return ParallelMap<NamedTrace>(jobs.size(), workers, [&](size_t i) {
    const Job& job = jobs[i];
    NoiseModel noise{fusion_probability, latency_jitter,
                     DeriveSeed(seed, job.name)};
    const BytecodeProgram& prog = job.program->file.program;
    if (!job.input_set)
      return NamedTrace{job.name, LoadPhase(prog, spec, noise).trace};
    std::vector<int64_t> inputs;
    if (!job.program->file.input_sets.empty())
      inputs = job.program->file.input_sets[*job.input_set];
    try {
      return NamedTrace{job.name,
                        InterpretPhase(prog, inputs, spec, noise, max_steps)
                            .trace};
    } catch (const Error& e) {
      throw Error(e.code(), job.name + ": " + e.what());
    }
  });
}

PatternDatabase ProfileTraces(const std::vector<NamedTrace>& traces,
                              const std::string& spec_hash, size_t workers) {
  auto segmented =
      ParallelMap<std::vector<LabeledSegment>>(traces.size(), workers,
                                               [&](size_t i) {
        try {
          return SegmentWithGroundTruth(traces[i].trace);
        } catch (const Error& e) {
          throw Error(e.code(), traces[i].name + ": " + e.what());
        }
      });
  PatternDatabase db;
  db.spec_hash = spec_hash;
  for (const auto& segs : segmented) db = ExtractPatterns(segs, std::move(db));
  db.trace_count = traces.size();
  db.Normalize();
  return db;
}

void WriteSummaryJson(std::ostream& out, const RunConfig& config,
                      const PipelineSummary& s) {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(RunConfigToJson(config));
  j["suite_programs"] = s.suite_programs;
  j["suite_traces"] = s.suite_traces;
  j["patterns"] = s.patterns;
  j["matchers"] = s.matchers;
  j["executed_instructions"] = s.executed_instructions;
  j["amplification"] = s.amplification;
  if (s.holdout_accuracy) j["timing_holdout_accuracy"] = *s.holdout_accuracy;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const RecoveryStats& r : s.traces) {
    nlohmann::ordered_json jr;
    jr["source"] = r.source;
    jr["segments"] = r.segments;
    jr["size1"] = r.size1;
    jr["size_le2"] = r.size_le2;
    jr["size_le3"] = r.size_le3;
    jr["mean_set_size"] = r.mean_set_size;
    if (r.boundaries_exact) jr["boundaries_exact"] = *r.boundaries_exact;
    if (r.true_in_set) jr["true_in_set"] = *r.true_in_set;
    rows.push_back(std::move(jr));
  }
  j["traces"] = std::move(rows);
  out << j.dump(2) << "\n";
}

PipelineSummary RunPipeline(const RunConfig& config, std::ostream* log) {
  config.Validate();
  PipelineSummary summary;
  const ExpansionSpec spec = Stage("config", log, [&] {
    return config.spec ? LoadExpansionSpec(*config.spec)
                       : DefaultExpansionSpec();
  });
  const fs::path out_dir = config.out_dir;

  auto traces = Stage("simulate", log, [&] {
    auto suite = LoadTestSuite(config.testsuite);
    summary.suite_programs = suite.size();
    return SimulateSuite(suite, spec, config.fusion_probability,
                         config.latency_jitter, config.seed, config.max_steps,
                         config.workers);
  });
  summary.suite_traces = traces.size();

  PatternDatabase db = Stage("profile", log, [&] {
    if (traces.empty())
      throw Error(ErrorCode::kInvalidArgument,
                  "no traces: the test suite is empty");
    return ProfileTraces(traces, spec.Hash(), config.workers);
  });
  summary.patterns = db.patterns().size();

  std::optional<TimingClassifier> clf;
  if (config.timing_prune) {
    clf = Stage("train-timing", log, [&] {
      std::map<std::string, std::vector<LatencySample>> by_label;
      for (const NamedTrace& t : traces) {
        if (t.trace.phase != Phase::kInterpret) continue;
        for (const LabeledSegment& s : SegmentWithGroundTruth(t.trace))
          by_label[s.label].push_back(
              {{s.latencies.begin(), s.latencies.end()}, s.label});
      }
      ForestParams params;
      params.seed = DeriveSeed(config.seed, "timing");
      std::vector<LatencySample> samples;
      for (auto& [label, v] : by_label)
        if (v.size() >= params.min_samples_per_class)
          samples.insert(samples.end(), v.begin(), v.end());
      std::optional<TimingClassifier> out;
      if (by_label.empty()) return out;
      size_t classes = 0;
      for (auto& [label, v] : by_label)
        classes += v.size() >= params.min_samples_per_class;
      if (classes < 2) {
        if (log) *log << "train-timing: too few samples, pruning disabled\n";
        return out;
      }
      TrainingReport report = TrainTimingClassifier(samples, params);
      summary.holdout_accuracy = report.holdout_accuracy;
      out = std::move(report.classifier);
      return out;
    });
  }

  std::vector<GeneralizedMatcher> matchers = Stage("generalize", log, [&] {
    return CompileMatchers(db, config.max_splits,
                           config.slack.value_or(spec.MaxRepeatBodyLength()));
  });
  summary.matchers = matchers.size();

  struct Target {
    ExecutionTrace load;
    ExecutionTrace interpret;
  };
  Target target = Stage("simulate-target", log, [&] {
    ProgramFile pf = LoadProgram(config.target);
    std::vector<int64_t> inputs = config.target_inputs;
    if (inputs.empty() && !pf.input_sets.empty()) inputs = pf.input_sets[0];
    NoiseModel noise{config.fusion_probability, config.latency_jitter,
                     DeriveSeed(config.seed, "target.load")};
    Target t;
    t.load = LoadPhase(pf.program, spec, noise).trace;
    noise.seed = DeriveSeed(config.seed, "target.run");
    SimulationResult run =
        InterpretPhase(pf.program, inputs, spec, noise, config.max_steps);
    summary.amplification = run.Amplification();
    summary.executed_instructions = run.executed_instructions;
    t.interpret = std::move(run.trace);
    return t;
  });

  std::vector<AttackResult> results = Stage("attack", log, [&] {
    std::vector<AttackResult> out;
    for (const ExecutionTrace* t : {&target.load, &target.interpret}) {
      const ExecutionTrace observed = t->WithoutGroundTruth();
      AttackResult r;
      r.phase = observed.phase;
      r.source = std::string("target.") + PhaseName(observed.phase);
      r.segmentation = SegmentTrace(observed, matchers);
      if (clf && observed.phase == Phase::kInterpret)
        r.segmentation = PruneWithTiming(r.segmentation, observed, *clf,
                                         config.confidence_floor);
      out.push_back(std::move(r));
    }
    return out;
  });

  Stage("report", log, [&] {
    summary.traces.push_back(
        ComputeRecovery(results[0].segmentation, target.load.labels));
    summary.traces.push_back(
        ComputeRecovery(results[1].segmentation, target.interpret.labels));
    for (size_t i = 0; i < 2; ++i) summary.traces[i].source = results[i].source;

    fs::create_directories(out_dir);
    {
      auto out = OpenOut(out_dir / "patterns.db");
      WritePatternDatabase(out, db);
    }
    {
      auto out = OpenOut(out_dir / "matchers.db");
      WriteMatchers(out, matchers);
    }
    for (const AttackResult& r : results) {
      auto out = OpenOut(out_dir / ("attack_" + std::string(PhaseName(r.phase)) +
                                    ".json"));
      WriteAttackResult(out, r);
    }
    {
      auto out = OpenOut(out_dir / "summary.csv");
      WriteRecoveryCsv(out, summary.traces);
    }
    {
      auto out = OpenOut(out_dir / "summary.json");
      WriteSummaryJson(out, config, summary);
    }
    return 0;
  });
  return summary;
}

}  // namespace leakscope
