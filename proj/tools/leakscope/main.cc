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

// leakscope command-line front end.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "leakscope/attack.h"
#include "leakscope/bytecode.h"
#include "leakscope/error.h"
#include "leakscope/expansion_spec.h"
#include "leakscope/generalization.h"
#include "leakscope/isa_dataset.h"
#include "leakscope/leakage.h"
#include "leakscope/matcher.h"
#include "leakscope/pipeline.h"
#include "leakscope/profiling.h"
#include "leakscope/segmentation.h"
#include "leakscope/simulator.h"
#include "leakscope/timing_classifier.h"

namespace fs = std::filesystem;
using namespace leakscope;

namespace {

std::ifstream OpenIn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return in;
}

std::ofstream OpenOut(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

std::vector<int64_t> ParseInputs(const std::string& text) {
  std::vector<int64_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad input value '" + item + "'");
    }
  }
  return out;
}

std::vector<uint64_t> ParseList(const std::string& text) {
  std::vector<uint64_t> out;
  for (int64_t v : ParseInputs(text)) {
    if (v <= 0)
      throw Error(ErrorCode::kInvalidArgument, "resolutions must be positive");
    out.push_back(static_cast<uint64_t>(v));
  }
  return out;
}

// *.trace files of each argument (a file or a directory), sorted per
// directory.
std::vector<std::string> CollectTraces(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (const std::string& a : args) {
    if (fs::is_directory(a)) {
      std::vector<std::string> found;
      for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file() && e.path().extension() == ".trace")
          found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(a)) {
      out.push_back(a);
    } else {
      throw Error(ErrorCode::kIo, "no such trace file or directory: " + a);
    }
  }
  return out;
}

ExpansionSpec SpecFrom(const std::optional<std::string>& path) {
  return path ? LoadExpansionSpec(*path) : DefaultExpansionSpec();
}

struct Globals {
  std::optional<uint64_t> seed;
  std::string config_path;
  bool verbose = false;
  RunConfig config;  // defaults, or the --config file

  uint64_t Seed() const { return seed.value_or(config.seed); }
};

int CmdSimulate(const Globals& g, const std::string& program_path,
                const std::optional<std::string>& inputs_text,
                std::optional<std::string> spec_path,
                std::optional<double> fusion, std::optional<uint32_t> jitter,
                std::optional<uint64_t> max_steps, const std::string& phase,
                const std::string& out_prefix) {
  if (!spec_path) spec_path = g.config.spec;
  const ExpansionSpec spec = SpecFrom(spec_path);
  const ProgramFile pf = LoadProgram(program_path);
  std::vector<int64_t> inputs;
  if (inputs_text)
    inputs = ParseInputs(*inputs_text);
  else if (!pf.input_sets.empty())
    inputs = pf.input_sets.front();
  NoiseModel noise{fusion.value_or(g.config.fusion_probability),
                   jitter.value_or(g.config.latency_jitter), 0};
  if (!(noise.fusion_probability >= 0 && noise.fusion_probability <= 1))
    throw Error(ErrorCode::kInvalidArgument, "--fusion-p must be in [0, 1]");
  fs::create_directories(out_prefix);
  const fs::path dir(out_prefix);
  nlohmann::ordered_json meta;
  meta["program"] = program_path;
  meta["inputs"] = inputs;
  meta["seed"] = g.Seed();
  meta["spec"] = spec.Hash();
  if (phase == "load" || phase == "both") {
    noise.seed = DeriveSeed(g.Seed(), "load");
    SimulationResult r = LoadPhase(pf.program, spec, noise);
    SaveTraceFiles((dir / "load").string(), r.trace);
    meta["load_ims"] = r.trace.size();
  }
  if (phase == "interpret" || phase == "both") {
    noise.seed = DeriveSeed(g.Seed(), "interpret");
    const uint64_t steps = max_steps.value_or(g.config.max_steps);
    try {
      SimulationResult r =
          InterpretPhase(pf.program, inputs, spec, noise, steps);
      SaveTraceFiles((dir / "interp").string(), r.trace);
      meta["interp_ims"] = r.trace.size();
      meta["executed_instructions"] = r.executed_instructions;
      meta["optimized_away"] = r.optimized_away.size();
      meta["amplification"] = r.Amplification();
      if (r.trap) meta["trap"] = *r.trap;
    } catch (const TruncationError& e) {
      SaveTraceFiles((dir / "interp").string(), e.partial().trace);
      throw;
    }
  }
  auto out = OpenOut((dir / "meta.json").string());
  out << meta.dump(2) << "\n";
  return 0;
}

int CmdProfile(const Globals& g, const std::vector<std::string>& trace_args,
               std::optional<std::string> spec_path, size_t workers,
               const std::string& out_path) {
  if (!spec_path) spec_path = g.config.spec;
  const std::string hash = SpecFrom(spec_path).Hash();
  std::vector<NamedTrace> traces;
  for (const std::string& path : CollectTraces(trace_args)) {
    NamedTrace t{path, LoadTraceFiles(path, true)};
    if (!t.trace.labels)
      throw Error(ErrorCode::kInvalidArgument,
                  path + ": profiling needs a .labels sidecar");
    traces.push_back(std::move(t));
  }
  if (traces.empty())
    throw Error(ErrorCode::kInvalidArgument, "no traces to profile");
  PatternDatabase db = ProfileTraces(traces, hash, workers);
  auto out = OpenOut(out_path);
  WritePatternDatabase(out, db);
  if (g.verbose)
    std::cerr << "profiled " << traces.size() << " traces into "
              << db.patterns().size() << " patterns\n";
  return 0;
}

int CmdGeneralize(const Globals& g, const std::string& db_path,
                  std::optional<size_t> max_splits, std::optional<size_t> slack,
                  std::optional<std::string> spec_path,
                  const std::string& out_path) {
  if (!spec_path) spec_path = g.config.spec;
  auto in = OpenIn(db_path);
  PatternDatabase db = ReadPatternDatabase(in, db_path);
  if (!slack) slack = g.config.slack;
  if (!slack) slack = SpecFrom(spec_path).MaxRepeatBodyLength();
  auto matchers =
      CompileMatchers(db, max_splits.value_or(g.config.max_splits), *slack);
  auto out = OpenOut(out_path);
  WriteMatchers(out, matchers);
  if (g.verbose)
    std::cerr << "compiled " << matchers.size() << " matchers\n";
  return 0;
}

int CmdAttack(const Globals& g, const std::string& trace_path,
              const std::string& matchers_path,
              const std::optional<std::string>& timing_model,
              std::optional<double> floor, const std::string& out_path) {
  auto min = OpenIn(matchers_path);
  auto matchers = ReadMatchers(min, matchers_path);
  const ExecutionTrace trace = LoadTraceFiles(trace_path, false);
  AttackResult r;
  r.source = trace_path;
  r.phase = trace.phase;
  r.segmentation = SegmentTrace(trace, matchers);
  if (timing_model) {
    auto cin = OpenIn(*timing_model);
    TimingClassifier clf = TimingClassifier::Load(cin, *timing_model);
    r.segmentation = PruneWithTiming(
        r.segmentation, trace, clf, floor.value_or(g.config.confidence_floor));
  }
  auto out = OpenOut(out_path);
  WriteAttackResult(out, r);
  if (g.verbose)
    std::cerr << "segmented " << trace.size() << " IMs into "
              << r.segmentation.segments.size() << " segments\n";
  return 0;
}

int CmdMatch(const std::string& needle_path, const std::string& haystack_path,
             std::optional<size_t> function) {
  auto nin = OpenIn(needle_path);
  auto hin = OpenIn(haystack_path);
  const AttackResult needle = ReadAttackResult(nin, needle_path);
  const AttackResult haystack = ReadAttackResult(hin, haystack_path);
  const auto hay = TopLabels(haystack.segmentation);
  const auto labels = TopLabels(needle.segmentation);
  const auto functions = SplitFunctions(labels);
  if (functions.empty())
    throw Error(ErrorCode::kInvalidArgument, "needle has no segments");
  if (function && *function >= functions.size())
    throw Error(ErrorCode::kInvalidArgument,
                "needle has only " + std::to_string(functions.size()) +
                    " functions");
  std::cout << "function,needle_segment,haystack_offsets\n";
  for (size_t k = 0; k < functions.size(); ++k) {
    if (function && k != *function) continue;
    std::string offsets;
    for (size_t off : MatchFunction(functions[k].labels, hay)) {
      if (!offsets.empty()) offsets += ';';
      offsets += std::to_string(off);
    }
    std::cout << k << ',' << functions[k].first_segment << ',' << offsets
              << "\n";
  }
  return 0;
}

int CmdAnalyzeIsa(const std::string& dataset_path, const std::string& tee,
                  const std::string& model, std::optional<uint64_t> resolution,
                  const std::optional<std::string>& sweep,
                  const std::string& weight, const std::string& uarch,
                  const std::string& out_path) {
  const IsaDataset ds = LoadDataset(dataset_path, ParseTee(tee), uarch);
  Weighting w;
  if (weight == "semantic")
    w = Weighting::kSemanticClass;
  else if (weight == "variant")
    w = Weighting::kVariant;
  else
    throw Error(ErrorCode::kInvalidArgument, "--weight must be semantic or variant");
  auto out = OpenOut(out_path);
  if (sweep) {
    if (model != "sota" || resolution)
      throw Error(ErrorCode::kInvalidArgument,
                  "--sweep applies to the sota model without --resolution");
    WriteSweepCsv(out, ResolutionSweep(ds, ParseList(*sweep), w));
    return 0;
  }
  ClassMap classes;
  if (model == "ideal") {
    if (resolution)
      throw Error(ErrorCode::kInvalidArgument,
                  "the ideal model is cycle-accurate; drop --resolution");
    classes = IdealClasses(ds);
  } else if (model == "sota") {
    classes = BuildClasses(ds, AttackerModel::SotA(resolution.value_or(10)));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--model must be sota or ideal");
  }
  WriteDistributionCsv(out, ComputeSizeDistribution(classes, w));
  return 0;
}

int CmdDatasetValidate(const std::string& path) {
  const DatasetSummary s = ValidateDatasetFile(path);
  std::cout << "records=" << s.records << "\n";
  for (const auto& [uarch, n] : s.per_microarchitecture)
    std::cout << "microarchitecture." << uarch << "=" << n << "\n";
  std::cout << "sgx_illegal=" << s.sgx_illegal << "\n"
            << "sev_intercepted=" << s.sev_intercepted << "\n"
            << "missing_fu=" << s.missing_fu << "\n";
  return 0;
}

int CmdReport(const std::vector<std::string>& results, bool truth,
              const std::string& out_path) {
  std::vector<std::string> files;
  for (const std::string& a : results) {
    if (fs::is_directory(a)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(a))
        if (e.is_regular_file() && e.path().extension() == ".json")
          found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(a);
    }
  }
  std::vector<RecoveryStats> rows;
  for (const std::string& f : files) {
    auto in = OpenIn(f);
    AttackResult r = ReadAttackResult(in, f);
    std::optional<std::vector<LabelSpan>> labels;
    if (truth) {
      fs::path lp = fs::path(r.source).replace_extension(".labels");
      if (fs::exists(lp)) {
        auto lin = OpenIn(lp.string());
        labels = ReadLabels(lin, lp.string());
      }
    }
    RecoveryStats st = ComputeRecovery(r.segmentation, labels);
    st.source = fs::path(f).filename().string();
    rows.push_back(std::move(st));
  }
  auto out = OpenOut(out_path);
  WriteRecoveryCsv(out, rows);
  return 0;
}

int CmdTrainTiming(const Globals& g, const std::vector<std::string>& trace_args,
                   const std::optional<std::string>& only, size_t trees,
                   size_t depth, size_t min_samples,
                   const std::string& out_path) {
  std::set<std::string> keep;
  if (only) {
    std::stringstream ss(*only);
    std::string item;
    while (std::getline(ss, item, ',')) keep.insert(item);
  }
  std::vector<LatencySample> samples;
  for (const std::string& path : CollectTraces(trace_args)) {
    const ExecutionTrace t = LoadTraceFiles(path, true);
    if (!t.labels) continue;
    for (const LabeledSegment& s : SegmentWithGroundTruth(t)) {
      if (!keep.empty() && !keep.count(s.label)) continue;
      samples.push_back({{s.latencies.begin(), s.latencies.end()}, s.label});
    }
  }
  ForestParams params;
  params.trees = trees;
  params.max_depth = depth;
  params.min_samples_per_class = min_samples;
  params.seed = DeriveSeed(g.Seed(), "timing");
  // Without an explicit class list, rare classes are skipped instead of
  // failing the whole fit. An explicit list stays strict.
  if (keep.empty()) {
    std::map<std::string, size_t> count;
    for (const auto& s : samples) ++count[s.label];
    std::erase_if(samples, [&](const LatencySample& s) {
      return count[s.label] < min_samples;
    });
    for (const auto& [label, n] : count)
      if (n < min_samples)
        std::cerr << "train-timing: skipping '" << label << "' (" << n
                  << " samples)\n";
  }
  TrainingReport report = TrainTimingClassifier(samples, params);
  auto out = OpenOut(out_path);
  report.classifier.Save(out);
  char acc[32];
  std::snprintf(acc, sizeof(acc), "%.4f", report.holdout_accuracy);
  std::cout << "classes=" << report.classifier.classes().size()
            << " train=" << report.train_size
            << " holdout=" << report.holdout_size << " accuracy=" << acc
            << "\n";
  return 0;
}

int CmdRun(Globals& g, const std::optional<std::string>& out_dir,
           std::optional<size_t> workers) {
  if (g.config_path.empty())
    throw Error(ErrorCode::kInvalidArgument, "run needs --config <path>");
  RunConfig c = g.config;
  if (g.seed) c.seed = *g.seed;
  if (out_dir) c.out_dir = *out_dir;
  if (workers) c.workers = *workers;
  const PipelineSummary s = RunPipeline(c, g.verbose ? &std::cerr : nullptr);
  for (const RecoveryStats& r : s.traces) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "%s: segments=%zu size1=%.4f size_le2=%.4f complete=%s\n",
                  r.source.c_str(), r.segments, r.size1, r.size_le2,
                  r.boundaries_exact.value_or(false) ? "exact" : "inexact");
    std::cout << line;
  }
  std::cout << "summary: " << (fs::path(c.out_dir) / "summary.json").string()
            << "\n";
  return 0;
}

std::string OneLine(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leakscope: instruction leakage analysis for bytecode "
               "translators in enclaves"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--config", g.config_path, "RunConfig JSON file");
  app.add_flag("-v,--verbose", g.verbose, "Progress and timings on stderr");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the victim simulator");
  std::string sim_program, sim_out;
  std::optional<std::string> sim_inputs, sim_spec;
  std::optional<double> sim_fusion;
  std::optional<uint32_t> sim_jitter;
  std::optional<uint64_t> sim_steps;
  std::string sim_phase = "both";
  sim->add_option("--program", sim_program)->required();
  sim->add_option("--inputs", sim_inputs, "Comma-separated parameters");
  sim->add_option("--spec", sim_spec, "Expansion spec JSON");
  sim->add_option("--fusion-p", sim_fusion);
  sim->add_option("--jitter", sim_jitter);
  sim->add_option("--max-steps", sim_steps);
  sim->add_option("--phase", sim_phase)
      ->check(CLI::IsMember({"load", "interpret", "both"}));
  sim->add_option("--out-prefix", sim_out)->required();

  // profile
  auto* prof = app.add_subcommand("profile", "Build a pattern database");
  std::vector<std::string> prof_traces;
  std::optional<std::string> prof_spec;
  std::string prof_out;
  size_t prof_workers = 1;
  prof->add_option("--traces", prof_traces, "Trace files or directories")
      ->required();
  prof->add_option("--spec", prof_spec);
  prof->add_option("--workers", prof_workers)->check(CLI::PositiveNumber);
  prof->add_option("--out", prof_out)->required();

  // generalize
  auto* gen = app.add_subcommand("generalize", "Compile matchers");
  std::string gen_db, gen_out;
  std::optional<size_t> gen_splits, gen_slack;
  std::optional<std::string> gen_spec;
  gen->add_option("--db", gen_db)->required();
  gen->add_option("--max-splits", gen_splits);
  gen->add_option("--slack", gen_slack);
  gen->add_option("--spec", gen_spec);
  gen->add_option("--out", gen_out)->required();

  // attack
  auto* atk = app.add_subcommand("attack", "Segment an unlabeled trace");
  std::string atk_trace, atk_matchers, atk_out;
  std::optional<std::string> atk_model;
  std::optional<double> atk_floor;
  atk->add_option("--trace", atk_trace)->required();
  atk->add_option("--matchers", atk_matchers)->required();
  atk->add_option("--timing-model", atk_model);
  atk->add_option("--floor", atk_floor, "Pruning confidence floor");
  atk->add_option("--out", atk_out)->required();

  // match
  auto* mat = app.add_subcommand("match", "Find functions in a load trace");
  std::string mat_needle, mat_haystack;
  std::optional<size_t> mat_function;
  mat->add_option("--needle", mat_needle)->required();
  mat->add_option("--haystack", mat_haystack)->required();
  mat->add_option("--function", mat_function, "Only this needle function");

  // analyze-isa
  auto* isa = app.add_subcommand("analyze-isa", "Candidate-set distribution");
  std::string isa_dataset, isa_out, isa_tee = "none", isa_model = "sota",
                                    isa_weight = "semantic", isa_uarch;
  std::optional<uint64_t> isa_res;
  std::optional<std::string> isa_sweep;
  isa->add_option("--dataset", isa_dataset)->required();
  isa->add_option("--tee", isa_tee)
      ->check(CLI::IsMember({"sgx", "sev", "none"}));
  isa->add_option("--model", isa_model)
      ->check(CLI::IsMember({"sota", "ideal"}));
  auto* res_opt = isa->add_option("--resolution", isa_res);
  isa->add_option("--sweep", isa_sweep)->excludes(res_opt);
  isa->add_option("--weight", isa_weight)
      ->check(CLI::IsMember({"semantic", "variant"}));
  isa->add_option("--uarch", isa_uarch);
  isa->add_option("--out", isa_out)->required();

  // dataset validate
  auto* ds = app.add_subcommand("dataset", "Dataset utilities");
  ds->require_subcommand(1);
  auto* dsv = ds->add_subcommand("validate", "Check a dataset file");
  std::string dsv_path;
  dsv->add_option("--dataset", dsv_path)->required();

  // report
  auto* rep = app.add_subcommand("report", "Recovery statistics");
  std::vector<std::string> rep_results;
  std::string rep_out;
  bool rep_truth = false;
  rep->add_option("--results", rep_results)->required();
  rep->add_flag("--truth", rep_truth,
                "Score against .labels sidecars next to the traces");
  rep->add_option("--out", rep_out)->required();

  // train-timing
  auto* tt = app.add_subcommand("train-timing", "Fit the timing classifier");
  std::vector<std::string> tt_traces;
  std::optional<std::string> tt_labels;
  size_t tt_trees = 50, tt_depth = 8, tt_min = 20;
  std::string tt_out;
  tt->add_option("--traces", tt_traces)->required();
  tt->add_option("--labels", tt_labels, "Restrict to these opcodes");
  tt->add_option("--trees", tt_trees)->check(CLI::PositiveNumber);
  tt->add_option("--depth", tt_depth)->check(CLI::PositiveNumber);
  tt->add_option("--min-samples", tt_min);
  tt->add_option("--out", tt_out)->required();

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from --config");
  std::optional<std::string> run_out;
  std::optional<size_t> run_workers;
  run->add_option("--out-dir", run_out);
  run->add_option("--workers", run_workers)->check(CLI::PositiveNumber);

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();
  dsv->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "leakscope: error E_USAGE: " << OneLine(e.what()) << "\n";
    return 2;
  }

  try {
    if (!g.config_path.empty()) g.config = LoadRunConfig(g.config_path);
    if (*sim)
      return CmdSimulate(g, sim_program, sim_inputs, sim_spec, sim_fusion,
                         sim_jitter, sim_steps, sim_phase, sim_out);
    if (*prof)
      return CmdProfile(g, prof_traces, prof_spec, prof_workers, prof_out);
    if (*gen)
      return CmdGeneralize(g, gen_db, gen_splits, gen_slack, gen_spec,
                           gen_out);
    if (*atk)
      return CmdAttack(g, atk_trace, atk_matchers, atk_model, atk_floor,
                       atk_out);
    if (*mat) return CmdMatch(mat_needle, mat_haystack, mat_function);
    if (*isa)
      return CmdAnalyzeIsa(isa_dataset, isa_tee, isa_model, isa_res,
                           isa_sweep, isa_weight, isa_uarch, isa_out);
    if (*dsv) return CmdDatasetValidate(dsv_path);
    if (*rep) return CmdReport(rep_results, rep_truth, rep_out);
    if (*tt)
      return CmdTrainTiming(g, tt_traces, tt_labels, tt_trees, tt_depth,
                            tt_min, tt_out);
    if (*run) return CmdRun(g, run_out, run_workers);
  } catch (const Error& e) {
    std::cerr << "leakscope: error " << ErrorCodeName(e.code()) << ": "
              << OneLine(e.what()) << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "leakscope: error E_IO: " << OneLine(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "leakscope: error E_INTERNAL: " << OneLine(e.what()) << "\n";
    return 1;
  }
  return 0;
}
