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

#include "leakscope/attack.h"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "json.hpp"
#include "leakscope/bytecode.h"
#include "leakscope/error.h"

namespace leakscope {

namespace {

std::string Fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Segmentation PruneWithTiming(const Segmentation& segmentation,
                             const ExecutionTrace& trace,
                             const TimingClassifier& clf, double floor) {
  Segmentation out = segmentation;
  std::map<std::string, std::vector<size_t>> class_columns;
  for (size_t c = 0; c < clf.classes().size(); ++c)
    class_columns[SemanticClassOf(clf.classes()[c])].push_back(c);

  for (Segment& seg : out.segments) {
    if (seg.candidates.size() == 1) {
      seg.confidence = {1.0};
      continue;
    }
    if (seg.end > trace.size())
      throw Error(ErrorCode::kInvalidArgument,
                  "segmentation does not belong to this trace");
    const bool known = std::all_of(
        seg.candidates.begin(), seg.candidates.end(),
        [&](const std::string& c) { return class_columns.count(c) > 0; });
    if (!known) continue;

    std::vector<double> features;
    for (size_t i = seg.start; i < seg.end; ++i)
      features.push_back(
          static_cast<double>(trace.measurements[i].latency_cycles));
    const std::vector<double> proba = clf.PredictProba(features);
    std::vector<double> mass;
    double total = 0;
    for (const std::string& c : seg.candidates) {
      double m = 0;
      for (size_t col : class_columns.at(c)) m += proba[col];
      mass.push_back(m);
      total += m;
    }
    if (total <= 0) continue;
    for (double& m : mass) m /= total;

    const size_t best = static_cast<size_t>(
        std::max_element(mass.begin(), mass.end()) - mass.begin());
    std::vector<std::string> kept;
    std::vector<double> conf;
    for (size_t i = 0; i < seg.candidates.size(); ++i) {
      if (mass[i] >= floor || i == best) {
        kept.push_back(seg.candidates[i]);
        conf.push_back(mass[i]);
      }
    }
    seg.candidates = std::move(kept);
    seg.confidence = std::move(conf);
  }
  return out;
}

const std::string& TopCandidate(const Segment& segment) {
  if (segment.candidates.empty())
    throw Error(ErrorCode::kInvalidArgument, "segment without candidates");
  size_t best = 0;
  for (size_t i = 1; i < segment.confidence.size(); ++i)
    if (segment.confidence[i] > segment.confidence[best]) best = i;
  return segment.candidates[best];
}

std::vector<std::string> TopLabels(const Segmentation& segmentation) {
  std::vector<std::string> out;
  for (const Segment& s : segmentation.segments)
    out.push_back(TopCandidate(s));
  return out;
}

std::vector<FunctionSpan> SplitFunctions(std::span<const std::string> labels) {
  std::vector<FunctionSpan> out;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kFunctionHeaderLabel || out.empty())
      out.push_back({i, {}});
    out.back().labels.push_back(labels[i]);
  }
  return out;
}

std::vector<size_t> MatchFunction(std::span<const std::string> needle,
                                  std::span<const std::string> haystack) {
  if (needle.empty())
    throw Error(ErrorCode::kInvalidArgument, "empty needle");
  std::vector<size_t> out;
  auto it = haystack.begin();
  while (true) {
    it = std::search(it, haystack.end(), needle.begin(), needle.end());
    if (it == haystack.end()) break;
    out.push_back(static_cast<size_t>(it - haystack.begin()));
    ++it;
  }
  return out;
}

void WriteAttackResult(std::ostream& out, const AttackResult& result) {
  nlohmann::ordered_json j;
  j["source"] = result.source;
  j["phase"] = PhaseName(result.phase);
  j["complete"] = result.segmentation.complete;
  j["trace_length"] = result.segmentation.trace_length;
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const Segment& s : result.segmentation.segments) {
    nlohmann::ordered_json js;
    js["start"] = s.start;
    js["end"] = s.end;
    js["candidates"] = s.candidates;
    if (!s.confidence.empty()) js["confidence"] = s.confidence;
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  out << j.dump(1) << "\n";
}

AttackResult ReadAttackResult(std::istream& in, std::string_view source) {
  AttackResult r;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    r.source = j.value("source", "");
    r.phase = ParsePhase(j.at("phase").get<std::string>());
    r.segmentation.complete = j.at("complete").get<bool>();
    r.segmentation.trace_length = j.at("trace_length").get<size_t>();
    size_t expected = 0;
    for (const auto& js : j.at("segments")) {
      Segment s;
      s.start = js.at("start").get<size_t>();
      s.end = js.at("end").get<size_t>();
      s.candidates = js.at("candidates").get<std::vector<std::string>>();
      if (js.contains("confidence"))
        s.confidence = js.at("confidence").get<std::vector<double>>();
      if (s.start != expected || s.end <= s.start || s.candidates.empty() ||
          (!s.confidence.empty() &&
           s.confidence.size() != s.candidates.size()))
        throw Error(ErrorCode::kParse,
                    "malformed segment at offset " + std::to_string(s.start));
      expected = s.end;
      r.segmentation.segments.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
  return r;
}

RecoveryStats ComputeRecovery(
    const Segmentation& segmentation,
    const std::optional<std::vector<LabelSpan>>& truth) {
  RecoveryStats st;
  st.segments = segmentation.segments.size();
  size_t s1 = 0, s2 = 0, s3 = 0, total = 0;
  for (const Segment& s : segmentation.segments) {
    const size_t k = s.candidates.size();
    s1 += k == 1;
    s2 += k <= 2;
    s3 += k <= 3;
    total += k;
  }
  if (st.segments > 0) {
    const double n = static_cast<double>(st.segments);
    st.size1 = static_cast<double>(s1) / n;
    st.size_le2 = static_cast<double>(s2) / n;
    st.size_le3 = static_cast<double>(s3) / n;
    st.mean_set_size = static_cast<double>(total) / n;
  }
  if (truth) {
    bool exact = truth->size() == segmentation.segments.size() &&
                 segmentation.complete;
    std::map<std::pair<size_t, size_t>, const Segment*> by_span;
    for (const Segment& s : segmentation.segments)
      by_span[{s.start, s.end}] = &s;
    size_t hit = 0;
    for (const LabelSpan& span : *truth) {
      auto it = by_span.find({span.start, span.end});
      if (it == by_span.end()) {
        exact = false;
        continue;
      }
      const auto& c = it->second->candidates;
      if (std::find(c.begin(), c.end(), SemanticClassOf(span.opcode)) !=
          c.end())
        ++hit;
    }
    st.boundaries_exact = exact;
    st.true_in_set = truth->empty() ? 1.0
                                    : static_cast<double>(hit) /
                                          static_cast<double>(truth->size());
  }
  return st;
}

void WriteRecoveryCsv(std::ostream& out, std::span<const RecoveryStats> rows) {
  out << "source,segments,size1,size_le2,size_le3,mean_set_size,"
         "boundaries_exact,true_in_set\n";
  for (const RecoveryStats& r : rows) {
    out << r.source << ',' << r.segments << ',' << Fixed(r.size1) << ','
        << Fixed(r.size_le2) << ',' << Fixed(r.size_le3) << ','
        << Fixed(r.mean_set_size) << ','
        << (r.boundaries_exact ? (*r.boundaries_exact ? "1" : "0") : "") << ','
        << (r.true_in_set ? Fixed(*r.true_in_set) : "") << "\n";
  }
}

}  // namespace leakscope
