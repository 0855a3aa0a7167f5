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

#include "leakscope/profiling.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <tuple>

#include "leakscope/bytecode.h"
#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

namespace {

Error Integrity(size_t index, const std::string& what) {
  return Error(ErrorCode::kIntegrity,
               "label mismatch at IM " + std::to_string(index) + ": " + what);
}

void CheckCoverage(const ExecutionTrace& trace) {
  size_t expected = 0;
  for (const LabelSpan& span : *trace.labels) {
    if (span.start != expected)
      throw Integrity(std::min(span.start, expected),
                      "label spans leave a gap or overlap");
    if (span.end <= span.start)
      throw Integrity(span.start, "empty label span");
    expected = span.end;
  }
  if (expected != trace.size())
    throw Integrity(expected, "IMs after the last label span");
}

void CheckLoadAnchors(const ExecutionTrace& trace) {
  const auto& ims = trace.measurements;
  std::optional<uint64_t> entry;
  for (const LabelSpan& span : *trace.labels) {
    if (span.opcode != kFunctionHeaderLabel) {
      entry = ims[span.start].ip;
      break;
    }
  }
  if (!entry) return;  // no IPs recorded, nothing to cross-check
  for (const LabelSpan& span : *trace.labels) {
    const bool header = span.opcode == kFunctionHeaderLabel;
    for (size_t i = span.start; i < span.end; ++i) {
      const bool at_entry = ims[i].ip == entry;
      if (i == span.start && !header && !at_entry)
        throw Integrity(i, "span '" + span.opcode +
                               "' does not start at the loader loop entry");
      if ((i != span.start || header) && at_entry)
        throw Integrity(i, "loader loop entry inside span '" + span.opcode +
                               "'");
    }
  }
}

void CheckInterpretAnchors(const ExecutionTrace& trace) {
  for (const LabelSpan& span : *trace.labels) {
    if (!trace.measurements[span.end - 1].is_control_flow)
      throw Integrity(span.end - 1, "span '" + span.opcode +
                                        "' does not end in a control-flow "
                                        "step");
  }
}

// Fused form of an observation plus the positions that were (or could have
// been) split.
Pattern Canonicalize(const LabeledSegment& seg) {
  Pattern p;
  p.label = seg.label;
  p.phase = seg.phase;
  std::map<size_t, const SegmentFusion*> at;
  for (const auto& f : seg.fusions) at[f.position] = &f;
  for (size_t i = 0; i < seg.tokens.size(); ++i) {
    auto it = at.find(i);
    if (it == at.end()) {
      p.tokens.push_back(seg.tokens[i]);
      continue;
    }
    const SegmentFusion& f = *it->second;
    p.unfuse[p.tokens.size()] = {f.first, f.second};
    p.tokens.push_back(MergeFused(f.first, f.second));
    if (!f.fused) ++i;
  }
  return p;
}

// Adds entries of `from` that do not collide with existing positions.
void UnionUnfuse(UnfuseMap& into, const UnfuseMap& from) {
  for (const auto& [pos, pair] : from) into.emplace(pos, pair);
}

// Index i such that `longer` is `shorter` with shorter[i] split into
// longer[i], longer[i+1].
std::optional<size_t> SplitPosition(const TokenString& shorter,
                                    const TokenString& longer) {
  if (longer.size() != shorter.size() + 1) return std::nullopt;
  // Earliest position wins when a run of equal tokens makes several valid.
  for (size_t i = 0; i < shorter.size(); ++i) {
    if (CanFuse(longer[i], longer[i + 1]) &&
        MergeFused(longer[i], longer[i + 1]) == shorter[i] &&
        std::equal(shorter.begin() + i + 1, shorter.end(),
                   longer.begin() + i + 2))
      return i;
    if (shorter[i] != longer[i]) break;
  }
  return std::nullopt;
}

// Re-indexes positions of a pattern whose tokens [i, i+1] collapse into i.
UnfuseMap CollapseAt(const UnfuseMap& unfuse, size_t i) {
  UnfuseMap out;
  for (const auto& [pos, pair] : unfuse) {
    if (pos < i)
      out.emplace(pos, pair);
    else if (pos > i + 1)
      out.emplace(pos - 1, pair);
  }
  return out;
}

}  // namespace

std::vector<LabeledSegment> SegmentWithGroundTruth(
    const ExecutionTrace& trace) {
  if (!trace.labels)
    throw Error(ErrorCode::kInvalidArgument,
                "trace carries no labels; profiling needs ground truth");
  if (trace.empty()) return {};
  CheckCoverage(trace);
  if (trace.phase == Phase::kLoad)
    CheckLoadAnchors(trace);
  else
    CheckInterpretAnchors(trace);

  const TokenString tokens = Tokenize(trace);
  const int64_t base = static_cast<int64_t>(trace.measurements[0].code_page);
  std::vector<LabeledSegment> out;
  out.reserve(trace.labels->size());
  for (const LabelSpan& span : *trace.labels) {
    LabeledSegment seg;
    seg.label = span.opcode;
    seg.phase = trace.phase;
    seg.tokens.assign(tokens.begin() + span.start, tokens.begin() + span.end);
    for (size_t i = span.start; i < span.end; ++i)
      seg.latencies.push_back(trace.measurements[i].latency_cycles);
    out.push_back(std::move(seg));
  }

  size_t s = 0;
  for (const FuseMark& mark : trace.fuse_marks) {
    while (s < trace.labels->size() && (*trace.labels)[s].end <= mark.index)
      ++s;
    if (s == trace.labels->size() || (*trace.labels)[s].start > mark.index)
      throw Integrity(mark.index, "fuse mark outside every label span");
    const LabelSpan& span = (*trace.labels)[s];
    if (mark.kind == FuseMark::Kind::kSplit && mark.index + 1 >= span.end)
      throw Integrity(mark.index, "unfused pair crosses a label boundary");
    SegmentFusion f;
    f.position = mark.index - span.start;
    f.fused = mark.kind == FuseMark::Kind::kFused;
    f.first = {static_cast<int64_t>(mark.first_page) - base, mark.first_mem};
    f.second = {static_cast<int64_t>(mark.second_page) - base,
                mark.second_mem};
    out[s].fusions.push_back(f);
  }
  return out;
}

bool Pattern::Accepts(std::span<const Token> observed) const {
  // Set of reachable offsets into `observed` after each pattern position.
  std::set<size_t> at = {0};
  for (size_t i = 0; i < tokens.size() && !at.empty(); ++i) {
    std::set<size_t> next;
    auto split = unfuse.find(i);
    for (size_t j : at) {
      if (j < observed.size() && observed[j] == tokens[i]) next.insert(j + 1);
      if (split != unfuse.end() && j + 1 < observed.size() &&
          observed[j] == split->second.first &&
          observed[j + 1] == split->second.second)
        next.insert(j + 2);
    }
    at = std::move(next);
  }
  return at.count(observed.size()) > 0;
}

std::vector<TokenString> Pattern::Variants() const {
  if (unfuse.size() > 20)
    throw Error(ErrorCode::kInvalidArgument,
                "too many unfuse positions to enumerate");
  std::vector<size_t> keys;
  for (const auto& [pos, pair] : unfuse) keys.push_back(pos);
  std::vector<TokenString> out;
  for (uint64_t mask = 0; mask < (uint64_t{1} << keys.size()); ++mask) {
    TokenString v;
    size_t k = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (k < keys.size() && keys[k] == i) {
        if (mask & (uint64_t{1} << k)) {
          v.push_back(unfuse.at(i).first);
          v.push_back(unfuse.at(i).second);
        } else {
          v.push_back(tokens[i]);
        }
        ++k;
      } else {
        v.push_back(tokens[i]);
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

void Pattern::Validate() const {
  if (label.empty()) throw Error(ErrorCode::kStructure, "pattern without label");
  if (source_count == 0)
    throw Error(ErrorCode::kStructure, "pattern '" + label + "' has count 0");
  for (const auto& [pos, pair] : unfuse) {
    if (pos >= tokens.size())
      throw Error(ErrorCode::kStructure,
                  "pattern '" + label + "': unfuse position " +
                      std::to_string(pos) + " out of range");
    if (!CanFuse(pair.first, pair.second) ||
        MergeFused(pair.first, pair.second) != tokens[pos])
      throw Error(ErrorCode::kStructure,
                  "pattern '" + label + "': unfuse pair at " +
                      std::to_string(pos) + " does not merge to " +
                      tokens[pos].ToString());
  }
}

void PatternDatabase::Insert(const LabeledSegment& segment) {
  Add(Canonicalize(segment));
}

void PatternDatabase::Add(Pattern obs) {
  auto same_op = [&](const Pattern& p) {
    return p.phase == obs.phase && p.label == obs.label;
  };
  for (Pattern& p : patterns_) {
    if (same_op(p) && p.tokens == obs.tokens) {
      UnionUnfuse(p.unfuse, obs.unfuse);
      p.source_count += obs.source_count;
      return;
    }
  }
  if (obs.unfuse.empty()) {
    for (Pattern& p : patterns_) {
      if (same_op(p) && p.Accepts(obs.tokens)) {
        p.source_count += obs.source_count;
        return;
      }
    }
  }
  for (size_t k = 0; k < patterns_.size(); ++k) {
    Pattern& p = patterns_[k];
    if (!same_op(p)) continue;
    // Observation shows one more token: a pair the stored pattern has fused.
    if (auto i = SplitPosition(p.tokens, obs.tokens)) {
      if (p.unfuse.count(*i)) continue;
      p.unfuse[*i] = {obs.tokens[*i], obs.tokens[*i + 1]};
      UnionUnfuse(p.unfuse, CollapseAt(obs.unfuse, *i));
      p.source_count += obs.source_count;
      return;
    }
    // Observation is the fused form of the stored pattern.
    if (auto i = SplitPosition(obs.tokens, p.tokens)) {
      if (p.unfuse.count(*i) || p.unfuse.count(*i + 1)) continue;
      UnfuseMap merged = CollapseAt(p.unfuse, *i);
      merged[*i] = {p.tokens[*i], p.tokens[*i + 1]};
      UnionUnfuse(merged, obs.unfuse);
      p.tokens = obs.tokens;
      p.unfuse = std::move(merged);
      p.source_count += obs.source_count;
      // The rewrite may have made it identical to another stored pattern.
      for (size_t j = 0; j < patterns_.size(); ++j) {
        if (j == k || !same_op(patterns_[j]) ||
            patterns_[j].tokens != patterns_[k].tokens)
          continue;
        UnionUnfuse(patterns_[k].unfuse, patterns_[j].unfuse);
        patterns_[k].source_count += patterns_[j].source_count;
        patterns_.erase(patterns_.begin() + static_cast<ptrdiff_t>(j));
        break;
      }
      return;
    }
  }
  patterns_.push_back(std::move(obs));
}

void PatternDatabase::Merge(const PatternDatabase& other) {
  if (!spec_hash.empty() && !other.spec_hash.empty() &&
      spec_hash != other.spec_hash)
    throw Error(ErrorCode::kInvalidArgument,
                "cannot merge pattern databases built from different specs (" +
                    spec_hash + " vs " + other.spec_hash + ")");
  if (spec_hash.empty()) spec_hash = other.spec_hash;
  trace_count += other.trace_count;
  for (const Pattern& p : other.patterns_) Add(p);
}

std::vector<const Pattern*> PatternDatabase::For(Phase phase,
                                                 std::string_view label) const {
  std::vector<const Pattern*> out;
  for (const Pattern& p : patterns_)
    if (p.phase == phase && p.label == label) out.push_back(&p);
  return out;
}

std::vector<std::string> PatternDatabase::Labels(Phase phase) const {
  std::set<std::string> labels;
  for (const Pattern& p : patterns_)
    if (p.phase == phase) labels.insert(p.label);
  return {labels.begin(), labels.end()};
}

void PatternDatabase::Normalize() {
  std::sort(patterns_.begin(), patterns_.end(),
            [](const Pattern& a, const Pattern& b) {
              return std::tie(a.phase, a.label, a.tokens, a.unfuse) <
                     std::tie(b.phase, b.label, b.tokens, b.unfuse);
            });
}

PatternDatabase ExtractPatterns(std::span<const LabeledSegment> segments,
                                PatternDatabase db) {
  for (const LabeledSegment& seg : segments) db.Insert(seg);
  return db;
}

std::string FormatUnfuse(const UnfuseMap& unfuse) {
  std::string out;
  for (const auto& [pos, pair] : unfuse) {
    if (!out.empty()) out += ';';
    out += std::to_string(pos) + "=(" + pair.first.ToString() + "," +
           pair.second.ToString() + ")";
  }
  return out;
}

UnfuseMap ParseUnfuse(std::string_view text) {
  UnfuseMap out;
  text = internal::Trim(text);
  if (text.empty()) return out;
  for (std::string_view item : internal::Split(text, ';')) {
    item = internal::Trim(item);
    const size_t eq = item.find('=');
    const size_t comma = item.find(',');
    if (eq == std::string_view::npos || comma == std::string_view::npos ||
        item.size() < eq + 2 || item[eq + 1] != '(' || item.back() != ')')
      throw Error(ErrorCode::kParse,
                  "malformed unfuse entry '" + std::string(item) + "'");
    auto pos = internal::ParseU64(item.substr(0, eq));
    if (!pos)
      throw Error(ErrorCode::kParse,
                  "malformed unfuse position '" + std::string(item) + "'");
    Token a = Token::Parse(item.substr(eq + 2, comma - eq - 2));
    Token b = Token::Parse(item.substr(comma + 1, item.size() - comma - 2));
    if (!out.emplace(*pos, std::make_pair(a, b)).second)
      throw Error(ErrorCode::kParse, "duplicate unfuse position " +
                                         std::to_string(*pos));
  }
  return out;
}

void WritePatternDatabase(std::ostream& out, const PatternDatabase& db) {
  PatternDatabase sorted = db;
  sorted.Normalize();
  out << "#spec=" << db.spec_hash << ",traces=" << db.trace_count << "\n";
  for (const Pattern& p : sorted.patterns()) {
    out << PhaseName(p.phase) << ',' << p.label << ',' << FormatTokens(p.tokens)
        << ",unfuse:" << FormatUnfuse(p.unfuse) << ',' << p.source_count
        << "\n";
  }
}

PatternDatabase ReadPatternDatabase(std::istream& in, std::string_view source) {
  PatternDatabase db;
  std::string line;
  size_t lineno = 0;
  std::vector<Pattern> parsed;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = internal::Trim(line);
    if (l.empty()) continue;
    if (l.front() == '#') {
      for (std::string_view kv : internal::Split(l.substr(1), ',')) {
        const size_t eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        std::string_view key = internal::Trim(kv.substr(0, eq));
        std::string_view value = internal::Trim(kv.substr(eq + 1));
        if (key == "spec") db.spec_hash = std::string(value);
        if (key == "traces") {
          auto n = internal::ParseU64(value);
          if (!n) throw ParseError(source, lineno, "bad trace count");
          db.trace_count = *n;
        }
      }
      continue;
    }
    // The unfuse field contains commas, so peel fixed fields off both ends.
    const size_t c1 = l.find(',');
    const size_t c2 = c1 == std::string_view::npos ? c1 : l.find(',', c1 + 1);
    const size_t c3 = c2 == std::string_view::npos ? c2 : l.find(',', c2 + 1);
    const size_t last = l.rfind(',');
    if (c3 == std::string_view::npos || last <= c3)
      throw ParseError(source, lineno, "expected 5 fields");
    try {
      Pattern p;
      p.phase = ParsePhase(internal::Trim(l.substr(0, c1)));
      p.label = std::string(internal::Trim(l.substr(c1 + 1, c2 - c1 - 1)));
      p.tokens = ParseTokens(l.substr(c2 + 1, c3 - c2 - 1));
      std::string_view unfuse = internal::Trim(l.substr(c3 + 1, last - c3 - 1));
      if (unfuse.substr(0, 7) != "unfuse:")
        throw Error(ErrorCode::kParse, "missing 'unfuse:' field");
      p.unfuse = ParseUnfuse(unfuse.substr(7));
      auto count = internal::ParseU64(l.substr(last + 1));
      if (!count || *count == 0)
        throw Error(ErrorCode::kParse, "bad source count");
      p.source_count = *count;
      p.Validate();
      parsed.push_back(std::move(p));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  for (Pattern& p : parsed) {
    for (const Pattern& q : parsed) {
      if (&q != &p && q.phase == p.phase && q.label == p.label &&
          q.tokens == p.tokens && q.unfuse == p.unfuse)
        throw ParseError(source, 0,
                         "duplicate pattern for '" + p.label + "'");
    }
  }
  for (Pattern& p : parsed) db.Add(std::move(p));
  return db;
}

}  // namespace leakscope
