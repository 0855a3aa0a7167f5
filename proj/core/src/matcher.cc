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

#include "leakscope/matcher.h"

#include <algorithm>
#include <istream>
#include <ostream>

#include "leakscope/error.h"
#include "text_util.h"

namespace leakscope {

namespace {

// Offsets reachable after matching `fixed` (with its alternatives) from each
// offset in `from`.
std::vector<size_t> Advance(std::span<const Token> text,
                            std::vector<size_t> from,
                            const TokenString& fixed,
                            const UnfuseMap& unfuse) {
  std::vector<size_t> next;
  for (size_t i = 0; i < fixed.size() && !from.empty(); ++i) {
    next.clear();
    auto split = unfuse.find(i);
    for (size_t j : from) {
      if (j < text.size() && text[j] == fixed[i]) next.push_back(j + 1);
      if (split != unfuse.end() && j + 1 < text.size() &&
          text[j] == split->second.first &&
          text[j + 1] == split->second.second)
        next.push_back(j + 2);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    std::swap(from, next);
  }
  return from;
}

// Backtracking match of one fixed part starting at text[j]; calls `rest`
// with each end offset until it returns true.
template <typename Rest>
bool MatchFixed(std::span<const Token> text, const TokenString& fixed,
                const UnfuseMap& unfuse, size_t i, size_t j, Rest&& rest) {
  if (i == fixed.size()) return rest(j);
  if (j < text.size() && text[j] == fixed[i] &&
      MatchFixed(text, fixed, unfuse, i + 1, j + 1, rest))
    return true;
  auto split = unfuse.find(i);
  return split != unfuse.end() && j + 1 < text.size() &&
         text[j] == split->second.first &&
         text[j + 1] == split->second.second &&
         MatchFixed(text, fixed, unfuse, i + 1, j + 2, rest);
}

void CheckUnfuse(const std::string& label, const char* part,
                 const TokenString& tokens, const UnfuseMap& unfuse) {
  for (const auto& [pos, pair] : unfuse) {
    if (pos >= tokens.size() || !CanFuse(pair.first, pair.second) ||
        MergeFused(pair.first, pair.second) != tokens[pos])
      throw Error(ErrorCode::kStructure, "matcher '" + label + "': bad " +
                                             part + " unfuse entry at " +
                                             std::to_string(pos));
  }
}

std::string FormatAnnotations(const GeneralizedMatcher& m) {
  std::string out;
  auto add = [&](char part, const UnfuseMap& unfuse) {
    for (const auto& [pos, pair] : unfuse) {
      if (!out.empty()) out += ';';
      out += part + std::to_string(pos) + "=(" + pair.first.ToString() + "," +
             pair.second.ToString() + ")";
    }
  };
  add('p', m.prefix_unfuse);
  add('s', m.suffix_unfuse);
  return out;
}

}  // namespace

GeneralizedMatcher GeneralizedMatcher::Exact(const Pattern& p) {
  if (p.tokens.empty())
    throw Error(ErrorCode::kStructure,
                "empty pattern for '" + p.label + "'");
  GeneralizedMatcher m;
  m.label = p.label;
  m.phase = p.phase;
  const size_t cut = p.tokens.size() == 1 ? 1 : p.tokens.size() - 1;
  m.prefix.assign(p.tokens.begin(), p.tokens.begin() + cut);
  m.suffix.assign(p.tokens.begin() + cut, p.tokens.end());
  for (const auto& [pos, pair] : p.unfuse) {
    if (pos < cut)
      m.prefix_unfuse.emplace(pos, pair);
    else
      m.suffix_unfuse.emplace(pos - cut, pair);
  }
  return m;
}

size_t GeneralizedMatcher::MaxLength() const {
  return prefix.size() + prefix_unfuse.size() + middle_max + suffix.size() +
         suffix_unfuse.size();
}

size_t GeneralizedMatcher::MinLength() const {
  return prefix.size() + middle_min + suffix.size();
}

void GeneralizedMatcher::MatchEnds(std::span<const Token> text, size_t start,
                                   std::vector<size_t>& ends) const {
  std::vector<size_t> after_prefix = Advance(text, {start}, prefix,
                                             prefix_unfuse);
  std::vector<size_t> middle_ends;
  for (size_t p : after_prefix) {
    size_t len = 0;
    while (true) {
      if (len >= middle_min) middle_ends.push_back(p + len);
      if (len == middle_max || p + len >= text.size() ||
          !middle_alphabet.count(text[p + len]))
        break;
      ++len;
    }
  }
  std::sort(middle_ends.begin(), middle_ends.end());
  middle_ends.erase(std::unique(middle_ends.begin(), middle_ends.end()),
                    middle_ends.end());
  std::vector<size_t> out = Advance(text, std::move(middle_ends), suffix,
                                    suffix_unfuse);
  const size_t mark = ends.size();
  ends.insert(ends.end(), out.begin(), out.end());
  std::inplace_merge(ends.begin(), ends.begin() + static_cast<ptrdiff_t>(mark),
                     ends.end());
  ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
}

bool GeneralizedMatcher::Accepts(std::span<const Token> text) const {
  auto suffix_to_end = [&](size_t j) {
    return MatchFixed(text, suffix, suffix_unfuse, 0, j,
                      [&](size_t e) { return e == text.size(); });
  };
  auto middle = [&](size_t j) {
    for (size_t len = 0; len <= middle_max && j + len <= text.size(); ++len) {
      if (len > 0 && !middle_alphabet.count(text[j + len - 1])) return false;
      if (len >= middle_min && suffix_to_end(j + len)) return true;
    }
    return false;
  };
  return MatchFixed(text, prefix, prefix_unfuse, 0, 0, middle);
}

void GeneralizedMatcher::Validate() const {
  if (label.empty())
    throw Error(ErrorCode::kStructure, "matcher without label");
  if (prefix.empty())
    throw Error(ErrorCode::kStructure,
                "matcher '" + label + "' has an empty prefix");
  if (suffix.empty() && middle_max > 0)
    throw Error(ErrorCode::kStructure,
                "matcher '" + label + "' has a wildcard but no suffix");
  if (middle_min > middle_max)
    throw Error(ErrorCode::kStructure,
                "matcher '" + label + "' has middle min > max");
  if (middle_max > 0 && middle_alphabet.empty())
    throw Error(ErrorCode::kStructure,
                "matcher '" + label + "' has an empty wildcard alphabet");
  CheckUnfuse(label, "prefix", prefix, prefix_unfuse);
  CheckUnfuse(label, "suffix", suffix, suffix_unfuse);
}

void WriteMatchers(std::ostream& out,
                   std::span<const GeneralizedMatcher> matchers) {
  out << "#phase,label,prefix,middle_min,middle_max,middle_alphabet,suffix,"
         "unfuse\n";
  for (const GeneralizedMatcher& m : matchers) {
    TokenString alphabet(m.middle_alphabet.begin(), m.middle_alphabet.end());
    out << PhaseName(m.phase) << ',' << m.label << ',' << FormatTokens(m.prefix)
        << ',' << m.middle_min << ',' << m.middle_max << ','
        << FormatTokens(alphabet) << ',' << FormatTokens(m.suffix) << ','
        << FormatAnnotations(m) << "\n";
  }
}

std::vector<GeneralizedMatcher> ReadMatchers(std::istream& in,
                                             std::string_view source) {
  std::vector<GeneralizedMatcher> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = internal::Trim(line);
    if (l.empty() || l.front() == '#') continue;
    std::vector<std::string_view> fields;
    size_t pos = 0;
    for (int f = 0; f < 7; ++f) {
      const size_t comma = l.find(',', pos);
      if (comma == std::string_view::npos)
        throw ParseError(source, lineno, "expected 8 fields");
      fields.push_back(l.substr(pos, comma - pos));
      pos = comma + 1;
    }
    fields.push_back(l.substr(pos));
    try {
      GeneralizedMatcher m;
      m.phase = ParsePhase(internal::Trim(fields[0]));
      m.label = std::string(internal::Trim(fields[1]));
      m.prefix = ParseTokens(fields[2]);
      auto lo = internal::ParseU64(fields[3]);
      auto hi = internal::ParseU64(fields[4]);
      if (!lo || !hi) throw Error(ErrorCode::kParse, "bad middle bounds");
      m.middle_min = *lo;
      m.middle_max = *hi;
      for (const Token& t : ParseTokens(fields[5])) m.middle_alphabet.insert(t);
      m.suffix = ParseTokens(fields[6]);
      std::string_view ann = internal::Trim(fields[7]);
      if (!ann.empty()) {
        for (std::string_view item : internal::Split(ann, ';')) {
          item = internal::Trim(item);
          if (item.empty() || (item[0] != 'p' && item[0] != 's'))
            throw Error(ErrorCode::kParse,
                        "bad unfuse annotation '" + std::string(item) + "'");
          UnfuseMap one = ParseUnfuse(item.substr(1));
          auto& into = item[0] == 'p' ? m.prefix_unfuse : m.suffix_unfuse;
          into.insert(one.begin(), one.end());
        }
      }
      m.Validate();
      out.push_back(std::move(m));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

}  // namespace leakscope
