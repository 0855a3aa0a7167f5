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

#include "leakscope/timing_classifier.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "json.hpp"
#include "leakscope/error.h"
#include "leakscope/rng.h"

namespace leakscope {

class ForestBuilder {
 public:
  ForestBuilder(std::span<const LatencySample> samples,
                const ForestParams& params)
      : params_(params) {
    std::map<std::string, int> ids;
    for (const auto& s : samples) {
      ids.emplace(s.label, 0);
      width_ = std::max(width_, s.features.size());
    }
    int next = 0;
    for (auto& [label, id] : ids) {
      id = next++;
      classes_.push_back(label);
    }
    for (const auto& s : samples) {
      std::vector<double> row(width_, -1.0);
      std::copy(s.features.begin(), s.features.end(), row.begin());
      x_.push_back(std::move(row));
      y_.push_back(ids.at(s.label));
    }
  }

  TimingClassifier Build() {
    TimingClassifier clf;
    clf.classes_ = classes_;
    clf.width_ = width_;
    if (x_.empty()) return clf;
    Rng rng(params_.seed);
    for (size_t t = 0; t < params_.trees; ++t) {
      Rng tree_rng = rng.Fork(t);
      std::vector<size_t> bag(x_.size());
      for (auto& i : bag) i = tree_rng.UniformIndex(x_.size());
      TimingClassifier::Tree tree;
      Grow(tree, bag, 0, tree_rng);
      clf.trees_.push_back(std::move(tree));
    }
    return clf;
  }

 private:
  std::vector<double> Counts(const std::vector<size_t>& idx) const {
    std::vector<double> c(classes_.size(), 0.0);
    for (size_t i : idx) c[static_cast<size_t>(y_[i])] += 1.0;
    return c;
  }

  static double Gini(const std::vector<double>& counts, double total) {
    if (total <= 0) return 0;
    double sum = 0;
    for (double c : counts) sum += c * c;
    return 1.0 - sum / (total * total);
  }

  int Leaf(TimingClassifier::Tree& tree, const std::vector<double>& counts,
           double total) {
    TimingClassifier::Node node;
    node.distribution = counts;
    for (double& d : node.distribution) d /= total;
    tree.push_back(std::move(node));
    return static_cast<int>(tree.size() - 1);
  }

  int Grow(TimingClassifier::Tree& tree, const std::vector<size_t>& idx,
           size_t depth, Rng& rng) {
    const std::vector<double> counts = Counts(idx);
    const double total = static_cast<double>(idx.size());
    const double parent = Gini(counts, total);
    if (depth >= params_.max_depth || idx.size() < params_.min_samples_split ||
        parent == 0.0)
      return Leaf(tree, counts, total);

    // Random feature subset of size sqrt(width).
    std::vector<size_t> features(width_);
    for (size_t f = 0; f < width_; ++f) features[f] = f;
    const size_t k = std::max<size_t>(
        1, static_cast<size_t>(std::sqrt(static_cast<double>(width_))));
    for (size_t i = 0; i < k; ++i)
      std::swap(features[i], features[i + rng.UniformIndex(width_ - i)]);

    int best_feature = -1;
    double best_threshold = 0;
    double best_score = parent - 1e-12;
    std::vector<std::pair<double, int>> vals(idx.size());
    for (size_t fi = 0; fi < k; ++fi) {
      const size_t f = features[fi];
      for (size_t i = 0; i < idx.size(); ++i)
        vals[i] = {x_[idx[i]][f], y_[idx[i]]};
      std::sort(vals.begin(), vals.end());
      std::vector<double> left(classes_.size(), 0.0);
      std::vector<double> right = counts;
      for (size_t i = 0; i + 1 < vals.size(); ++i) {
        left[static_cast<size_t>(vals[i].second)] += 1;
        right[static_cast<size_t>(vals[i].second)] -= 1;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = total - nl;
        const double score =
            (nl * Gini(left, nl) + nr * Gini(right, nr)) / total;
        if (score < best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = (vals[i].first + vals[i + 1].first) / 2;
        }
      }
    }
    if (best_feature < 0) return Leaf(tree, counts, total);

    std::vector<size_t> lo, hi;
    for (size_t i : idx)
      (x_[i][static_cast<size_t>(best_feature)] <= best_threshold ? lo : hi)
          .push_back(i);
    const int self = static_cast<int>(tree.size());
    tree.emplace_back();
    tree[self].feature = best_feature;
    tree[self].threshold = best_threshold;
    const int l = Grow(tree, lo, depth + 1, rng);
    const int r = Grow(tree, hi, depth + 1, rng);
    tree[self].left = l;
    tree[self].right = r;
    return self;
  }

  ForestParams params_;
  std::vector<std::string> classes_;
  size_t width_ = 0;
  std::vector<std::vector<double>> x_;
  std::vector<int> y_;
};

TimingClassifier TimingClassifier::Fit(std::span<const LatencySample> samples,
                                       const ForestParams& params) {
  if (params.trees == 0)
    throw Error(ErrorCode::kInvalidArgument, "forest needs at least one tree");
  return ForestBuilder(samples, params).Build();
}

std::vector<double> TimingClassifier::PredictProba(
    std::span<const double> features) const {
  std::vector<double> proba(classes_.size(), 0.0);
  if (trees_.empty()) return proba;
  for (const Tree& tree : trees_) {
    size_t n = 0;
    while (tree[n].feature >= 0) {
      const size_t f = static_cast<size_t>(tree[n].feature);
      const double v = f < features.size() ? features[f] : -1.0;
      n = static_cast<size_t>(v <= tree[n].threshold ? tree[n].left
                                                     : tree[n].right);
    }
    for (size_t c = 0; c < proba.size(); ++c)
      proba[c] += tree[n].distribution[c];
  }
  for (double& p : proba) p /= static_cast<double>(trees_.size());
  return proba;
}

std::string TimingClassifier::Predict(std::span<const double> features) const {
  const std::vector<double> proba = PredictProba(features);
  if (proba.empty()) return {};
  return classes_[static_cast<size_t>(
      std::max_element(proba.begin(), proba.end()) - proba.begin())];
}

void TimingClassifier::Save(std::ostream& out) const {
  nlohmann::json j;
  j["format"] = "leakscope-forest-1";
  j["classes"] = classes_;
  j["width"] = width_;
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : tree) {
      if (n.feature < 0)
        nodes.push_back({{"leaf", n.distribution}});
      else
        nodes.push_back({{"f", n.feature},
                         {"t", n.threshold},
                         {"l", n.left},
                         {"r", n.right}});
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  out << j.dump() << "\n";
}

TimingClassifier TimingClassifier::Load(std::istream& in,
                                        std::string_view source) {
  TimingClassifier clf;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "leakscope-forest-1")
      throw Error(ErrorCode::kParse, "not a leakscope forest");
    clf.classes_ = j.at("classes").get<std::vector<std::string>>();
    clf.width_ = j.at("width").get<size_t>();
    for (const auto& jt : j.at("trees")) {
      Tree tree;
      for (const auto& jn : jt) {
        Node n;
        if (jn.contains("leaf")) {
          n.distribution = jn.at("leaf").get<std::vector<double>>();
          if (n.distribution.size() != clf.classes_.size())
            throw Error(ErrorCode::kParse, "leaf size mismatch");
        } else {
          n.feature = jn.at("f").get<int>();
          n.threshold = jn.at("t").get<double>();
          n.left = jn.at("l").get<int>();
          n.right = jn.at("r").get<int>();
        }
        tree.push_back(std::move(n));
      }
      for (const Node& n : tree)
        if (n.feature >= 0 &&
            (n.left < 0 || n.right < 0 ||
             static_cast<size_t>(std::max(n.left, n.right)) >= tree.size()))
          throw Error(ErrorCode::kParse, "dangling tree node");
      if (tree.empty()) throw Error(ErrorCode::kParse, "empty tree");
      clf.trees_.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, 0, e.what());
  }
  return clf;
}

TrainingReport TrainTimingClassifier(std::span<const LatencySample> samples,
                                     const ForestParams& params) {
  std::map<std::string, std::vector<size_t>> by_class;
  for (size_t i = 0; i < samples.size(); ++i)
    by_class[samples[i].label].push_back(i);
  if (by_class.size() < 2)
    throw Error(ErrorCode::kInvalidArgument,
                "timing classifier needs at least two classes");
  for (const auto& [label, idx] : by_class)
    if (idx.size() < params.min_samples_per_class)
      throw Error(ErrorCode::kInvalidArgument,
                  "class '" + label + "' has " + std::to_string(idx.size()) +
                      " samples, need " +
                      std::to_string(params.min_samples_per_class));

  Rng rng = Rng(params.seed).Fork(0x5917);
  std::vector<LatencySample> train, holdout;
  for (auto& [label, idx] : by_class) {
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.UniformIndex(i)]);
    const size_t n_hold = static_cast<size_t>(
        std::floor(params.holdout_fraction * static_cast<double>(idx.size())));
    for (size_t k = 0; k < idx.size(); ++k)
      (k < n_hold ? holdout : train).push_back(samples[idx[k]]);
  }

  TrainingReport report;
  report.classifier = TimingClassifier::Fit(train, params);
  report.train_size = train.size();
  report.holdout_size = holdout.size();
  size_t correct = 0;
  for (const LatencySample& s : holdout)
    if (report.classifier.Predict(s.features) == s.label) ++correct;
  report.holdout_accuracy =
      holdout.empty() ? 0.0
                      : static_cast<double>(correct) /
                            static_cast<double>(holdout.size());
  return report;
}

}  // namespace leakscope
