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

// Random-forest classifier over per-segment latency vectors.

#ifndef LEAKSCOPE_TIMING_CLASSIFIER_H_
#define LEAKSCOPE_TIMING_CLASSIFIER_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace leakscope {

struct ForestParams {
  size_t trees = 50;
  size_t max_depth = 8;
  size_t min_samples_split = 2;
  size_t min_samples_per_class = 20;
  double holdout_fraction = 0.2;
  uint64_t seed = 0;
};

struct LatencySample {
  std::vector<double> features;
  std::string label;
};

class TimingClassifier {
 public:
  // Missing trailing positions are treated as -1.
  std::vector<double> PredictProba(std::span<const double> features) const;
  std::string Predict(std::span<const double> features) const;

  const std::vector<std::string>& classes() const { return classes_; }
  size_t width() const { return width_; }
  size_t tree_count() const { return trees_.size(); }

  void Save(std::ostream& out) const;
  static TimingClassifier Load(std::istream& in,
                               std::string_view source = "classifier");

  // Fits on all of `samples`; no validation of class balance.
  static TimingClassifier Fit(std::span<const LatencySample> samples,
                              const ForestParams& params);

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0;
    int left = -1;
    int right = -1;
    std::vector<double> distribution;  // leaves only
  };
  using Tree = std::vector<Node>;

  std::vector<std::string> classes_;
  size_t width_ = 0;
  std::vector<Tree> trees_;

  friend class ForestBuilder;
};

struct TrainingReport {
  TimingClassifier classifier;
  double holdout_accuracy = 0;
  size_t train_size = 0;
  size_t holdout_size = 0;
};

// Stratified, seeded train/holdout split, then Fit on the training part.
// Throws Error(kInvalidArgument) with fewer than two classes or too few
// samples in any class.
TrainingReport TrainTimingClassifier(std::span<const LatencySample> samples,
                                     const ForestParams& params);

}  // namespace leakscope

#endif  // LEAKSCOPE_TIMING_CLASSIFIER_H_
