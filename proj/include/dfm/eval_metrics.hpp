// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfm/centroid_codec.hpp"

namespace dfm {

// N x N pixel counts, rows indexed by ground truth and columns by prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
  }
  std::uint64_t valid_count() const { return valid_count_; }

  void add(int gt, int pred, std::uint64_t n = 1);
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int num_classes_;
  std::uint64_t valid_count_ = 0;
  std::vector<std::uint64_t> counts_;
};

// Adds every pixel whose ground truth is not the ignore value. Prediction
// values at ignored locations are never inspected.
void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred);

struct MiouResult {
  double miou = 0.0;
  // IoU per class; nullopt for classes with an empty union.
  std::vector<std::optional<double>> per_class;
  std::uint64_t valid_count = 0;
};

// Throws ValidationError when every class is absent.
MiouResult miou(const ConfusionMatrix& cm);

// Fraction of counted pixels on the diagonal; 0 for an empty matrix.
double pixel_accuracy(const ConfusionMatrix& cm);

// {"miou": m, "per_class": [iou or null, ...], "valid_count": n}
std::string metrics_to_json(const MiouResult& result);

}  // namespace dfm
