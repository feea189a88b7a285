// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/eval_metrics.hpp"

#include "dfm/errors.hpp"
#include "json.hpp"

namespace dfm {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes > 0 ? num_classes : 0) *
                  (num_classes > 0 ? num_classes : 0),
              0) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int gt, int pred, std::uint64_t n) {
  if (gt < 0 || gt >= num_classes_ || pred < 0 || pred >= num_classes_) {
    throw ValidationError("confusion entry (" + std::to_string(gt) + ", " +
                          std::to_string(pred) + ") outside " +
                          std::to_string(num_classes_) + " classes");
  }
  counts_[static_cast<std::size_t>(gt) * num_classes_ + pred] += n;
  valid_count_ += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw ValidationError("cannot merge confusion matrices with " +
                          std::to_string(num_classes_) + " and " +
                          std::to_string(other.num_classes_) + " classes");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  valid_count_ += other.valid_count_;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred) {
  if (gt.height != pred.height || gt.width != pred.width) {
    throw ValidationError("ground truth is " + std::to_string(gt.height) + "x" +
                          std::to_string(gt.width) + " but prediction is " +
                          std::to_string(pred.height) + "x" + std::to_string(pred.width));
  }
  // Validate everything first so a bad map leaves cm untouched.
  gt.validate(cm.num_classes());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.is_ignore(i)) continue;
    const auto p = pred.labels[i];
    if (p < 0 || p >= cm.num_classes()) {
      throw ValidationError("predicted label " + std::to_string(p) + " at pixel " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(cm.num_classes()) + ")");
    }
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_ignore(i)) cm.add(gt.labels[i], pred.labels[i]);
  }
}

MiouResult miou(const ConfusionMatrix& cm) {
  const int n = cm.num_classes();
  std::vector<std::uint64_t> row(n, 0), col(n, 0);
  for (int g = 0; g < n; ++g) {
    for (int p = 0; p < n; ++p) {
      row[g] += cm.at(g, p);
      col[p] += cm.at(g, p);
    }
  }
  MiouResult out;
  out.per_class.resize(n);
  out.valid_count = cm.valid_count();
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < n; ++k) {
    const std::uint64_t inter = cm.at(k, k);
    const std::uint64_t uni = row[k] + col[k] - inter;
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    out.per_class[k] = iou;
    sum += iou;
    ++present;
  }
  if (present == 0) throw ValidationError("mIoU undefined: every class is absent");
  out.miou = sum / present;
  return out;
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  if (cm.valid_count() == 0) return 0.0;
  std::uint64_t diag = 0;
  for (int k = 0; k < cm.num_classes(); ++k) diag += cm.at(k, k);
  return static_cast<double>(diag) / static_cast<double>(cm.valid_count());
}

std::string metrics_to_json(const MiouResult& result) {
  nlohmann::json doc;
  doc["miou"] = result.miou;
  auto per_class = nlohmann::json::array();
  for (const auto& iou : result.per_class) {
    per_class.push_back(iou ? nlohmann::json(*iou) : nlohmann::json(nullptr));
  }
  doc["per_class"] = std::move(per_class);
  doc["valid_count"] = result.valid_count;
  return doc.dump(2) + "\n";
}

}  // namespace dfm
