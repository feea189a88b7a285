// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "dfm/centroid_codec.hpp"
#include "dfm/potential_field.hpp"

namespace dfm {

// Target construction: plain flow matching, v - grad Phi, or v - t * grad Phi.
enum class ReshapeMode { kVanilla, kStatic, kAnnealing };

// What the network outputs: the velocity itself or the clean endpoint x_1.
enum class Prediction { kVelocity, kEndpoint };

std::string_view to_string(ReshapeMode mode);
std::string_view to_string(Prediction prediction);
ReshapeMode parse_reshape_mode(std::string_view name);  // vanilla|static|annealing
Prediction parse_prediction(std::string_view name);     // v_pred|x_pred

struct ReshapeConfig {
  ReshapeMode mode = ReshapeMode::kStatic;
  Prediction prediction = Prediction::kVelocity;
  PotentialParams potential;
  double t_clip = 1e-3;

  void validate() const;
};

// A regression target that must be treated as a constant by the optimizer.
//
// Only masked_loss consumes targets, and it only accepts this type, so every
// target goes through an explicit detach point. The values are immutable
// after construction.
class DetachedTarget {
 public:
  explicit DetachedTarget(std::vector<double> values) : values_(std::move(values)) {}

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

inline DetachedTarget stop_gradient(std::vector<double> values) {
  return DetachedTarget(std::move(values));
}

// (1 - t) x0 + t x1.
std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1,
                                double t);

// x1 - x0.
std::vector<double> gt_velocity(std::span<const double> x0, std::span<const double> x1);

// x_t + (1 - t) v.
std::vector<double> estimate_x1(std::span<const double> xt, std::span<const double> v,
                                double t, double t_clip = 1e-3);

// (x_hat - x_t) / max(1 - t, t_clip).
std::vector<double> v_from_xpred(std::span<const double> x_hat, std::span<const double> xt,
                                 double t, double t_clip = 1e-3);

// Reshaped velocity target for one element at time t. x_hat is the current
// endpoint estimate and is read as a constant.
DetachedTarget reshape_target(std::span<const double> v_gt, std::span<const double> x_hat,
                              int label, const CentroidPalette& palette,
                              const ReshapeConfig& cfg, double t);

// Batched form over n elements of palette.dim() values each. Elements with
// valid == 0 keep v_gt (they are masked out of the loss anyway).
DetachedTarget reshape_targets(std::span<const double> v_gt, std::span<const double> x_hat,
                               std::span<const std::int32_t> labels,
                               std::span<const std::uint8_t> valid,
                               std::span<const double> times, const CentroidPalette& palette,
                               const ReshapeConfig& cfg);

struct LossResult {
  double loss = 0.0;
  // v_pred - target, zero on invalid elements.
  std::vector<double> residual;
  std::size_t valid_count = 0;
};

// Mean over valid elements of |v_pred - target|^2. `valid` has one entry per
// element of `dim` values. d loss / d v_pred = 2 * residual / valid_count.
LossResult masked_loss(std::span<const double> v_pred, const DetachedTarget& target,
                       std::span<const std::uint8_t> valid, int dim);

}  // namespace dfm
