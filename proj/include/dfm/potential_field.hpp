// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfm/centroid_codec.hpp"

namespace dfm {

// Warping applied to squared distances before the softmax.
enum class TransformKind { kNegLog, kNegSqrt, kNegIdentity };

std::string_view to_string(TransformKind kind);
TransformKind parse_transform(std::string_view name);

struct PotentialParams {
  double tau = 1.0;
  double epsilon = 1e-6;
  TransformKind transform = TransformKind::kNegLog;
  // When positive, grad_potential rescales its result to at most this norm.
  double clip_norm = 0.0;

  // Throws ValidationError unless tau > 0, epsilon > 0 and clip_norm >= 0.
  void validate() const;
};

struct AssignResult {
  std::vector<double> probs;      // softmax over logits
  std::vector<double> distances;  // squared distances to every centroid
  std::vector<double> logits;     // transform(d_k) / tau
};

double transform(double dist, const PotentialParams& params);
double transform_derivative(double dist, const PotentialParams& params);

AssignResult soft_assign(std::span<const double> x_hat, const CentroidPalette& palette,
                         const PotentialParams& params);

// Cross-entropy of the soft assignment against the one-hot label: -log p_label.
double potential(std::span<const double> x_hat, int label, const CentroidPalette& palette,
                 const PotentialParams& params);

// Analytic gradient of potential() with respect to x_hat:
//
//   grad = (2 / tau) * sum_k (p_k - y_k) * T'(d_k) * (x_hat - mu_k)
//
// which for T = -log(d + eps) is (2 / tau) sum_k (y_k - p_k)(x_hat - mu_k)/(d_k + eps).
std::vector<double> grad_potential(std::span<const double> x_hat, int label,
                                   const CentroidPalette& palette,
                                   const PotentialParams& params);

// Allocation-free variant; `out` must have palette.dim() entries.
void grad_potential(std::span<const double> x_hat, int label, const CentroidPalette& palette,
                    const PotentialParams& params, std::span<double> out);

struct ProfileRow {
  double r = 0.0;
  double vanilla_norm = 0.0;
  double reshaped_norm = 0.0;
};

// Gradient norms at mu_label + r * direction. The vanilla column is the norm of
// the flow-matching gradient 2 (x_hat - mu_label); the reshaped column is
// |grad_potential|. Rows follow the order of `radii`.
std::vector<ProfileRow> correction_norm_profile(const CentroidPalette& palette, int label,
                                                std::span<const double> direction,
                                                std::span<const double> radii,
                                                const PotentialParams& params);

// CSV with header r,vanilla_norm,reshaped_norm.
std::string profile_to_csv(const std::vector<ProfileRow>& rows);

}  // namespace dfm
