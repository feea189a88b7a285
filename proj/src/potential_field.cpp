// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/potential_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"

namespace dfm {
namespace {

// Floor inside the square-root derivative so d = 0 stays finite.
constexpr double kSqrtFloor = 1e-12;

void check_point(std::span<const double> x, const CentroidPalette& palette) {
  if (palette.count() < 1) throw ValidationError("palette is empty");
  if (x.size() != static_cast<std::size_t>(palette.dim())) {
    throw ValidationError("point has " + std::to_string(x.size()) +
                          " coordinates, palette dim is " + std::to_string(palette.dim()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("non-finite coordinate in potential input");
  }
}

void check_label(int label, const CentroidPalette& palette) {
  if (label < 0 || label >= palette.count()) {
    throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(palette.count()) + ")");
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

}  // namespace

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kNegLog: return "neg_log";
    case TransformKind::kNegSqrt: return "neg_sqrt";
    case TransformKind::kNegIdentity: return "neg_identity";
  }
  return "unknown";
}

TransformKind parse_transform(std::string_view name) {
  if (name == "neg_log") return TransformKind::kNegLog;
  if (name == "neg_sqrt") return TransformKind::kNegSqrt;
  if (name == "neg_identity") return TransformKind::kNegIdentity;
  throw ValidationError("unknown transform '" + std::string(name) +
                        "' (expected neg_log, neg_sqrt or neg_identity)");
}

void PotentialParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("potential.tau must be positive, got " + format_double(tau));
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("potential.epsilon must be positive, got " + format_double(epsilon));
  }
  if (!(clip_norm >= 0.0)) {
    throw ValidationError("potential.clip_norm must be non-negative, got " +
                          format_double(clip_norm));
  }
}

double transform(double dist, const PotentialParams& params) {
  if (dist < 0.0) throw ValidationError("negative squared distance " + format_double(dist));
  switch (params.transform) {
    case TransformKind::kNegLog: return -std::log(dist + params.epsilon);
    case TransformKind::kNegSqrt: return -std::sqrt(dist);
    case TransformKind::kNegIdentity: return -dist;
  }
  return 0.0;
}

double transform_derivative(double dist, const PotentialParams& params) {
  if (dist < 0.0) throw ValidationError("negative squared distance " + format_double(dist));
  switch (params.transform) {
    case TransformKind::kNegLog: return -1.0 / (dist + params.epsilon);
    case TransformKind::kNegSqrt: return -0.5 / std::sqrt(std::max(dist, kSqrtFloor));
    case TransformKind::kNegIdentity: return -1.0;
  }
  return 0.0;
}

AssignResult soft_assign(std::span<const double> x_hat, const CentroidPalette& palette,
                         const PotentialParams& params) {
  check_point(x_hat, palette);
  const int n = palette.count();
  AssignResult out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    out.distances[k] = squared_distance(x_hat, palette.centroid(k));
    out.logits[k] = transform(out.distances[k], params) / params.tau;
    max_logit = std::max(max_logit, out.logits[k]);
  }
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    out.probs[k] = std::exp(out.logits[k] - max_logit);
    total += out.probs[k];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

double potential(std::span<const double> x_hat, int label, const CentroidPalette& palette,
                 const PotentialParams& params) {
  check_label(label, palette);
  const auto assign = soft_assign(x_hat, palette, params);
  // log-sum-exp form keeps -log p accurate when p_label underflows.
  double max_logit = *std::max_element(assign.logits.begin(), assign.logits.end());
  double total = 0.0;
  for (double l : assign.logits) total += std::exp(l - max_logit);
  return max_logit + std::log(total) - assign.logits[label];
}

void grad_potential(std::span<const double> x_hat, int label, const CentroidPalette& palette,
                    const PotentialParams& params, std::span<double> out) {
  check_label(label, palette);
  const auto assign = soft_assign(x_hat, palette, params);
  const int dim = palette.dim();
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < palette.count(); ++k) {
    const double y = k == label ? 1.0 : 0.0;
    const double weight =
        (2.0 / params.tau) * (assign.probs[k] - y) * transform_derivative(assign.distances[k], params);
    if (weight == 0.0) continue;
    const auto mu = palette.centroid(k);
    for (int i = 0; i < dim; ++i) out[i] += weight * (x_hat[i] - mu[i]);
  }
  if (params.clip_norm > 0.0) {
    double norm2 = 0.0;
    for (double v : out) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    if (norm > params.clip_norm) {
      for (double& v : out) v *= params.clip_norm / norm;
    }
  }
}

std::vector<double> grad_potential(std::span<const double> x_hat, int label,
                                   const CentroidPalette& palette,
                                   const PotentialParams& params) {
  std::vector<double> out(palette.dim());
  grad_potential(x_hat, label, palette, params, out);
  return out;
}

std::vector<ProfileRow> correction_norm_profile(const CentroidPalette& palette, int label,
                                                std::span<const double> direction,
                                                std::span<const double> radii,
                                                const PotentialParams& params) {
  check_label(label, palette);
  params.validate();
  if (direction.size() != static_cast<std::size_t>(palette.dim())) {
    throw ValidationError("direction has wrong dimension");
  }
  double dir_norm2 = 0.0;
  for (double v : direction) dir_norm2 += v * v;
  if (std::abs(std::sqrt(dir_norm2) - 1.0) > 1e-9) {
    throw ValidationError("profile direction must be a unit vector");
  }
  const auto mu = palette.centroid(label);
  std::vector<ProfileRow> rows;
  rows.reserve(radii.size());
  std::vector<double> x(palette.dim()), grad(palette.dim());
  for (double r : radii) {
    if (r < 0.0 || !std::isfinite(r)) {
      throw ValidationError("profile radius must be non-negative, got " + format_double(r));
    }
    for (int i = 0; i < palette.dim(); ++i) x[i] = mu[i] + r * direction[i];
    grad_potential(x, label, palette, params, grad);
    double reshaped2 = 0.0;
    for (double g : grad) reshaped2 += g * g;
    // |2 (x - mu)| = 2r for a unit direction; evaluated symbolically so the
    // column is not polluted by the rounding of mu + r * direction.
    rows.push_back({r, 2.0 * r, std::sqrt(reshaped2)});
  }
  return rows;
}

std::string profile_to_csv(const std::vector<ProfileRow>& rows) {
  CsvTable table({"r", "vanilla_norm", "reshaped_norm"});
  for (const auto& row : rows) {
    table.add_row({format_double(row.r), format_double(row.vanilla_norm),
                   format_double(row.reshaped_norm)});
  }
  return table.str();
}

}  // namespace dfm
