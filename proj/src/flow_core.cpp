// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/flow_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"

namespace dfm {
namespace {

void check_same_size(std::span<const double> a, std::span<const double> b,
                     const char* what) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": shape mismatch (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("time " + format_double(t) + " outside [0, 1]");
}

// Writes the reshaped target of one element into `out`.
void reshape_one(std::span<const double> v_gt, std::span<const double> x_hat, int label,
                 const CentroidPalette& palette, const ReshapeConfig& cfg, double t,
                 std::span<double> grad_scratch, std::span<double> out) {
  std::copy(v_gt.begin(), v_gt.end(), out.begin());
  if (cfg.mode == ReshapeMode::kVanilla) return;
  grad_potential(x_hat, label, palette, cfg.potential, grad_scratch);
  // annealing: (1 - t) v + t (v - grad) = v - t * grad
  const double scale = cfg.mode == ReshapeMode::kStatic ? 1.0 : t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= scale * grad_scratch[i];
}

}  // namespace

std::string_view to_string(ReshapeMode mode) {
  switch (mode) {
    case ReshapeMode::kVanilla: return "vanilla";
    case ReshapeMode::kStatic: return "static";
    case ReshapeMode::kAnnealing: return "annealing";
  }
  return "unknown";
}

std::string_view to_string(Prediction prediction) {
  return prediction == Prediction::kVelocity ? "v_pred" : "x_pred";
}

ReshapeMode parse_reshape_mode(std::string_view name) {
  if (name == "vanilla") return ReshapeMode::kVanilla;
  if (name == "static") return ReshapeMode::kStatic;
  if (name == "annealing") return ReshapeMode::kAnnealing;
  throw ValidationError("unknown reshape mode '" + std::string(name) +
                        "' (expected vanilla, static or annealing)");
}

Prediction parse_prediction(std::string_view name) {
  if (name == "v_pred") return Prediction::kVelocity;
  if (name == "x_pred") return Prediction::kEndpoint;
  throw ValidationError("unknown prediction '" + std::string(name) +
                        "' (expected v_pred or x_pred)");
}

void ReshapeConfig::validate() const {
  potential.validate();
  if (!(t_clip > 0.0 && t_clip < 0.5)) {
    throw ValidationError("flow.t_clip must lie in (0, 0.5), got " + format_double(t_clip));
  }
}

std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1,
                                double t) {
  check_same_size(x0, x1, "interpolate");
  check_time(t);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
  return out;
}

std::vector<double> gt_velocity(std::span<const double> x0, std::span<const double> x1) {
  check_same_size(x0, x1, "gt_velocity");
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x1[i] - x0[i];
  return out;
}

std::vector<double> estimate_x1(std::span<const double> xt, std::span<const double> v,
                                double t, double /*t_clip*/) {
  check_same_size(xt, v, "estimate_x1");
  check_time(t);
  std::vector<double> out(xt.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xt[i] + (1.0 - t) * v[i];
  return out;
}

std::vector<double> v_from_xpred(std::span<const double> x_hat, std::span<const double> xt,
                                 double t, double t_clip) {
  check_same_size(x_hat, xt, "v_from_xpred");
  check_time(t);
  const double denom = std::max(1.0 - t, t_clip);
  std::vector<double> out(xt.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_hat[i] - xt[i]) / denom;
  return out;
}

DetachedTarget reshape_target(std::span<const double> v_gt, std::span<const double> x_hat,
                              int label, const CentroidPalette& palette,
                              const ReshapeConfig& cfg, double t) {
  check_same_size(v_gt, x_hat, "reshape_target");
  check_time(t);
  if (v_gt.size() != static_cast<std::size_t>(palette.dim())) {
    throw ValidationError("reshape_target: velocity has " + std::to_string(v_gt.size()) +
                          " entries, palette dim is " + std::to_string(palette.dim()));
  }
  if (label < 0 || label >= palette.count()) {
    throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(palette.count()) + ")");
  }
  std::vector<double> out(v_gt.size()), grad(v_gt.size());
  reshape_one(v_gt, x_hat, label, palette, cfg, t, grad, out);
  return DetachedTarget(std::move(out));
}

DetachedTarget reshape_targets(std::span<const double> v_gt, std::span<const double> x_hat,
                               std::span<const std::int32_t> labels,
                               std::span<const std::uint8_t> valid,
                               std::span<const double> times, const CentroidPalette& palette,
                               const ReshapeConfig& cfg) {
  check_same_size(v_gt, x_hat, "reshape_targets");
  const std::size_t dim = palette.dim();
  const std::size_t n = labels.size();
  if (v_gt.size() != n * dim || valid.size() != n || times.size() != n) {
    throw ValidationError("reshape_targets: inconsistent batch shapes");
  }
  std::vector<double> out(v_gt.size()), grad(dim);
  for (std::size_t e = 0; e < n; ++e) {
    auto dst = std::span<double>(out).subspan(e * dim, dim);
    const auto v = v_gt.subspan(e * dim, dim);
    if (!valid[e]) {
      std::copy(v.begin(), v.end(), dst.begin());
      continue;
    }
    if (labels[e] < 0 || labels[e] >= palette.count()) {
      throw ValidationError("label " + std::to_string(labels[e]) + " outside [0, " +
                            std::to_string(palette.count()) + ")");
    }
    reshape_one(v, x_hat.subspan(e * dim, dim), labels[e], palette, cfg, times[e], grad, dst);
  }
  return DetachedTarget(std::move(out));
}

LossResult masked_loss(std::span<const double> v_pred, const DetachedTarget& target,
                       std::span<const std::uint8_t> valid, int dim) {
  check_same_size(v_pred, target.values(), "masked_loss");
  if (dim < 1 || v_pred.size() != valid.size() * static_cast<std::size_t>(dim)) {
    throw ValidationError("masked_loss: mask has " + std::to_string(valid.size()) +
                          " entries for " + std::to_string(v_pred.size()) +
                          " values of dim " + std::to_string(dim));
  }
  LossResult out;
  out.residual.assign(v_pred.size(), 0.0);
  const auto tv = target.values();
  double sum = 0.0;
  // Sequential accumulation keeps the result bit-reproducible.
  for (std::size_t e = 0; e < valid.size(); ++e) {
    if (!valid[e]) continue;
    ++out.valid_count;
    for (int i = 0; i < dim; ++i) {
      const std::size_t at = e * dim + i;
      const double r = v_pred[at] - tv[at];
      out.residual[at] = r;
      sum += r * r;
    }
  }
  out.loss = out.valid_count ? sum / static_cast<double>(out.valid_count) : 0.0;
  return out;
}

}  // namespace dfm
