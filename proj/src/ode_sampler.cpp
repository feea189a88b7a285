// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/ode_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"
#include "json.hpp"

namespace dfm {
namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

void check_finite(std::span<const double> v, std::span<const double> x, double t) {
  for (double value : v) {
    if (std::isfinite(value)) continue;
    std::ostringstream msg;
    msg << "non-finite velocity at t=" << format_double(t) << ", x=(";
    const std::size_t shown = std::min<std::size_t>(x.size(), 8);
    for (std::size_t i = 0; i < shown; ++i) msg << (i ? ", " : "") << format_double(x[i]);
    if (shown < x.size()) msg << ", ... " << x.size() << " values";
    msg << ")";
    throw NumericalError(msg.str());
  }
}

// Shared Euler loop. `visit` sees every state including the initial one.
template <typename Visit>
std::vector<double> integrate(const VelocityField& field, std::span<const double> x0, int steps,
                              Visit&& visit) {
  if (steps < 1) throw ValidationError("step count must be at least 1, got " + std::to_string(steps));
  const double dt = 1.0 / steps;
  std::vector<double> x(x0.begin(), x0.end()), v(x0.size());
  visit(0.0, x);
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    field(x, t, v);
    check_finite(v, x, t);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += dt * v[j];
    visit(static_cast<double>(i + 1) / steps, x);
  }
  return x;
}

}  // namespace

Trajectory euler_integrate(const VelocityField& field, std::span<const double> x0, int steps) {
  Trajectory traj;
  traj.step_count = steps;
  integrate(field, x0, steps, [&](double t, const std::vector<double>& x) {
    traj.times.push_back(t);
    traj.states.push_back(x);
  });
  return traj;
}

Trajectory euler_integrate(const VelocityField& field, std::span<const double> x0, int steps,
                           const CentroidPalette& palette) {
  if (x0.size() != static_cast<std::size_t>(palette.dim())) {
    throw ValidationError("state has " + std::to_string(x0.size()) +
                          " coordinates, palette dim is " + std::to_string(palette.dim()));
  }
  Trajectory traj;
  traj.step_count = steps;
  traj.min_dist_per_centroid.assign(palette.count(), std::numeric_limits<double>::infinity());
  integrate(field, x0, steps, [&](double t, const std::vector<double>& x) {
    traj.times.push_back(t);
    traj.states.push_back(x);
    for (int k = 0; k < palette.count(); ++k) {
      traj.min_dist_per_centroid[k] =
          std::min(traj.min_dist_per_centroid[k], distance(x, palette.centroid(k)));
    }
  });
  return traj;
}

std::vector<double> euler_endpoint(const VelocityField& field, std::span<const double> x0,
                                   int steps) {
  return integrate(field, x0, steps, [](double, const std::vector<double>&) {});
}

std::string trajectory_to_json(const Trajectory& trajectory, std::string_view mode) {
  nlohmann::json doc;
  doc["times"] = trajectory.times;
  doc["states"] = trajectory.states;
  doc["meta"] = {{"steps", trajectory.step_count}, {"mode", std::string(mode)}};
  if (!trajectory.min_dist_per_centroid.empty()) {
    doc["min_dist_per_centroid"] = trajectory.min_dist_per_centroid;
  }
  return doc.dump() + "\n";
}

std::string_view to_string(OracleMode mode) {
  return mode == OracleMode::kVanilla ? "vanilla" : "reshaped";
}

std::vector<double> oracle_velocity(const OracleField& field, std::span<const double> x,
                                    double t) {
  const auto& palette = field.palette;
  if (field.target_label < 0 || field.target_label >= palette.count()) {
    throw ValidationError("oracle target label " + std::to_string(field.target_label) +
                          " outside [0, " + std::to_string(palette.count()) + ")");
  }
  if (x.size() != static_cast<std::size_t>(palette.dim())) {
    throw ValidationError("oracle state has wrong dimension");
  }
  const double remaining = std::max(1.0 - t, field.t_clip);
  const auto mu = palette.centroid(field.target_label);
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = (mu[i] - x[i]) / remaining;
  if (field.mode == OracleMode::kReshaped) {
    const auto grad = grad_potential(x, field.target_label, palette, field.potential);
    for (std::size_t i = 0; i < x.size(); ++i) v[i] -= grad[i];
  }
  return v;
}

VelocityField as_velocity_field(const OracleField& field) {
  return [field](std::span<const double> x, double t, std::span<double> v) {
    const auto out = oracle_velocity(field, x, t);
    std::copy(out.begin(), out.end(), v.begin());
  };
}

std::vector<TraversalRow> traversal_report(const CentroidPalette& palette, int target_label,
                                           const std::vector<std::vector<double>>& starts,
                                           int steps, const PotentialParams& potential) {
  potential.validate();
  OracleField vanilla{palette, target_label, OracleMode::kVanilla, potential};
  OracleField reshaped{palette, target_label, OracleMode::kReshaped, potential};
  std::vector<TraversalRow> rows;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    for (double v : starts[s]) {
      if (!std::isfinite(v)) throw ValidationError("traversal start " + std::to_string(s) + " is not finite");
    }
    const auto a = euler_integrate(as_velocity_field(vanilla), starts[s], steps, palette);
    const auto b = euler_integrate(as_velocity_field(reshaped), starts[s], steps, palette);
    const int a_label = nearest_centroid(a.states.back(), palette);
    const int b_label = nearest_centroid(b.states.back(), palette);
    for (int k = 0; k < palette.count(); ++k) {
      if (k == target_label) continue;
      rows.push_back({static_cast<int>(s), k, a.min_dist_per_centroid[k],
                      b.min_dist_per_centroid[k], a_label, b_label});
    }
  }
  return rows;
}

std::string traversal_to_csv(const std::vector<TraversalRow>& rows) {
  CsvTable table({"start_id", "competitor", "vanilla_min_dist", "reshaped_min_dist",
                  "deflection", "vanilla_label", "reshaped_label"});
  for (const auto& row : rows) {
    table.add_row({std::to_string(row.start_id), std::to_string(row.competitor),
                   format_double(row.vanilla_min_dist), format_double(row.reshaped_min_dist),
                   format_double(row.deflection()), std::to_string(row.vanilla_label),
                   std::to_string(row.reshaped_label)});
  }
  return table.str();
}

TraversalFixture default_traversal_fixture() {
  TraversalFixture fx;
  fx.palette = CentroidPalette::from_centroids(2, {1.0, 0.0, 0.0, 0.05});
  fx.target_label = 0;
  // Every chord to (1, 0) runs along y = 0 and passes 0.05 below the competitor.
  fx.starts = {{-1.0, 0.0}, {-0.75, 0.0}, {-0.5, 0.0}, {-1.5, 0.0}, {-0.25, 0.0}};
  return fx;
}

CentroidPalette two_centroid_fixture() {
  return CentroidPalette::from_centroids(1, {-1.0, 1.0});
}

std::vector<ProfileRow> gradient_profile(const CentroidPalette& palette, int label,
                                         const PotentialParams& params, int count) {
  if (palette.count() < 2) throw ValidationError("gradient profile needs at least two centroids");
  if (label < 0 || label >= palette.count()) {
    throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(palette.count()) + ")");
  }
  if (count < 1) throw ValidationError("profile radius count must be positive");
  const auto mu = palette.centroid(label);
  int nearest = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < palette.count(); ++k) {
    if (k == label) continue;
    const double d = distance(mu, palette.centroid(k));
    if (d < best) {
      best = d;
      nearest = k;
    }
  }
  const double lo = 1e-3, hi = 0.5 * best;
  if (!(hi > lo)) throw ValidationError("nearest competitor closer than 2e-3; cannot profile");
  std::vector<double> direction(palette.dim());
  const auto other = palette.centroid(nearest);
  for (int i = 0; i < palette.dim(); ++i) direction[i] = (other[i] - mu[i]) / best;
  std::vector<double> radii(count);
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    radii[i] = lo * std::pow(hi / lo, frac);
  }
  return correction_norm_profile(palette, label, direction, radii, params);
}

void gradient_profile_cli(const CentroidPalette& palette, int label,
                          const PotentialParams& params, int count, const std::string& path) {
  write_file(path, profile_to_csv(gradient_profile(palette, label, params, count)));
}

}  // namespace dfm
