// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfm/centroid_codec.hpp"
#include "dfm/potential_field.hpp"

namespace dfm {

// Writes v(x, t) into `v`, which has the same length as `x`.
using VelocityField =
    std::function<void(std::span<const double> x, double t, std::span<double> v)>;

struct Trajectory {
  std::vector<double> times;               // steps + 1 entries, 0 .. 1
  std::vector<std::vector<double>> states;  // one per time
  int step_count = 0;
  // Minimum Euclidean distance to each centroid over all recorded states.
  // Empty unless a palette was supplied.
  std::vector<double> min_dist_per_centroid;
};

// Uniform-grid explicit Euler on [0, 1]. Throws NumericalError naming (t, x)
// if the field returns a non-finite value.
Trajectory euler_integrate(const VelocityField& field, std::span<const double> x0, int steps);

// Same, treating the state as a point in the palette space and tracking the
// closest approach to every centroid.
Trajectory euler_integrate(const VelocityField& field, std::span<const double> x0, int steps,
                           const CentroidPalette& palette);

// Endpoint only; no intermediate states are stored.
std::vector<double> euler_endpoint(const VelocityField& field, std::span<const double> x0,
                                   int steps);

// {"times": [...], "states": [[...]], "meta": {"steps": S, "mode": mode}}
std::string trajectory_to_json(const Trajectory& trajectory, std::string_view mode);

enum class OracleMode { kVanilla, kReshaped };

std::string_view to_string(OracleMode mode);

// Idealized velocity field pulling a point straight to one centroid, with an
// optional potential correction.
struct OracleField {
  CentroidPalette palette;
  int target_label = 0;
  OracleMode mode = OracleMode::kVanilla;
  PotentialParams potential;
  double t_clip = 1e-3;  // 1/(1 - t) is frozen at 1/t_clip for t > 1 - t_clip
};

// vanilla:  (mu_target - x) / (1 - t)
// reshaped: vanilla - grad Phi(x), the potential evaluated with x_hat = x.
std::vector<double> oracle_velocity(const OracleField& field, std::span<const double> x,
                                    double t);

VelocityField as_velocity_field(const OracleField& field);

struct TraversalRow {
  int start_id = 0;
  int competitor = 0;
  double vanilla_min_dist = 0.0;
  double reshaped_min_dist = 0.0;
  int vanilla_label = 0;   // decoded endpoint label
  int reshaped_label = 0;
  double deflection() const { return reshaped_min_dist - vanilla_min_dist; }
};

// Integrates both oracle modes from every start and reports, per non-target
// centroid, the closest approach along each path plus the decoded endpoints.
std::vector<TraversalRow> traversal_report(const CentroidPalette& palette, int target_label,
                                           const std::vector<std::vector<double>>& starts,
                                           int steps, const PotentialParams& potential);

// start_id,competitor,vanilla_min_dist,reshaped_min_dist,deflection,vanilla_label,reshaped_label
std::string traversal_to_csv(const std::vector<TraversalRow>& rows);

// Standard 2D fixture: target (1, 0), competitor (0, 0.05) sitting 0.05 off the
// chords from every start point to the target.
struct TraversalFixture {
  CentroidPalette palette;
  int target_label = 0;
  std::vector<std::vector<double>> starts;
};
TraversalFixture default_traversal_fixture();

// 1D fixture with centroids {-1, +1}.
CentroidPalette two_centroid_fixture();

// Norm profile along the segment from mu_label toward its nearest competitor,
// at `count` radii log-spaced from 1e-3 to half the inter-centroid distance.
std::vector<ProfileRow> gradient_profile(const CentroidPalette& palette, int label,
                                         const PotentialParams& params, int count);

// Runs gradient_profile and writes the CSV to `path`.
void gradient_profile_cli(const CentroidPalette& palette, int label,
                          const PotentialParams& params, int count, const std::string& path);

}  // namespace dfm
