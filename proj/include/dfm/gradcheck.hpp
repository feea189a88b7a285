// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfm/potential_field.hpp"

namespace dfm {

struct SuiteResult {
  std::string name;
  int checks = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

// Norm-wise relative error |a - b| / max(|a|, |b|); 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

// Fourth-order central differences of Phi (step 1e-4) against grad_potential at `draws`
// random (x_hat, label) pairs, x_hat uniform in [-1.1, 1.1]^dim.
SuiteResult potential_gradcheck(const PotentialParams& params, int num_classes, int dim,
                                int draws, std::uint64_t seed, double tolerance = 1e-5);

// Full generator chain of a small pixel field model: loss = <u, v(params)>
// for a random upstream u, analytic backward vs central differences.
SuiteResult neural_gradcheck(int dim, std::uint64_t seed, double tolerance = 1e-4);

// Every suite the CLI runs: one potential suite per transform, then the
// neural field suite.
std::vector<SuiteResult> run_gradcheck(const PotentialParams& base, int num_classes, int dim,
                                       int draws, std::uint64_t seed);

std::string gradcheck_report(const std::vector<SuiteResult>& suites);

}  // namespace dfm
