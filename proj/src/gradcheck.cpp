// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"
#include "dfm/neural_field.hpp"

namespace dfm {

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

SuiteResult potential_gradcheck(const PotentialParams& params, int num_classes, int dim,
                                int draws, std::uint64_t seed, double tolerance) {
  params.validate();
  if (draws < 1) throw ValidationError("gradcheck.draws must be positive");
  const auto palette = build_palette(num_classes, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.1, 1.1);
  std::uniform_int_distribution<int> label_dist(0, num_classes - 1);

  const double step = 1e-4;
  SuiteResult result{"potential/" + std::string(to_string(params.transform)), draws, 0.0,
                     tolerance};
  std::vector<double> x(dim), fd(dim);
  for (int n = 0; n < draws; ++n) {
    for (double& v : x) v = coord(rng);
    const int label = label_dist(rng);
    const auto analytic = grad_potential(x, label, palette, params);
    for (int i = 0; i < dim; ++i) {
      auto at = [&](double offset) {
        auto y = x;
        y[i] += offset;
        return potential(y, label, palette, params);
      };
      fd[i] = (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step);
    }
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, fd));
  }
  return result;
}

SuiteResult neural_gradcheck(int dim, std::uint64_t seed, double tolerance) {
  PixelFieldConfig config;
  config.state_dim = dim;
  config.context_dim = 4;
  config.backbone_hidden = {5};
  config.feature_dim = 3;
  config.hidden_dim = 4;
  config.dct = {4, 3};
  PixelFieldModel model(config);
  model.init(seed);

  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<double> context(config.context_dim);
  std::vector<double> x(static_cast<std::size_t>(model.pixels_per_patch()) * dim);
  std::vector<double> upstream(x.size());
  for (double& v : context) v = unit(rng);
  for (double& v : x) v = unit(rng);
  for (double& v : upstream) v = unit(rng);

  auto loss = [&] {
    const auto out = model.forward_patch(context, x);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) sum += upstream[i] * out[i];
    return sum;
  };

  PixelFieldModel::PatchTape tape;
  model.forward_patch(context, x, &tape);
  std::vector<double> analytic(model.parameter_count(), 0.0);
  model.backward_patch(tape, upstream, analytic);

  std::vector<double> fd(analytic.size());
  auto params = model.parameters();
  const double h = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double plus = loss();
    params[k] = saved - h;
    const double minus = loss();
    params[k] = saved;
    fd[k] = (plus - minus) / (2.0 * h);
  }
  return {"neural_field/full_chain", static_cast<int>(params.size()),
          relative_error(analytic, fd), tolerance};
}

std::vector<SuiteResult> run_gradcheck(const PotentialParams& base, int num_classes, int dim,
                                       int draws, std::uint64_t seed) {
  base.validate();
  std::vector<SuiteResult> suites;
  for (auto kind : {TransformKind::kNegLog, TransformKind::kNegSqrt, TransformKind::kNegIdentity}) {
    PotentialParams p = base;
    p.transform = kind;
    // Clipping makes the gradient non-conservative; check the raw field.
    p.clip_norm = 0.0;
    suites.push_back(potential_gradcheck(p, num_classes, dim, draws, seed));
  }
  suites.push_back(neural_gradcheck(dim, seed));
  return suites;
}

std::string gradcheck_report(const std::vector<SuiteResult>& suites) {
  CsvTable table({"suite", "checks", "max_rel_error", "tolerance", "status"});
  for (const auto& s : suites) {
    table.add_row({s.name, std::to_string(s.checks), format_double(s.max_rel_error),
                   format_double(s.tolerance), s.passed() ? "pass" : "fail"});
  }
  return table.str();
}

}  // namespace dfm
