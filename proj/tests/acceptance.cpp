// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

// acceptance <n>: runs one acceptance criterion, prints a single
// "PASS|FAIL criterion n: ..." line and exits nonzero on failure.

#include <cfloat>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "dfm/centroid_codec.hpp"
#include "dfm/eval_metrics.hpp"
#include "dfm/flow_core.hpp"
#include "dfm/gradcheck.hpp"
#include "dfm/neural_field.hpp"
#include "dfm/ode_sampler.hpp"
#include "dfm/potential_field.hpp"
#include "dfm/toy_lab.hpp"
#include "oracles.hpp"

namespace {

using namespace dfm;
using Vec = std::vector<double>;

struct Verdict {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

ToyTask criterion_task(std::uint64_t seed) {
  return make_task(TaskKind::kVoronoi, 16, 64, 64, seed);
}

TrainConfig criterion_config(ReshapeMode mode, TransformKind transform, std::uint64_t seed) {
  TrainConfig c;
  c.model = default_model_config(3);
  c.objective.mode = mode;
  c.objective.potential.transform = transform;
  c.seed = seed;
  return c;
}

std::string fmt_iter(const std::optional<double>& v) {
  return v ? fmt("%.0f", *v) : std::string("never");
}

Verdict gradient_correctness() {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  for (auto t : {TransformKind::kNegLog, TransformKind::kNegSqrt, TransformKind::kNegIdentity}) {
    PotentialParams p;
    p.transform = t;
    const auto r = potential_gradcheck(p, 150, 3, 1000, 7);
    v.check(r.checks == 1000 && r.passed(),
            fmt("%s max rel err %.2e over %d draws", std::string(to_string(t)).c_str(),
                r.max_rel_error, r.checks));
  }
  const double secs = seconds_since(start);
  v.check(secs < 5.0, fmt("%.2f s", secs));
  return v;
}

Verdict gradient_vanishing() {
  Verdict v;
  const auto palette = two_centroid_fixture();
  const Vec direction{-1.0};
  const Vec radii{0.01, 0.3};
  const auto rows = correction_norm_profile(palette, 1, direction, radii, PotentialParams{});
  for (const auto& r : rows) {
    v.check(r.vanilla_norm == 2.0 * r.r, fmt("vanilla(%g) = %.17g", r.r, r.vanilla_norm));
  }
  const double ratio_small = rows[0].reshaped_norm / rows[0].vanilla_norm;
  const double ratio_large = rows[1].reshaped_norm / rows[1].vanilla_norm;
  v.check(ratio_small >= 10.0, fmt("ratio at r=0.01 %.4f >= 10", ratio_small));
  v.check(ratio_small > ratio_large,
          fmt("ratio(0.01) %.4f > ratio(0.3) %.4f", ratio_small, ratio_large));
  return v;
}

Verdict trajectory_deflection() {
  Verdict v;
  const auto fx = default_traversal_fixture();
  const auto rows = traversal_report(fx.palette, fx.target_label, fx.starts, 10, PotentialParams{});
  double min_defl = INFINITY;
  bool labels_ok = true;
  for (const auto& r : rows) {
    min_defl = std::min(min_defl, r.deflection());
    labels_ok = labels_ok && r.reshaped_label == fx.target_label;
  }
  v.check(rows.size() == fx.starts.size() && min_defl > 0.0,
          fmt("%zu starts, min deflection %.4f", rows.size(), min_defl));
  v.check(labels_ok, "reshaped endpoints decode to target");
  return v;
}

Verdict convergence_speedup() {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::optional<int>> vanilla, reshaped;
  for (auto seed : kSeeds) {
    const auto task = criterion_task(seed);
    for (auto mode : {ReshapeMode::kVanilla, ReshapeMode::kStatic}) {
      auto cfg = criterion_config(mode, TransformKind::kNegLog, seed);
      cfg.stop_at_threshold = true;
      const auto it = train(task, cfg).record.iterations_to_threshold;
      (mode == ReshapeMode::kVanilla ? vanilla : reshaped).push_back(it);
    }
  }
  const auto mv = censored_median(vanilla), ms = censored_median(reshaped);
  const bool ok = ms && (!mv || *ms <= 0.5 * *mv);
  v.check(ok, fmt("median iterations to 90%% static %s vs vanilla %s", fmt_iter(ms).c_str(),
                  fmt_iter(mv).c_str()));
  const double secs = seconds_since(start);
  v.check(secs < 600.0, fmt("%.0f s", secs));
  return v;
}

Verdict ablation_orderings() {
  Verdict v;
  std::vector<double> static_miou, anneal_miou;
  std::vector<std::optional<int>> iters_log, iters_sqrt, iters_id;
  for (auto seed : kSeeds) {
    const auto task = criterion_task(seed);
    const auto st = train(task, criterion_config(ReshapeMode::kStatic, TransformKind::kNegLog, seed));
    static_miou.push_back(st.record.rows.back().miou);
    iters_log.push_back(st.record.iterations_to_threshold);
    const auto an =
        train(task, criterion_config(ReshapeMode::kAnnealing, TransformKind::kNegLog, seed));
    anneal_miou.push_back(an.record.rows.back().miou);
    for (auto t : {TransformKind::kNegSqrt, TransformKind::kNegIdentity}) {
      auto cfg = criterion_config(ReshapeMode::kStatic, t, seed);
      cfg.stop_at_threshold = true;
      const auto it = train(task, cfg).record.iterations_to_threshold;
      (t == TransformKind::kNegSqrt ? iters_sqrt : iters_id).push_back(it);
    }
  }
  const double ms = median(static_miou), ma = median(anneal_miou);
  v.check(ms >= ma, fmt("median final mIoU static %.4f >= annealing %.4f", ms, ma));
  const auto il = censored_median(iters_log), is = censored_median(iters_sqrt),
             ii = censored_median(iters_id);
  auto no_later = [](const std::optional<double>& a, const std::optional<double>& b) {
    return !b || (a && *a <= *b);
  };
  v.check(no_later(il, is) && no_later(il, ii),
          fmt("median iterations to 90%% neg_log %s neg_sqrt %s neg_identity %s",
              fmt_iter(il).c_str(), fmt_iter(is).c_str(), fmt_iter(ii).c_str()));
  return v;
}

Verdict stop_gradient_contract() {
  Verdict v;
  const auto task = make_task(TaskKind::kVoronoi, 2, 8, 8, 3);
  for (auto mode : {ReshapeMode::kStatic, ReshapeMode::kAnnealing}) {
    TrainConfig cfg;
    cfg.model = tiny_model_config(3);
    cfg.objective.mode = mode;
    const auto r = stop_gradient_audit(task, cfg);
    v.check(r.fixed_target_rel_error <= 1e-4,
            fmt("%s fixed-target rel err %.2e", std::string(to_string(mode)).c_str(),
                r.fixed_target_rel_error));
    v.check(r.max_correction_norm > 0.0 && r.varying_target_rel_error > 1e-3,
            fmt("%s vary-target rel err %.2e (|grad Phi| up to %.3f)",
                std::string(to_string(mode)).c_str(), r.varying_target_rel_error, r.max_correction_norm));
  }
  return v;
}

Verdict algebraic_identities() {
  Verdict v;
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.0, 0.99);
  double worst_x1 = 0.0, worst_euler = 0.0, worst_scale = 0.0;
  bool euler_ok = true;
  for (int n = 0; n < 1000; ++n) {
    Vec x0(6), x1(6), vel(6);
    for (auto* vec : {&x0, &x1, &vel}) {
      for (double& e : *vec) e = u(rng);
    }
    const double t = ut(rng);
    const auto xt = interpolate(x0, x1, t);
    const auto gt = gt_velocity(x0, x1);
    const auto est = estimate_x1(xt, gt, t);
    for (int i = 0; i < 6; ++i) worst_x1 = std::max(worst_x1, std::abs(est[i] - x1[i]));

    const VelocityField constant = [&](std::span<const double>, double, std::span<double> out) {
      std::copy(gt.begin(), gt.end(), out.begin());
    };
    const auto end = euler_endpoint(constant, x0, 1);
    for (int i = 0; i < 6; ++i) {
      const double err = std::abs(end[i] - x1[i]);
      worst_euler = std::max(worst_euler, err);
      euler_ok = euler_ok && err <= 4 * DBL_EPSILON * std::max(1.0, std::abs(x1[i]));
    }

    const std::vector<std::uint8_t> valid(2, 1);
    const double loss = masked_loss(vel, stop_gradient(gt), valid, 3).loss;
    const auto xh = estimate_x1(xt, vel, t);
    double dist = 0.0;
    for (int i = 0; i < 6; ++i) dist += (xh[i] - x1[i]) * (xh[i] - x1[i]);
    const double expect = dist / 2.0 / ((1 - t) * (1 - t));
    worst_scale = std::max(worst_scale, std::abs(loss - expect) / expect);
  }
  v.check(worst_x1 <= 1e-12, fmt("estimate_x1 max err %.2e", worst_x1));
  v.check(euler_ok, fmt("1-step Euler max err %.2e", worst_euler));
  v.check(worst_scale <= 1e-10, fmt("loss-scale rel err %.2e", worst_scale));
  return v;
}

Verdict centroid_codec() {
  Verdict v;
  const auto a = build_palette(171, 3), b = build_palette(171, 3);
  v.check(a.centroids() == b.centroids(), "bit-reproducible");
  std::set<std::vector<double>> distinct;
  for (int k = 0; k < a.count(); ++k) {
    distinct.insert(Vec(a.centroid(k).begin(), a.centroid(k).end()));
  }
  v.check(distinct.size() == 171u, fmt("%zu distinct centroids", distinct.size()));
  bool fills = true;
  for (int i = 0; i < 3; ++i) {
    double lo = INFINITY, hi = -INFINITY;
    for (int k = 0; k < a.count(); ++k) {
      lo = std::min(lo, a.centroid(k)[i]);
      hi = std::max(hi, a.centroid(k)[i]);
    }
    fills = fills && lo == -1.0 && hi == 1.0;
  }
  v.check(fills, "every dimension spans [-1, 1]");

  constexpr int kPoints = 100000;
  PixelField field(1, kPoints, 3);
  std::mt19937_64 rng(171);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (double& x : field.values) x = u(rng);
  const auto decoded = decode_nearest(field, a);
  int agree = 0;
  for (int p = 0; p < kPoints; ++p) {
    if (decoded.labels.labels[p] == oracle::argmin_row(field.pixel(p), a.centroids(), 3)) ++agree;
  }
  v.check(agree == kPoints, fmt("decode agrees with argmin on %d/%d points", agree, kPoints));
  return v;
}

Verdict metrics_oracle() {
  Verdict v;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> lab(0, 6), coin(0, 7);
  int agree = 0;
  for (int n = 0; n < 1000; ++n) {
    LabelMap gt(8, 8), pr(8, 8);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.labels[i] = coin(rng) == 0 ? 255 : lab(rng);
      pr.labels[i] = lab(rng);
    }
    ConfusionMatrix cm(10);  // classes 7..9 never occur
    accumulate(cm, gt, pr);
    if (miou(cm).miou == oracle::set_miou(gt.labels, pr.labels, 10, 255)) ++agree;
  }
  v.check(agree == 1000, fmt("exact agreement on %d/1000 maps", agree));
  return v;
}

Verdict neural_field_checks() {
  Verdict v;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PatchFieldShape shape{8, 16, 64 + 3, 3};
  double worst_row = 0.0;
  for (int n = 0; n < 100; ++n) {
    Vec feat(8), gen(shape.generator_params());
    for (double& x : feat) x = u(rng);
    for (double& x : gen) x = u(rng);
    const auto f = generate_weights(feat, gen, shape);
    auto rows = [&](const Vec& m, int count, int cols) {
      for (int r = 0; r < count; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += m[r * cols + c] * m[r * cols + c];
        worst_row = std::max(worst_row, std::abs(std::sqrt(s) - 1.0));
      }
    };
    rows(f.w1, shape.hidden_dim, shape.in_dim);
    rows(f.w2, shape.out_dim, shape.hidden_dim);
  }
  v.check(worst_row <= 1e-6, fmt("row norm max dev %.1e", worst_row));

  double worst_fd = 0.0;
  for (int dim : {1, 3}) worst_fd = std::max(worst_fd, neural_gradcheck(dim, 5).max_rel_error);
  v.check(worst_fd <= 1e-4, fmt("full-chain FD rel err %.1e", worst_fd));

  PixelFieldConfig cfg = default_model_config(3);
  PixelFieldModel model(cfg);
  model.init(1);
  const Vec ctx{0.1, -0.2, 0.3, 0.5};
  Vec x(64 * 3);
  for (double& e : x) e = u(rng);
  v.check(model.forward_patch(ctx, x).size() == x.size(), "velocity has d entries per pixel");

  const DctConfig dct{8, 8};
  const auto table = dct_table(dct);
  bool deterministic = table == dct_table(dct);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const auto row = dct_encode(i, j, dct);
      deterministic = deterministic && std::equal(row.begin(), row.end(), table.begin() + (i * 8 + j) * 64);
    }
  }
  v.check(deterministic, "DCT deterministic");
  double worst_orth = 0.0;
  auto w = [](int col) {
    return (col / 8 == 0 ? 1.0 / std::numbers::sqrt2 : 1.0) *
           (col % 8 == 0 ? 1.0 / std::numbers::sqrt2 : 1.0);
  };
  for (int a = 0; a < 64; ++a) {
    for (int b = 0; b < 64; ++b) {
      double g = 0.0;
      for (int r = 0; r < 64; ++r) g += table[r * 64 + a] * table[r * 64 + b];
      g *= w(a) * w(b) / 16.0;
      worst_orth = std::max(worst_orth, std::abs(g - (a == b ? 1.0 : 0.0)));
    }
  }
  v.check(worst_orth <= 1e-12, fmt("DCT orthogonality dev %.1e", worst_orth));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria{
      gradient_correctness, gradient_vanishing,     trajectory_deflection, convergence_speedup,
      ablation_orderings,   stop_gradient_contract, algebraic_identities,  centroid_codec,
      metrics_oracle,       neural_field_checks};
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-%zu>\n", criteria.size());
    return 2;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
    return 2;
  }
  Verdict v;
  try {
    v = criteria[n - 1]();
  } catch (const std::exception& e) {
    v.check(false, std::string("error: ") + e.what());
  }
  std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", n, v.detail.c_str());
  return v.pass ? 0 : 1;
}
