// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <type_traits>

#include "dfm/errors.hpp"
#include "dfm/flow_core.hpp"

namespace dfm {
namespace {

using Vec = std::vector<double>;

// masked_loss must not accept a raw vector as its target.
static_assert(!std::is_invocable_v<decltype(masked_loss), std::span<const double>, Vec,
                                   std::span<const std::uint8_t>, int>);
static_assert(!std::is_convertible_v<Vec, DetachedTarget>);

ReshapeConfig mode(ReshapeMode m) {
  ReshapeConfig c;
  c.mode = m;
  return c;
}

TEST(Interpolate, Endpoints) {
  const Vec a{0.3, -1.0}, b{2.0, 0.5};
  EXPECT_EQ(interpolate(a, b, 0.0), a);
  EXPECT_EQ(interpolate(a, b, 1.0), b);
  EXPECT_EQ(interpolate(Vec{0, 0}, Vec{2, -2}, 0.5), (Vec{1, -1}));
  EXPECT_THROW(interpolate(a, Vec{1.0}, 0.5), ValidationError);
  EXPECT_THROW(interpolate(a, b, 1.5), ValidationError);
}

TEST(GtVelocity, Values) {
  EXPECT_EQ(gt_velocity(Vec{1, 2}, Vec{1, 2}), (Vec{0, 0}));
  EXPECT_EQ(gt_velocity(Vec{0, 0}, Vec{2, -2}), (Vec{2, -2}));
  EXPECT_THROW(gt_velocity(Vec{0}, Vec{1, 2}), ValidationError);
}

TEST(GtVelocity, FiniteDifferenceOfPathOnDyadicGrid) {
  // Dyadic values keep the difference quotient exact.
  const Vec a{0.25, -0.5}, b{1.5, 0.75};
  const double t = 0.25, h = 0.125;
  const auto p = interpolate(a, b, t + h), q = interpolate(a, b, t);
  const auto v = gt_velocity(a, b);
  for (int i = 0; i < 2; ++i) EXPECT_EQ((p[i] - q[i]) / h, v[i]);
}

TEST(EstimateX1, Values) {
  EXPECT_EQ(estimate_x1(Vec{1, 0}, Vec{2, 2}, 0.5), (Vec{2, 1}));
  EXPECT_EQ(estimate_x1(Vec{1, 0}, Vec{2, 2}, 1.0), (Vec{1, 0}));
}

TEST(EstimateX1, PathConsistency) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const Vec a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    const double t = ut(rng);
    const auto x = estimate_x1(interpolate(a, b, t), gt_velocity(a, b), t);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], b[i], 1e-12);
  }
}

TEST(VFromXpred, Values) {
  EXPECT_EQ(v_from_xpred(Vec{0.4}, Vec{0.4}, 0.3), (Vec{0.0}));
  EXPECT_EQ(v_from_xpred(Vec{1.0}, Vec{0.5}, 1.0, 1e-3), (Vec{0.5 / 1e-3}));
  const Vec a{0.1, 0.7}, b{-0.9, 0.2};
  const auto v = v_from_xpred(b, interpolate(a, b, 0.4), 0.4);
  const auto g = gt_velocity(a, b);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(v[i], g[i], 1e-14);
}

TEST(Reshape, SingleCentroidLeavesTarget) {
  const auto p = CentroidPalette::from_centroids(1, {0.5});
  for (auto m : {ReshapeMode::kVanilla, ReshapeMode::kStatic, ReshapeMode::kAnnealing}) {
    const auto v = reshape_target(Vec{0.3}, Vec{-0.2}, 0, p, mode(m), 0.6);
    EXPECT_EQ(v.values()[0], 0.3);
  }
}

TEST(Reshape, MidpointStatic) {
  const auto p = CentroidPalette::from_centroids(1, {-1.0, 1.0});
  const auto v = reshape_target(Vec{1.0}, Vec{0.0}, 0, p, mode(ReshapeMode::kStatic), 0.5);
  EXPECT_NEAR(v.values()[0], 1.0 - 1.999998000001999998, 1e-14);
}

TEST(Reshape, ModeDegeneracy) {
  const auto p = build_palette(8, 3);
  const Vec v{0.2, -0.1, 0.4}, x{0.3, 0.3, -0.6};
  const auto g = grad_potential(x, 5, p, PotentialParams{});
  const auto van = reshape_target(v, x, 5, p, mode(ReshapeMode::kVanilla), 0.7);
  const auto st = reshape_target(v, x, 5, p, mode(ReshapeMode::kStatic), 0.7);
  const auto an0 = reshape_target(v, x, 5, p, mode(ReshapeMode::kAnnealing), 0.0);
  const auto an1 = reshape_target(v, x, 5, p, mode(ReshapeMode::kAnnealing), 1.0);
  const auto an = reshape_target(v, x, 5, p, mode(ReshapeMode::kAnnealing), 0.7);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(van.values()[i], v[i]);
    EXPECT_EQ(an0.values()[i], v[i]);
    EXPECT_EQ(an1.values()[i], st.values()[i]);
    EXPECT_EQ(st.values()[i], v[i] - g[i]);
    EXPECT_NEAR(an.values()[i], 0.3 * v[i] + 0.7 * (v[i] - g[i]), 1e-14);
  }
  EXPECT_THROW(reshape_target(v, x, 8, p, mode(ReshapeMode::kStatic), 0.5), ValidationError);
}

TEST(Reshape, BatchedKeepsInvalidElements) {
  const auto p = build_palette(4, 2);
  const Vec v{0.1, 0.2, 0.3, 0.4}, x{0.0, 0.1, 0.5, -0.5};
  const std::vector<std::int32_t> labels{1, 255};
  const std::vector<std::uint8_t> valid{1, 0};
  const Vec times{0.2, 0.9};
  const auto out = reshape_targets(v, x, labels, valid, times, p, mode(ReshapeMode::kStatic));
  const auto one = reshape_target(Vec{0.1, 0.2}, Vec{0.0, 0.1}, 1, p, mode(ReshapeMode::kStatic), 0.2);
  EXPECT_EQ(out.values()[0], one.values()[0]);
  EXPECT_EQ(out.values()[1], one.values()[1]);
  EXPECT_EQ(out.values()[2], 0.3);
  EXPECT_EQ(out.values()[3], 0.4);
}

TEST(Loss, Examples) {
  const std::vector<std::uint8_t> all{1, 1};
  EXPECT_EQ(masked_loss(Vec{0.5, 2.0}, stop_gradient({0.5, 2.0}), all, 1).loss, 0.0);
  const auto r = masked_loss(Vec{1.0, -1.0}, stop_gradient({0.0, 0.0}), all, 1);
  EXPECT_EQ(r.loss, 1.0);
  EXPECT_EQ(r.valid_count, 2u);
  const std::vector<std::uint8_t> none{0, 0};
  const auto z = masked_loss(Vec{1.0, -1.0}, stop_gradient({0.0, 0.0}), none, 1);
  EXPECT_EQ(z.loss, 0.0);
  EXPECT_EQ(z.residual, (Vec{0.0, 0.0}));
  EXPECT_THROW(masked_loss(Vec{1.0}, stop_gradient({0.0, 0.0}), all, 1), ValidationError);
}

TEST(Loss, ValidCountDenominator) {
  const std::vector<std::uint8_t> valid{1, 0, 1};
  const auto r = masked_loss(Vec{1, 1, 9, 9, 0, 2}, stop_gradient({0, 0, 0, 0, 0, 0}), valid, 2);
  EXPECT_EQ(r.loss, (2.0 + 4.0) / 2.0);
  EXPECT_EQ(r.residual[2], 0.0);
}

TEST(Loss, ScaleIdentity) {
  // |v - (x1 - x0)|^2 = (1 - t)^-2 |x_hat - x1|^2 with x_hat = x_t + (1 - t) v.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.0, 0.99);
  for (int n = 0; n < 200; ++n) {
    const double t = ut(rng);
    Vec x0(12), x1(12), v(12);
    for (auto* vec : {&x0, &x1, &v}) {
      for (double& e : *vec) e = u(rng);
    }
    const auto xt = interpolate(x0, x1, t);
    const auto xh = estimate_x1(xt, v, t);
    const std::vector<std::uint8_t> valid(4, 1);
    const double loss = masked_loss(v, stop_gradient(gt_velocity(x0, x1)), valid, 3).loss;
    double dist = 0.0;
    for (int i = 0; i < 12; ++i) dist += (xh[i] - x1[i]) * (xh[i] - x1[i]);
    const double expect = dist / 4.0 / ((1 - t) * (1 - t));
    EXPECT_LE(std::abs(loss - expect), 1e-10 * expect);
  }
}

TEST(Loss, ResidualProportionalToEndpointError) {
  const Vec x0{0.1, -0.3}, x1{0.8, 0.4};
  const double t = 0.3;
  const auto xt = interpolate(x0, x1, t);
  const std::vector<std::uint8_t> valid{1};
  auto residual_norm = [&](double scale) {
    // x_hat = x1 + scale * (0.25, -0.5), dyadic offsets.
    const Vec xh{x1[0] + scale * 0.25, x1[1] - scale * 0.5};
    const auto v = v_from_xpred(xh, xt, t);
    const auto r = masked_loss(v, stop_gradient(gt_velocity(x0, x1)), valid, 2).residual;
    return std::hypot(r[0], r[1]);
  };
  EXPECT_NEAR(residual_norm(0.5) / residual_norm(1.0), 0.5, 1e-12);
}

TEST(Config, Validation) {
  ReshapeConfig c;
  c.t_clip = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.t_clip = 0.5;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_reshape_mode("annealing"), ReshapeMode::kAnnealing);
  EXPECT_EQ(parse_prediction("x_pred"), Prediction::kEndpoint);
  EXPECT_THROW(parse_prediction("eps"), ValidationError);
}

}  // namespace
}  // namespace dfm
