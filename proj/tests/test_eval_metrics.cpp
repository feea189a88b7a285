// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "dfm/errors.hpp"
#include "dfm/eval_metrics.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace dfm {
namespace {

LabelMap grid(int h, int w, std::vector<std::int32_t> values) {
  LabelMap m(h, w);
  m.labels = std::move(values);
  return m;
}

TEST(Accumulate, AllIgnoreLeavesMatrixEmpty) {
  ConfusionMatrix cm(3);
  accumulate(cm, LabelMap(2, 2, 255), LabelMap(2, 2, 1));
  EXPECT_EQ(cm, ConfusionMatrix(3));
}

TEST(Accumulate, SinglePixel) {
  ConfusionMatrix cm(2);
  accumulate(cm, grid(1, 1, {0}), grid(1, 1, {0}));
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.valid_count(), 1u);
}

TEST(Accumulate, TilesAreAdditive) {
  ConfusionMatrix whole(3), tiles(3);
  const auto gt = grid(2, 3, {0, 1, 2, 2, 255, 0});
  const auto pr = grid(2, 3, {0, 2, 2, 1, 0, 0});
  accumulate(whole, gt, pr);
  accumulate(tiles, grid(1, 3, {0, 1, 2}), grid(1, 3, {0, 2, 2}));
  ConfusionMatrix second(3);
  accumulate(second, grid(1, 3, {2, 255, 0}), grid(1, 3, {1, 0, 0}));
  tiles.merge(second);
  EXPECT_EQ(whole, tiles);
}

TEST(Accumulate, Errors) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(accumulate(cm, LabelMap(2, 2), LabelMap(2, 3)), ValidationError);
  EXPECT_THROW(accumulate(cm, grid(1, 2, {0, 1}), grid(1, 2, {0, 5})), ValidationError);
  EXPECT_THROW(accumulate(cm, grid(1, 2, {3, 1}), grid(1, 2, {0, 1})), ValidationError);
  EXPECT_EQ(cm, ConfusionMatrix(2));
}

TEST(Miou, Perfect) {
  ConfusionMatrix cm(4);
  const auto m = grid(2, 2, {0, 1, 3, 3});
  accumulate(cm, m, m);
  EXPECT_EQ(miou(cm).miou, 1.0);
}

TEST(Miou, HandExample) {
  ConfusionMatrix cm(2);
  accumulate(cm, grid(2, 2, {0, 0, 1, 1}), grid(2, 2, {0, 1, 1, 1}));
  const auto r = miou(cm);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1], 2.0 / 3.0);
  EXPECT_NEAR(r.miou, 0.583333333333333, 1e-12);
}

TEST(Miou, AbsentClassExcluded) {
  ConfusionMatrix cm(3);
  accumulate(cm, grid(2, 2, {0, 0, 1, 1}), grid(2, 2, {0, 1, 1, 1}));
  const auto r = miou(cm);
  EXPECT_FALSE(r.per_class[2].has_value());
  EXPECT_NEAR(r.miou, 0.583333333333333, 1e-12);
}

TEST(Miou, EmptyEvaluationThrows) {
  EXPECT_THROW(miou(ConfusionMatrix(3)), ValidationError);
}

TEST(Miou, BruteForceOracle) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> lab(0, 5), coin(0, 9);
  for (int n = 0; n < 1000; ++n) {
    LabelMap gt(8, 8), pr(8, 8);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.labels[i] = coin(rng) == 0 ? 255 : lab(rng);
      pr.labels[i] = lab(rng);
    }
    ConfusionMatrix cm(8);  // classes 6 and 7 never occur
    accumulate(cm, gt, pr);
    EXPECT_EQ(miou(cm).miou, oracle::set_miou(gt.labels, pr.labels, 8, 255));
  }
}

TEST(Miou, PermutationInvariance) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> lab(0, 3);
  LabelMap gt(6, 6), pr(6, 6);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt.labels[i] = lab(rng);
    pr.labels[i] = lab(rng);
  }
  const std::vector<int> perm{2, 0, 3, 1};
  LabelMap gp = gt, pp = pr;
  for (auto& v : gp.labels) v = perm[v];
  for (auto& v : pp.labels) v = perm[v];
  ConfusionMatrix a(4), b(4);
  accumulate(a, gt, pr);
  accumulate(b, gp, pp);
  const auto ra = miou(a), rb = miou(b);
  EXPECT_NEAR(ra.miou, rb.miou, 1e-15);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(*ra.per_class[k], *rb.per_class[perm[k]]);
}

TEST(PixelAccuracy, Values) {
  ConfusionMatrix cm(2);
  EXPECT_EQ(pixel_accuracy(cm), 0.0);
  accumulate(cm, grid(2, 2, {0, 0, 1, 1}), grid(2, 2, {0, 1, 1, 1}));
  EXPECT_EQ(pixel_accuracy(cm), 0.75);
}

TEST(Json, Layout) {
  ConfusionMatrix cm(3);
  accumulate(cm, grid(1, 2, {0, 1}), grid(1, 2, {0, 1}));
  const auto doc = nlohmann::json::parse(metrics_to_json(miou(cm)));
  EXPECT_EQ(doc["miou"].get<double>(), 1.0);
  EXPECT_TRUE(doc["per_class"][2].is_null());
  EXPECT_EQ(doc["valid_count"].get<int>(), 2);
}

}  // namespace
}  // namespace dfm
