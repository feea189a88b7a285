// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dfm/centroid_codec.hpp"
#include "dfm/errors.hpp"
#include "oracles.hpp"

namespace dfm {
namespace {

double pair_distance(const CentroidPalette& p, int a, int b) {
  double s = 0.0;
  for (int i = 0; i < p.dim(); ++i) s += std::pow(p.centroid(a)[i] - p.centroid(b)[i], 2);
  return std::sqrt(s);
}

TEST(Kronecker, ZeroIndexIsOrigin) {
  const auto v = kronecker_raw(0, 3);
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Kronecker, FirstTwoIndicesMatchHighPrecision) {
  // sqrt(2), sqrt(3), sqrt(5) multiples mod 1 at 40 digits.
  const auto k1 = kronecker_raw(1, 3);
  EXPECT_NEAR(k1[0], 0.41421356237309504880, 1e-15);
  EXPECT_NEAR(k1[1], 0.73205080756887729353, 1e-15);
  EXPECT_NEAR(k1[2], 0.23606797749978969641, 1e-15);
  const auto k2 = kronecker_raw(2, 3);
  EXPECT_NEAR(k2[0], 0.82842712474619009760, 1e-15);
  EXPECT_NEAR(k2[1], 0.46410161513775458705, 1e-15);
  EXPECT_NEAR(k2[2], 0.47213595499957939282, 1e-15);
}

TEST(Kronecker, HigherDimensionsUseNextPrimes) {
  const auto inc = kronecker_increments(5);
  EXPECT_DOUBLE_EQ(inc[3], std::sqrt(7.0));
  EXPECT_DOUBLE_EQ(inc[4], std::sqrt(11.0));
}

TEST(Kronecker, RejectsBadArguments) {
  EXPECT_THROW(kronecker_raw(1, 0), ValidationError);
  EXPECT_THROW(kronecker_raw(1, 17), ValidationError);
  EXPECT_THROW(kronecker_raw(-1, 3), ValidationError);
}

TEST(Palette, TwoClassesMapToCorners) {
  const auto p = build_palette(2, 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(p.centroid(0)[i], -1.0);
    EXPECT_EQ(p.centroid(1)[i], 1.0);
  }
}

TEST(Palette, SingleClassIsOrigin) {
  const auto p = build_palette(1, 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(p.centroid(0)[i], 0.0);
}

TEST(Palette, MinimumPairDistanceAt150) {
  // Brute force over all pairs at 40 digits.
  const auto p = build_palette(150, 3);
  double m = INFINITY;
  for (int a = 0; a < 150; ++a) {
    for (int b = a + 1; b < 150; ++b) m = std::min(m, pair_distance(p, a, b));
  }
  EXPECT_NEAR(m, 0.15280527059301456781, 1e-12);
  const auto again = build_palette(150, 3);
  EXPECT_EQ(p.centroids(), again.centroids());
}

TEST(Palette, RangeAndExtremesPerDimension) {
  for (int n : {2, 7, 150, 4096}) {
    const auto p = build_palette(n, 3);
    for (int i = 0; i < 3; ++i) {
      double lo = INFINITY, hi = -INFINITY;
      for (int k = 0; k < n; ++k) {
        lo = std::min(lo, p.centroid(k)[i]);
        hi = std::max(hi, p.centroid(k)[i]);
      }
      EXPECT_EQ(lo, -1.0);
      EXPECT_EQ(hi, 1.0);
    }
  }
}

TEST(Palette, RawPointsDistinctUpTo4096) {
  const auto p = build_palette(4096, 3);
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 4096; ++k) rows.emplace_back(p.raw_point(k).begin(), p.raw_point(k).end());
  std::sort(rows.begin(), rows.end());
  EXPECT_EQ(std::adjacent_find(rows.begin(), rows.end()), rows.end());
}

TEST(Palette, RejectsOutOfRangeCount) {
  EXPECT_THROW(build_palette(0, 3), ValidationError);
  EXPECT_THROW(build_palette(4097, 3), ValidationError);
}

TEST(Palette, JsonRoundTripIsExact) {
  const auto p = build_palette(37, 4);
  const auto q = palette_from_json(palette_to_json(p));
  EXPECT_EQ(q.dim(), 4);
  EXPECT_EQ(q.count(), 37);
  EXPECT_EQ(q.centroids(), p.centroids());
}

TEST(Palette, JsonMissingKeyIsNamed) {
  try {
    palette_from_json(R"({"dim": 2, "count": 1})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("centroids"), std::string::npos);
  }
}

TEST(Encode, SinglePixel) {
  const auto p = build_palette(2, 3);
  LabelMap m(1, 1, 0);
  const auto enc = encode_labels(m, p);
  EXPECT_EQ(enc.field.values, (std::vector<double>{-1, -1, -1}));
  EXPECT_EQ(enc.valid[0], 1);
}

TEST(Encode, IgnoreIsZeroAndInvalid) {
  const auto p = build_palette(2, 3);
  LabelMap m(1, 1, kDefaultIgnoreValue);
  const auto enc = encode_labels(m, p);
  EXPECT_EQ(enc.field.values, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(enc.valid[0], 0);
}

TEST(Encode, CornerPattern) {
  const auto p = build_palette(2, 3);
  LabelMap m(2, 2);
  m.labels = {0, 1, 1, 0};
  const auto enc = encode_labels(m, p);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = m.labels[i] == 0 ? -1.0 : 1.0;
    for (double v : enc.field.pixel(i)) EXPECT_EQ(v, expect);
  }
}

TEST(Encode, LabelOutOfRangeThrows) {
  const auto p = build_palette(2, 3);
  LabelMap m(1, 1, 2);
  EXPECT_THROW(encode_labels(m, p), ValidationError);
}

TEST(Decode, ExactCentroidHit) {
  const auto p = build_palette(150, 3);
  double dist = -1.0;
  EXPECT_EQ(nearest_centroid(p.centroid(7), p, &dist), 7);
  EXPECT_EQ(dist, 0.0);
}

TEST(Decode, TieGoesToSmallestIndex) {
  const auto p = CentroidPalette::from_centroids(1, {-1.0, 1.0});
  const std::vector<double> x{0.0};
  EXPECT_EQ(nearest_centroid(x, p), 0);
}

TEST(Decode, MatchesExhaustiveArgmin) {
  const auto p = build_palette(150, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    EXPECT_EQ(nearest_centroid(x, p), oracle::argmin_row(x, p.centroids(), 3));
  }
}

TEST(Decode, NonFiniteThrows) {
  const auto p = build_palette(4, 2);
  PixelField f(1, 1, 2);
  f.values = {NAN, 0.0};
  EXPECT_THROW(decode_nearest(f, p), NumericalError);
}

TEST(Decode, RoundTripKeepsLabels) {
  for (int n : {2, 16, 150, 4096}) {
    const auto p = build_palette(n, 3);
    LabelMap m(8, 9);
    std::mt19937_64 rng(n);
    std::uniform_int_distribution<int> lab(0, n - 1);
    for (auto& l : m.labels) l = lab(rng);
    m.labels[5] = m.ignore_value;
    const auto dec = decode_nearest(encode_labels(m, p).field, p);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m.is_ignore(i)) {
        EXPECT_EQ(dec.labels.labels[i], m.labels[i]);
      }
    }
  }
}

TEST(LabelIo, CsvRoundTrip) {
  LabelMap m(3, 2);
  m.labels = {0, 1, 255, 3, 4, 5};
  EXPECT_EQ(label_map_from_csv(label_map_to_csv(m)), m);
}

TEST(LabelIo, PgmRoundTrip8And16Bit) {
  LabelMap m(2, 3);
  m.labels = {0, 1, 2, 255, 4, 5};
  EXPECT_EQ(label_map_from_pgm(label_map_to_pgm(m)), m);
  m.labels[1] = 300;
  EXPECT_EQ(label_map_from_pgm(label_map_to_pgm(m)), m);
}

TEST(LabelIo, PgmRejectsGarbage) {
  EXPECT_THROW(label_map_from_pgm("P2 1 1 255\n0"), IoError);
}

TEST(LabelIo, FileDispatchOnExtension) {
  const auto dir = std::filesystem::temp_directory_path();
  LabelMap m(2, 2);
  m.labels = {0, 1, 2, 3};
  for (const char* name : {"dfm_codec_test.pgm", "dfm_codec_test.csv"}) {
    const auto path = (dir / name).string();
    save_label_map(m, path);
    EXPECT_EQ(load_label_map(path), m);
    std::filesystem::remove(path);
  }
  EXPECT_THROW(load_label_map((dir / "does_not_exist.pgm").string()), IoError);
}

}  // namespace
}  // namespace dfm
