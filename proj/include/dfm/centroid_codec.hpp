// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfm {

inline constexpr int kMaxCentroidDim = 16;
inline constexpr int kMaxPaletteSize = 4096;
inline constexpr std::int32_t kDefaultIgnoreValue = 255;

// Ordered table of class centroids in [-1, 1]^dim.
//
// Built from a Kronecker sequence k * (sqrt(p_1), ..., sqrt(p_dim)) mod 1 with
// per-dimension min-max stretching. Palettes imported from JSON or assembled by
// hand (test fixtures) carry no increments and no raw points.
class CentroidPalette {
 public:
  CentroidPalette() = default;

  // Row-major count x dim table. Throws ValidationError on ragged or empty
  // input.
  static CentroidPalette from_centroids(int dim, std::vector<double> centroids);

  int dim() const { return dim_; }
  int count() const { return count_; }

  std::span<const double> centroid(int k) const {
    return {centroids_.data() + static_cast<std::size_t>(k) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  std::span<const double> raw_point(int k) const {
    return {raw_points_.data() + static_cast<std::size_t>(k) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  const std::vector<double>& increments() const { return increments_; }
  const std::vector<double>& centroids() const { return centroids_; }
  const std::vector<double>& raw_points() const { return raw_points_; }
  bool has_raw_points() const { return !raw_points_.empty(); }

 private:
  friend CentroidPalette build_palette(int count, int dim);

  int dim_ = 0;
  int count_ = 0;
  std::vector<double> increments_;
  std::vector<double> centroids_;
  std::vector<double> raw_points_;
};

// H x W grid of class indices. Entries equal to ignore_value are unlabeled.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::int32_t ignore_value = kDefaultIgnoreValue;
  std::vector<std::int32_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::int32_t fill = 0,
           std::int32_t ignore = kDefaultIgnoreValue);

  std::int32_t& at(int r, int c) { return labels[index(r, c)]; }
  std::int32_t at(int r, int c) const { return labels[index(r, c)]; }
  std::size_t size() const { return labels.size(); }
  bool is_ignore(std::size_t i) const { return labels[i] == ignore_value; }

  // Throws ValidationError if a non-ignore entry is outside [0, count).
  void validate(int count) const;

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * width + c;
  }
};

// H x W grid of dim-vectors, row-major with the channel innermost.
struct PixelField {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<double> values;

  PixelField() = default;
  PixelField(int h, int w, int d)
      : height(h), width(w), dim(d),
        values(static_cast<std::size_t>(h) * w * d, 0.0) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::span<double> pixel(std::size_t i) {
    return {values.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> pixel(std::size_t i) const {
    return {values.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

struct EncodedLabels {
  PixelField field;
  std::vector<std::uint8_t> valid;  // 1 for labeled pixels
};

struct DecodedLabels {
  LabelMap labels;
  std::vector<double> distances;  // Euclidean distance to the chosen centroid
};

// Square roots of the first `dim` primes.
std::vector<double> kronecker_increments(int dim);

// (k * sqrt(p_1) mod 1, ..., k * sqrt(p_dim) mod 1). Requires k >= 0 and
// 1 <= dim <= 16.
std::vector<double> kronecker_raw(long long k, int dim);

CentroidPalette build_palette(int count, int dim);

EncodedLabels encode_labels(const LabelMap& labels, const CentroidPalette& palette);

// Nearest centroid for a single point; ties go to the smallest index.
int nearest_centroid(std::span<const double> x, const CentroidPalette& palette,
                     double* distance = nullptr);

DecodedLabels decode_nearest(const PixelField& field, const CentroidPalette& palette,
                             std::int32_t ignore_value = kDefaultIgnoreValue);

// Palette JSON: {"dim": d, "count": N, "centroids": [[...], ...]} with
// round-trip decimal precision.
std::string palette_to_json(const CentroidPalette& palette);
CentroidPalette palette_from_json(const std::string& text);
void save_palette(const CentroidPalette& palette, const std::string& path);
CentroidPalette load_palette(const std::string& path);

// Label maps as CSV grids of integers or binary PGM (P5).
std::string label_map_to_csv(const LabelMap& labels);
LabelMap label_map_from_csv(const std::string& text,
                            std::int32_t ignore_value = kDefaultIgnoreValue);
std::string label_map_to_pgm(const LabelMap& labels);
LabelMap label_map_from_pgm(const std::string& bytes,
                            std::int32_t ignore_value = kDefaultIgnoreValue);

// Dispatches on the extension (.pgm or anything else as CSV).
void save_label_map(const LabelMap& labels, const std::string& path);
LabelMap load_label_map(const std::string& path,
                        std::int32_t ignore_value = kDefaultIgnoreValue);

}  // namespace dfm
