// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/centroid_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"
#include "json.hpp"

namespace dfm {
namespace {

constexpr std::array<int, kMaxCentroidDim> kPrimes = {
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

void check_dim(int dim) {
  if (dim < 1 || dim > kMaxCentroidDim) {
    throw ValidationError("centroid dimension " + std::to_string(dim) +
                          " outside [1, " + std::to_string(kMaxCentroidDim) + "]");
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

LabelMap::LabelMap(int h, int w, std::int32_t fill, std::int32_t ignore)
    : height(h), width(w), ignore_value(ignore),
      labels(static_cast<std::size_t>(h) * w, fill) {
  if (h < 1 || w < 1) throw ValidationError("label map must be at least 1x1");
}

void LabelMap::validate(int count) const {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("label map storage does not match its shape");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels[i];
    if (v == ignore_value) continue;
    if (v < 0 || v >= count) {
      throw ValidationError("label " + std::to_string(v) + " at pixel " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(count) + ")");
    }
  }
}

CentroidPalette CentroidPalette::from_centroids(int dim, std::vector<double> centroids) {
  check_dim(dim);
  if (centroids.empty() || centroids.size() % static_cast<std::size_t>(dim) != 0) {
    throw ValidationError("centroid table size " + std::to_string(centroids.size()) +
                          " is not a positive multiple of dim " + std::to_string(dim));
  }
  for (double v : centroids) {
    if (!std::isfinite(v)) throw ValidationError("centroid table has a non-finite entry");
  }
  CentroidPalette p;
  p.dim_ = dim;
  p.count_ = static_cast<int>(centroids.size() / dim);
  p.centroids_ = std::move(centroids);
  return p;
}

std::vector<double> kronecker_increments(int dim) {
  check_dim(dim);
  std::vector<double> inc(dim);
  for (int i = 0; i < dim; ++i) inc[i] = std::sqrt(static_cast<double>(kPrimes[i]));
  return inc;
}

std::vector<double> kronecker_raw(long long k, int dim) {
  if (k < 0) throw ValidationError("class index must be non-negative");
  const auto inc = kronecker_increments(dim);
  std::vector<double> out(dim);
  for (int i = 0; i < dim; ++i) {
    out[i] = std::fmod(static_cast<double>(k) * inc[i], 1.0);
  }
  return out;
}

CentroidPalette build_palette(int count, int dim) {
  if (count < 1 || count > kMaxPaletteSize) {
    throw ValidationError("class count " + std::to_string(count) + " outside [1, " +
                          std::to_string(kMaxPaletteSize) + "]");
  }
  CentroidPalette p;
  p.dim_ = dim;
  p.count_ = count;
  p.increments_ = kronecker_increments(dim);
  p.raw_points_.resize(static_cast<std::size_t>(count) * dim);
  for (int k = 0; k < count; ++k) {
    for (int i = 0; i < dim; ++i) {
      p.raw_points_[static_cast<std::size_t>(k) * dim + i] =
          std::fmod(static_cast<double>(k) * p.increments_[i], 1.0);
    }
  }

  // Stretch every dimension independently onto [-1, 1].
  p.centroids_.resize(p.raw_points_.size());
  for (int i = 0; i < dim; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int k = 0; k < count; ++k) {
      const double v = p.raw_points_[static_cast<std::size_t>(k) * dim + i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (int k = 0; k < count; ++k) {
      const std::size_t at = static_cast<std::size_t>(k) * dim + i;
      p.centroids_[at] =
          span > 0.0 ? 2.0 * ((p.raw_points_[at] - lo) / span) - 1.0 : 0.0;
    }
  }
  return p;
}

EncodedLabels encode_labels(const LabelMap& labels, const CentroidPalette& palette) {
  labels.validate(palette.count());
  EncodedLabels out{PixelField(labels.height, labels.width, palette.dim()),
                    std::vector<std::uint8_t>(labels.size(), 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.is_ignore(i)) continue;
    const auto mu = palette.centroid(labels.labels[i]);
    std::copy(mu.begin(), mu.end(), out.field.pixel(i).begin());
    out.valid[i] = 1;
  }
  return out;
}

int nearest_centroid(std::span<const double> x, const CentroidPalette& palette,
                     double* distance) {
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < palette.count(); ++k) {
    const double d2 = squared_distance(x, palette.centroid(k));
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  if (distance) *distance = std::sqrt(best_d2);
  return best;
}

DecodedLabels decode_nearest(const PixelField& field, const CentroidPalette& palette,
                             std::int32_t ignore_value) {
  if (field.dim != palette.dim()) {
    throw ValidationError("field dim " + std::to_string(field.dim) +
                          " does not match palette dim " + std::to_string(palette.dim()));
  }
  DecodedLabels out{LabelMap(field.height, field.width, 0, ignore_value),
                    std::vector<double>(field.pixels(), 0.0)};
  for (std::size_t i = 0; i < field.pixels(); ++i) {
    const auto x = field.pixel(i);
    for (double v : x) {
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite value at pixel " + std::to_string(i) +
                             " during nearest-centroid decoding");
      }
    }
    out.labels.labels[i] = nearest_centroid(x, palette, &out.distances[i]);
  }
  return out;
}

std::string palette_to_json(const CentroidPalette& palette) {
  nlohmann::json doc;
  doc["dim"] = palette.dim();
  doc["count"] = palette.count();
  auto rows = nlohmann::json::array();
  for (int k = 0; k < palette.count(); ++k) {
    const auto mu = palette.centroid(k);
    rows.push_back(std::vector<double>(mu.begin(), mu.end()));
  }
  doc["centroids"] = std::move(rows);
  return doc.dump(2) + "\n";
}

CentroidPalette palette_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("palette json: ") + e.what());
  }
  for (const char* key : {"dim", "count", "centroids"}) {
    if (!doc.contains(key)) throw ValidationError(std::string("palette json missing key '") + key + "'");
  }
  const int dim = doc["dim"].get<int>();
  const int count = doc["count"].get<int>();
  std::vector<double> table;
  for (const auto& row : doc["centroids"]) {
    if (row.size() != static_cast<std::size_t>(dim)) {
      throw ValidationError("palette json: centroid row length " + std::to_string(row.size()) +
                            " does not match dim " + std::to_string(dim));
    }
    for (const auto& v : row) table.push_back(v.get<double>());
  }
  auto palette = CentroidPalette::from_centroids(dim, std::move(table));
  if (palette.count() != count) {
    throw ValidationError("palette json: count " + std::to_string(count) + " but " +
                          std::to_string(palette.count()) + " centroid rows");
  }
  return palette;
}

void save_palette(const CentroidPalette& palette, const std::string& path) {
  write_file(path, palette_to_json(palette));
}

CentroidPalette load_palette(const std::string& path) {
  return palette_from_json(read_file(path));
}

std::string label_map_to_csv(const LabelMap& labels) {
  std::string out;
  for (int r = 0; r < labels.height; ++r) {
    for (int c = 0; c < labels.width; ++c) {
      if (c) out += ',';
      out += std::to_string(labels.at(r, c));
    }
    out += '\n';
  }
  return out;
}

LabelMap label_map_from_csv(const std::string& text, std::int32_t ignore_value) {
  std::vector<std::vector<std::int32_t>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::int32_t> row;
    for (const auto& cell : split(line, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(static_cast<std::int32_t>(std::stol(cell, &used)));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw IoError("label csv: cannot parse '" + cell + "' on row " +
                      std::to_string(rows.size()));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("label csv: row " + std::to_string(rows.size()) + " has " +
                    std::to_string(row.size()) + " columns, expected " +
                    std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("label csv: no rows");
  LabelMap map(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()), 0,
               ignore_value);
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) map.at(r, c) = rows[r][c];
  }
  return map;
}

std::string label_map_to_pgm(const LabelMap& labels) {
  std::int32_t max_value = 0;
  for (auto v : labels.labels) {
    if (v < 0 || v > 65535) {
      throw ValidationError("label " + std::to_string(v) + " cannot be stored in PGM");
    }
    max_value = std::max(max_value, v);
  }
  const int maxval = max_value <= 255 ? 255 : 65535;
  std::string out = "P5\n" + std::to_string(labels.width) + " " +
                    std::to_string(labels.height) + "\n" + std::to_string(maxval) + "\n";
  for (auto v : labels.labels) {
    if (maxval == 65535) out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

LabelMap label_map_from_pgm(const std::string& bytes, std::int32_t ignore_value) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw IoError("pgm: missing P5 magic");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IoError("pgm: malformed header");
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw IoError("pgm: invalid header values");
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(width) * height * bpp;
  if (bytes.size() < pos + need) throw IoError("pgm: truncated raster");
  LabelMap map(height, width, 0, ignore_value);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
    map.labels[i] = bpp == 2 ? (p[0] << 8) | p[1] : p[0];
  }
  return map;
}

void save_label_map(const LabelMap& labels, const std::string& path) {
  write_file(path, ends_with(path, ".pgm") ? label_map_to_pgm(labels)
                                           : label_map_to_csv(labels));
}

LabelMap load_label_map(const std::string& path, std::int32_t ignore_value) {
  const auto bytes = read_file(path);
  return ends_with(path, ".pgm") ? label_map_from_pgm(bytes, ignore_value)
                                 : label_map_from_csv(bytes, ignore_value);
}

}  // namespace dfm
