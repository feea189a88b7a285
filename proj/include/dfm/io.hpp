// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dfm {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

// Minimal CSV writer: a header row followed by rows of already-formatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void save(const std::string& path) const { write_file(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Version string baked in at configure time.
const char* version_string();

}  // namespace dfm
