// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfm/flow_core.hpp"
#include "dfm/potential_field.hpp"
#include "dfm/toy_lab.hpp"

namespace dfm {

// Flat key-value settings, keyed "section.key". Files use INI syntax:
//
//   [potential]
//   tau = 1.0
//   transform = neg_log
//
// Every key has a default; unknown keys and unparsable values raise
// ValidationError naming the key.
class Config {
 public:
  Config();  // all defaults

  static Config from_ini(const std::string& text);
  static Config load(const std::string& path);

  // Overrides one key; `assignment` is "section.key=value".
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

PotentialParams potential_params(const Config& config);
ReshapeConfig reshape_config(const Config& config);
int sampler_steps(const Config& config);
ToyTask task_from_config(const Config& config);
TrainConfig train_config(const Config& config);

}  // namespace dfm
