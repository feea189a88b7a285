// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <sstream>

#include "dfm/errors.hpp"
#include "dfm/io.hpp"

namespace dfm {
namespace {

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto s = trim(text);
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ValidationError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

// Rethrows library validation errors with the config key that fed them.
template <typename F>
auto with_key(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

Config::Config() {
  const PotentialParams pot;
  const ReshapeConfig flow;
  const TaskOptions task;
  const TrainConfig train;
  const auto model = default_model_config(task.dim);
  values_ = {
      {"potential.tau", format_double(pot.tau)},
      {"potential.epsilon", format_double(pot.epsilon)},
      {"potential.transform", std::string(to_string(pot.transform))},
      {"potential.clip_norm", format_double(pot.clip_norm)},
      {"flow.mode", std::string(to_string(flow.mode))},
      {"flow.prediction", std::string(to_string(flow.prediction))},
      {"flow.t_clip", format_double(flow.t_clip)},
      {"sampler.steps", "10"},
      {"task.kind", "voronoi"},
      {"task.num_classes", "16"},
      {"task.height", "64"},
      {"task.width", "64"},
      {"task.dim", std::to_string(task.dim)},
      {"task.ignore_fraction", format_double(task.ignore_fraction)},
      {"task.context_noise", format_double(task.context_noise)},
      {"task.seed", "1"},
      {"train.mask", train.mask ? "true" : "false"},
      {"train.optimizer", std::string(to_string(train.optimizer))},
      {"train.learning_rate", format_double(train.learning_rate)},
      {"train.beta1", format_double(train.beta1)},
      {"train.beta2", format_double(train.beta2)},
      {"train.adam_epsilon", format_double(train.adam_epsilon)},
      {"train.iterations", std::to_string(train.iterations)},
      {"train.batch_patches", std::to_string(train.batch_patches)},
      {"train.seed", std::to_string(train.seed)},
      {"train.eval_every", std::to_string(train.eval_every)},
      {"train.accuracy_threshold", format_double(train.accuracy_threshold)},
      {"train.stop_at_threshold", train.stop_at_threshold ? "true" : "false"},
      {"model.backbone_hidden", join(model.backbone_hidden)},
      {"model.feature_dim", std::to_string(model.feature_dim)},
      {"model.hidden_dim", std::to_string(model.hidden_dim)},
      {"model.patch_size", std::to_string(model.dct.patch_size)},
      {"model.freqs", std::to_string(model.dct.freqs)},
      {"gradcheck.draws", "1000"},
      {"gradcheck.num_classes", "150"},
      {"gradcheck.dim", "3"},
      {"gradcheck.seed", "7"},
  };
}

Config Config::from_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  Config config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ValidationError("config key '" + section + "' is outside any [section]");
    }
    for (const auto& [key, value] : body) config.set(section + "." + key, value.data());
  }
  return config;
}

Config Config::load(const std::string& path) { return from_ini(read_file(path)); }

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override '" + assignment + "' is not of the form section.key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  return parse_number<double>(key, raw(key));
}

int Config::get_int(const std::string& key) const { return parse_number<int>(key, raw(key)); }

std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, raw(key));
}

bool Config::get_bool(const std::string& key) const {
  const auto v = trim(raw(key));
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream in(raw(key));
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string Config::to_ini() const {
  std::string out, section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

PotentialParams potential_params(const Config& c) {
  PotentialParams p;
  p.tau = c.get_double("potential.tau");
  p.epsilon = c.get_double("potential.epsilon");
  p.transform = with_key("potential.transform",
                         [&] { return parse_transform(c.raw("potential.transform")); });
  p.clip_norm = c.get_double("potential.clip_norm");
  p.validate();
  return p;
}

ReshapeConfig reshape_config(const Config& c) {
  ReshapeConfig r;
  r.potential = potential_params(c);
  r.mode = with_key("flow.mode", [&] { return parse_reshape_mode(c.raw("flow.mode")); });
  r.prediction =
      with_key("flow.prediction", [&] { return parse_prediction(c.raw("flow.prediction")); });
  r.t_clip = c.get_double("flow.t_clip");
  r.validate();
  return r;
}

int sampler_steps(const Config& c) {
  const int steps = c.get_int("sampler.steps");
  if (steps < 1) throw ValidationError("config key 'sampler.steps' must be at least 1");
  return steps;
}

ToyTask task_from_config(const Config& c) {
  TaskOptions options;
  options.dim = c.get_int("task.dim");
  options.ignore_fraction = c.get_double("task.ignore_fraction");
  options.context_noise = c.get_double("task.context_noise");
  const auto kind = with_key("task.kind", [&] { return parse_task_kind(c.raw("task.kind")); });
  return make_task(kind, c.get_int("task.num_classes"), c.get_int("task.height"),
                   c.get_int("task.width"), c.get_u64("task.seed"), options);
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.objective = reshape_config(c);
  t.mask = c.get_bool("train.mask");
  t.optimizer =
      with_key("train.optimizer", [&] { return parse_optimizer(c.raw("train.optimizer")); });
  t.learning_rate = c.get_double("train.learning_rate");
  t.beta1 = c.get_double("train.beta1");
  t.beta2 = c.get_double("train.beta2");
  t.adam_epsilon = c.get_double("train.adam_epsilon");
  t.iterations = c.get_int("train.iterations");
  t.batch_patches = c.get_int("train.batch_patches");
  t.seed = c.get_u64("train.seed");
  t.eval_every = c.get_int("train.eval_every");
  t.sample_steps = sampler_steps(c);
  t.accuracy_threshold = c.get_double("train.accuracy_threshold");
  t.stop_at_threshold = c.get_bool("train.stop_at_threshold");
  t.model = default_model_config(c.get_int("task.dim"));
  t.model.backbone_hidden = c.get_int_list("model.backbone_hidden");
  t.model.feature_dim = c.get_int("model.feature_dim");
  t.model.hidden_dim = c.get_int("model.hidden_dim");
  t.model.dct.patch_size = c.get_int("model.patch_size");
  t.model.dct.freqs = c.get_int("model.freqs");
  t.validate();
  return t;
}

}  // namespace dfm
