// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/neural_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dfm/errors.hpp"
#include "json.hpp"

namespace dfm {
namespace {

// Row-wise L2 normalization of a rows x cols block. Zero rows stay zero.
void normalize_rows(std::span<const double> raw, int rows, int cols, std::vector<double>& out,
                    std::vector<double>& norms) {
  out.assign(raw.begin(), raw.end());
  norms.assign(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    auto row = std::span<double>(out).subspan(static_cast<std::size_t>(r) * cols, cols);
    double sum = 0.0;
    for (double v : row) sum += v * v;
    const double norm = std::sqrt(sum);
    norms[r] = norm;
    if (norm > 0.0) {
      for (double& v : row) v /= norm;
    }
  }
}

// d loss / d raw for y = raw / |raw| given d loss / d y, row by row.
void normalize_rows_backward(std::span<const double> unit, std::span<const double> norms,
                             int rows, int cols, std::span<const double> grad_unit,
                             std::span<double> grad_raw) {
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    if (norms[r] == 0.0) {
      for (int c = 0; c < cols; ++c) grad_raw[base + c] = 0.0;
      continue;
    }
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += unit[base + c] * grad_unit[base + c];
    for (int c = 0; c < cols; ++c) {
      grad_raw[base + c] = (grad_unit[base + c] - unit[base + c] * dot) / norms[r];
    }
  }
}

double activate(Activation act, double x) { return act == Activation::kSilu ? silu(x) : x; }
double activate_derivative(Activation act, double x) {
  return act == Activation::kSilu ? silu_derivative(x) : 1.0;
}

}  // namespace

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

void DctConfig::validate() const {
  if (patch_size < 1) throw ValidationError("dct.patch_size must be positive");
  if (freqs < 1 || freqs > patch_size) {
    throw ValidationError("dct.freqs must lie in [1, patch_size=" + std::to_string(patch_size) +
                          "], got " + std::to_string(freqs));
  }
}

std::vector<double> dct_encode(int i, int j, const DctConfig& cfg) {
  cfg.validate();
  const int p = cfg.patch_size;
  if (i < 0 || i >= p || j < 0 || j >= p) {
    throw ValidationError("pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") outside a " + std::to_string(p) + "x" + std::to_string(p) + " patch");
  }
  std::vector<double> out(cfg.enc_dim());
  const double step = std::numbers::pi / (2.0 * p);
  for (int u = 0; u < cfg.freqs; ++u) {
    const double cu = std::cos(step * (2 * i + 1) * u);
    for (int v = 0; v < cfg.freqs; ++v) {
      out[u * cfg.freqs + v] = cu * std::cos(step * (2 * j + 1) * v);
    }
  }
  return out;
}

std::vector<double> dct_table(const DctConfig& cfg) {
  const int p = cfg.patch_size;
  std::vector<double> table;
  table.reserve(static_cast<std::size_t>(p) * p * cfg.enc_dim());
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      const auto enc = dct_encode(i, j, cfg);
      table.insert(table.end(), enc.begin(), enc.end());
    }
  }
  return table;
}

PatchField generate_weights(std::span<const double> patch_feature,
                            std::span<const double> generator, const PatchFieldShape& shape) {
  if (patch_feature.size() != static_cast<std::size_t>(shape.feature_dim)) {
    throw ValidationError("patch feature has " + std::to_string(patch_feature.size()) +
                          " entries, generator expects " + std::to_string(shape.feature_dim));
  }
  if (generator.size() != shape.generator_params()) {
    throw ValidationError("generator has " + std::to_string(generator.size()) +
                          " parameters, shape requires " +
                          std::to_string(shape.generator_params()));
  }
  const std::size_t g = shape.generated_size();
  const std::size_t d = shape.feature_dim;
  std::vector<double> raw(g);
  const auto bias = generator.subspan(g * d, g);
  for (std::size_t r = 0; r < g; ++r) {
    double acc = bias[r];
    const double* w = generator.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) acc += w[c] * patch_feature[c];
    raw[r] = acc;
  }
  PatchField field;
  field.shape = shape;
  normalize_rows(std::span<const double>(raw).first(shape.w1_size()), shape.hidden_dim,
                 shape.in_dim, field.w1, field.w1_norms);
  normalize_rows(std::span<const double>(raw).subspan(shape.w1_size()), shape.out_dim,
                 shape.hidden_dim, field.w2, field.w2_norms);
  return field;
}

std::vector<double> decode_velocity(const PatchField& field, int i, int j,
                                    std::span<const double> x_pixel, const DctConfig& cfg) {
  const auto& s = field.shape;
  if (cfg.enc_dim() + static_cast<int>(x_pixel.size()) != s.in_dim) {
    throw ValidationError("decoder input is " + std::to_string(cfg.enc_dim()) + " + " +
                          std::to_string(x_pixel.size()) + " values, field expects " +
                          std::to_string(s.in_dim));
  }
  std::vector<double> h = dct_encode(i, j, cfg);
  h.insert(h.end(), x_pixel.begin(), x_pixel.end());
  std::vector<double> hidden(s.hidden_dim);
  for (int r = 0; r < s.hidden_dim; ++r) {
    double acc = 0.0;
    for (int c = 0; c < s.in_dim; ++c) acc += field.w1[static_cast<std::size_t>(r) * s.in_dim + c] * h[c];
    hidden[r] = silu(acc);
  }
  std::vector<double> v(s.out_dim);
  for (int r = 0; r < s.out_dim; ++r) {
    double acc = 0.0;
    for (int c = 0; c < s.hidden_dim; ++c) {
      acc += field.w2[static_cast<std::size_t>(r) * s.hidden_dim + c] * hidden[c];
    }
    v[r] = acc;
  }
  return v;
}

ToyMlp::ToyMlp(std::vector<int> sizes, Activation activation)
    : sizes_(std::move(sizes)), activation_(activation) {
  if (sizes_.size() < 2) throw ValidationError("mlp needs at least an input and an output size");
  for (int s : sizes_) {
    if (s < 1) throw ValidationError("mlp layer sizes must be positive");
  }
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    offsets_.push_back(parameter_count_);
    parameter_count_ += static_cast<std::size_t>(sizes_[l] + 1) * sizes_[l + 1];
  }
}

void ToyMlp::init(std::span<double> params, std::mt19937_64& rng) const {
  if (params.size() != parameter_count_) throw ValidationError("mlp parameter buffer has wrong size");
  for (int l = 0; l < layers(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
    for (std::size_t k = 0; k < n; ++k) params[weight_offset(l) + k] = dist(rng);
    for (int k = 0; k < sizes_[l + 1]; ++k) params[bias_offset(l) + k] = 0.0;
  }
}

ToyMlp::Tape ToyMlp::forward(std::span<const double> params, std::span<const double> input) const {
  if (params.size() != parameter_count_) throw ValidationError("mlp parameter buffer has wrong size");
  if (input.size() != static_cast<std::size_t>(input_dim())) {
    throw ValidationError("mlp input has " + std::to_string(input.size()) + " values, expected " +
                          std::to_string(input_dim()));
  }
  Tape tape;
  std::vector<double> x(input.begin(), input.end());
  for (int l = 0; l < layers(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    std::vector<double> z(out);
    const double* w = params.data() + weight_offset(l);
    const double* b = params.data() + bias_offset(l);
    for (int r = 0; r < out; ++r) {
      double acc = b[r];
      for (int c = 0; c < in; ++c) acc += w[static_cast<std::size_t>(r) * in + c] * x[c];
      z[r] = acc;
    }
    tape.inputs.push_back(std::move(x));
    x = z;
    if (l + 1 < layers()) {
      for (double& v : x) v = activate(activation_, v);
    }
    tape.pre.push_back(std::move(z));
  }
  tape.output = std::move(x);
  return tape;
}

void ToyMlp::backward(std::span<const double> params, const Tape& tape,
                      std::span<const double> upstream, std::span<double> param_grad,
                      std::span<double> input_grad) const {
  if (upstream.size() != static_cast<std::size_t>(output_dim())) {
    throw ValidationError("mlp upstream gradient has " + std::to_string(upstream.size()) +
                          " values, expected " + std::to_string(output_dim()));
  }
  if (param_grad.size() != parameter_count_) throw ValidationError("mlp gradient buffer has wrong size");
  std::vector<double> g(upstream.begin(), upstream.end());
  for (int l = layers() - 1; l >= 0; --l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    if (l + 1 < layers()) {
      for (int r = 0; r < out; ++r) g[r] *= activate_derivative(activation_, tape.pre[l][r]);
    }
    const auto& x = tape.inputs[l];
    const double* w = params.data() + weight_offset(l);
    double* gw = param_grad.data() + weight_offset(l);
    double* gb = param_grad.data() + bias_offset(l);
    std::vector<double> g_in(in, 0.0);
    for (int r = 0; r < out; ++r) {
      gb[r] += g[r];
      for (int c = 0; c < in; ++c) {
        gw[static_cast<std::size_t>(r) * in + c] += g[r] * x[c];
        g_in[c] += w[static_cast<std::size_t>(r) * in + c] * g[r];
      }
    }
    g = std::move(g_in);
  }
  if (!input_grad.empty()) {
    if (input_grad.size() != g.size()) throw ValidationError("mlp input gradient buffer has wrong size");
    std::copy(g.begin(), g.end(), input_grad.begin());
  }
}

MlpGradients toy_mlp_forward_backward(const ToyMlp& mlp, std::span<const double> params,
                                      std::span<const double> input,
                                      std::span<const double> upstream) {
  auto tape = mlp.forward(params, input);
  MlpGradients out;
  out.param_grads.assign(mlp.parameter_count(), 0.0);
  out.input_grad.assign(mlp.input_dim(), 0.0);
  mlp.backward(params, tape, upstream, out.param_grads, out.input_grad);
  out.output = std::move(tape.output);
  return out;
}

void PixelFieldConfig::validate() const {
  dct.validate();
  if (state_dim < 1) throw ValidationError("model.state_dim must be positive");
  if (context_dim < 1) throw ValidationError("model.context_dim must be positive");
  if (feature_dim < 1) throw ValidationError("model.feature_dim must be positive");
  if (hidden_dim < 1) throw ValidationError("model.hidden_dim must be positive");
  for (int h : backbone_hidden) {
    if (h < 1) throw ValidationError("model.backbone_hidden entries must be positive");
  }
}

namespace {
std::vector<int> backbone_sizes(const PixelFieldConfig& c) {
  c.validate();
  std::vector<int> sizes{c.context_dim};
  sizes.insert(sizes.end(), c.backbone_hidden.begin(), c.backbone_hidden.end());
  sizes.push_back(c.feature_dim);
  return sizes;
}
}  // namespace

PixelFieldModel::PixelFieldModel(PixelFieldConfig config)
    : config_(std::move(config)),
      backbone_(backbone_sizes(config_)),
      dct_(dct_table(config_.dct)),
      params_(backbone_.parameter_count() + config_.patch_shape().generator_params(), 0.0) {}

void PixelFieldModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  backbone_.init(std::span<double>(params_).first(backbone_.parameter_count()), rng);
  const auto shape = config_.patch_shape();
  const double limit = 1.0 / std::sqrt(static_cast<double>(shape.feature_dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::size_t k = generator_offset(); k < params_.size(); ++k) params_[k] = dist(rng);
}

std::vector<double> PixelFieldModel::forward_patch(std::span<const double> context,
                                                   std::span<const double> x_pixels,
                                                   PatchTape* tape) const {
  const auto shape = config_.patch_shape();
  const int pixels = pixels_per_patch();
  const int d = config_.state_dim;
  if (x_pixels.size() != static_cast<std::size_t>(pixels) * d) {
    throw ValidationError("patch state has " + std::to_string(x_pixels.size()) +
                          " values, expected " + std::to_string(pixels * d));
  }
  auto backbone_tape = backbone_.forward(
      std::span<const double>(params_).first(backbone_.parameter_count()), context);
  auto field = generate_weights(backbone_tape.output,
                                std::span<const double>(params_).subspan(generator_offset()),
                                shape);

  const int in = shape.in_dim, hid = shape.hidden_dim, enc = config_.dct.enc_dim();
  std::vector<double> h(static_cast<std::size_t>(pixels) * in);
  std::vector<double> pre(static_cast<std::size_t>(pixels) * hid);
  std::vector<double> out(static_cast<std::size_t>(pixels) * d);
  std::vector<double> act(hid);
  for (int p = 0; p < pixels; ++p) {
    double* hp = h.data() + static_cast<std::size_t>(p) * in;
    std::copy_n(dct_.data() + static_cast<std::size_t>(p) * enc, enc, hp);
    std::copy_n(x_pixels.data() + static_cast<std::size_t>(p) * d, d, hp + enc);
    double* zp = pre.data() + static_cast<std::size_t>(p) * hid;
    for (int r = 0; r < hid; ++r) {
      const double* w = field.w1.data() + static_cast<std::size_t>(r) * in;
      double acc = 0.0;
      for (int c = 0; c < in; ++c) acc += w[c] * hp[c];
      zp[r] = acc;
      act[r] = silu(acc);
    }
    double* vp = out.data() + static_cast<std::size_t>(p) * d;
    for (int r = 0; r < d; ++r) {
      const double* w = field.w2.data() + static_cast<std::size_t>(r) * hid;
      double acc = 0.0;
      for (int c = 0; c < hid; ++c) acc += w[c] * act[c];
      vp[r] = acc;
    }
  }
  if (tape) {
    tape->backbone = std::move(backbone_tape);
    tape->field = std::move(field);
    tape->h = std::move(h);
    tape->hidden = std::move(pre);
  }
  return out;
}

void PixelFieldModel::backward_patch(const PatchTape& tape, std::span<const double> upstream,
                                     std::span<double> param_grad) const {
  const auto shape = config_.patch_shape();
  const int pixels = pixels_per_patch();
  const int d = config_.state_dim, in = shape.in_dim, hid = shape.hidden_dim;
  if (upstream.size() != static_cast<std::size_t>(pixels) * d) {
    throw ValidationError("patch upstream gradient has wrong size");
  }
  if (param_grad.size() != params_.size()) throw ValidationError("gradient buffer has wrong size");

  const auto& field = tape.field;
  std::vector<double> g_w1(shape.w1_size(), 0.0), g_w2(shape.w2_size(), 0.0);
  std::vector<double> act(hid), g_hidden(hid);
  for (int p = 0; p < pixels; ++p) {
    const double* zp = tape.hidden.data() + static_cast<std::size_t>(p) * hid;
    const double* hp = tape.h.data() + static_cast<std::size_t>(p) * in;
    const double* gv = upstream.data() + static_cast<std::size_t>(p) * d;
    bool any = false;
    for (int r = 0; r < d; ++r) any = any || gv[r] != 0.0;
    if (!any) continue;
    for (int c = 0; c < hid; ++c) {
      act[c] = silu(zp[c]);
      g_hidden[c] = 0.0;
    }
    for (int r = 0; r < d; ++r) {
      const double* w = field.w2.data() + static_cast<std::size_t>(r) * hid;
      double* gw = g_w2.data() + static_cast<std::size_t>(r) * hid;
      for (int c = 0; c < hid; ++c) {
        gw[c] += gv[r] * act[c];
        g_hidden[c] += w[c] * gv[r];
      }
    }
    for (int r = 0; r < hid; ++r) {
      const double g = g_hidden[r] * silu_derivative(zp[r]);
      if (g == 0.0) continue;
      double* gw = g_w1.data() + static_cast<std::size_t>(r) * in;
      for (int c = 0; c < in; ++c) gw[c] += g * hp[c];
    }
  }

  // Through the row normalization into the raw generator output.
  std::vector<double> g_raw(shape.generated_size());
  normalize_rows_backward(field.w1, field.w1_norms, hid, in, g_w1,
                          std::span<double>(g_raw).first(shape.w1_size()));
  normalize_rows_backward(field.w2, field.w2_norms, d, hid, g_w2,
                          std::span<double>(g_raw).subspan(shape.w1_size()));

  // Affine generator.
  const std::size_t g = shape.generated_size(), fd = shape.feature_dim;
  const auto& feature = tape.backbone.output;
  double* gw = param_grad.data() + generator_offset();
  double* gb = gw + g * fd;
  const double* w = params_.data() + generator_offset();
  std::vector<double> g_feature(fd, 0.0);
  for (std::size_t r = 0; r < g; ++r) {
    const double gr = g_raw[r];
    if (gr == 0.0) continue;
    gb[r] += gr;
    for (std::size_t c = 0; c < fd; ++c) {
      gw[r * fd + c] += gr * feature[c];
      g_feature[c] += w[r * fd + c] * gr;
    }
  }

  backbone_.backward(std::span<const double>(params_).first(backbone_.parameter_count()),
                     tape.backbone, g_feature,
                     param_grad.first(backbone_.parameter_count()), {});
}

std::vector<PixelFieldModel::Tensor> PixelFieldModel::tensors() const {
  std::vector<Tensor> out;
  for (int l = 0; l < backbone_.layers(); ++l) {
    const int in = backbone_.sizes()[l], o = backbone_.sizes()[l + 1];
    const std::string prefix = "backbone.layer" + std::to_string(l);
    out.push_back({prefix + ".weight", {o, in}, backbone_.weight_offset(l),
                   static_cast<std::size_t>(o) * in});
    out.push_back({prefix + ".bias", {o}, backbone_.bias_offset(l), static_cast<std::size_t>(o)});
  }
  const auto shape = config_.patch_shape();
  const int g = static_cast<int>(shape.generated_size());
  out.push_back({"generator.weight", {g, shape.feature_dim}, generator_offset(),
                 static_cast<std::size_t>(g) * shape.feature_dim});
  out.push_back({"generator.bias", {g},
                 generator_offset() + static_cast<std::size_t>(g) * shape.feature_dim,
                 static_cast<std::size_t>(g)});
  return out;
}

std::string checkpoint_to_json(const PixelFieldModel& model, int palette_dim, int palette_count) {
  const auto& c = model.config();
  nlohmann::json doc;
  doc["format"] = "dfm-checkpoint";
  doc["version"] = 1;
  doc["model"] = {{"state_dim", c.state_dim},       {"context_dim", c.context_dim},
                  {"backbone_hidden", c.backbone_hidden}, {"feature_dim", c.feature_dim},
                  {"hidden_dim", c.hidden_dim},     {"patch_size", c.dct.patch_size},
                  {"freqs", c.dct.freqs}};
  doc["palette"] = {{"dim", palette_dim}, {"count", palette_count}};
  auto tensors = nlohmann::json::array();
  const auto params = model.parameters();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"data", std::vector<double>(params.begin() + t.offset,
                                                    params.begin() + t.offset + t.size)}});
  }
  doc["tensors"] = std::move(tensors);
  return doc.dump() + "\n";
}

LoadedCheckpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint json: ") + e.what());
  }
  if (doc.value("format", "") != "dfm-checkpoint") throw IoError("not a dfm checkpoint");
  if (doc.value("version", 0) != 1) throw IoError("unsupported checkpoint version");
  try {
    const auto& m = doc.at("model");
    PixelFieldConfig c;
    c.state_dim = m.at("state_dim").get<int>();
    c.context_dim = m.at("context_dim").get<int>();
    c.backbone_hidden = m.at("backbone_hidden").get<std::vector<int>>();
    c.feature_dim = m.at("feature_dim").get<int>();
    c.hidden_dim = m.at("hidden_dim").get<int>();
    c.dct.patch_size = m.at("patch_size").get<int>();
    c.dct.freqs = m.at("freqs").get<int>();
    LoadedCheckpoint out{PixelFieldModel(c), doc.at("palette").at("dim").get<int>(),
                         doc.at("palette").at("count").get<int>()};
    auto params = out.model.parameters();
    const auto expected = out.model.tensors();
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != expected.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != expected[i].name) {
        throw IoError("checkpoint tensor '" + t.at("name").get<std::string>() +
                      "' where '" + expected[i].name + "' was expected");
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != expected[i].size) {
        throw IoError("checkpoint tensor '" + expected[i].name + "' has wrong size");
      }
      std::copy(data.begin(), data.end(), params.begin() + expected[i].offset);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint json: ") + e.what());
  }
}

}  // namespace dfm
