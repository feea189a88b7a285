// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dfm {

double silu(double x);
double silu_derivative(double x);

struct DctConfig {
  int patch_size = 8;
  int freqs = 8;  // per axis

  int enc_dim() const { return freqs * freqs; }
  void validate() const;  // 1 <= freqs <= patch_size
};

// Separable DCT-II basis sampled at intra-patch pixel (i, j):
//   entry (u, v) = cos(pi (2i + 1) u / 2P) * cos(pi (2j + 1) v / 2P),
// laid out u-major.
std::vector<double> dct_encode(int i, int j, const DctConfig& cfg);

// All encodings of a patch, (P*P) x F^2, row index i * P + j.
std::vector<double> dct_table(const DctConfig& cfg);

// Shapes of a dynamically generated two-layer pixel MLP.
struct PatchFieldShape {
  int feature_dim = 0;  // D, length of the patch feature
  int hidden_dim = 0;
  int in_dim = 0;       // enc_dim + pixel state dim
  int out_dim = 0;

  std::size_t w1_size() const { return static_cast<std::size_t>(hidden_dim) * in_dim; }
  std::size_t w2_size() const { return static_cast<std::size_t>(out_dim) * hidden_dim; }
  std::size_t generated_size() const { return w1_size() + w2_size(); }
  // Affine generator: weight (generated_size x feature_dim) then bias.
  std::size_t generator_params() const { return generated_size() * (feature_dim + 1); }
};

// Per-patch decoder weights after row normalization.
struct PatchField {
  PatchFieldShape shape;
  std::vector<double> w1;  // hidden x in, unit rows
  std::vector<double> w2;  // out x hidden, unit rows
  // Pre-normalization row norms, kept for backprop (0 marks a zero row).
  std::vector<double> w1_norms;
  std::vector<double> w2_norms;
};

// Linear(feature) split into W1 and W2, each row L2-normalized. All-zero rows
// stay zero. `generator` is laid out as PatchFieldShape::generator_params().
PatchField generate_weights(std::span<const double> patch_feature,
                            std::span<const double> generator, const PatchFieldShape& shape);

// v = W2 * SiLU(W1 * concat(dct_encode(i, j), x_pixel)).
std::vector<double> decode_velocity(const PatchField& field, int i, int j,
                                    std::span<const double> x_pixel, const DctConfig& cfg);

enum class Activation { kSilu, kIdentity };

// Fully connected network; the activation is applied after every layer but the
// last. Parameters live in caller-owned flat storage: for each layer the
// (out x in) weight row-major, then the bias.
class ToyMlp {
 public:
  explicit ToyMlp(std::vector<int> sizes, Activation activation = Activation::kSilu);

  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
  std::size_t parameter_count() const { return parameter_count_; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1];
  }

  // Glorot-uniform weights, zero biases.
  void init(std::span<double> params, std::mt19937_64& rng) const;

  struct Tape {
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
    std::vector<double> output;
  };

  Tape forward(std::span<const double> params, std::span<const double> input) const;

  // Accumulates d loss / d params into param_grad given d loss / d output.
  // input_grad, when non-empty, receives d loss / d input.
  void backward(std::span<const double> params, const Tape& tape,
                std::span<const double> upstream, std::span<double> param_grad,
                std::span<double> input_grad) const;

 private:
  std::vector<int> sizes_;
  Activation activation_;
  std::vector<std::size_t> offsets_;
  std::size_t parameter_count_ = 0;
};

struct MlpGradients {
  std::vector<double> output;
  std::vector<double> param_grads;
  std::vector<double> input_grad;
};

MlpGradients toy_mlp_forward_backward(const ToyMlp& mlp, std::span<const double> params,
                                      std::span<const double> input,
                                      std::span<const double> upstream);

// Backbone MLP -> affine weight generator -> normalized per-patch pixel MLP.
struct PixelFieldConfig {
  int state_dim = 3;         // d
  int context_dim = 5;       // backbone input length per patch
  std::vector<int> backbone_hidden = {32};
  int feature_dim = 16;      // D
  int hidden_dim = 16;       // pixel MLP width
  DctConfig dct;

  void validate() const;
  PatchFieldShape patch_shape() const {
    return {feature_dim, hidden_dim, dct.enc_dim() + state_dim, state_dim};
  }
};

class PixelFieldModel {
 public:
  explicit PixelFieldModel(PixelFieldConfig config);

  const PixelFieldConfig& config() const { return config_; }
  const ToyMlp& backbone() const { return backbone_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  int pixels_per_patch() const { return config_.dct.patch_size * config_.dct.patch_size; }

  void init(std::uint64_t seed);

  struct PatchTape {
    ToyMlp::Tape backbone;
    PatchField field;
    std::vector<double> h;       // pixels x in_dim
    std::vector<double> hidden;  // pixels x hidden, pre-SiLU
  };

  // Velocities for every pixel of one patch. x_pixels holds P*P state vectors
  // in row-major intra-patch order. Output has the same layout.
  std::vector<double> forward_patch(std::span<const double> context,
                                    std::span<const double> x_pixels,
                                    PatchTape* tape = nullptr) const;

  // Accumulates parameter gradients given d loss / d output for every pixel.
  // The pixel states are inputs only; no gradient flows into them.
  void backward_patch(const PatchTape& tape, std::span<const double> upstream,
                      std::span<double> param_grad) const;

  // Named tensors for checkpoints.
  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  std::vector<Tensor> tensors() const;

 private:
  std::size_t generator_offset() const { return backbone_.parameter_count(); }

  PixelFieldConfig config_;
  ToyMlp backbone_;
  std::vector<double> dct_;
  std::vector<double> params_;
};

// Checkpoint JSON: {"format": "dfm-checkpoint", "version": 1, "model": {...},
// "palette": {"dim", "count"}, "tensors": [{"name", "shape", "data"}]}.
std::string checkpoint_to_json(const PixelFieldModel& model, int palette_dim, int palette_count);

struct LoadedCheckpoint {
  PixelFieldModel model;
  int palette_dim = 0;
  int palette_count = 0;
};
LoadedCheckpoint checkpoint_from_json(const std::string& text);

}  // namespace dfm
