// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfm/centroid_codec.hpp"
#include "dfm/flow_core.hpp"
#include "dfm/neural_field.hpp"
#include "dfm/ode_sampler.hpp"

namespace dfm {

enum class TaskKind { kQuadrants, kVoronoi };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

// A single synthetic image with its segmentation.
//
// Every pixel carries three context channels: row and column scaled to
// [-1, 1], and z = 2 (label + 0.5) / N - 1 + noise, a noisy ramp encoding of
// the underlying class. The flow source x0 is a fixed affine map of the
// context (see source_field).
struct ToyTask {
  static constexpr int kContextChannels = 3;

  TaskKind kind = TaskKind::kVoronoi;
  int dim = 3;
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  double ignore_fraction = 0.0;
  double context_noise = 0.0;
  LabelMap labels;       // ground truth with ignored pixels marked
  LabelMap full_labels;  // ground truth before masking
  std::vector<double> context;  // H x W x 3
  CentroidPalette palette;
};

struct TaskOptions {
  int dim = 3;
  double ignore_fraction = 0.0;
  double context_noise = -1.0;  // standard deviation of z noise; < 0 means 1 / N
};

// quadrants (N must be 4): class by sign pattern of centered coordinates,
//   0 = right-top, 1 = left-top, 2 = left-bottom, 3 = right-bottom.
// voronoi (N >= 2): N distinct integer sites, class = nearest site (ties to
//   the smaller index).
ToyTask make_task(TaskKind kind, int num_classes, int height, int width, std::uint64_t seed,
                  const TaskOptions& options = {});

// x0 = 0.5 * (row, col, z) for the first three channels; further channels
// repeat the pattern with alternating sign.
PixelField source_field(const ToyTask& task);

enum class OptimizerKind { kSgd, kAdam };
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  ReshapeConfig objective;
  bool mask = true;  // exclude ignored pixels from the loss
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int iterations = 6000;
  int batch_patches = 16;
  std::uint64_t seed = 1;
  int eval_every = 100;
  int sample_steps = 10;
  double accuracy_threshold = 0.9;
  bool stop_at_threshold = false;  // end the run at the first eval reaching the threshold
  PixelFieldConfig model;

  void validate() const;
};

// Default model for a task: patch size 8 DCT features, backbone on per-patch
// context (row, col, mean z, t).
PixelFieldConfig default_model_config(int dim);

struct EvalRow {
  int iteration = 0;
  double loss = 0.0;  // mean training loss since the previous row
  double pixel_acc = 0.0;
  double miou = 0.0;
};

struct RunRecord {
  std::vector<EvalRow> rows;       // iteration-sorted
  std::vector<double> losses;      // one per optimizer step
  std::optional<int> iterations_to_threshold;
  std::string config_hash;
  std::string config_json;
};

struct TrainResult {
  RunRecord record;
  PixelFieldModel model;
};

// One training batch: a set of patches with fixed times and states.
struct Batch {
  std::vector<int> patches;     // patch index (row-major over the patch grid)
  std::vector<double> times;    // one per patch
  std::vector<double> x0, x1, xt;  // patches x P*P x d
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> valid;  // labeled pixels
};

Batch make_batch(const ToyTask& task, const PixelField& source, const PixelField& target,
                 std::span<const int> patches, std::span<const double> times, int patch_size);

struct BatchEvaluation {
  double loss = 0.0;
  std::vector<double> velocity;   // v_theta per pixel
  std::vector<double> target;     // the detached regression target
  // Largest |target - (x1 - x0)| over labeled pixels: the norm of the
  // potential correction actually applied.
  double max_correction_norm = 0.0;
};

// Forward pass, target construction and loss for one batch. When `grad` is
// non-empty it receives d loss / d params through the analytic backward pass,
// treating the target as a constant. A supplied `fixed_target` replaces the
// reshaped target.
BatchEvaluation evaluate_batch(const PixelFieldModel& model, const ToyTask& task,
                               const Batch& batch, const TrainConfig& cfg,
                               std::span<double> grad,
                               const DetachedTarget* fixed_target = nullptr);

// Backbone context for one patch at time t.
std::vector<double> patch_context(const ToyTask& task, int patch, double t, int patch_size);

// Velocity field over the whole image state (H x W x d) for the model.
VelocityField model_velocity_field(const PixelFieldModel& model, const ToyTask& task,
                                   Prediction prediction, double t_clip);

struct Accuracy {
  double pixel_acc = 0.0;
  double miou = 0.0;
};

// Integrates from x0, decodes nearest centroids, scores against the task
// ground truth (ignored pixels excluded).
Accuracy evaluate_field(const VelocityField& field, const ToyTask& task, int steps,
                        PixelField* endpoint = nullptr);

TrainResult train(const ToyTask& task, const TrainConfig& cfg);

// Loss averaged over a trailing window ending at `iteration` (1-based count
// of steps taken).
double smoothed_loss(const RunRecord& record, int iteration, int window = 100);

std::string run_record_to_csv(const RunRecord& record);
std::string run_record_sidecar(const RunRecord& record, const ToyTask& task);
std::string train_config_to_json(const TrainConfig& cfg);

struct AuditReport {
  std::size_t parameter_count = 0;
  double fixed_target_rel_error = 0.0;    // implemented vs FD with the target frozen
  double varying_target_rel_error = 0.0;  // implemented vs FD with the target live
  double max_correction_norm = 0.0;
  bool fixed_target_agrees = false;        // <= 1e-4
  bool varying_target_disagrees = false;   // > 1e-3
};

// Compares the analytic parameter gradient against two finite-difference
// oracles on one fixed batch. Requires a model with at most 1000 parameters.
AuditReport stop_gradient_audit(const ToyTask& task, const TrainConfig& cfg);

// Configuration used by the audit: a 1-patch model small enough for FD.
PixelFieldConfig tiny_model_config(int dim);

struct AblationRow {
  ReshapeMode mode = ReshapeMode::kStatic;
  Prediction prediction = Prediction::kVelocity;
  bool mask = true;
  TransformKind transform = TransformKind::kNegLog;
  std::vector<double> final_miou;                 // per seed
  std::vector<std::optional<int>> threshold_iter;  // per seed
  double median_miou = 0.0;
  std::optional<double> median_threshold_iter;    // nullopt when most seeds never reach it
};

// Median where nullopt entries count as +infinity.
std::optional<double> censored_median(const std::vector<std::optional<int>>& values);
double median(std::vector<double> values);

// Full cross product mode x prediction x mask x transform (36 cells). Each
// cell trains one run per seed; task seeds follow the training seeds.
std::vector<AblationRow> ablation_matrix(const ToyTask& task_template, const TrainConfig& base,
                                         std::span<const std::uint64_t> seeds);

std::string ablation_to_csv(const std::vector<AblationRow>& rows);

struct StepEval {
  int steps = 0;
  double miou = 0.0;
  double pixel_acc = 0.0;
};

std::vector<StepEval> eval_run(const VelocityField& field, const ToyTask& task,
                               std::span<const int> steps);

// Checks that the checkpoint was trained for the task's palette, then samples
// with the given prediction parameterization.
std::vector<StepEval> eval_run(const LoadedCheckpoint& checkpoint, const ToyTask& task,
                               std::span<const int> steps, Prediction prediction,
                               double t_clip = 1e-3);

// Exact field (mu_label - x0) per pixel, constant in time; ignored pixels stay put.
VelocityField exact_label_field(const ToyTask& task);

std::string step_eval_to_csv(const std::vector<StepEval>& rows);

std::string fnv1a_hex(std::string_view data);

}  // namespace dfm
