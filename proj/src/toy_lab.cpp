// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dfm/toy_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dfm/errors.hpp"
#include "dfm/eval_metrics.hpp"
#include "dfm/gradcheck.hpp"
#include "dfm/io.hpp"
#include "json.hpp"

namespace dfm {
namespace {

constexpr int kPatchContextDim = 4;  // row, col, mean z, t
constexpr std::uint64_t kTrainStream = 0x9e3779b97f4a7c15ULL;

double scaled(int index, int extent) {
  return extent > 1 ? 2.0 * index / (extent - 1) - 1.0 : 0.0;
}

int patch_grid_width(const ToyTask& task, int patch_size) { return task.width / patch_size; }
int patch_count(const ToyTask& task, int patch_size) {
  return (task.height / patch_size) * (task.width / patch_size);
}

// Pixel index of intra-patch position q in patch `patch`.
std::size_t pixel_of(const ToyTask& task, int patch, int q, int patch_size) {
  const int gw = patch_grid_width(task, patch_size);
  const int r = (patch / gw) * patch_size + q / patch_size;
  const int c = (patch % gw) * patch_size + q % patch_size;
  return static_cast<std::size_t>(r) * task.width + c;
}

void check_task_model(const ToyTask& task, const PixelFieldConfig& model) {
  const int p = model.dct.patch_size;
  if (task.height % p != 0 || task.width % p != 0) {
    throw ValidationError("task is " + std::to_string(task.height) + "x" +
                          std::to_string(task.width) + ", not a multiple of patch size " +
                          std::to_string(p));
  }
  if (model.state_dim != task.dim) {
    throw ValidationError("model state_dim " + std::to_string(model.state_dim) +
                          " does not match task dim " + std::to_string(task.dim));
  }
  if (model.context_dim != kPatchContextDim) {
    throw ValidationError("model context_dim must be " + std::to_string(kPatchContextDim));
  }
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kQuadrants ? "quadrants" : "voronoi";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "quadrants") return TaskKind::kQuadrants;
  if (name == "voronoi") return TaskKind::kVoronoi;
  throw ValidationError("unknown task kind '" + std::string(name) +
                        "' (expected quadrants or voronoi)");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ValidationError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

ToyTask make_task(TaskKind kind, int num_classes, int height, int width, std::uint64_t seed,
                  const TaskOptions& options) {
  if (height < 1 || width < 1) throw ValidationError("task image must be at least 1x1");
  if (kind == TaskKind::kQuadrants && num_classes != 4) {
    throw ValidationError("quadrants task needs N = 4, got " + std::to_string(num_classes));
  }
  if (kind == TaskKind::kVoronoi &&
      (num_classes < 2 || static_cast<long long>(num_classes) > static_cast<long long>(height) * width)) {
    throw ValidationError("voronoi task needs 2 <= N <= H*W, got N = " + std::to_string(num_classes));
  }
  if (!(options.ignore_fraction >= 0.0 && options.ignore_fraction < 1.0)) {
    throw ValidationError("task.ignore_fraction must lie in [0, 1)");
  }

  ToyTask task;
  task.kind = kind;
  task.dim = options.dim;
  task.num_classes = num_classes;
  task.height = height;
  task.width = width;
  task.seed = seed;
  task.ignore_fraction = options.ignore_fraction;
  task.context_noise = options.context_noise < 0.0 ? 1.0 / num_classes : options.context_noise;
  task.palette = build_palette(num_classes, options.dim);
  task.full_labels = LabelMap(height, width);

  std::mt19937_64 rng(seed);
  if (kind == TaskKind::kQuadrants) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double x = c - (width - 1) / 2.0;
        const double y = (height - 1) / 2.0 - r;
        const bool right = x >= 0.0, top = y >= 0.0;
        task.full_labels.at(r, c) = top ? (right ? 0 : 1) : (right ? 3 : 2);
      }
    }
  } else {
    std::uniform_int_distribution<int> row_dist(0, height - 1), col_dist(0, width - 1);
    std::vector<std::pair<int, int>> sites;
    std::set<std::pair<int, int>> seen;
    while (static_cast<int>(sites.size()) < num_classes) {
      const int r = row_dist(rng);
      const int c = col_dist(rng);
      if (seen.insert({r, c}).second) sites.emplace_back(r, c);
    }
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        int best = 0;
        long long best_d = std::numeric_limits<long long>::max();
        for (int k = 0; k < num_classes; ++k) {
          const long long dr = r - sites[k].first, dc = c - sites[k].second;
          const long long d = dr * dr + dc * dc;
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
        task.full_labels.at(r, c) = best;
      }
    }
  }

  task.context.resize(static_cast<std::size_t>(height) * width * ToyTask::kContextChannels);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * width + c;
      const int label = task.full_labels.labels[i];
      double* ctx = task.context.data() + i * ToyTask::kContextChannels;
      ctx[0] = scaled(r, height);
      ctx[1] = scaled(c, width);
      ctx[2] = 2.0 * (label + 0.5) / num_classes - 1.0 + task.context_noise * noise(rng);
    }
  }

  task.labels = task.full_labels;
  const auto pixels = task.labels.size();
  const auto ignored = static_cast<std::size_t>(std::llround(options.ignore_fraction * pixels));
  if (ignored > 0) {
    std::vector<std::size_t> order(pixels);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < ignored; ++k) task.labels.labels[order[k]] = task.labels.ignore_value;
  }
  return task;
}

PixelField source_field(const ToyTask& task) {
  PixelField x0(task.height, task.width, task.dim);
  for (std::size_t i = 0; i < x0.pixels(); ++i) {
    const double* ctx = task.context.data() + i * ToyTask::kContextChannels;
    auto out = x0.pixel(i);
    for (int k = 0; k < task.dim; ++k) {
      const double sign = (k / ToyTask::kContextChannels) % 2 == 0 ? 1.0 : -1.0;
      out[k] = 0.5 * sign * ctx[k % ToyTask::kContextChannels];
    }
  }
  return x0;
}

void TrainConfig::validate() const {
  objective.validate();
  model.validate();
  if (iterations < 1) throw ValidationError("train.iterations must be at least 1");
  if (batch_patches < 1) throw ValidationError("train.batch_patches must be at least 1");
  if (eval_every < 1) throw ValidationError("train.eval_every must be at least 1");
  if (sample_steps < 1) throw ValidationError("train.sample_steps must be at least 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ValidationError("train.adam_epsilon must be positive");
}

PixelFieldConfig default_model_config(int dim) {
  PixelFieldConfig c;
  c.state_dim = dim;
  c.context_dim = kPatchContextDim;
  c.backbone_hidden = {64, 64};
  c.feature_dim = 32;
  c.hidden_dim = 16;
  c.dct = {8, 8};
  return c;
}

PixelFieldConfig tiny_model_config(int dim) {
  PixelFieldConfig c;
  c.state_dim = dim;
  c.context_dim = kPatchContextDim;
  c.backbone_hidden = {6};
  c.feature_dim = 3;
  c.hidden_dim = 4;
  c.dct = {8, 2};
  return c;
}

std::vector<double> patch_context(const ToyTask& task, int patch, double t, int patch_size) {
  const int gw = patch_grid_width(task, patch_size);
  const int r0 = (patch / gw) * patch_size, c0 = (patch % gw) * patch_size;
  const double center = (patch_size - 1) / 2.0;
  auto scale = [](double v, int extent) { return extent > 1 ? 2.0 * v / (extent - 1) - 1.0 : 0.0; };
  double z = 0.0;
  for (int q = 0; q < patch_size * patch_size; ++q) {
    z += task.context[pixel_of(task, patch, q, patch_size) * ToyTask::kContextChannels + 2];
  }
  return {scale(r0 + center, task.height), scale(c0 + center, task.width),
          z / (patch_size * patch_size), t};
}

Batch make_batch(const ToyTask& task, const PixelField& source, const PixelField& target,
                 std::span<const int> patches, std::span<const double> times, int patch_size) {
  if (patches.size() != times.size()) throw ValidationError("batch needs one time per patch");
  const int pp = patch_size * patch_size;
  const int d = task.dim;
  Batch b;
  b.patches.assign(patches.begin(), patches.end());
  b.times.assign(times.begin(), times.end());
  const std::size_t n = patches.size() * pp;
  b.x0.resize(n * d);
  b.x1.resize(n * d);
  b.xt.resize(n * d);
  b.labels.resize(n);
  b.valid.resize(n);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const double t = times[k];
    for (int q = 0; q < pp; ++q) {
      const std::size_t e = k * pp + q;
      const std::size_t px = pixel_of(task, patches[k], q, patch_size);
      const auto a = source.pixel(px);
      const auto z = target.pixel(px);
      for (int i = 0; i < d; ++i) {
        b.x0[e * d + i] = a[i];
        b.x1[e * d + i] = z[i];
        b.xt[e * d + i] = (1.0 - t) * a[i] + t * z[i];
      }
      b.labels[e] = task.labels.labels[px];
      b.valid[e] = task.labels.is_ignore(px) ? 0 : 1;
    }
  }
  return b;
}

BatchEvaluation evaluate_batch(const PixelFieldModel& model, const ToyTask& task,
                               const Batch& batch, const TrainConfig& cfg,
                               std::span<double> grad, const DetachedTarget* fixed_target) {
  const int patch_size = model.config().dct.patch_size;
  const int pp = patch_size * patch_size;
  const int d = task.dim;
  const std::size_t n = batch.labels.size();
  const bool x_pred = cfg.objective.prediction == Prediction::kEndpoint;
  const double t_clip = cfg.objective.t_clip;

  BatchEvaluation out;
  out.velocity.resize(n * d);
  std::vector<PixelFieldModel::PatchTape> tapes(grad.empty() ? 0 : batch.patches.size());
  std::vector<double> x_hat(n * d), v_gt(n * d), times(n);
  for (std::size_t k = 0; k < batch.patches.size(); ++k) {
    const double t = batch.times[k];
    const auto xt = std::span<const double>(batch.xt).subspan(k * pp * d, pp * d);
    const auto raw = model.forward_patch(patch_context(task, batch.patches[k], t, patch_size), xt,
                                         grad.empty() ? nullptr : &tapes[k]);
    const double remaining = std::max(1.0 - t, t_clip);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const std::size_t at = k * pp * d + j;
      out.velocity[at] = x_pred ? (raw[j] - xt[j]) / remaining : raw[j];
      if (!std::isfinite(out.velocity[at])) throw NumericalError("non-finite model output");
      x_hat[at] = xt[j] + (1.0 - t) * out.velocity[at];
      v_gt[at] = batch.x1[at] - batch.x0[at];
    }
    std::fill_n(times.begin() + k * pp, pp, t);
  }

  const DetachedTarget target =
      fixed_target ? *fixed_target
                   : reshape_targets(v_gt, x_hat, batch.labels, batch.valid, times,
                                     task.palette, cfg.objective);
  out.target.assign(target.values().begin(), target.values().end());
  for (std::size_t e = 0; e < n; ++e) {
    if (!batch.valid[e]) continue;
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = out.target[e * d + i] - v_gt[e * d + i];
      sum += c * c;
    }
    out.max_correction_norm = std::max(out.max_correction_norm, std::sqrt(sum));
  }

  std::vector<std::uint8_t> loss_mask =
      cfg.mask ? batch.valid : std::vector<std::uint8_t>(n, 1);
  const auto loss = masked_loss(out.velocity, target, loss_mask, d);
  out.loss = loss.loss;

  if (!grad.empty() && loss.valid_count > 0) {
    const double scale = 2.0 / static_cast<double>(loss.valid_count);
    std::vector<double> upstream(static_cast<std::size_t>(pp) * d);
    for (std::size_t k = 0; k < batch.patches.size(); ++k) {
      const double chain = x_pred ? 1.0 / std::max(1.0 - batch.times[k], t_clip) : 1.0;
      for (std::size_t j = 0; j < upstream.size(); ++j) {
        upstream[j] = scale * chain * loss.residual[k * pp * d + j];
      }
      model.backward_patch(tapes[k], upstream, grad);
    }
  }
  return out;
}

VelocityField model_velocity_field(const PixelFieldModel& model, const ToyTask& task,
                                   Prediction prediction, double t_clip) {
  check_task_model(task, model.config());
  return [&model, &task, prediction, t_clip](std::span<const double> x, double t,
                                             std::span<double> v) {
    const int patch_size = model.config().dct.patch_size;
    const int pp = patch_size * patch_size;
    const int d = task.dim;
    std::vector<double> xp(static_cast<std::size_t>(pp) * d);
    const double remaining = std::max(1.0 - t, t_clip);
    for (int p = 0; p < patch_count(task, patch_size); ++p) {
      for (int q = 0; q < pp; ++q) {
        const std::size_t px = pixel_of(task, p, q, patch_size);
        std::copy_n(x.data() + px * d, d, xp.data() + static_cast<std::size_t>(q) * d);
      }
      const auto out = model.forward_patch(patch_context(task, p, t, patch_size), xp);
      for (int q = 0; q < pp; ++q) {
        const std::size_t px = pixel_of(task, p, q, patch_size);
        for (int i = 0; i < d; ++i) {
          const double o = out[static_cast<std::size_t>(q) * d + i];
          v[px * d + i] = prediction == Prediction::kEndpoint
                              ? (o - xp[static_cast<std::size_t>(q) * d + i]) / remaining
                              : o;
        }
      }
    }
  };
}

Accuracy evaluate_field(const VelocityField& field, const ToyTask& task, int steps,
                        PixelField* endpoint) {
  const auto x0 = source_field(task);
  PixelField end(task.height, task.width, task.dim);
  end.values = euler_endpoint(field, x0.values, steps);
  const auto decoded = decode_nearest(end, task.palette, task.labels.ignore_value);
  ConfusionMatrix cm(task.num_classes);
  accumulate(cm, task.labels, decoded.labels);
  Accuracy acc{pixel_accuracy(cm), miou(cm).miou};
  if (endpoint) *endpoint = std::move(end);
  return acc;
}

TrainResult train(const ToyTask& task, const TrainConfig& cfg) {
  cfg.validate();
  check_task_model(task, cfg.model);
  const int patch_size = cfg.model.dct.patch_size;
  const int patches = patch_count(task, patch_size);
  const auto source = source_field(task);
  const auto target = encode_labels(task.labels, task.palette).field;

  TrainResult result{RunRecord{}, PixelFieldModel(cfg.model)};
  auto& model = result.model;
  auto& record = result.record;
  model.init(cfg.seed);
  record.config_json = train_config_to_json(cfg);
  record.config_hash = fnv1a_hex(record.config_json);

  std::mt19937_64 rng(cfg.seed ^ kTrainStream);
  std::uniform_int_distribution<int> patch_dist(0, patches - 1);
  std::uniform_real_distribution<double> time_dist(0.0, 1.0);

  const std::size_t np = model.parameter_count();
  std::vector<double> grad(np), m(np, 0.0), v(np, 0.0);
  const auto field = model_velocity_field(model, task, cfg.objective.prediction,
                                          cfg.objective.t_clip);

  auto run_eval = [&](int iteration) {
    const auto acc = evaluate_field(field, task, cfg.sample_steps);
    EvalRow row{iteration, 0.0, acc.pixel_acc, acc.miou};
    if (iteration > 0) {
      const int from = std::max(0, iteration - cfg.eval_every);
      double sum = 0.0;
      for (int k = from; k < iteration; ++k) sum += record.losses[k];
      row.loss = sum / (iteration - from);
    }
    record.rows.push_back(row);
    if (!record.iterations_to_threshold && acc.pixel_acc >= cfg.accuracy_threshold) {
      record.iterations_to_threshold = iteration;
    }
  };

  run_eval(0);
  std::vector<int> batch_patches(cfg.batch_patches);
  std::vector<double> batch_times(cfg.batch_patches);
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (cfg.stop_at_threshold && record.iterations_to_threshold) break;
    for (int k = 0; k < cfg.batch_patches; ++k) {
      batch_patches[k] = patch_dist(rng);
      batch_times[k] = time_dist(rng);
    }
    const auto batch = make_batch(task, source, target, batch_patches, batch_times, patch_size);
    std::fill(grad.begin(), grad.end(), 0.0);
    BatchEvaluation eval;
    try {
      eval = evaluate_batch(model, task, batch, cfg, grad);
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at iteration " + std::to_string(it) + " (" +
                           e.what() + ")");
    }
    if (!std::isfinite(eval.loss)) {
      throw NumericalError("training diverged at iteration " + std::to_string(it) +
                           " (non-finite loss)");
    }
    for (double g : grad) {
      if (!std::isfinite(g)) {
        throw NumericalError("training diverged at iteration " + std::to_string(it) +
                             " (non-finite gradient)");
      }
    }
    record.losses.push_back(eval.loss);

    auto params = model.parameters();
    if (cfg.optimizer == OptimizerKind::kSgd) {
      for (std::size_t k = 0; k < np; ++k) params[k] -= cfg.learning_rate * grad[k];
    } else {
      const double c1 = 1.0 - std::pow(cfg.beta1, it);
      const double c2 = 1.0 - std::pow(cfg.beta2, it);
      for (std::size_t k = 0; k < np; ++k) {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        params[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_epsilon);
      }
    }
    if (it % cfg.eval_every == 0 || it == cfg.iterations) run_eval(it);
  }
  return result;
}

double smoothed_loss(const RunRecord& record, int iteration, int window) {
  if (iteration < 1 || iteration > static_cast<int>(record.losses.size())) {
    throw ValidationError("smoothed_loss: iteration " + std::to_string(iteration) +
                          " outside the recorded range");
  }
  const int from = std::max(0, iteration - window);
  double sum = 0.0;
  for (int k = from; k < iteration; ++k) sum += record.losses[k];
  return sum / (iteration - from);
}

std::string run_record_to_csv(const RunRecord& record) {
  CsvTable table({"iteration", "loss", "pixel_acc", "miou"});
  for (const auto& row : record.rows) {
    table.add_row({std::to_string(row.iteration), format_double(row.loss),
                   format_double(row.pixel_acc), format_double(row.miou)});
  }
  return table.str();
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json doc;
  doc["objective"] = {{"mode", std::string(to_string(cfg.objective.mode))},
                      {"prediction", std::string(to_string(cfg.objective.prediction))},
                      {"tau", cfg.objective.potential.tau},
                      {"epsilon", cfg.objective.potential.epsilon},
                      {"transform", std::string(to_string(cfg.objective.potential.transform))},
                      {"clip_norm", cfg.objective.potential.clip_norm},
                      {"t_clip", cfg.objective.t_clip}};
  doc["train"] = {{"mask", cfg.mask},
                  {"optimizer", std::string(to_string(cfg.optimizer))},
                  {"learning_rate", cfg.learning_rate},
                  {"beta1", cfg.beta1},
                  {"beta2", cfg.beta2},
                  {"adam_epsilon", cfg.adam_epsilon},
                  {"iterations", cfg.iterations},
                  {"batch_patches", cfg.batch_patches},
                  {"seed", cfg.seed},
                  {"eval_every", cfg.eval_every},
                  {"sample_steps", cfg.sample_steps},
                  {"accuracy_threshold", cfg.accuracy_threshold},
                  {"stop_at_threshold", cfg.stop_at_threshold}};
  const auto& m = cfg.model;
  doc["model"] = {{"state_dim", m.state_dim},         {"context_dim", m.context_dim},
                  {"backbone_hidden", m.backbone_hidden}, {"feature_dim", m.feature_dim},
                  {"hidden_dim", m.hidden_dim},       {"patch_size", m.dct.patch_size},
                  {"freqs", m.dct.freqs}};
  return doc.dump();
}

std::string run_record_sidecar(const RunRecord& record, const ToyTask& task) {
  nlohmann::json doc;
  doc["config"] = nlohmann::json::parse(record.config_json);
  doc["config_hash"] = record.config_hash;
  doc["task"] = {{"kind", std::string(to_string(task.kind))},
                 {"num_classes", task.num_classes},
                 {"height", task.height},
                 {"width", task.width},
                 {"dim", task.dim},
                 {"seed", task.seed},
                 {"ignore_fraction", task.ignore_fraction},
                 {"context_noise", task.context_noise}};
  doc["iterations_run"] = record.losses.size();
  doc["iterations_to_threshold"] =
      record.iterations_to_threshold ? nlohmann::json(*record.iterations_to_threshold)
                                     : nlohmann::json(nullptr);
  doc["version"] = version_string();
  return doc.dump(2) + "\n";
}

AuditReport stop_gradient_audit(const ToyTask& task, const TrainConfig& cfg) {
  cfg.validate();
  check_task_model(task, cfg.model);
  PixelFieldModel model(cfg.model);
  if (model.parameter_count() > 1000) {
    throw ValidationError("stop-gradient audit needs at most 1000 parameters, model has " +
                          std::to_string(model.parameter_count()));
  }
  model.init(cfg.seed);
  const int patch_size = cfg.model.dct.patch_size;
  const auto source = source_field(task);
  const auto target = encode_labels(task.labels, task.palette).field;

  // Every patch once, at deterministic mid-range times.
  std::mt19937_64 rng(cfg.seed ^ kTrainStream);
  std::uniform_real_distribution<double> time_dist(0.05, 0.95);
  std::vector<int> patches(patch_count(task, patch_size));
  std::iota(patches.begin(), patches.end(), 0);
  std::vector<double> times(patches.size());
  for (double& t : times) t = time_dist(rng);
  const auto batch = make_batch(task, source, target, patches, times, patch_size);

  const std::size_t np = model.parameter_count();
  std::vector<double> analytic(np, 0.0);
  const auto base = evaluate_batch(model, task, batch, cfg, analytic);
  const DetachedTarget frozen(base.target);

  const double h = 1e-6;
  std::vector<double> fd_fixed(np), fd_varying(np);
  auto params = model.parameters();
  for (std::size_t k = 0; k < np; ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double fixed_plus = evaluate_batch(model, task, batch, cfg, {}, &frozen).loss;
    const double vary_plus = evaluate_batch(model, task, batch, cfg, {}).loss;
    params[k] = saved - h;
    const double fixed_minus = evaluate_batch(model, task, batch, cfg, {}, &frozen).loss;
    const double vary_minus = evaluate_batch(model, task, batch, cfg, {}).loss;
    params[k] = saved;
    fd_fixed[k] = (fixed_plus - fixed_minus) / (2.0 * h);
    fd_varying[k] = (vary_plus - vary_minus) / (2.0 * h);
  }

  AuditReport report;
  report.parameter_count = np;
  report.fixed_target_rel_error = relative_error(analytic, fd_fixed);
  report.varying_target_rel_error = relative_error(analytic, fd_varying);
  report.max_correction_norm = base.max_correction_norm;
  report.fixed_target_agrees = report.fixed_target_rel_error <= 1e-4;
  report.varying_target_disagrees = report.varying_target_rel_error > 1e-3;
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<double> censored_median(const std::vector<std::optional<int>>& values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::vector<double> v;
  for (const auto& x : values) {
    v.push_back(x ? static_cast<double>(*x) : std::numeric_limits<double>::infinity());
  }
  const double m = median(std::move(v));
  if (std::isinf(m)) return std::nullopt;
  return m;
}

std::vector<AblationRow> ablation_matrix(const ToyTask& task_template, const TrainConfig& base,
                                         std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ValidationError("ablation needs at least one seed");
  TaskOptions options{task_template.dim, task_template.ignore_fraction,
                      task_template.context_noise};
  std::map<std::string, std::pair<double, std::optional<int>>> cache;
  std::vector<AblationRow> rows;
  for (auto mode : {ReshapeMode::kVanilla, ReshapeMode::kStatic, ReshapeMode::kAnnealing}) {
    for (auto prediction : {Prediction::kVelocity, Prediction::kEndpoint}) {
      for (bool mask : {true, false}) {
        for (auto transform :
             {TransformKind::kNegLog, TransformKind::kNegSqrt, TransformKind::kNegIdentity}) {
          AblationRow row;
          row.mode = mode;
          row.prediction = prediction;
          row.mask = mask;
          row.transform = transform;
          for (auto seed : seeds) {
            TrainConfig cfg = base;
            cfg.objective.mode = mode;
            cfg.objective.prediction = prediction;
            cfg.objective.potential.transform = transform;
            cfg.mask = mask;
            cfg.seed = seed;
            // The transform only matters once a potential is involved.
            const std::string key =
                std::string(to_string(mode)) + "/" + std::string(to_string(prediction)) + "/" +
                (mask ? "1" : "0") + "/" +
                (mode == ReshapeMode::kVanilla ? "-" : std::string(to_string(transform))) +
                "/" + std::to_string(seed);
            auto it = cache.find(key);
            if (it == cache.end()) {
              const auto task = make_task(task_template.kind, task_template.num_classes,
                                          task_template.height, task_template.width, seed, options);
              const auto result = train(task, cfg);
              it = cache.emplace(key, std::make_pair(result.record.rows.back().miou,
                                                     result.record.iterations_to_threshold))
                       .first;
            }
            row.final_miou.push_back(it->second.first);
            row.threshold_iter.push_back(it->second.second);
          }
          row.median_miou = median(row.final_miou);
          row.median_threshold_iter = censored_median(row.threshold_iter);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  CsvTable table({"mode", "prediction", "mask", "transform", "seeds", "median_miou",
                  "median_iters_to_threshold", "per_seed_miou"});
  for (const auto& row : rows) {
    std::string per_seed;
    for (std::size_t k = 0; k < row.final_miou.size(); ++k) {
      if (k) per_seed += ';';
      per_seed += format_double(row.final_miou[k]);
    }
    table.add_row({std::string(to_string(row.mode)), std::string(to_string(row.prediction)),
                   row.mask ? "on" : "off", std::string(to_string(row.transform)),
                   std::to_string(row.final_miou.size()), format_double(row.median_miou),
                   row.median_threshold_iter ? format_double(*row.median_threshold_iter) : "inf",
                   per_seed});
  }
  return table.str();
}

std::vector<StepEval> eval_run(const VelocityField& field, const ToyTask& task,
                               std::span<const int> steps) {
  if (steps.empty()) throw ValidationError("eval needs at least one step count");
  std::vector<StepEval> rows;
  for (int s : steps) {
    const auto acc = evaluate_field(field, task, s);
    rows.push_back({s, acc.miou, acc.pixel_acc});
  }
  return rows;
}

std::vector<StepEval> eval_run(const LoadedCheckpoint& checkpoint, const ToyTask& task,
                               std::span<const int> steps, Prediction prediction,
                               double t_clip) {
  if (checkpoint.palette_count != task.num_classes) {
    throw ValidationError("checkpoint palette has N = " + std::to_string(checkpoint.palette_count) +
                          " classes but the task has N = " + std::to_string(task.num_classes));
  }
  if (checkpoint.palette_dim != task.dim) {
    throw ValidationError("checkpoint palette has dim " + std::to_string(checkpoint.palette_dim) +
                          " but the task has dim " + std::to_string(task.dim));
  }
  return eval_run(model_velocity_field(checkpoint.model, task, prediction, t_clip), task, steps);
}

VelocityField exact_label_field(const ToyTask& task) {
  const auto x0 = source_field(task);
  const auto x1 = encode_labels(task.labels, task.palette);
  std::vector<double> velocity(x0.values.size(), 0.0);
  for (std::size_t i = 0; i < x0.pixels(); ++i) {
    if (!x1.valid[i]) continue;
    for (int k = 0; k < task.dim; ++k) {
      velocity[i * task.dim + k] = x1.field.pixel(i)[k] - x0.pixel(i)[k];
    }
  }
  return [velocity](std::span<const double>, double, std::span<double> v) {
    std::copy(velocity.begin(), velocity.end(), v.begin());
  };
}

std::string step_eval_to_csv(const std::vector<StepEval>& rows) {
  CsvTable table({"steps", "miou", "pixel_acc"});
  for (const auto& row : rows) {
    table.add_row({std::to_string(row.steps), format_double(row.miou), format_double(row.pixel_acc)});
  }
  return table.str();
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace dfm
