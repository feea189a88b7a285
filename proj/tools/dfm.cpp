// Copyright 2026 The dfm Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Every subcommand that writes files also writes
// <first output>.manifest.json; `dfm rerun <manifest>` replays it.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfm/centroid_codec.hpp"
#include "dfm/config.hpp"
#include "dfm/errors.hpp"
#include "dfm/eval_metrics.hpp"
#include "dfm/gradcheck.hpp"
#include "dfm/io.hpp"
#include "dfm/neural_field.hpp"
#include "dfm/ode_sampler.hpp"
#include "dfm/toy_lab.hpp"
#include "json.hpp"

namespace {

using dfm::Config;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;

  // per subcommand
  int count = 0;
  int dim = 3;
  int label = 0;
  int radii = 25;
  std::string out;
  std::string palette_path;
  std::string checkpoint;
  std::string pred_path;
  std::string gt_path;
  std::string manifest_path;
  std::vector<int> steps;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

Config resolve_config(const Options& o) {
  Config c = o.config_path.empty() ? Config() : Config::load(o.config_path);
  for (const auto& s : o.overrides) c.set(s);
  return c;
}

std::string join_ints(const auto& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  return s;
}

// Records how to regenerate the outputs: subcommand arguments plus every
// resolved config value, so a rerun does not depend on the original config file.
class Manifest {
 public:
  Manifest(std::string subcommand, const Config& config)
      : subcommand_(std::move(subcommand)), config_(config) {}

  void arg(const std::string& flag, const std::string& value) { args_.push_back({flag, value}); }
  void input(const std::string& name, const std::string& path) { inputs_[name] = path; }
  void output(const std::string& name, const std::string& path) { outputs_[name] = path; }
  void seed(std::uint64_t s) { seed_ = s; }

  void write(const std::string& path) const {
    json doc;
    doc["subcommand"] = subcommand_;
    doc["version"] = dfm::version_string();
    doc["config"] = config_.values();
    doc["inputs"] = inputs_;
    doc["outputs"] = outputs_;
    doc["seed"] = seed_ ? json(*seed_) : json(nullptr);
    json args = json::array();
    for (const auto& [flag, value] : args_) args.push_back({flag, value});
    doc["args"] = args;
    dfm::write_file(path, doc.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  Config config_;
  std::vector<std::pair<std::string, std::string>> args_;
  std::map<std::string, std::string> inputs_, outputs_;
  std::optional<std::uint64_t> seed_;
};

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

int cmd_palette(const Options& o) {
  const Config config = resolve_config(o);
  const auto palette = dfm::build_palette(o.count, o.dim);
  dfm::save_palette(palette, o.out);
  Manifest m("palette", config);
  m.arg("--count", std::to_string(o.count));
  m.arg("--dim", std::to_string(o.dim));
  m.arg("--out", o.out);
  m.output("palette", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  const Config config = resolve_config(o);
  const auto params = dfm::potential_params(config);
  const int draws = config.get_int("gradcheck.draws");
  if (draws < 1) throw dfm::ValidationError("config key 'gradcheck.draws' must be positive");
  const auto suites = dfm::run_gradcheck(params, config.get_int("gradcheck.num_classes"),
                                         config.get_int("gradcheck.dim"), draws,
                                         config.get_u64("gradcheck.seed"));
  const auto report = dfm::gradcheck_report(suites);
  std::cout << report;
  if (!o.out.empty()) {
    dfm::write_file(o.out, report);
    Manifest m("gradcheck", config);
    m.arg("--out", o.out);
    m.output("report", o.out);
    m.seed(config.get_u64("gradcheck.seed"));
    m.write(manifest_path_for(o.out));
  }
  for (const auto& s : suites) {
    if (!s.passed()) {
      std::cerr << "gradcheck: suite " << s.name << " failed\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

int cmd_profile(const Options& o) {
  const Config config = resolve_config(o);
  const auto palette =
      o.palette_path.empty() ? dfm::two_centroid_fixture() : dfm::load_palette(o.palette_path);
  const int label = o.palette_path.empty() ? 1 : o.label;
  dfm::gradient_profile_cli(palette, label, dfm::potential_params(config), o.radii, o.out);
  Manifest m("profile", config);
  m.arg("--out", o.out);
  m.arg("--label", std::to_string(o.label));
  m.arg("--radii", std::to_string(o.radii));
  if (!o.palette_path.empty()) {
    m.arg("--palette", o.palette_path);
    m.input("palette", o.palette_path);
  }
  m.output("profile", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  const Config config = resolve_config(o);
  const auto fx = dfm::default_traversal_fixture();
  const auto rows = dfm::traversal_report(fx.palette, fx.target_label, fx.starts,
                                          dfm::sampler_steps(config),
                                          dfm::potential_params(config));
  dfm::write_file(o.out, dfm::traversal_to_csv(rows));
  Manifest m("simulate", config);
  m.arg("--out", o.out);
  m.output("traversal", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

int cmd_train(const Options& o) {
  const Config config = resolve_config(o);
  const auto task = dfm::task_from_config(config);
  const auto cfg = dfm::train_config(config);
  std::filesystem::create_directories(o.out);
  const std::filesystem::path dir(o.out);
  const auto result = dfm::train(task, cfg);

  const std::string run_csv = (dir / "run.csv").string();
  const std::string sidecar = (dir / "run.json").string();
  const std::string checkpoint = (dir / "checkpoint.json").string();
  const std::string palette = (dir / "palette.json").string();
  const std::string labels = (dir / "labels.pgm").string();
  const std::string ini = (dir / "config.ini").string();
  dfm::write_file(run_csv, dfm::run_record_to_csv(result.record));
  dfm::write_file(sidecar, dfm::run_record_sidecar(result.record, task));
  dfm::write_file(checkpoint, dfm::checkpoint_to_json(result.model, task.palette.dim(),
                                                      task.palette.count()));
  dfm::save_palette(task.palette, palette);
  dfm::save_label_map(task.labels, labels);
  dfm::write_file(ini, config.to_ini());

  const auto& last = result.record.rows.back();
  std::cout << "final pixel_acc=" << dfm::format_double(last.pixel_acc)
            << " miou=" << dfm::format_double(last.miou) << " iterations_to_threshold="
            << (result.record.iterations_to_threshold
                    ? std::to_string(*result.record.iterations_to_threshold)
                    : std::string("none"))
            << "\n";

  Manifest m("train", config);
  m.arg("--out", o.out);
  m.seed(cfg.seed);
  m.output("run_csv", run_csv);
  m.output("run_json", sidecar);
  m.output("checkpoint", checkpoint);
  m.output("palette", palette);
  m.output("labels", labels);
  m.output("config", ini);
  m.write((dir / "manifest.json").string());
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const Config config = resolve_config(o);
  const auto task = dfm::task_from_config(config);
  const auto cfg = dfm::train_config(config);
  const auto rows = dfm::ablation_matrix(task, cfg, o.seeds);
  dfm::write_file(o.out, dfm::ablation_to_csv(rows));
  Manifest m("ablate", config);
  m.arg("--out", o.out);
  m.arg("--seeds", join_ints(o.seeds));
  m.output("ablation", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

dfm::LoadedCheckpoint load_checked(const std::string& path, const dfm::ToyTask& task) {
  auto ckpt = dfm::checkpoint_from_json(dfm::read_file(path));
  if (ckpt.palette_count != task.num_classes) {
    throw dfm::ValidationError("checkpoint palette has N = " + std::to_string(ckpt.palette_count) +
                               " classes but task.num_classes is " +
                               std::to_string(task.num_classes));
  }
  if (ckpt.palette_dim != task.dim) {
    throw dfm::ValidationError("checkpoint palette has dim " + std::to_string(ckpt.palette_dim) +
                               " but task.dim is " + std::to_string(task.dim));
  }
  return ckpt;
}

int cmd_sample(const Options& o) {
  const Config config = resolve_config(o);
  const auto task = dfm::task_from_config(config);
  const auto flow = dfm::reshape_config(config);
  const auto ckpt = load_checked(o.checkpoint, task);
  const int steps = o.steps.empty() ? dfm::sampler_steps(config) : o.steps.front();
  dfm::PixelField endpoint;
  dfm::evaluate_field(dfm::model_velocity_field(ckpt.model, task, flow.prediction, flow.t_clip),
                      task, steps, &endpoint);
  const auto decoded = dfm::decode_nearest(endpoint, task.palette);
  dfm::save_label_map(decoded.labels, o.out);
  Manifest m("sample", config);
  m.arg("--checkpoint", o.checkpoint);
  m.arg("--out", o.out);
  m.arg("--steps", std::to_string(steps));
  m.input("checkpoint", o.checkpoint);
  m.output("labels", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const Config config = resolve_config(o);
  Manifest m("eval", config);
  m.arg("--out", o.out);
  if (!o.pred_path.empty() || !o.gt_path.empty()) {
    if (o.pred_path.empty() || o.gt_path.empty()) {
      throw dfm::ValidationError("eval on label maps needs both --pred and --gt");
    }
    const auto gt = dfm::load_label_map(o.gt_path);
    const auto pred = dfm::load_label_map(o.pred_path);
    dfm::ConfusionMatrix cm(config.get_int("task.num_classes"));
    dfm::accumulate(cm, gt, pred);
    dfm::write_file(o.out, dfm::metrics_to_json(dfm::miou(cm)));
    m.arg("--pred", o.pred_path);
    m.arg("--gt", o.gt_path);
    m.input("pred", o.pred_path);
    m.input("gt", o.gt_path);
  } else {
    if (o.checkpoint.empty()) throw dfm::ValidationError("eval needs --checkpoint or --pred/--gt");
    const auto task = dfm::task_from_config(config);
    const auto flow = dfm::reshape_config(config);
    const auto ckpt = dfm::checkpoint_from_json(dfm::read_file(o.checkpoint));
    const std::vector<int> steps =
        o.steps.empty() ? std::vector<int>{dfm::sampler_steps(config)} : o.steps;
    const auto rows = dfm::eval_run(ckpt, task, steps, flow.prediction, flow.t_clip);
    dfm::write_file(o.out, dfm::step_eval_to_csv(rows));
    m.arg("--checkpoint", o.checkpoint);
    m.arg("--steps", join_ints(steps));
    m.input("checkpoint", o.checkpoint);
  }
  m.output("report", o.out);
  m.write(manifest_path_for(o.out));
  return kExitOk;
}

void add_config_options(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "INI config file")->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "override, section.key=value (repeatable)");
}

int run(int argc, char** argv);

int cmd_rerun(const Options& o) {
  json doc;
  try {
    doc = json::parse(dfm::read_file(o.manifest_path));
  } catch (const json::exception& e) {
    throw dfm::IoError("manifest " + o.manifest_path + ": " + e.what());
  }
  std::vector<std::string> args{"dfm"};
  try {
    args.push_back(doc.at("subcommand").get<std::string>());
    for (const auto& pair : doc.at("args")) {
      args.push_back(pair.at(0).get<std::string>());
      args.push_back(pair.at(1).get<std::string>());
    }
    for (const auto& [key, value] : doc.at("config").items()) {
      args.push_back("--set");
      args.push_back(key + "=" + value.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw dfm::IoError("manifest " + o.manifest_path + ": " + e.what());
  }
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
  CLI::App app{"discriminative flow matching toolkit"};
  app.set_version_flag("--version", dfm::version_string());
  app.require_subcommand(1);
  Options o;

  auto* palette = app.add_subcommand("palette", "write a centroid palette as JSON");
  palette->add_option("-N,--count", o.count, "number of classes")->required();
  palette->add_option("-d,--dim", o.dim, "centroid dimension");
  palette->add_option("-o,--out", o.out, "output JSON")->required();
  add_config_options(palette, o);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of the analytic gradients");
  gradcheck->add_option("-o,--out", o.out, "optional CSV report");
  add_config_options(gradcheck, o);

  auto* profile = app.add_subcommand("profile", "potential-gradient norm versus radius");
  profile->add_option("-o,--out", o.out, "output CSV")->required();
  profile->add_option("--palette", o.palette_path, "palette JSON (default: 1D {-1, +1})");
  profile->add_option("--label", o.label, "target class when --palette is given");
  profile->add_option("--radii", o.radii, "number of log-spaced radii");
  add_config_options(profile, o);

  auto* simulate = app.add_subcommand("simulate", "oracle trajectories past a nearby competitor");
  simulate->add_option("-o,--out", o.out, "output CSV")->required();
  add_config_options(simulate, o);

  auto* train = app.add_subcommand("train", "train the pixel field on a toy task");
  train->add_option("-o,--out", o.out, "output directory")->required();
  add_config_options(train, o);

  auto* ablate = app.add_subcommand("ablate", "mode x prediction x mask x transform matrix");
  ablate->add_option("-o,--out", o.out, "output CSV")->required();
  ablate->add_option("--seeds", o.seeds, "seed list")->delimiter(',');
  add_config_options(ablate, o);

  auto* sample = app.add_subcommand("sample", "sample a label map from a checkpoint");
  sample->add_option("--checkpoint", o.checkpoint, "checkpoint JSON")->required();
  sample->add_option("-o,--out", o.out, "output label map (.pgm or .csv)")->required();
  sample->add_option("--steps", o.steps, "Euler steps")->delimiter(',');
  add_config_options(sample, o);

  auto* eval = app.add_subcommand("eval", "score a checkpoint per step count, or a label map pair");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint JSON");
  eval->add_option("--steps", o.steps, "comma-separated Euler step counts")->delimiter(',');
  eval->add_option("--pred", o.pred_path, "predicted label map");
  eval->add_option("--gt", o.gt_path, "ground-truth label map");
  eval->add_option("-o,--out", o.out, "output CSV (checkpoint) or JSON (label maps)")->required();
  add_config_options(eval, o);

  auto* rerun = app.add_subcommand("rerun", "replay a run manifest");
  rerun->add_option("manifest", o.manifest_path, "manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (palette->parsed()) return cmd_palette(o);
  if (gradcheck->parsed()) return cmd_gradcheck(o);
  if (profile->parsed()) return cmd_profile(o);
  if (simulate->parsed()) return cmd_simulate(o);
  if (train->parsed()) return cmd_train(o);
  if (ablate->parsed()) return cmd_ablate(o);
  if (sample->parsed()) return cmd_sample(o);
  if (eval->parsed()) return cmd_eval(o);
  return cmd_rerun(o);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dfm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const dfm::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const dfm::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}
