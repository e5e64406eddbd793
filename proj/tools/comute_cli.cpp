#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "comute/errors.hpp"
#include "comute/experiment.hpp"
#include "comute/nn/checkpoint.hpp"
#include "comute/nn/gradcheck.hpp"
#include "comute/rng.hpp"

namespace fs = std::filesystem;
using namespace comute;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool full_scale = false;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = validate_config(o.config, o.full_scale);
  } else if (o.full_scale) {
    cfg = full_scale_defaults();
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (auto issues = check_config(cfg); !issues.empty()) throw ConfigInvalid(std::move(issues));
  return cfg;
}

// Single-point commands use the first sweep value.
ExperimentConfig first_point(const ExperimentConfig& cfg) {
  return apply_sweep_value(cfg, cfg.sweep.values.front());
}

std::string row(const Evaluation& e) {
  return kv::format_double(e.f1_micro) + ',' + kv::format_double(e.hamming) + ',' +
         kv::format_double(e.mde_thresholded) + ',' + kv::format_double(e.mde_known_k) + ',' +
         kv::format_double(e.baseline_mde);
}

int cmd_synth(const ExperimentConfig& cfg) {
  const auto point = first_point(cfg);
  const auto ds = load_or_synthesize(point, cfg.output_dir / "cache");
  write_dataset(cfg.output_dir / "dataset", ds);
  std::printf("dataset %s: %zu train, %zu val, %zu test images of %zux%zux%zu, N=%zu\n",
              hex64(dataset_hash(point)).c_str(), ds.train.size(), ds.val.size(), ds.test.size(),
              ds.shape.height, ds.shape.width, ds.shape.channels, ds.n_grids);
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const auto point = first_point(cfg);
  const auto ds = load_or_synthesize(point, cfg.output_dir / "cache");
  auto result = train(ds, make_network(point, ds), point.training);
  write_training_log(cfg.output_dir / "train_log.csv", result.log);
  nn::write_checkpoint(cfg.output_dir / "checkpoint", result.network, result.optimizer);
  std::printf("trained %zu epochs, best epoch %zu, val loss %.6g\n", result.log.size(),
              result.best_epoch, result.best_val_loss);
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
  const auto point = first_point(cfg);
  const auto ds = load_or_synthesize(point, cfg.output_dir / "cache");
  auto ckpt = nn::read_checkpoint(cfg.output_dir / "checkpoint");
  const FingerprintBaseline baseline(ds.train, ds.stats, ds.n_grids);
  const auto images = evaluation_images(point, ds);
  const auto e = evaluate(ckpt.network, &baseline, images, dataset_spec(point).scenario,
                          point.training.threshold);
  kv::write_file(cfg.output_dir / "eval.csv",
                 "f1_micro,hamming_loss,mde_thresholded,mde_known_k,baseline_mde\n" + row(e) + "\n");
  std::printf("f1_micro=%.4f hamming=%.4f mde=%.3f mde_known_k=%.3f baseline_mde=%.3f\n",
              e.f1_micro, e.hamming, e.mde_thresholded, e.mde_known_k, e.baseline_mde);
  return 0;
}

int cmd_baseline(const ExperimentConfig& cfg) {
  const auto point = first_point(cfg);
  const auto ds = load_or_synthesize(point, cfg.output_dir / "cache");
  const FingerprintBaseline baseline(ds.train, ds.stats, ds.n_grids);
  const auto scenario = dataset_spec(point).scenario;
  const auto images = evaluation_images(point, ds);
  std::string out = "instance,k,error_m\n";
  double total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto k = images[i].label.count();
    const double err = mean_distance_error(baseline.localize(images[i], k), images[i].label,
                                           scenario);
    total += err;
    out += std::to_string(i) + ',' + std::to_string(k) + ',' + kv::format_double(err) + '\n';
  }
  kv::write_file(cfg.output_dir / "baseline.csv", out);
  std::printf("baseline mde=%.3f over %zu images\n",
              images.empty() ? 0.0 : total / double(images.size()), images.size());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  using nn::LayerSpec;
  nn::Network<double> net({8, 8, 2},
                          {LayerSpec::conv2d(3, 2), LayerSpec::relu(), LayerSpec::flatten(),
                           LayerSpec::dense(3), LayerSpec::sigmoid()},
                          seed);
  CounterStream stream(StreamTag::kEvalSet, {seed, 0x6763});
  nn::Matrix<double> x(2, 8 * 8 * 2), y(2, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = stream.normal();
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = double(stream.below(2));
  const auto report = nn::gradient_check(net, x, y, 1e-5, 1e-4);
  std::printf("gradcheck: %zu parameters, max relative error %.3e at %zu: %s\n", report.checked,
              report.max_relative_error, report.worst_index, report.passed ? "PASS" : "FAIL");
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-free multi-target localization experiments on synthetic CSI"};
  app.require_subcommand(1);
  Options opts;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "global seed");
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_flag("--paper-scale", opts.full_scale, "full-size window, subcarriers and schedule");
  };
  auto* synth = app.add_subcommand("synth", "synthesize (or load cached) dataset");
  auto* train_cmd = app.add_subcommand("train", "train a network and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate the checkpoint in --out");
  auto* sweep = app.add_subcommand("sweep", "run every sweep value and write results.csv");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of backprop");
  auto* baseline = app.add_subcommand("baseline", "evaluate the fingerprint baseline");
  for (auto* cmd : {synth, train_cmd, eval, sweep, gradcheck, baseline}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(opts.seed.value_or(1));
    const auto cfg = load(opts);
    if (synth->parsed()) return cmd_synth(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (baseline->parsed()) return cmd_baseline(cfg);
    if (sweep->parsed()) {
      const auto dir = run_experiment(cfg);
      std::printf("wrote %s\n", (dir / "results.csv").string().c_str());
      return 0;
    }
  } catch (const ConfigInvalid& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
