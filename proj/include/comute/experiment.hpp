#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "comute/chansim.hpp"
#include "comute/kv.hpp"
#include "comute/nn/network.hpp"
#include "comute/pipeline.hpp"

namespace comute {

struct ScenarioConfig {
  double area_width = 4.0;
  double area_height = 5.0;
  double cell_width = 1.0;
  std::size_t n_links = 9;
};

struct DatasetConfig {
  std::size_t images_per_location = 100;
  std::size_t window = 30;
  double multi_label_fraction = 0.2;
  std::size_t max_targets_in_training = 3;
  std::array<double, 3> split_ratio{0.6, 0.2, 0.2};
};

/// targets == 0 evaluates on the dataset's own test split; otherwise on
/// `images` held-out images with exactly `targets` targets each.
struct EvalConfig {
  std::size_t targets = 5;
  std::size_t images = 100;
};

struct SweepConfig {
  std::string variable = "eval.targets";
  std::vector<double> values{5};
};

/// A complete, validated experiment. Defaults are the desk-scale setup;
/// full_scale_defaults() swaps in the full-size window, subcarriers and training
/// schedule.
struct ExperimentConfig {
  ScenarioConfig scenario;
  ChannelParams channel;
  DatasetConfig dataset;
  nn::Architecture model;
  TrainConfig training;
  EvalConfig eval;
  SweepConfig sweep;
  std::filesystem::path output_dir = "results";
  std::uint64_t seed = 1;
  /// Write measured training time into results.csv. Off by default so
  /// reruns are byte-identical; timing.csv always has it.
  bool wall_clock = false;

  ExperimentConfig();
};

ExperimentConfig full_scale_defaults();

struct ConfigIssue {
  std::string key;
  std::string message;
};

class ConfigInvalid : public std::invalid_argument {
 public:
  explicit ConfigInvalid(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Overlays the keys of `doc` on `base`; unknown keys and unparsable values
/// are reported, not thrown.
ExperimentConfig parse_config(const kv::Document& doc, const ExperimentConfig& base,
                              std::vector<ConfigIssue>& issues);

/// Every invariant violation of a config, each with its key path.
std::vector<ConfigIssue> check_config(const ExperimentConfig& cfg);

/// Loads, defaults and checks a config file. Throws ConfigInvalid listing
/// every problem.
ExperimentConfig validate_config(const std::filesystem::path& path, bool full_scale = false);

/// Normalized key=value form; parse_config of it reproduces cfg.
kv::Document to_document(const ExperimentConfig& cfg);

/// FNV-1a of the normalized document text.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hex64(std::uint64_t v);

/// Names accepted by sweep.variable.
const std::vector<std::string>& sweep_variables();

/// Copy of cfg with the sweep variable set to `value`.
ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, double value);

DatasetSpec dataset_spec(const ExperimentConfig& cfg);

/// Content hash of the scenario, channel and dataset blocks plus the seed.
std::uint64_t dataset_hash(const ExperimentConfig& cfg);

/// Reads <cache_dir>/<dataset hash> if present, else synthesizes and stores it.
Dataset load_or_synthesize(const ExperimentConfig& cfg, const std::filesystem::path& cache_dir);

nn::Network<float> make_network(const ExperimentConfig& cfg, const Dataset& ds);

/// The images a sweep point is scored on.
std::vector<MltfImage> evaluation_images(const ExperimentConfig& cfg, const Dataset& ds);

struct PointResult {
  double sweep_value = 0;
  Evaluation evaluation;
  TrainResult training;
  double train_seconds = 0;
};

/// Hash of every key that influences training (all but eval, sweep, output).
std::uint64_t training_hash(const ExperimentConfig& cfg);

/// One sweep point end to end; writes train_log.csv and checkpoint/ under
/// dir. The network of `previous` is reused when its training hash matches.
PointResult run_point(const ExperimentConfig& cfg, double sweep_value,
                      const std::filesystem::path& dir, const std::filesystem::path& cache_dir,
                      const PointResult* previous = nullptr);

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

/// Runs every sweep value in order and writes results.csv, cdf.csv,
/// timing.csv, config.txt and points/<i>/ under cfg.output_dir.
std::filesystem::path run_experiment(const ExperimentConfig& cfg);

}  // namespace comute
