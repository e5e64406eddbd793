#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "comute/chansim.hpp"
#include "comute/geometry.hpp"
#include "comute/metrics.hpp"
#include "comute/mltf.hpp"
#include "comute/nn/network.hpp"
#include "comute/nn/optimizer.hpp"

namespace comute {

/// Everything needed to regenerate a dataset bit for bit.
struct DatasetSpec {
  Scenario scenario;
  ChannelParams channel;
  std::size_t images_per_location = 100;
  std::size_t window = 90;
  double multi_label_fraction = 0.2;
  std::size_t max_targets_in_training = 3;
  std::array<double, 3> split_ratio{0.6, 0.2, 0.2};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Draws `count` target patterns: K uniform in [2, max_targets], then K
/// distinct grids uniformly without replacement, returned sorted. Throws
/// InsufficientCombinations when no pattern with K >= 2 fits in n_grids.
std::vector<std::vector<GridIndex>> sample_patterns(std::size_t n_grids, std::size_t max_targets,
                                                    std::size_t count, std::uint64_t seed);

/// One image for the given targets, from an independent recording of
/// `window` packets per link. `image_id` keys the packet noise.
MltfImage simulate_image(const DatasetSpec& spec, std::span<const GridIndex> targets,
                         std::uint64_t image_id);

/// images_per_location single-target images per grid plus
/// ceil(multi_label_fraction * N * images_per_location) multi-target images,
/// split 6:2:2 (by default) within each label pattern and standardized with
/// training-split channel statistics.
Dataset synthesize_dataset(const DatasetSpec& spec);

/// Held-out images with exactly k targets at uniformly drawn distinct grids,
/// standardized with `stats`. Keyed by (spec.seed, k, stream) and disjoint
/// from the training noise streams.
std::vector<MltfImage> synthesize_eval_images(const DatasetSpec& spec, std::size_t k,
                                              std::size_t count, const ChannelStats& stats,
                                              std::uint64_t stream = 0);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  std::size_t early_stop_patience = 30;
  double threshold = 0.5;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
};

struct TrainResult {
  nn::Network<float> network;
  nn::OptimizerState optimizer;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
};

/// Mini-batch training with a seeded shuffle per epoch and early stopping
/// on validation loss; returns the best-validation parameters. When the
/// validation split is empty the training loss is monitored instead.
TrainResult train(const Dataset& dataset, nn::Network<float> net, const TrainConfig& cfg);

/// Stacks image tensors into a batch matrix, one row per image.
nn::Matrix<float> stack_inputs(std::span<const MltfImage> images);
nn::Matrix<float> stack_labels(std::span<const MltfImage> images);

/// Inference-mode probabilities, one row per image.
nn::Matrix<float> predict(nn::Network<float>& net, std::span<const MltfImage> images);

struct Localization {
  LocationVector location;
  Eigen::VectorXf probabilities;
};

/// bits[n] = 1 iff probability[n] > threshold (strictly).
LocationVector threshold_probabilities(const Eigen::Ref<const Eigen::VectorXf>& probabilities,
                                       double threshold);

/// The k grids with highest probability; ties go to the lower index.
LocationVector top_k(const Eigen::Ref<const Eigen::VectorXf>& probabilities, std::size_t k);

Localization localize(nn::Network<float>& net, const MltfImage& image, double threshold);

/// Template-matching comparison method. Each grid's template is the mean
/// link-mean profile (time-averaged d x M dynamics, in dB) of its
/// single-target training images; a query is scored against every template
/// by cosine similarity and the best K grids are returned.
class FingerprintBaseline {
 public:
  /// Throws MissingGridTemplates if any grid lacks a single-target image.
  FingerprintBaseline(std::span<const MltfImage> train, const ChannelStats& stats,
                      std::size_t n_grids);

  Eigen::VectorXd scores(const MltfImage& image) const;
  LocationVector localize(const MltfImage& image, std::size_t k_known) const;

 private:
  Eigen::VectorXd profile(const MltfImage& image) const;

  ChannelStats stats_;
  Eigen::MatrixXd templates_;  // one unit-norm column per grid
};

LocationVector nearest_fingerprint_baseline(std::span<const MltfImage> train,
                                            const ChannelStats& stats, const MltfImage& test,
                                            std::size_t k_known);

/// Test-split summary of the CNN and the baseline.
struct Evaluation {
  double f1_micro = 0;
  double hamming = 0;
  double exact_match = 0;
  double mde_thresholded = 0;
  double mde_known_k = 0;
  double baseline_mde = 0;
  std::vector<double> errors_thresholded;
  std::vector<double> errors_known_k;
  std::vector<double> errors_baseline;
};

Evaluation evaluate(nn::Network<float>& net, const FingerprintBaseline* baseline,
                    std::span<const MltfImage> images, const Scenario& scenario,
                    double threshold);

}  // namespace comute
