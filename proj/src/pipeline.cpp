#include "comute/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "comute/errors.hpp"
#include "comute/rng.hpp"

namespace comute {

namespace {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr Eigen::Index kInferenceChunk = 64;

MltfImage simulate_tagged(const DatasetSpec& spec, std::span<const GridIndex> targets,
                          StreamTag tag, std::uint64_t a, std::uint64_t b) {
  std::vector<Eigen::MatrixXd> dynamics;
  dynamics.reserve(spec.scenario.n_links);
  for (std::size_t m = 0; m < spec.scenario.n_links; ++m) {
    const auto packet_seed = derive_key({static_cast<std::uint64_t>(tag), spec.seed, a, b, m});
    const auto batch =
        simulate_batch(spec.channel, spec.scenario, m, targets, spec.window, packet_seed);
    dynamics.push_back(amplitude_dynamic(batch));
  }
  auto images = build_images(dynamics, LocationVector::from_grids(spec.scenario.n_grids, targets),
                             spec.window);
  return std::move(images.front());
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace

void DatasetSpec::validate() const {
  channel.validate();
  if (scenario.n_grids == 0 || scenario.n_links == 0) {
    throw std::invalid_argument("scenario has no grids or links");
  }
  if (images_per_location < 1) throw std::invalid_argument("images_per_location must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (!(multi_label_fraction >= 0.0 && multi_label_fraction <= 1.0)) {
    throw std::invalid_argument("multi_label_fraction must be in [0,1]");
  }
  double total = 0;
  for (double r : split_ratio) {
    if (!(r > 0)) throw std::invalid_argument("split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
}

std::vector<std::vector<GridIndex>> sample_patterns(std::size_t n_grids, std::size_t max_targets,
                                                    std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<GridIndex>> patterns;
  if (count == 0) return patterns;
  if (max_targets < 2 || n_grids < max_targets) {
    throw InsufficientCombinations("cannot draw patterns of 2.." + std::to_string(max_targets) +
                                   " targets from " + std::to_string(n_grids) + " grids");
  }
  CounterStream stream(StreamTag::kPatternSampler, {seed, n_grids, max_targets});
  std::vector<std::size_t> pool(n_grids);
  patterns.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = 2 + stream.below(max_targets - 1);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(pool[j], pool[j + stream.below(n_grids - j)]);
    }
    std::vector<GridIndex> pattern;
    for (std::size_t j = 0; j < k; ++j) pattern.push_back({pool[j]});
    std::sort(pattern.begin(), pattern.end());
    patterns.push_back(std::move(pattern));
  }
  return patterns;
}

MltfImage simulate_image(const DatasetSpec& spec, std::span<const GridIndex> targets,
                         std::uint64_t image_id) {
  return simulate_tagged(spec, targets, StreamTag::kPacketSeed, image_id, 0);
}

Dataset synthesize_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto n_grids = spec.scenario.n_grids;
  const auto n_single = n_grids * spec.images_per_location;
  const auto n_multi = static_cast<std::size_t>(
      std::ceil(spec.multi_label_fraction * static_cast<double>(n_single) - 1e-9));
  const auto patterns =
      sample_patterns(n_grids, spec.max_targets_in_training, n_multi, spec.seed);

  std::vector<MltfImage> all;
  all.reserve(n_single + n_multi);
  for (std::size_t n = 0; n < n_grids; ++n) {
    const GridIndex g{n};
    for (std::size_t i = 0; i < spec.images_per_location; ++i) {
      all.push_back(simulate_image(spec, std::span(&g, 1), n * spec.images_per_location + i));
    }
  }
  for (std::size_t j = 0; j < patterns.size(); ++j) {
    all.push_back(simulate_image(spec, patterns[j], n_single + j));
  }

  // Stratify by label pattern, in order of first appearance.
  std::map<LocationVector, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto [it, inserted] = group_of.try_emplace(all[i].label, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  Dataset ds;
  ds.shape = all.front().shape;
  ds.n_grids = n_grids;
  ds.seed = spec.seed;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& members = groups[gi];
    CounterStream stream(StreamTag::kSplit, {spec.seed, gi});
    for (std::size_t j = members.size(); j > 1; --j) {
      std::swap(members[j - 1], members[stream.below(j)]);
    }
    const double g = static_cast<double>(members.size());
    const auto n_train = std::min(members.size(), round_half_up(spec.split_ratio[0] * g));
    const auto n_val =
        std::min(members.size() - n_train, round_half_up(spec.split_ratio[1] * g));
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& dst = j < n_train ? ds.train : (j < n_train + n_val ? ds.val : ds.test);
      dst.push_back(std::move(all[members[j]]));
    }
  }

  ds.stats = compute_channel_stats(ds.train);
  normalize_in_place(ds.train, ds.stats);
  normalize_in_place(ds.val, ds.stats);
  normalize_in_place(ds.test, ds.stats);
  return ds;
}

std::vector<MltfImage> synthesize_eval_images(const DatasetSpec& spec, std::size_t k,
                                              std::size_t count, const ChannelStats& stats,
                                              std::uint64_t stream) {
  spec.validate();
  const auto n_grids = spec.scenario.n_grids;
  if (k < 1 || k > n_grids) throw InsufficientCombinations("target count outside [1, N]");
  CounterStream sampler(StreamTag::kEvalSet, {spec.seed, k, stream});
  std::vector<std::size_t> pool(n_grids);
  std::vector<MltfImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) std::swap(pool[j], pool[j + sampler.below(n_grids - j)]);
    std::vector<GridIndex> targets;
    for (std::size_t j = 0; j < k; ++j) targets.push_back({pool[j]});
    std::sort(targets.begin(), targets.end());
    out.push_back(simulate_tagged(spec, targets, StreamTag::kEvalSet, k * 1000003 + stream, i));
  }
  normalize_in_place(out, stats);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(threshold > 0 && threshold < 1)) throw std::invalid_argument("threshold must be in (0,1)");
}

nn::Matrix<float> stack_inputs(std::span<const MltfImage> images) {
  if (images.empty()) return {};
  const auto width = images.front().values.size();
  nn::Matrix<float> out(static_cast<Eigen::Index>(images.size()), width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].values.size() != width) throw ShapeMismatch("images differ in size");
    out.row(static_cast<Eigen::Index>(i)) = images[i].values.transpose();
  }
  return out;
}

nn::Matrix<float> stack_labels(std::span<const MltfImage> images) {
  if (images.empty()) return {};
  const auto n = images.front().label.size();
  nn::Matrix<float> out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].label.size() != n) throw ShapeMismatch("labels differ in length");
    for (std::size_t j = 0; j < n; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[i].label.bits[j];
    }
  }
  return out;
}

namespace {

// Inference-mode loss and probabilities over a stacked split.
double inference_loss(nn::Network<float>& net, const nn::Matrix<float>& inputs,
                      const nn::Matrix<float>& truth, nn::Matrix<float>* probabilities) {
  net.set_mode(nn::Mode::kInference);
  double total = 0;
  if (probabilities) probabilities->resize(inputs.rows(), truth.cols());
  for (Eigen::Index r0 = 0; r0 < inputs.rows(); r0 += kInferenceChunk) {
    const auto n = std::min(kInferenceChunk, inputs.rows() - r0);
    const nn::Matrix<float> probs = net.forward(inputs.middleRows(r0, n));
    total += net.loss(truth.middleRows(r0, n)) * static_cast<double>(n);
    if (probabilities) probabilities->middleRows(r0, n) = probs;
  }
  net.clear_cache();
  return total / static_cast<double>(inputs.rows());
}

double thresholded_f1(const nn::Matrix<float>& probs, std::span<const MltfImage> images,
                      double threshold) {
  std::vector<LocationVector> pred, truth;
  for (std::size_t i = 0; i < images.size(); ++i) {
    pred.push_back(threshold_probabilities(probs.row(static_cast<Eigen::Index>(i)).transpose(),
                                           threshold));
    truth.push_back(images[i].label);
  }
  return micro_f1(pred, truth).f1;
}

}  // namespace

TrainResult train(const Dataset& dataset, nn::Network<float> net, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.train.empty()) throw EmptyDataset("training split is empty");
  if (net.n_outputs() != dataset.n_grids) {
    throw ShapeMismatch("network output width differs from the number of grids");
  }
  if (net.input_shape() != dataset.shape) throw ShapeMismatch("network input shape differs");

  const auto train_x = stack_inputs(dataset.train);
  const auto train_y = stack_labels(dataset.train);
  const bool has_val = !dataset.val.empty();
  const auto val_x = has_val ? stack_inputs(dataset.val) : train_x;
  const auto val_y = has_val ? stack_labels(dataset.val) : train_y;
  std::span<const MltfImage> val_images = has_val ? std::span(dataset.val) : std::span(dataset.train);

  TrainResult result{net, {}, {}, 0, 0};
  result.optimizer.kind = cfg.optimizer;
  result.optimizer.learning_rate = cfg.learning_rate;
  if (cfg.max_epochs == 0) return result;

  auto best_params = net.get_parameters();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  const auto n = static_cast<std::size_t>(train_x.rows());
  std::vector<std::size_t> order(n);
  nn::Matrix<float> batch_x, batch_y;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterStream shuffle(StreamTag::kShuffle, {net.rng_seed(), epoch});
    for (std::size_t j = n; j > 1; --j) std::swap(order[j - 1], order[shuffle.below(j)]);

    net.set_mode(nn::Mode::kTraining);
    double train_loss = 0;
    for (std::size_t b0 = 0, batch_index = 0; b0 < n; b0 += cfg.batch_size, ++batch_index) {
      const auto bn = std::min(cfg.batch_size, n - b0);
      batch_x.resize(static_cast<Eigen::Index>(bn), train_x.cols());
      batch_y.resize(static_cast<Eigen::Index>(bn), train_y.cols());
      for (std::size_t i = 0; i < bn; ++i) {
        batch_x.row(Eigen::Index(i)) = train_x.row(Eigen::Index(order[b0 + i]));
        batch_y.row(Eigen::Index(i)) = train_y.row(Eigen::Index(order[b0 + i]));
      }
      net.forward(batch_x, derive_key({net.rng_seed(), epoch, batch_index}));
      train_loss += net.backward(batch_y) * static_cast<double>(bn);
      nn::optimizer_step(result.optimizer, net.params());
    }
    net.clear_cache();
    train_loss /= static_cast<double>(n);

    nn::Matrix<float> val_probs;
    const double val_loss = inference_loss(net, val_x, val_y, &val_probs);
    result.log.push_back({epoch, train_loss, val_loss,
                          thresholded_f1(val_probs, val_images, cfg.threshold)});

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best_params = net.get_parameters();
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
      break;
    }
  }
  net.set_parameters(best_params);
  net.set_mode(nn::Mode::kInference);
  result.network = std::move(net);
  return result;
}

nn::Matrix<float> predict(nn::Network<float>& net, std::span<const MltfImage> images) {
  const auto x = stack_inputs(images);
  net.set_mode(nn::Mode::kInference);
  nn::Matrix<float> probs(x.rows(), static_cast<Eigen::Index>(net.n_outputs()));
  for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += kInferenceChunk) {
    const auto n = std::min(kInferenceChunk, x.rows() - r0);
    probs.middleRows(r0, n) = net.forward(x.middleRows(r0, n));
  }
  net.clear_cache();
  return probs;
}

LocationVector threshold_probabilities(const Eigen::Ref<const Eigen::VectorXf>& probabilities,
                                       double threshold) {
  LocationVector v(static_cast<std::size_t>(probabilities.size()));
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    v.bits[static_cast<std::size_t>(i)] = static_cast<double>(probabilities[i]) > threshold;
  }
  return v;
}

LocationVector top_k(const Eigen::Ref<const Eigen::VectorXf>& probabilities, std::size_t k) {
  const auto n = static_cast<std::size_t>(probabilities.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return probabilities[Eigen::Index(a)] > probabilities[Eigen::Index(b)];
  });
  LocationVector v(n);
  for (std::size_t i = 0; i < std::min(k, n); ++i) v.bits[idx[i]] = 1;
  return v;
}

Localization localize(nn::Network<float>& net, const MltfImage& image, double threshold) {
  const auto probs = predict(net, std::span(&image, 1));
  Localization out;
  out.probabilities = probs.row(0).transpose();
  out.location = threshold_probabilities(out.probabilities, threshold);
  return out;
}

FingerprintBaseline::FingerprintBaseline(std::span<const MltfImage> train,
                                         const ChannelStats& stats, std::size_t n_grids)
    : stats_(stats) {
  std::vector<std::size_t> counts(n_grids, 0);
  for (const auto& img : train) {
    if (img.label.size() != n_grids) throw ShapeMismatch("label length differs from grid count");
    if (img.label.count() != 1) continue;
    const auto g = img.label.grids().front().index;
    const Eigen::VectorXd p = profile(img);
    if (templates_.size() == 0) templates_ = Eigen::MatrixXd::Zero(p.size(), Eigen::Index(n_grids));
    templates_.col(Eigen::Index(g)) += p;
    ++counts[g];
  }
  for (std::size_t g = 0; g < n_grids; ++g) {
    if (counts[g] == 0) {
      throw MissingGridTemplates("no single-target training image for grid " + std::to_string(g));
    }
    auto col = templates_.col(Eigen::Index(g));
    col /= static_cast<double>(counts[g]);
    const double norm = col.norm();
    if (norm > 0) col /= norm;
  }
}

Eigen::VectorXd FingerprintBaseline::profile(const MltfImage& image) const {
  const auto channels = static_cast<Eigen::Index>(image.shape.channels);
  Eigen::Map<const RowMatrixF> v(image.values.data(),
                                 static_cast<Eigen::Index>(image.shape.height),
                                 static_cast<Eigen::Index>(image.shape.width) * channels);
  // Time-average, then undo the per-link standardization to get dB.
  Eigen::VectorXd p = v.cast<double>().colwise().mean().transpose();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const auto c = i % channels;
    const double sd = stats_.stddev.size() ? stats_.stddev[c] : 1.0;
    const double mu = stats_.mean.size() ? stats_.mean[c] : 0.0;
    p[i] = p[i] * (sd > 0 ? sd : 1.0) + mu;
  }
  return p;
}

Eigen::VectorXd FingerprintBaseline::scores(const MltfImage& image) const {
  const Eigen::VectorXd p = profile(image);
  if (p.size() != templates_.rows()) throw ShapeMismatch("image does not match templates");
  const double norm = p.norm();
  Eigen::VectorXd s = templates_.transpose() * p;
  if (norm > 0) s /= norm;
  return s;
}

LocationVector FingerprintBaseline::localize(const MltfImage& image, std::size_t k_known) const {
  return top_k(scores(image).cast<float>(), k_known);
}

LocationVector nearest_fingerprint_baseline(std::span<const MltfImage> train,
                                            const ChannelStats& stats, const MltfImage& test,
                                            std::size_t k_known) {
  return FingerprintBaseline(train, stats, test.label.size()).localize(test, k_known);
}

Evaluation evaluate(nn::Network<float>& net, const FingerprintBaseline* baseline,
                    std::span<const MltfImage> images, const Scenario& scenario,
                    double threshold) {
  Evaluation ev;
  if (images.empty()) return ev;
  const auto probs = predict(net, images);
  std::vector<LocationVector> pred, truth;
  double baseline_total = 0;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXf p = probs.row(Eigen::Index(i)).transpose();
    const auto& label = images[i].label;
    pred.push_back(threshold_probabilities(p, threshold));
    truth.push_back(label);
    exact += pred.back() == label;
    ev.errors_thresholded.push_back(mean_distance_error(pred.back(), label, scenario));
    ev.errors_known_k.push_back(mean_distance_error(top_k(p, label.count()), label, scenario));
    if (baseline) {
      ev.errors_baseline.push_back(
          mean_distance_error(baseline->localize(images[i], label.count()), label, scenario));
      baseline_total += ev.errors_baseline.back();
    }
  }
  const auto counts = confusion_counts(pred, truth);
  const double n = static_cast<double>(images.size());
  ev.f1_micro = micro_f1(counts).f1;
  ev.hamming = hamming_loss(counts);
  ev.exact_match = static_cast<double>(exact) / n;
  ev.mde_thresholded =
      std::accumulate(ev.errors_thresholded.begin(), ev.errors_thresholded.end(), 0.0) / n;
  ev.mde_known_k = std::accumulate(ev.errors_known_k.begin(), ev.errors_known_k.end(), 0.0) / n;
  ev.baseline_mde = baseline ? baseline_total / n : 0.0;
  return ev;
}

}  // namespace comute
