#include <gtest/gtest.h>

#include <map>
#include <set>

#include "comute/errors.hpp"
#include "comute/pipeline.hpp"
#include "support.hpp"

using namespace comute;

namespace {

// Tiny tensors so dataset bookkeeping tests run in milliseconds.
DatasetSpec small_spec(double W, double H, std::size_t links, std::size_t ipl, double fraction) {
  DatasetSpec spec;
  spec.scenario = build_scenario(W, H, 1, links);
  spec.channel.subcarriers_per_pair = 2;
  spec.channel.antenna_pairs = 1;
  spec.window = 2;
  spec.images_per_location = ipl;
  spec.multi_label_fraction = fraction;
  spec.max_targets_in_training = 3;
  return spec;
}

std::string content_key(const MltfImage& img) {
  return std::string(reinterpret_cast<const char*>(img.values.data()),
                     std::size_t(img.values.size()) * sizeof(float));
}

nn::Network<float> small_net(const Dataset& ds, std::uint64_t seed, double dropout = 0.0) {
  return nn::Network<float>(ds.shape, nn::build_layer_specs({1, 4, 3, 16, dropout}, ds.n_grids),
                            seed);
}

}  // namespace

TEST(Sampler, PatternsHaveTwoToMaxDistinctSortedGrids) {
  const auto patterns = sample_patterns(9, 3, 500, 4);
  ASSERT_EQ(patterns.size(), 500u);
  for (const auto& p : patterns) {
    EXPECT_GE(p.size(), 2u);
    EXPECT_LE(p.size(), 3u);
    EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
    EXPECT_EQ(std::set<GridIndex>(p.begin(), p.end()).size(), p.size());
    for (auto g : p) EXPECT_LT(g.index, 9u);
  }
  EXPECT_EQ(patterns, sample_patterns(9, 3, 500, 4));
}

TEST(Sampler, HistogramMatchesUniformDraws) {
  // K is uniform over {2, 3}; given K every one of C(5, K) = 10 subsets is
  // equally likely, so each pattern has probability 1/20.
  const std::size_t count = 40000;
  const auto patterns = sample_patterns(5, 3, count, 8);
  std::map<std::vector<GridIndex>, std::size_t> hist;
  std::size_t pairs = 0;
  for (const auto& p : patterns) {
    ++hist[p];
    pairs += p.size() == 2;
  }
  EXPECT_EQ(hist.size(), 20u);
  const double n = double(count);
  EXPECT_NEAR(double(pairs), n / 2, 5 * std::sqrt(n / 4));
  const double p = 1.0 / 20.0, sd = std::sqrt(n * p * (1 - p));
  for (const auto& [pattern, c] : hist) EXPECT_NEAR(double(c), n * p, 5 * sd);
}

TEST(Sampler, RejectsImpossibleCardinalities) {
  EXPECT_THROW(sample_patterns(2, 3, 1, 1), InsufficientCombinations);
  EXPECT_THROW(sample_patterns(9, 1, 1, 1), InsufficientCombinations);
  EXPECT_TRUE(sample_patterns(1, 3, 0, 1).empty());
}

TEST(Dataset, SplitCountsFollowTheRatios) {
  const auto ds = synthesize_dataset(small_spec(4, 5, 9, 100, 0.0));
  EXPECT_EQ(ds.train.size(), 1200u);
  EXPECT_EQ(ds.val.size(), 400u);
  EXPECT_EQ(ds.test.size(), 400u);
  EXPECT_EQ(ds.shape, (ImageShape{2, 2, 9}));
}

TEST(Dataset, SplitsAreDisjointAndStratified) {
  const auto ds = synthesize_dataset(small_spec(3, 3, 4, 10, 0.2));
  std::set<std::string> seen;
  std::size_t total = 0;
  std::map<LocationVector, std::size_t> per_grid_train;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& img : *split) {
      seen.insert(content_key(img));
      ++total;
    }
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(total, 90u + 18u);
  for (const auto& img : ds.train) {
    if (img.label.count() == 1) ++per_grid_train[img.label];
  }
  ASSERT_EQ(per_grid_train.size(), 9u);
  for (const auto& [label, c] : per_grid_train) EXPECT_EQ(c, 6u);
}

TEST(Dataset, MultiTargetLabelsAreTheSampledPatterns) {
  const auto spec = small_spec(3, 3, 4, 10, 0.25);
  const auto ds = synthesize_dataset(spec);
  std::multiset<LocationVector> labels;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& img : *split) {
      if (img.label.count() > 1) labels.insert(img.label);
    }
  }
  std::multiset<LocationVector> want;
  for (const auto& p : sample_patterns(9, 3, 23, spec.seed)) {
    want.insert(LocationVector::from_grids(9, p));
  }
  EXPECT_EQ(labels, want);
}

TEST(Dataset, SingleGridAreaLabelsEveryImageOne) {
  const auto ds = synthesize_dataset(small_spec(1, 1, 1, 10, 0.0));
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& img : *split) EXPECT_EQ(img.label.bits, std::vector<std::uint8_t>{1});
  }
}

TEST(Dataset, TrainingSplitIsStandardized) {
  const auto ds = synthesize_dataset(small_spec(3, 3, 4, 10, 0.2));
  const auto stats = compute_channel_stats(ds.train);
  for (Eigen::Index c = 0; c < stats.mean.size(); ++c) {
    EXPECT_NEAR(stats.mean[c], 0.0, 1e-5);
    EXPECT_NEAR(stats.stddev[c], 1.0, 1e-5);
  }
}

TEST(Dataset, SynthesisIsDeterministic) {
  const auto spec = small_spec(3, 3, 4, 5, 0.2);
  const auto a = synthesize_dataset(spec), b = synthesize_dataset(spec);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].values, b.test[i].values);
}

TEST(Localize, ThresholdExamples) {
  Eigen::VectorXf p(3);
  p << 0.5f, 0.5f, 0.5f;
  EXPECT_EQ(threshold_probabilities(p, 0.5).count(), 0u);
  p << 0.9f, 0.2f, 0.7f;
  EXPECT_EQ(threshold_probabilities(p, 0.5).bits, (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Localize, HigherThresholdNeverAddsGrids) {
  auto s = testing_support::stream(3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXf p(12);
    for (auto& v : p) v = float(s.uniform());
    for (double lo = 0.05; lo < 0.95; lo += 0.1) {
      const auto a = threshold_probabilities(p, lo), b = threshold_probabilities(p, lo + 0.1);
      for (std::size_t n = 0; n < 12; ++n) EXPECT_LE(b.bits[n], a.bits[n]);
    }
  }
}

TEST(Localize, TopKBreaksTiesTowardLowerIndex) {
  Eigen::VectorXf p(4);
  p << 0.3f, 0.8f, 0.3f, 0.1f;
  EXPECT_EQ(top_k(p, 2).bits, (std::vector<std::uint8_t>{1, 1, 0, 0}));
  EXPECT_EQ(top_k(p, 9).count(), 4u);
}

TEST(Baseline, NoiselessQueriesMatchTheirOwnGrid) {
  // Noiseless single-target queries are exact matches of their templates.
  auto spec = small_spec(3, 3, 4, 10, 0.0);
  spec.channel.noise_std = 0;
  spec.channel.subcarriers_per_pair = 10;
  const auto clean = synthesize_dataset(spec);
  const FingerprintBaseline exact(clean.train, clean.stats, clean.n_grids);
  for (const auto* split : {&clean.train, &clean.test}) {
    for (const auto& img : *split) EXPECT_EQ(exact.localize(img, 1), img.label);
  }
  const auto scores = exact.scores(clean.test.front());
  EXPECT_NEAR(scores.maxCoeff(), 1.0, 1e-6);
}

TEST(Baseline, NeedsATemplateForEveryGrid) {
  auto ds = synthesize_dataset(small_spec(3, 3, 4, 5, 0.0));
  std::erase_if(ds.train, [](const MltfImage& img) { return img.label.bits[4] == 1; });
  EXPECT_THROW(FingerprintBaseline(ds.train, ds.stats, ds.n_grids), MissingGridTemplates);
}

TEST(Training, ZeroEpochsReturnsTheInitialNetwork) {
  const auto ds = synthesize_dataset(small_spec(3, 3, 4, 5, 0.0));
  auto net = small_net(ds, 3);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto r = train(ds, net, cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.network.get_parameters(), net.get_parameters());
}

TEST(Training, SingleGridLearnsTheConstantLabel) {
  const auto ds = synthesize_dataset(small_spec(1, 1, 1, 20, 0.0));
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.learning_rate = 1e-2;
  const auto r = train(ds, small_net(ds, 1), cfg);
  EXPECT_LT(r.log.back().train_loss, 1e-2);
}

TEST(Training, IsDeterministicAndRestoresTheBestEpoch) {
  const auto ds = synthesize_dataset(small_spec(3, 3, 4, 10, 0.2));
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.early_stop_patience = 3;
  const auto a = train(ds, small_net(ds, 5, 0.3), cfg);
  const auto b = train(ds, small_net(ds, 5, 0.3), cfg);
  EXPECT_EQ(a.network.get_parameters(), b.network.get_parameters());
  ASSERT_FALSE(a.log.empty());
  double best = 1e300;
  for (const auto& e : a.log) best = std::min(best, e.val_loss);
  EXPECT_EQ(a.best_val_loss, best);
  EXPECT_EQ(a.log[a.best_epoch - 1].val_loss, best);
  // Stopping happens no later than patience epochs after the best one.
  EXPECT_LE(a.log.size(), std::min<std::size_t>(cfg.max_epochs, a.best_epoch + 3));
}

TEST(Training, RejectsMismatchedNetworks) {
  const auto ds = synthesize_dataset(small_spec(3, 3, 4, 5, 0.0));
  nn::Network<float> wrong(ds.shape, nn::build_layer_specs({1, 2, 3, 4, 0}, 5), 1);
  EXPECT_THROW(train(ds, wrong, {}), ShapeMismatch);
  Dataset empty = ds;
  empty.train.clear();
  EXPECT_THROW(train(empty, small_net(ds, 1), {}), EmptyDataset);
}

TEST(Training, LearnedNetworkLocalizesACleanSingleTarget) {
  DatasetSpec spec;
  spec.scenario = build_scenario(3, 3, 1, 4);
  spec.channel.subcarriers_per_pair = 10;
  spec.window = 10;
  spec.images_per_location = 30;
  spec.multi_label_fraction = 0;
  const auto ds = synthesize_dataset(spec);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.early_stop_patience = 10;
  auto r = train(ds, small_net(ds, 2), cfg);

  auto clean = spec;
  clean.channel.noise_std = 0;
  const GridIndex g{3};
  auto img = simulate_image(clean, std::span(&g, 1), 0);
  normalize_in_place(std::span(&img, 1), ds.stats);
  EXPECT_EQ(localize(r.network, img, 0.5).location, LocationVector::one_hot(9, 3));
}
