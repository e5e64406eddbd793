#include <gtest/gtest.h>

#include <complex>
#include <numbers>

#include "comute/chansim.hpp"
#include "comute/errors.hpp"
#include "comute/rng.hpp"
#include "support.hpp"

using namespace comute;

namespace {

ChannelParams desk_params() {
  ChannelParams p;
  p.subcarriers_per_pair = 10;
  return p;
}

// Tap response written out independently: draws read straight from the stream.
Eigen::VectorXd reference_baseline(const ChannelParams& p, std::size_t link) {
  CounterStream stream(StreamTag::kBaselineTaps, {p.seed, link});
  const std::size_t d = p.d();
  std::vector<std::complex<double>> h(d, {1.0, 0.0});
  for (std::size_t j = 1; j < p.baseline_taps; ++j) {
    const double gain = stream.uniform(0.05, 0.6) / double(p.baseline_taps - 1);
    const double delay = stream.uniform(0.0, 8.0);
    const double phase = stream.uniform(0.0, 2 * std::numbers::pi);
    for (std::size_t k = 0; k < d; ++k) {
      const double angle = phase - 2 * std::numbers::pi * delay * double(k) / double(d);
      h[k] += gain * std::complex<double>(std::cos(angle), std::sin(angle));
    }
  }
  Eigen::VectorXd out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = 20 * std::log10(std::abs(h[k]));
  return out;
}

// Grid and link pair whose cell center lies on the line of sight.
std::pair<std::size_t, GridIndex> on_los(const Scenario& s) {
  for (std::size_t m = 0; m < s.n_links; ++m) {
    for (std::size_t g = 0; g < s.n_grids; ++g) {
      const Point c = grid_center(s, {g});
      if (point_to_segment_distance(c, s.ap_positions[m], s.dp_positions[m]) < 1e-12) {
        return {m, GridIndex{g}};
      }
    }
  }
  throw std::logic_error("no cell center on a line of sight");
}

}  // namespace

TEST(Chansim, SingleTapBaselineIsFlatZeroDb) {
  const Tap los{};
  const auto b = baseline_from_taps(std::span(&los, 1), 90);
  EXPECT_LT(b.cwiseAbs().maxCoeff(), 1e-12);

  ChannelParams p;
  p.baseline_taps = 1;
  const auto s = build_scenario(3, 3, 1, 4);
  EXPECT_LT(baseline_amplitude(p, s, 2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Chansim, BaselineMatchesIndependentTapSum) {
  const auto s = build_scenario(4, 5, 1, 9);
  ChannelParams p;
  for (std::size_t link = 0; link < s.n_links; ++link) {
    const auto got = baseline_amplitude(p, s, link);
    const auto want = reference_baseline(p, link);
    ASSERT_EQ(got.size(), 90);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-9) << "link " << link;
  }
}

TEST(Chansim, BaselineIsDeterministicAndLinkSpecific) {
  const auto s = build_scenario(4, 5, 1, 9);
  const auto p = desk_params();
  EXPECT_EQ(baseline_amplitude(p, s, 3), baseline_amplitude(p, s, 3));
  EXPECT_NE(baseline_amplitude(p, s, 3), baseline_amplitude(p, s, 4));
  EXPECT_THROW(baseline_amplitude(p, s, 9), IndexOutOfRange);
}

TEST(Chansim, NoTargetsNoEffect) {
  const auto s = build_scenario(3, 3, 1, 4);
  const auto e = target_effect(desk_params(), s, 0, {});
  EXPECT_EQ(e.size(), 30);
  EXPECT_EQ(e.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Chansim, OnLineOfSightMeanEffect) {
  const auto s = build_scenario(3, 3, 1, 4);
  const auto p = desk_params();
  const auto [link, g] = on_los(s);
  const auto e = target_effect(p, s, link, std::span(&g, 1));
  EXPECT_NEAR(e.mean(), -p.diffraction_amp + p.scatter_amp, 1e-9);
}

TEST(Chansim, ProfilesHaveUnitMean) {
  const auto p = desk_params();
  for (std::size_t g = 0; g < 9; ++g) {
    for (bool diff : {true, false}) {
      const auto prof = spectral_profile(p, 1, {g}, diff);
      EXPECT_NEAR(prof.mean(), 1.0, 1e-12);
    }
  }
}

TEST(Chansim, EffectsAddAcrossTargets) {
  const auto s = build_scenario(4, 5, 1, 9);
  const auto p = desk_params();
  const std::vector<GridIndex> both{{3}, {11}};
  for (std::size_t link = 0; link < s.n_links; ++link) {
    const Eigen::VectorXd sum = target_effect(p, s, link, std::span(&both[0], 1)) +
                     target_effect(p, s, link, std::span(&both[1], 1));
    EXPECT_LT((target_effect(p, s, link, both) - sum).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Chansim, NoiselessAmbientEqualsBaseline) {
  const auto s = build_scenario(3, 3, 1, 4);
  auto p = desk_params();
  p.noise_std = 0;
  const auto batch = simulate_batch(p, s, 1, {}, 5, 42);
  const auto base = baseline_amplitude(p, s, 1);
  ASSERT_EQ(batch.amplitudes.rows(), 5);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT((batch.amplitudes.row(t).transpose() - base).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((batch.ambient.row(t).transpose() - base).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Chansim, NoiselessTargetShiftsEveryPacketByTheEffect) {
  const auto s = build_scenario(3, 3, 1, 4);
  auto p = desk_params();
  p.noise_std = 0;
  const GridIndex g{4};
  const auto batch = simulate_batch(p, s, 0, std::span(&g, 1), 3, 1);
  const auto e = target_effect(p, s, 0, std::span(&g, 1));
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd diff = (batch.amplitudes.row(t) - batch.ambient.row(t)).transpose();
    EXPECT_LT((diff - e).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Chansim, NoiseIsSeededAndHasTheRequestedSpread) {
  const auto s = build_scenario(3, 3, 1, 4);
  const auto p = desk_params();
  const auto a = simulate_batch(p, s, 0, {}, 400, 9);
  const auto b = simulate_batch(p, s, 0, {}, 400, 9);
  const auto c = simulate_batch(p, s, 0, {}, 400, 10);
  EXPECT_EQ(a.amplitudes, b.amplitudes);
  EXPECT_NE(a.amplitudes, c.amplitudes);
  const Eigen::MatrixXd resid = a.amplitudes.rowwise() - baseline_amplitude(p, s, 0).transpose();
  const double var = resid.array().square().mean();
  EXPECT_NEAR(std::sqrt(var), p.noise_std, 0.05 * p.noise_std);
}

TEST(Chansim, EffectShrinksAwayFromTheLineOfSight) {
  const auto s = build_scenario(4, 5, 1, 9);
  const auto p = desk_params();
  for (std::size_t m = 0; m < s.n_links; ++m) {
    for (std::size_t g1 = 0; g1 < s.n_grids; ++g1) {
      for (std::size_t g2 = 0; g2 < s.n_grids; ++g2) {
        const Point c1 = grid_center(s, {g1}), c2 = grid_center(s, {g2});
        const double r1 = point_to_segment_distance(c1, s.ap_positions[m], s.dp_positions[m]);
        const double r2 = point_to_segment_distance(c2, s.ap_positions[m], s.dp_positions[m]);
        const auto e1 = effect_magnitudes(p, s, m, {g1});
        const auto e2 = effect_magnitudes(p, s, m, {g2});
        if (r1 + 1e-9 < r2) {
          EXPECT_GT(e1.diffraction, e2.diffraction);
        }
        const double x1 = excess_path_length(c1, s.ap_positions[m], s.dp_positions[m]);
        const double x2 = excess_path_length(c2, s.ap_positions[m], s.dp_positions[m]);
        if (x1 + 1e-9 < x2) {
          EXPECT_GT(e1.scattering, e2.scattering);
        }
      }
    }
  }
}

TEST(Chansim, EveryGridHasADistinctNoiselessSignature) {
  const auto s = build_scenario(3, 3, 1, 4);
  const auto p = desk_params();
  std::vector<Eigen::VectorXd> sig;
  for (std::size_t g = 0; g < s.n_grids; ++g) {
    Eigen::VectorXd v(p.d() * s.n_links);
    const GridIndex gi{g};
    for (std::size_t m = 0; m < s.n_links; ++m) {
      v.segment(Eigen::Index(m * p.d()), Eigen::Index(p.d())) = target_effect(p, s, m, std::span(&gi, 1));
    }
    sig.push_back(v);
  }
  const double eps = 1e-6;
  for (std::size_t i = 0; i < sig.size(); ++i) {
    for (std::size_t j = i + 1; j < sig.size(); ++j) {
      EXPECT_GT((sig[i] - sig[j]).norm(), 10 * eps) << i << " vs " << j;
    }
  }
}

TEST(Chansim, InvalidParametersAreRejected) {
  auto p = desk_params();
  p.noise_std = -1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = desk_params();
  p.diffraction_width = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = desk_params();
  p.baseline_taps = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
