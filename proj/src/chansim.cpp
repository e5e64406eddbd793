#include "comute/chansim.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "comute/errors.hpp"
#include "comute/rng.hpp"

namespace comute {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kProfileHarmonics = 3;

void check_link(const Scenario& s, std::size_t link) {
  if (link >= s.n_links) {
    throw IndexOutOfRange("link " + std::to_string(link) + " >= " + std::to_string(s.n_links));
  }
}

}  // namespace

void ChannelParams::validate() const {
  if (subcarriers_per_pair < 1) throw std::invalid_argument("subcarriers_per_pair must be >= 1");
  if (antenna_pairs < 1) throw std::invalid_argument("antenna_pairs must be >= 1");
  if (baseline_taps < 1) throw std::invalid_argument("baseline_taps must be >= 1");
  if (!(diffraction_width > 0)) throw std::invalid_argument("diffraction_width must be > 0");
  if (!(scatter_decay > 0)) throw std::invalid_argument("scatter_decay must be > 0");
  if (!(noise_std >= 0)) throw std::invalid_argument("noise_std must be >= 0");
  if (!(diffraction_amp >= 0)) throw std::invalid_argument("diffraction_amp must be >= 0");
  if (!(scatter_amp >= 0)) throw std::invalid_argument("scatter_amp must be >= 0");
}

std::vector<Tap> draw_baseline_taps(const ChannelParams& params, std::size_t link) {
  CounterStream stream(StreamTag::kBaselineTaps, {params.seed, link});
  std::vector<Tap> taps(params.baseline_taps);
  const double scale = params.baseline_taps > 1 ? 1.0 / double(params.baseline_taps - 1) : 0.0;
  for (std::size_t j = 1; j < taps.size(); ++j) {
    taps[j].gain = stream.uniform(0.05, 0.6) * scale;
    taps[j].delay = stream.uniform(0.0, 8.0);
    taps[j].phase = stream.uniform(0.0, kTwoPi);
  }
  return taps;
}

Eigen::VectorXd baseline_from_taps(std::span<const Tap> taps, std::size_t d) {
  Eigen::VectorXd out(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::complex<double> h{0.0, 0.0};
    for (const auto& tap : taps) {
      h += std::polar(tap.gain, tap.phase - kTwoPi * tap.delay * double(k) / double(d));
    }
    out[k] = 20.0 * std::log10(std::max(std::abs(h), 1e-12));
  }
  return out;
}

Eigen::VectorXd baseline_amplitude(const ChannelParams& params, const Scenario& s,
                                   std::size_t link) {
  check_link(s, link);
  return baseline_from_taps(draw_baseline_taps(params, link), params.d());
}

Eigen::VectorXd spectral_profile(const ChannelParams& params, std::size_t link, GridIndex g,
                                 bool diffraction) {
  CounterStream stream(diffraction ? StreamTag::kDiffractionProfile : StreamTag::kScatterProfile,
                       {params.seed, link, g.index});
  const auto d = params.d();
  Eigen::VectorXd profile = Eigen::VectorXd::Ones(d);
  for (std::size_t j = 0; j < kProfileHarmonics; ++j) {
    const double amp = stream.uniform(0.3, 0.5);
    const double freq = stream.uniform(0.5, 4.0);
    const double phase = stream.uniform(0.0, kTwoPi);
    for (std::size_t k = 0; k < d; ++k) {
      profile[k] += amp * std::cos(kTwoPi * freq * double(k) / double(d) + phase);
    }
  }
  return profile / profile.mean();
}

EffectMagnitudes effect_magnitudes(const ChannelParams& params, const Scenario& s,
                                   std::size_t link, GridIndex g) {
  check_link(s, link);
  const Point c = grid_center(s, g);
  const Point& ap = s.ap_positions[link];
  const Point& dp = s.dp_positions[link];
  const double r = point_to_segment_distance(c, ap, dp);
  const double delta = excess_path_length(c, ap, dp);
  const double width2 = params.diffraction_width * params.diffraction_width;
  return {params.diffraction_amp * std::exp(-r * r / (2.0 * width2)),
          params.scatter_amp * std::exp(-params.scatter_decay * delta)};
}

Eigen::VectorXd target_effect(const ChannelParams& params, const Scenario& s, std::size_t link,
                              std::span<const GridIndex> targets) {
  check_link(s, link);
  Eigen::VectorXd effect = Eigen::VectorXd::Zero(params.d());
  for (auto g : targets) {
    const auto mag = effect_magnitudes(params, s, link, g);
    effect -= mag.diffraction * spectral_profile(params, link, g, true);
    effect += mag.scattering * spectral_profile(params, link, g, false);
  }
  return effect;
}

CsiBatch simulate_batch(const ChannelParams& params, const Scenario& s, std::size_t link,
                        std::span<const GridIndex> targets, std::size_t n_packets,
                        std::uint64_t packet_seed) {
  return simulate_batch(params, s, link, targets, n_packets, packet_seed,
                        baseline_amplitude(params, s, link));
}

CsiBatch simulate_batch(const ChannelParams& params, const Scenario& s, std::size_t link,
                        std::span<const GridIndex> targets, std::size_t n_packets,
                        std::uint64_t packet_seed, const Eigen::VectorXd& baseline) {
  if (n_packets < 1) throw std::invalid_argument("n_packets must be >= 1");
  const auto d = params.d();
  if (static_cast<std::size_t>(baseline.size()) != d) {
    throw ShapeMismatch("baseline length does not match d");
  }
  const Eigen::VectorXd effect = target_effect(params, s, link, targets);

  CsiBatch batch;
  batch.link = link;
  const Eigen::RowVectorXd base = baseline.transpose();
  batch.ambient = base.replicate(n_packets, 1);
  batch.amplitudes = (base + effect.transpose()).replicate(n_packets, 1);
  if (params.noise_std > 0) {
    CounterStream ambient_noise(StreamTag::kAmbientNoise, {packet_seed});
    CounterStream measurement_noise(StreamTag::kMeasurementNoise, {packet_seed});
    for (std::size_t t = 0; t < n_packets; ++t) {
      for (std::size_t k = 0; k < d; ++k) {
        batch.ambient(t, k) += params.noise_std * ambient_noise.normal();
        batch.amplitudes(t, k) += params.noise_std * measurement_noise.normal();
      }
    }
  }
  return batch;
}

}  // namespace comute
