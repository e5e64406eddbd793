#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "comute/geometry.hpp"

namespace comute {

/// Knobs of the synthetic CSI amplitude model. Amplitudes are in dB.
///
/// A measurement on link m is a static frequency-selective baseline plus a
/// target-dependent effect plus Gaussian noise. The effect of a target at
/// distance r from the line of sight with excess path length delta is
///   -diffraction_amp * exp(-r^2 / (2 diffraction_width^2)) * P_D[k]
///   +scatter_amp * exp(-scatter_decay * delta) * P_S[k]
/// where P_D and P_S are unit-mean spectral profiles fixed per (link, grid).
struct ChannelParams {
  std::size_t subcarriers_per_pair = 30;
  std::size_t antenna_pairs = 3;
  std::size_t baseline_taps = 6;
  double diffraction_amp = 6.0;
  double diffraction_width = 0.3;
  double scatter_amp = 3.0;
  double scatter_decay = 1.5;
  double noise_std = 2.0;
  std::uint64_t seed = 7;

  std::size_t d() const { return subcarriers_per_pair * antenna_pairs; }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

/// One multipath component of the static baseline. `delay` is in cycles
/// across the full subcarrier axis.
struct Tap {
  double gain = 1.0;
  double delay = 0.0;
  double phase = 0.0;
};

/// Per-link measurement record: T packets by d subcarriers.
struct CsiBatch {
  std::size_t link = 0;
  Eigen::MatrixXd amplitudes;
  Eigen::MatrixXd ambient;
};

/// Taps drawn from the stream keyed by (seed, link). Tap 0 is the unit-gain,
/// zero-delay line of sight; the remaining gains sum to less than 0.6 so the
/// response never nulls.
std::vector<Tap> draw_baseline_taps(const ChannelParams& params, std::size_t link);

/// 20 log10 |sum_j g_j exp(i (phi_j - 2 pi tau_j k / d))| for k in [0, d).
Eigen::VectorXd baseline_from_taps(std::span<const Tap> taps, std::size_t d);

Eigen::VectorXd baseline_amplitude(const ChannelParams& params, const Scenario& s,
                                   std::size_t link);

/// Unit-mean modulation profile for one (link, grid) and stream tag.
Eigen::VectorXd spectral_profile(const ChannelParams& params, std::size_t link, GridIndex g,
                                 bool diffraction);

/// Diffraction and scattering magnitudes (dB, both >= 0) of a single target.
struct EffectMagnitudes {
  double diffraction = 0;
  double scattering = 0;
};
EffectMagnitudes effect_magnitudes(const ChannelParams& params, const Scenario& s,
                                   std::size_t link, GridIndex g);

/// Sum over targets of -D * P_D + S * P_S. Zero vector for no targets.
Eigen::VectorXd target_effect(const ChannelParams& params, const Scenario& s, std::size_t link,
                              std::span<const GridIndex> targets);

CsiBatch simulate_batch(const ChannelParams& params, const Scenario& s, std::size_t link,
                        std::span<const GridIndex> targets, std::size_t n_packets,
                        std::uint64_t packet_seed);

/// Same as above with an explicit static baseline in place of the tap model.
CsiBatch simulate_batch(const ChannelParams& params, const Scenario& s, std::size_t link,
                        std::span<const GridIndex> targets, std::size_t n_packets,
                        std::uint64_t packet_seed, const Eigen::VectorXd& baseline);

}  // namespace comute
