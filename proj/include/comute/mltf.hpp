#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "comute/chansim.hpp"
#include "comute/geometry.hpp"

namespace comute {

/// Binary occupancy vector over grid cells; bits[n] == 1 iff a target sits
/// in cell n. The target count K is the number of set bits.
struct LocationVector {
  std::vector<std::uint8_t> bits;

  LocationVector() = default;
  explicit LocationVector(std::size_t n) : bits(n, 0) {}

  static LocationVector from_grids(std::size_t n, std::span<const GridIndex> grids);
  static LocationVector one_hot(std::size_t n, std::size_t index);

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  std::vector<GridIndex> grids() const;

  friend bool operator==(const LocationVector&, const LocationVector&) = default;
  friend auto operator<=>(const LocationVector&, const LocationVector&) = default;
};

/// Height x width x channels, channels varying fastest in memory.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  friend bool operator==(ImageShape, ImageShape) = default;
};

/// T x d x M tensor of amplitude dynamics stored in (time, subcarrier, link)
/// order, with its location label.
struct MltfImage {
  ImageShape shape;
  Eigen::VectorXf values;
  LocationVector label;

  float at(std::size_t t, std::size_t k, std::size_t m) const {
    return values[(t * shape.width + k) * shape.channels + m];
  }
};

/// Measured minus the packet-averaged ambient reference.
Eigen::MatrixXd amplitude_dynamic(const CsiBatch& batch);

/// Slices each link's T_total x d dynamic matrix into windows of T rows and
/// stacks the links along the channel axis in link order. Throws
/// WindowMismatch if the links disagree in shape or T does not divide T_total.
std::vector<MltfImage> build_images(std::span<const Eigen::MatrixXd> dynamics,
                                    const LocationVector& label, std::size_t window);

/// Per-link-channel mean and standard deviation.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

ChannelStats compute_channel_stats(std::span<const MltfImage> images);

/// Standardizes every channel with the given statistics. Channels whose
/// stddev is zero are only mean-shifted.
std::vector<MltfImage> normalize(std::span<const MltfImage> images, const ChannelStats& stats);
void normalize_in_place(std::span<MltfImage> images, const ChannelStats& stats);

/// Images partitioned into training, validation and test splits.
struct Dataset {
  ImageShape shape;
  std::size_t n_grids = 0;
  std::uint64_t seed = 0;
  /// Training-split statistics the stored images were standardized with.
  ChannelStats stats;
  std::vector<MltfImage> train;
  std::vector<MltfImage> val;
  std::vector<MltfImage> test;
};

inline constexpr std::uint64_t kDatasetFormatVersion = 1;

/// Writes <dir>/manifest.txt and <dir>/records.bin. Records are little-endian
/// float32 tensor values followed by N label bytes, ordered train, val, test.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace comute
