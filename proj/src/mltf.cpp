#include "comute/mltf.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "comute/binio.hpp"
#include "comute/errors.hpp"
#include "comute/kv.hpp"

namespace comute {

namespace {

std::string join_doubles(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += kv::format_double(v[i]);
  }
  return out;
}

Eigen::VectorXd split_doubles(const std::string& text) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + comma, v);
    if (ec != std::errc{} || ptr != text.data() + comma) {
      throw FormatError("bad number list: " + text);
    }
    vals.push_back(v);
    pos = comma + 1;
  }
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

LocationVector LocationVector::from_grids(std::size_t n, std::span<const GridIndex> grids) {
  LocationVector v(n);
  for (auto g : grids) {
    if (g.index >= n) throw IndexOutOfRange("grid index outside location vector");
    v.bits[g.index] = 1;
  }
  return v;
}

LocationVector LocationVector::one_hot(std::size_t n, std::size_t index) {
  const GridIndex g{index};
  return from_grids(n, std::span(&g, 1));
}

std::size_t LocationVector::count() const {
  std::size_t k = 0;
  for (auto b : bits) k += b;
  return k;
}

std::vector<GridIndex> LocationVector::grids() const {
  std::vector<GridIndex> out;
  for (std::size_t n = 0; n < bits.size(); ++n) {
    if (bits[n]) out.push_back({n});
  }
  return out;
}

Eigen::MatrixXd amplitude_dynamic(const CsiBatch& batch) {
  const Eigen::RowVectorXd reference = batch.ambient.colwise().mean();
  return batch.amplitudes.rowwise() - reference;
}

std::vector<MltfImage> build_images(std::span<const Eigen::MatrixXd> dynamics,
                                    const LocationVector& label, std::size_t window) {
  if (dynamics.empty()) throw WindowMismatch("no link matrices");
  const auto total = static_cast<std::size_t>(dynamics.front().rows());
  const auto d = static_cast<std::size_t>(dynamics.front().cols());
  for (const auto& m : dynamics) {
    if (static_cast<std::size_t>(m.rows()) != total || static_cast<std::size_t>(m.cols()) != d) {
      throw WindowMismatch("link matrices differ in shape");
    }
  }
  if (window == 0 || total % window != 0) {
    throw WindowMismatch("window " + std::to_string(window) + " does not divide " +
                         std::to_string(total) + " packets");
  }

  const ImageShape shape{window, d, dynamics.size()};
  std::vector<MltfImage> images(total / window);
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& img = images[i];
    img.shape = shape;
    img.label = label;
    img.values.resize(static_cast<Eigen::Index>(shape.size()));
    // View the flat tensor as (T*d) x M with links along columns.
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> stacked(
        img.values.data(), static_cast<Eigen::Index>(shape.pixels()),
        static_cast<Eigen::Index>(shape.channels));
    for (std::size_t m = 0; m < dynamics.size(); ++m) {
      const auto rows = dynamics[m].middleRows(static_cast<Eigen::Index>(i * window),
                                               static_cast<Eigen::Index>(window));
      // Row-major flatten of the T x d slice.
      for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t k = 0; k < d; ++k) {
          stacked(static_cast<Eigen::Index>(t * d + k), static_cast<Eigen::Index>(m)) =
              static_cast<float>(rows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)));
        }
      }
    }
  }
  return images;
}

ChannelStats compute_channel_stats(std::span<const MltfImage> images) {
  if (images.empty()) throw EmptyDataset("cannot compute statistics of an empty split");
  const auto channels = static_cast<Eigen::Index>(images.front().shape.channels);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(channels);
  double count = 0;
  for (const auto& img : images) {
    if (img.shape != images.front().shape) throw ShapeMismatch("images differ in shape");
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(
        img.values.data(), static_cast<Eigen::Index>(img.shape.pixels()), channels);
    const Eigen::MatrixXd vd = v.cast<double>();
    sum += vd.colwise().sum().transpose();
    sum_sq += vd.array().square().colwise().sum().matrix().transpose();
    count += static_cast<double>(img.shape.pixels());
  }
  ChannelStats stats;
  stats.mean = sum / count;
  stats.stddev = (sum_sq / count - stats.mean.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
  return stats;
}

void normalize_in_place(std::span<MltfImage> images, const ChannelStats& stats) {
  for (auto& img : images) {
    const auto channels = static_cast<Eigen::Index>(img.shape.channels);
    if (stats.mean.size() != channels || stats.stddev.size() != channels) {
      throw ShapeMismatch("statistics do not match image channels");
    }
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(
        img.values.data(), static_cast<Eigen::Index>(img.shape.pixels()), channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double sd = stats.stddev[c];
      const double scale = sd > 0 ? 1.0 / sd : 1.0;
      v.col(c) = ((v.col(c).cast<double>().array() - stats.mean[c]) * scale).cast<float>().matrix();
    }
  }
}

std::vector<MltfImage> normalize(std::span<const MltfImage> images, const ChannelStats& stats) {
  std::vector<MltfImage> out(images.begin(), images.end());
  normalize_in_place(out, stats);
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  kv::Document manifest;
  manifest.set("format_version", kDatasetFormatVersion);
  manifest.set("T", std::uint64_t{ds.shape.height});
  manifest.set("d", std::uint64_t{ds.shape.width});
  manifest.set("M", std::uint64_t{ds.shape.channels});
  manifest.set("N", std::uint64_t{ds.n_grids});
  manifest.set("train", std::uint64_t{ds.train.size()});
  manifest.set("val", std::uint64_t{ds.val.size()});
  manifest.set("test", std::uint64_t{ds.test.size()});
  manifest.set("seed", ds.seed);
  manifest.set("norm_mean", join_doubles(ds.stats.mean));
  manifest.set("norm_std", join_doubles(ds.stats.stddev));

  std::string records;
  records.reserve((ds.train.size() + ds.val.size() + ds.test.size()) *
                  (ds.shape.size() * 4 + ds.n_grids));
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& img : *split) {
      if (img.shape != ds.shape || img.label.size() != ds.n_grids) {
        throw ShapeMismatch("image does not match dataset shape");
      }
      for (Eigen::Index i = 0; i < img.values.size(); ++i) binio::put_f32(records, img.values[i]);
      for (auto b : img.label.bits) records.push_back(static_cast<char>(b));
    }
  }
  manifest.save(dir / "manifest.txt");
  kv::write_file(dir / "records.bin", records);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest = kv::Document::load(dir / "manifest.txt");
  if (manifest.get_u64("format_version") != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version");
  }
  Dataset ds;
  ds.shape = {manifest.get_u64("T"), manifest.get_u64("d"), manifest.get_u64("M")};
  ds.n_grids = manifest.get_u64("N");
  ds.seed = manifest.get_u64("seed");
  ds.stats.mean = split_doubles(manifest.get("norm_mean"));
  ds.stats.stddev = split_doubles(manifest.get("norm_std"));

  const auto bytes = kv::read_file(dir / "records.bin");
  binio::Reader reader(bytes);
  auto read_split = [&](std::vector<MltfImage>& split, std::uint64_t n) {
    split.resize(n);
    for (auto& img : split) {
      img.shape = ds.shape;
      img.values.resize(static_cast<Eigen::Index>(ds.shape.size()));
      for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values[i] = reader.f32();
      img.label = LocationVector(ds.n_grids);
      for (auto& b : img.label.bits) {
        b = reader.u8();
        if (b > 1) throw FormatError("label byte is not 0 or 1");
      }
    }
  };
  read_split(ds.train, manifest.get_u64("train"));
  read_split(ds.val, manifest.get_u64("val"));
  read_split(ds.test, manifest.get_u64("test"));
  if (reader.remaining() != 0) throw FormatError("trailing bytes in records.bin");
  return ds;
}

}  // namespace comute
