#include <sstream>

#include "comute/binio.hpp"
#include "comute/kv.hpp"
#include "comute/nn/checkpoint.hpp"
#include "comute/nn/layers.hpp"
#include "comute/nn/network.hpp"
#include "comute/nn/optimizer.hpp"

namespace comute::nn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw FormatError("not an integer: " + s);
  return v;
}

std::string shape_string(ImageShape s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

ImageShape parse_shape(const std::string& s) {
  const auto parts = split(s, 'x');
  if (parts.size() != 3) throw FormatError("bad shape: " + s);
  return {to_size(parts[0]), to_size(parts[1]), to_size(parts[2])};
}

}  // namespace

std::string to_string(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::kConv2d:
      return "conv2d:" + std::to_string(spec.kernel_size) + ":" + std::to_string(spec.out_channels);
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout:" + kv::format_double(spec.rate);
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense:" + std::to_string(spec.units);
    case LayerKind::kSigmoid: return "sigmoid";
  }
  return "?";
}

LayerSpec parse_layer_spec(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.empty()) throw FormatError("empty layer spec");
  const auto& kind = parts[0];
  auto arity = [&](std::size_t n) {
    if (parts.size() != n + 1) throw FormatError("layer '" + text + "': wrong argument count");
  };
  if (kind == "conv2d") {
    arity(2);
    return LayerSpec::conv2d(to_size(parts[1]), to_size(parts[2]));
  }
  if (kind == "relu") return arity(0), LayerSpec::relu();
  if (kind == "dropout") {
    arity(1);
    return LayerSpec::dropout(std::stod(parts[1]));
  }
  if (kind == "flatten") return arity(0), LayerSpec::flatten();
  if (kind == "dense") {
    arity(1);
    return LayerSpec::dense(to_size(parts[1]));
  }
  if (kind == "sigmoid") return arity(0), LayerSpec::sigmoid();
  throw FormatError("unknown layer kind '" + kind + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw std::invalid_argument("unknown optimizer '" + text + "' (expected adam or sgd)");
}

std::vector<LayerSpec> build_layer_specs(const Architecture& arch, std::size_t n_outputs) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < arch.conv_layers; ++i) {
    specs.push_back(LayerSpec::conv2d(arch.kernel_size, arch.kernels));
    specs.push_back(LayerSpec::relu());
  }
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::dense(arch.hidden_units));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::dropout(arch.dropout));
  specs.push_back(LayerSpec::dense(n_outputs));
  specs.push_back(LayerSpec::sigmoid());
  return specs;
}

void write_checkpoint(const std::filesystem::path& dir, const Network<float>& net,
                      const OptimizerState& optimizer) {
  auto& mutable_net = const_cast<Network<float>&>(net);
  const auto params = mutable_net.params();
  const bool has_moments = !optimizer.first_moment.empty();
  if (has_moments && (optimizer.first_moment.size() != params.size() ||
                      optimizer.second_moment.size() != params.size())) {
    throw ShapeMismatch("optimizer moments do not match network parameters");
  }

  std::string layers;
  for (const auto& s : net.specs()) {
    if (!layers.empty()) layers += ',';
    layers += to_string(s);
  }
  std::string tensor_sizes;
  for (const auto& p : params) {
    if (!tensor_sizes.empty()) tensor_sizes += ',';
    tensor_sizes += std::to_string(p.value.size());
  }

  kv::Document manifest;
  manifest.set("format_version", kCheckpointFormatVersion);
  manifest.set("input", shape_string(net.input_shape()));
  manifest.set("layers", layers);
  manifest.set("tensor_sizes", tensor_sizes);
  manifest.set("rng_seed", net.rng_seed());
  manifest.set("mode", net.mode() == Mode::kTraining ? std::string("training") : "inference");
  manifest.set("optimizer", to_string(optimizer.kind));
  manifest.set("learning_rate", optimizer.learning_rate);
  manifest.set("beta1", optimizer.beta1);
  manifest.set("beta2", optimizer.beta2);
  manifest.set("epsilon", optimizer.epsilon);
  manifest.set("optimizer_step", optimizer.step);
  manifest.set("moments", std::uint64_t{has_moments ? 1u : 0u});

  std::string blob;
  for (const auto& p : params) {
    for (float v : p.value) binio::put_f32(blob, v);
  }
  if (has_moments) {
    for (const auto* moments : {&optimizer.first_moment, &optimizer.second_moment}) {
      for (std::size_t j = 0; j < params.size(); ++j) {
        const auto& m = (*moments)[j];
        if (static_cast<std::size_t>(m.size()) != params[j].value.size()) {
          throw ShapeMismatch("moment shape differs from parameter");
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) binio::put_f64(blob, m[i]);
      }
    }
  }
  manifest.save(dir / "checkpoint.txt");
  kv::write_file(dir / "params.bin", blob);
}

Checkpoint read_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = kv::Document::load(dir / "checkpoint.txt");
  if (manifest.get_u64("format_version") != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format version");
  }
  std::vector<LayerSpec> specs;
  for (const auto& s : split(manifest.get("layers"), ',')) specs.push_back(parse_layer_spec(s));

  Checkpoint ck{Network<float>(parse_shape(manifest.get("input")), specs,
                               manifest.get_u64("rng_seed")),
                {}};
  ck.network.set_mode(manifest.get("mode") == "training" ? Mode::kTraining : Mode::kInference);
  auto& opt = ck.optimizer;
  opt.kind = parse_optimizer_kind(manifest.get("optimizer"));
  opt.learning_rate = manifest.get_double("learning_rate");
  opt.beta1 = manifest.get_double("beta1");
  opt.beta2 = manifest.get_double("beta2");
  opt.epsilon = manifest.get_double("epsilon");
  opt.step = manifest.get_u64("optimizer_step");

  const auto params = ck.network.params();
  const auto sizes = split(manifest.get("tensor_sizes"), ',');
  if (sizes.size() != params.size()) throw FormatError("tensor count mismatch");
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (to_size(sizes[j]) != params[j].value.size()) throw FormatError("tensor size mismatch");
  }

  const auto bytes = kv::read_file(dir / "params.bin");
  binio::Reader reader(bytes);
  for (const auto& p : params) {
    for (auto& v : p.value) v = reader.f32();
  }
  if (manifest.get_u64("moments") != 0) {
    for (auto* moments : {&opt.first_moment, &opt.second_moment}) {
      for (const auto& p : params) {
        Eigen::VectorXd m(static_cast<Eigen::Index>(p.value.size()));
        for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = reader.f64();
        moments->push_back(std::move(m));
      }
    }
  }
  if (reader.remaining() != 0) throw FormatError("trailing bytes in params.bin");
  return ck;
}

}  // namespace comute::nn
