#pragma once

#include <filesystem>

#include "comute/nn/network.hpp"
#include "comute/nn/optimizer.hpp"

namespace comute::nn {

inline constexpr std::uint64_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  Network<float> network;
  OptimizerState optimizer;
};

/// Writes <dir>/checkpoint.txt (layer list, shapes, seeds, optimizer
/// scalars) and <dir>/params.bin: little-endian float32 parameters in layer
/// order, followed by the float64 Adam first and then second moments when
/// the optimizer has taken a step.
void write_checkpoint(const std::filesystem::path& dir, const Network<float>& net,
                      const OptimizerState& optimizer);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

}  // namespace comute::nn
