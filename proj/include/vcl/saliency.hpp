#pragma once

#include <cstddef>
#include <vector>

#include "vcl/dataset.hpp"
#include "vcl/training.hpp"

namespace vcl {

// T x N joint-importance map, row-major over frames.
struct SaliencyMap {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> values;  // in [0, 1]; all-zero when nothing activates

  double at(std::size_t t, std::size_t n) const { return values[t * joints + n]; }
};

// Gradient-weighted activation map: the target-class logit is differentiated
// against the last spatial-convolution activations; channel-averaged gradients
// weight the activations, ReLU keeps positive evidence, the map is linearly
// upsampled over strided temporal dims to T x N and max-normalized.
SaliencyMap joint_saliency(const ModelCheckpoint& model, const Dataset& data,
                           std::size_t sample_index, std::size_t target_class);

void save_saliency_csv(const SaliencyMap& map, const std::string& path);

}  // namespace vcl
