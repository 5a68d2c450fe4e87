#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vcl/rng.hpp"
#include "vcl/skeleton.hpp"
#include "vcl/tensor.hpp"

namespace vcl {

// Symmetric-normalized adjacency with self loops:
// D^{-1/2} (A + I) D^{-1/2}. Throws ContractError for disconnected input.
Tensor build_adjacency(const SkeletonTopology& topo);

struct StgcnConfig {
  std::vector<std::size_t> widths;   // output channels per block
  std::size_t temporal_kernel = 5;   // odd
  std::vector<std::size_t> strides;  // temporal stride per block
  std::size_t embed_dim = 16;        // d, the Gaussian head output size

  std::size_t feature_dim() const { return widths.back(); }
  void validate() const;

  // Small default: 4 blocks, widths (8, 8, 16, 16), kernel 5, stride 2 at
  // block 3.
  static StgcnConfig desk();
  // Quarter-width ST-GCN layout: 10 blocks, widths 16/32/64, kernel 9,
  // strides 2 at blocks 5 and 8.
  static StgcnConfig paper_quarter();
  static StgcnConfig preset(const std::string& name);
};

struct BlockParams {
  Tensor w_spatial;   // [C_out, C_in]
  Tensor b_spatial;   // [C_out]
  Tensor w_temporal;  // [C_out, C_out, k]
  Tensor b_temporal;  // [C_out]
};

// Two affine maps from the encoder feature to (mu, log sigma^2). The log
// variance is clamped to [-10, 10] before use.
struct GaussianHeadParams {
  Tensor w_mu, b_mu;          // [d, F], [d]
  Tensor w_logvar, b_logvar;  // [d, F], [d]
};

// Query- or key-branch parameter set: the ST-GCN blocks plus the head.
struct EncoderParams {
  StgcnConfig cfg;
  std::vector<BlockParams> blocks;
  GaussianHeadParams head;

  // Uniform +-sqrt(1/fan_in) init per affine map, seed-controlled.
  static EncoderParams init(const StgcnConfig& cfg, std::size_t in_channels,
                            RngStream& rng);

  // Stable-order (name, tensor) view covering every parameter.
  std::vector<std::pair<std::string, Tensor>> named() const;
  EncoderParams clone(bool requires_grad) const;
  void set_requires_grad(bool on);
  std::vector<Tensor> tensors() const;
};

// Full encoder pass: per-sequence standardization, then per block a spatial
// graph convolution (channel mix, joint mix with adj, bias), a temporal
// convolution with "same" padding, and ReLU; global average pooling over
// (T, N) yields the feature vector.
Tensor stgcn_forward(Tape* tape, const Tensor& x, const EncoderParams& params,
                     const Tensor& adjacency);

// Same pass, also exposing the spatial-convolution output of the last block
// (the Grad-CAM target).
struct StgcnTrace {
  Tensor feature;
  Tensor last_spatial;  // [C_last, T_last, N]
};
StgcnTrace stgcn_forward_traced(Tape* tape, const Tensor& x,
                                const EncoderParams& params,
                                const Tensor& adjacency);

struct GaussianOut {
  Tensor mu;
  Tensor logvar;
};
GaussianOut gaussian_head_forward(Tape* tape, const Tensor& h,
                                  const GaussianHeadParams& head);

// z = mu + exp(logvar / 2) * xi; differentiable in mu and logvar, not in xi.
Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& logvar,
                      const Tensor& xi);

}  // namespace vcl
