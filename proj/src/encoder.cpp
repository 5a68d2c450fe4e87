#include "vcl/encoder.hpp"

#include <cmath>

#include "vcl/errors.hpp"
#include "vcl/ops.hpp"

namespace vcl {

Tensor build_adjacency(const SkeletonTopology& topo) {
  topo.validate();  // includes the connectivity check
  const std::size_t n = topo.n_joints;
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  for (auto [p, c] : topo.edges) {
    a[p * n + c] = 1.0;
    a[c * n + p] = 1.0;
  }
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = dinv[i] * a[i * n + j] * dinv[j];
    }
  }
  return Tensor::from_data({n, n}, std::move(out));
}

void StgcnConfig::validate() const {
  if (widths.empty()) throw ContractError("StgcnConfig: widths must be non-empty");
  if (temporal_kernel % 2 == 0) {
    throw ContractError("StgcnConfig: temporal kernel must be odd");
  }
  if (strides.size() != widths.size()) {
    throw ContractError("StgcnConfig: strides must match widths");
  }
  for (std::size_t s : strides) {
    if (s == 0) throw ContractError("StgcnConfig: stride must be positive");
  }
  if (embed_dim < 2) throw ContractError("StgcnConfig: embed_dim must be >= 2");
}

StgcnConfig StgcnConfig::desk() {
  StgcnConfig c;
  c.widths = {8, 8, 16, 16};
  c.strides = {1, 1, 2, 1};
  c.temporal_kernel = 5;
  c.embed_dim = 16;
  return c;
}

StgcnConfig StgcnConfig::paper_quarter() {
  StgcnConfig c;
  c.widths = {16, 16, 16, 16, 32, 32, 32, 64, 64, 64};
  c.strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
  c.temporal_kernel = 9;
  c.embed_dim = 128;
  return c;
}

StgcnConfig StgcnConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper-quarter") return paper_quarter();
  throw ConfigError("unknown encoder preset '" + name + "'");
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in,
                    RngStream& rng) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data),
                           /*requires_grad=*/true);
}

}  // namespace

EncoderParams EncoderParams::init(const StgcnConfig& cfg,
                                  std::size_t in_channels, RngStream& rng) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  std::size_t cin = in_channels;
  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::size_t cout = cfg.widths[b];
    BlockParams bp;
    bp.w_spatial = uniform_init({cout, cin}, cin, rng);
    bp.b_spatial = uniform_init({cout}, cin, rng);
    bp.w_temporal = uniform_init({cout, cout, cfg.temporal_kernel},
                                 cout * cfg.temporal_kernel, rng);
    bp.b_temporal = uniform_init({cout}, cout * cfg.temporal_kernel, rng);
    p.blocks.push_back(std::move(bp));
    cin = cout;
  }
  const std::size_t f = cfg.feature_dim();
  p.head.w_mu = uniform_init({cfg.embed_dim, f}, f, rng);
  // The mean head starts with a large bias offset, so early latents are
  // mu-dominated and the contrastive term trains on clean signal; the KL term
  // then pulls the offset toward the prior over the course of training.
  // Starting sigma at 1 instead (zero logvar) would leave the KL with no
  // sigma pressure but bury the early signal in sampling noise.
  p.head.b_mu = uniform_init({cfg.embed_dim}, f, rng);
  for (double& v : p.head.b_mu.data()) v += 1.25;
  p.head.w_logvar = uniform_init({cfg.embed_dim, f}, f, rng);
  p.head.b_logvar = uniform_init({cfg.embed_dim}, f, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string base = "block" + std::to_string(b) + ".";
    out.emplace_back(base + "w_spatial", blocks[b].w_spatial);
    out.emplace_back(base + "b_spatial", blocks[b].b_spatial);
    out.emplace_back(base + "w_temporal", blocks[b].w_temporal);
    out.emplace_back(base + "b_temporal", blocks[b].b_temporal);
  }
  out.emplace_back("head.w_mu", head.w_mu);
  out.emplace_back("head.b_mu", head.b_mu);
  out.emplace_back("head.w_logvar", head.w_logvar);
  out.emplace_back("head.b_logvar", head.b_logvar);
  return out;
}

EncoderParams EncoderParams::clone(bool requires_grad) const {
  EncoderParams p;
  p.cfg = cfg;
  for (const auto& b : blocks) {
    BlockParams bp;
    bp.w_spatial = b.w_spatial.clone(requires_grad);
    bp.b_spatial = b.b_spatial.clone(requires_grad);
    bp.w_temporal = b.w_temporal.clone(requires_grad);
    bp.b_temporal = b.b_temporal.clone(requires_grad);
    p.blocks.push_back(std::move(bp));
  }
  p.head.w_mu = head.w_mu.clone(requires_grad);
  p.head.b_mu = head.b_mu.clone(requires_grad);
  p.head.w_logvar = head.w_logvar.clone(requires_grad);
  p.head.b_logvar = head.b_logvar.clone(requires_grad);
  return p;
}

void EncoderParams::set_requires_grad(bool on) {
  for (auto& [name, t] : named()) {
    (void)name;
    t.set_requires_grad(on);
  }
}

std::vector<Tensor> EncoderParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    (void)name;
    out.push_back(t);
  }
  return out;
}

namespace {

// One ST-GCN block. Spatial: channel mix (W x), joint mix (x A), bias.
// Temporal: 1-D conv over T with "same" padding. Each convolution is followed
// by a per-channel instance normalization (the deterministic stand-in for the
// original batch norm); ReLU closes the block.
Tensor stgcn_block(Tape* tape, const Tensor& x, const BlockParams& bp,
                   const Tensor& adjacency, std::size_t stride,
                   Tensor* spatial_out) {
  const std::size_t cin = x.extent(0), t = x.extent(1), n = x.extent(2);
  const std::size_t cout = bp.w_spatial.extent(0);

  Tensor flat = ops::reshape(tape, x, {cin, t * n});
  Tensor mixed = ops::matmul(tape, bp.w_spatial, flat);           // [cout, t*n]
  Tensor by_time = ops::reshape(tape, mixed, {cout * t, n});
  Tensor joined = ops::matmul(tape, by_time, adjacency);          // [cout*t, n]
  Tensor spatial = ops::add_channel_bias(
      tape, ops::reshape(tape, joined, {cout, t, n}), bp.b_spatial);
  if (spatial_out != nullptr) *spatial_out = spatial;

  Tensor conv = ops::temporal_conv(tape, ops::channel_norm(tape, spatial),
                                   bp.w_temporal, bp.b_temporal, stride);
  return ops::relu(tape, ops::channel_norm(tape, conv));
}

}  // namespace

StgcnTrace stgcn_forward_traced(Tape* tape, const Tensor& x,
                                const EncoderParams& params,
                                const Tensor& adjacency) {
  if (x.rank() != 3) throw DimError("stgcn_forward: input must be C x T x N");
  if (x.extent(2) != adjacency.extent(0)) {
    throw DimError("stgcn_forward: joint count differs from adjacency");
  }
  if (!params.blocks.empty() &&
      x.extent(0) != params.blocks.front().w_spatial.extent(1)) {
    throw DimError("stgcn_forward: channel count differs from parameters");
  }
  StgcnTrace trace;
  Tensor h = ops::standardize(tape, x);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const bool last = b + 1 == params.blocks.size();
    h = stgcn_block(tape, h, params.blocks[b], adjacency, params.cfg.strides[b],
                    last ? &trace.last_spatial : nullptr);
  }
  trace.feature = ops::global_avg_pool(tape, h);
  return trace;
}

Tensor stgcn_forward(Tape* tape, const Tensor& x, const EncoderParams& params,
                     const Tensor& adjacency) {
  return stgcn_forward_traced(tape, x, params, adjacency).feature;
}

GaussianOut gaussian_head_forward(Tape* tape, const Tensor& h,
                                  const GaussianHeadParams& head) {
  if (h.rank() != 1 || h.numel() != head.w_mu.extent(1)) {
    throw DimError("gaussian_head_forward: feature size mismatch");
  }
  GaussianOut out;
  out.mu = ops::affine(tape, head.w_mu, h, head.b_mu);
  out.logvar =
      ops::clamp(tape, ops::affine(tape, head.w_logvar, h, head.b_logvar),
                 -10.0, 10.0);
  return out;
}

Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& logvar,
                      const Tensor& xi) {
  if (mu.shape() != logvar.shape() || mu.shape() != xi.shape()) {
    throw DimError("reparameterize: shape mismatch");
  }
  if (xi.requires_grad()) {
    throw ContractError("reparameterize: xi must not require gradients");
  }
  Tensor sigma = ops::exp(tape, ops::scale(tape, logvar, 0.5));
  return ops::add(tape, mu, ops::mul(tape, sigma, xi));
}

}  // namespace vcl
