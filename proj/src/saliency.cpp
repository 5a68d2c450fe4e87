#include "vcl/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vcl/errors.hpp"
#include "vcl/ops.hpp"

namespace vcl {

SaliencyMap joint_saliency(const ModelCheckpoint& model, const Dataset& data,
                           std::size_t sample_index, std::size_t target_class) {
  if (!model.has_classifier) {
    throw ContractError("joint_saliency: checkpoint has no trained classifier");
  }
  if (sample_index >= data.samples.size()) {
    throw ContractError("joint_saliency: sample index out of range");
  }
  if (target_class >= model.clf_w.extent(0)) {
    throw ContractError("joint_saliency: target class out of range");
  }

  const SkeletonSequence& raw = data.samples[sample_index];
  const Tensor adj = build_adjacency(data.topology);
  SkeletonSequence centered = center_on_root(raw, data.topology.root);

  // Gradients must reach the activation, so the input itself requires grad.
  Tensor x = Tensor::from_data({centered.channels, centered.frames,
                                centered.joints},
                               centered.coords, /*requires_grad=*/true);
  Tape tape;
  StgcnTrace trace = stgcn_forward_traced(&tape, x, model.query, adj);
  GaussianOut g = gaussian_head_forward(&tape, trace.feature, model.query.head);
  Tensor logits = ops::affine(&tape, model.clf_w, g.mu, model.clf_b);
  Tensor target = ops::pick(&tape, logits, target_class);
  backward(tape, target);

  const Tensor& act = trace.last_spatial;  // [C, T_act, N]
  const std::size_t c = act.extent(0), t_act = act.extent(1), n = act.extent(2);
  const auto& grad = act.grad();
  const auto& val = act.data();

  // Channel weights: gradients averaged over (t, n).
  std::vector<double> w(c, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    double s = 0.0;
    for (std::size_t i = 0; i < t_act * n; ++i) s += grad[ci * t_act * n + i];
    w[ci] = s / static_cast<double>(t_act * n);
  }

  // Weighted activation sum, rectified.
  std::vector<double> cam(t_act * n, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < t_act * n; ++i) {
      cam[i] += w[ci] * val[ci * t_act * n + i];
    }
  }
  for (double& v : cam) v = std::max(0.0, v);

  // Linear upsampling over the strided temporal axis back to the input T.
  SaliencyMap map;
  map.frames = raw.frames;
  map.joints = n;
  map.values.assign(raw.frames * n, 0.0);
  if (t_act == 1) {
    for (std::size_t t = 0; t < raw.frames; ++t) {
      for (std::size_t j = 0; j < n; ++j) map.values[t * n + j] = cam[j];
    }
  } else {
    const double step = static_cast<double>(t_act - 1) /
                        static_cast<double>(raw.frames - 1);
    for (std::size_t t = 0; t < raw.frames; ++t) {
      const double src = static_cast<double>(t) * step;
      std::size_t i0 = static_cast<std::size_t>(src);
      if (i0 >= t_act - 1) i0 = t_act - 2;
      const double frac = src - static_cast<double>(i0);
      for (std::size_t j = 0; j < n; ++j) {
        const double a = cam[i0 * n + j];
        const double b = cam[(i0 + 1) * n + j];
        map.values[t * n + j] = frac == 0.0 ? a : a + frac * (b - a);
      }
    }
  }

  const double peak = *std::max_element(map.values.begin(), map.values.end());
  if (peak > 0.0) {
    for (double& v : map.values) v /= peak;
  }
  return map;
}

void save_saliency_csv(const SaliencyMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("saliency: cannot write " + path);
  char buf[32];
  for (std::size_t t = 0; t < map.frames; ++t) {
    for (std::size_t j = 0; j < map.joints; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", map.at(t, j));
      out << (j == 0 ? "" : ",") << buf;
    }
    out << "\n";
  }
}

}  // namespace vcl
