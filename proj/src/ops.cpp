#include "vcl/ops.hpp"

#include <algorithm>
#include <cmath>

#include "vcl/errors.hpp"

namespace vcl::ops {

namespace {

bool any_requires_grad(const std::vector<Tensor>& ts) {
  for (const auto& t : ts) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Builds the op output and records the backward rule when needed.
Tensor finish(Tape* tape, const char* name, std::vector<Tensor> inputs,
              std::vector<std::size_t> shape, std::vector<double> data,
              std::function<void(Tape::Node&)> backward) {
  const bool rg = tape != nullptr && any_requires_grad(inputs);
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), rg);
  check_finite(out, name);
  if (rg) {
    tape->record(std::move(inputs), out, std::move(backward));
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimError(std::string(op) + ": shape mismatch");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimError(std::string(op) + ": wrong rank");
  }
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1);
  const std::size_t k2 = b.extent(0), n = b.extent(1);
  if (k != k2) throw DimError("matmul: inner extents disagree");

  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      const double* brow = pb + kk * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }

  return finish(tape, "matmul", {a, b}, {m, n}, std::move(out),
                [m, k, n](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  Tensor& ta = node.inputs[0];
                  Tensor& tb = node.inputs[1];
                  if (ta.requires_grad()) {
                    auto& ga = ta.grad();
                    const double* pb2 = tb.data().data();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t kk = 0; kk < k; ++kk) {
                        double s = 0.0;
                        const double* grow = g.data() + i * n;
                        const double* brow = pb2 + kk * n;
                        for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                        ga[i * k + kk] += s;
                      }
                    }
                  }
                  if (tb.requires_grad()) {
                    auto& gb = tb.grad();
                    const double* pa2 = ta.data().data();
                    for (std::size_t i = 0; i < m; ++i) {
                      const double* grow = g.data() + i * n;
                      for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = pa2[i * k + kk];
                        double* gbrow = gb.data() + kk * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                      }
                    }
                  }
                });
}

Tensor relu(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  }
  return finish(tape, "relu", {a}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x.data()[i] > 0.0) gx[i] += g[i];
                  }
                });
}

Tensor l2_normalize(Tape* tape, const Tensor& v) {
  require_rank(v, 1, "l2_normalize");
  double sq = 0.0;
  for (double x : v.data()) sq += x * x;
  const double r = std::sqrt(sq);
  if (r == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
  std::vector<double> out(v.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.data()[i] / r;
  return finish(tape, "l2_normalize", {v}, v.shape(), std::move(out),
                [r](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  const auto& y = node.output.data();
                  double gy = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += (g[i] - y[i] * gy) / r;
                  }
                });
}

Tensor log_softmax(Tape* tape, const Tensor& v) {
  require_rank(v, 1, "log_softmax");
  if (v.numel() == 0) throw DimError("log_softmax: empty vector");
  const auto& x = v.data();
  const double hi = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double xi : x) z += std::exp(xi - hi);
  const double lse = hi + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return finish(tape, "log_softmax", {v}, v.shape(), std::move(out),
                [](Tape::Node& node) {
                  Tensor& in = node.inputs[0];
                  if (!in.requires_grad()) return;
                  const auto& g = node.output.grad();
                  const auto& y = node.output.data();
                  double gsum = 0.0;
                  for (double gi : g) gsum += gi;
                  auto& gx = in.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += g[i] - std::exp(y[i]) * gsum;
                  }
                });
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return finish(tape, "add", {a, b}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  for (Tensor& in : node.inputs) {
                    if (!in.requires_grad()) continue;
                    auto& gi = in.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                  }
                });
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return finish(tape, "sub", {a, b}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  Tensor& a2 = node.inputs[0];
                  Tensor& b2 = node.inputs[1];
                  if (a2.requires_grad()) {
                    auto& ga = a2.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (b2.requires_grad()) {
                    auto& gb = b2.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                  }
                });
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return finish(tape, "mul", {a, b}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  Tensor& a2 = node.inputs[0];
                  Tensor& b2 = node.inputs[1];
                  if (a2.requires_grad()) {
                    auto& ga = a2.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += g[i] * b2.data()[i];
                    }
                  }
                  if (b2.requires_grad()) {
                    auto& gb = b2.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      gb[i] += g[i] * a2.data()[i];
                    }
                  }
                });
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return finish(tape, "scale", {a}, a.shape(), std::move(out),
                [c](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
                });
}

Tensor add_scalar(Tape* tape, const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return finish(tape, "add_scalar", {a}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor exp(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return finish(tape, "exp", {a}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  const auto& y = node.output.data();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
                });
}

Tensor square(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  return finish(tape, "square", {a}, a.shape(), std::move(out),
                [](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += 2.0 * g[i] * x.data()[i];
                  }
                });
}

Tensor clamp(Tape* tape, const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(hi, std::max(lo, a.data()[i]));
  }
  return finish(tape, "clamp", {a}, a.shape(), std::move(out),
                [lo, hi](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double v = x.data()[i];
                    if (v >= lo && v <= hi) gx[i] += g[i];
                  }
                });
}

Tensor sum(Tape* tape, const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return finish(tape, "sum", {a}, {1}, {s}, [](Tape::Node& node) {
    Tensor& x = node.inputs[0];
    if (!x.requires_grad()) return;
    const double g = node.output.grad()[0];
    auto& gx = x.grad();
    for (double& v : gx) v += g;
  });
}

Tensor mean(Tape* tape, const Tensor& a) {
  if (a.numel() == 0) throw DimError("mean: empty tensor");
  double s = 0.0;
  for (double x : a.data()) s += x;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return finish(tape, "mean", {a}, {1}, {s * inv}, [inv](Tape::Node& node) {
    Tensor& x = node.inputs[0];
    if (!x.requires_grad()) return;
    const double g = node.output.grad()[0] * inv;
    auto& gx = x.grad();
    for (double& v : gx) v += g;
  });
}

Tensor dot(Tape* tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return finish(tape, "dot", {a, b}, {1}, {s}, [](Tape::Node& node) {
    const double g = node.output.grad()[0];
    Tensor& a2 = node.inputs[0];
    Tensor& b2 = node.inputs[1];
    if (a2.requires_grad()) {
      auto& ga = a2.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b2.data()[i];
    }
    if (b2.requires_grad()) {
      auto& gb = b2.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a2.data()[i];
    }
  });
}

Tensor matvec_nograd(Tape* tape, const Tensor& m, const Tensor& x) {
  require_rank(m, 2, "matvec_nograd");
  require_rank(x, 1, "matvec_nograd");
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  if (cols != x.numel()) throw DimError("matvec_nograd: extents disagree");
  std::vector<double> out(rows, 0.0);
  for (std::size_t j = 0; j < rows; ++j) {
    const double* row = m.data().data() + j * cols;
    double s = 0.0;
    for (std::size_t i = 0; i < cols; ++i) s += row[i] * x.data()[i];
    out[j] = s;
  }
  // The matrix enters as plain data, never as a differentiable input.
  return finish(tape, "matvec_nograd", {x}, {rows}, std::move(out),
                [m, rows, cols](Tape::Node& node) {
                  Tensor& v = node.inputs[0];
                  if (!v.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = v.grad();
                  for (std::size_t j = 0; j < rows; ++j) {
                    const double* row = m.data().data() + j * cols;
                    const double gj = g[j];
                    for (std::size_t i = 0; i < cols; ++i) gx[i] += gj * row[i];
                  }
                });
}

Tensor concat(Tape* tape, const std::vector<Tensor>& parts) {
  std::vector<double> out;
  std::vector<Tensor> used;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw DimError("concat: parts must be 1-D");
    if (p.numel() == 0) continue;
    out.insert(out.end(), p.data().begin(), p.data().end());
    used.push_back(p);
  }
  if (out.empty()) throw DimError("concat: nothing to concatenate");
  const std::size_t total = out.size();
  return finish(tape, "concat", used, {total}, std::move(out),
                [](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  std::size_t off = 0;
                  for (Tensor& p : node.inputs) {
                    const std::size_t n = p.numel();
                    if (p.requires_grad()) {
                      auto& gp = p.grad();
                      for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                    }
                    off += n;
                  }
                });
}

Tensor pick(Tape* tape, const Tensor& v, std::size_t index) {
  require_rank(v, 1, "pick");
  if (index >= v.numel()) throw DimError("pick: index out of range");
  return finish(tape, "pick", {v}, {1}, {v.data()[index]},
                [index](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  x.grad()[index] += node.output.grad()[0];
                });
}

Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != a.numel()) throw DimError("reshape: element count mismatch");
  return finish(tape, "reshape", {a}, std::move(shape), a.data(),
                [](Tape::Node& node) {
                  Tensor& x = node.inputs[0];
                  if (!x.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = x.grad();
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor affine(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b) {
  require_rank(w, 2, "affine");
  require_rank(x, 1, "affine");
  require_rank(b, 1, "affine");
  const std::size_t m = w.extent(0), n = w.extent(1);
  if (x.numel() != n || b.numel() != m) throw DimError("affine: extents disagree");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w.data().data() + i * n;
    double s = b.data()[i];
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x.data()[j];
    out[i] = s;
  }
  return finish(tape, "affine", {w, x, b}, {m}, std::move(out),
                [m, n](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  Tensor& tw = node.inputs[0];
                  Tensor& tx = node.inputs[1];
                  Tensor& tb = node.inputs[2];
                  if (tw.requires_grad()) {
                    auto& gw = tw.grad();
                    for (std::size_t i = 0; i < m; ++i) {
                      const double gi = g[i];
                      double* grow = gw.data() + i * n;
                      for (std::size_t j = 0; j < n; ++j) grow[j] += gi * tx.data()[j];
                    }
                  }
                  if (tx.requires_grad()) {
                    auto& gx = tx.grad();
                    for (std::size_t i = 0; i < m; ++i) {
                      const double gi = g[i];
                      const double* row = tw.data().data() + i * n;
                      for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
                    }
                  }
                  if (tb.requires_grad()) {
                    auto& gb = tb.grad();
                    for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
                  }
                });
}

Tensor add_channel_bias(Tape* tape, const Tensor& x, const Tensor& b) {
  require_rank(x, 3, "add_channel_bias");
  require_rank(b, 1, "add_channel_bias");
  const std::size_t c = x.extent(0), t = x.extent(1), n = x.extent(2);
  if (b.numel() != c) throw DimError("add_channel_bias: channel count mismatch");
  std::vector<double> out(x.numel());
  const std::size_t plane = t * n;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double bc = b.data()[ci];
    const double* src = x.data().data() + ci * plane;
    double* dst = out.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bc;
  }
  return finish(tape, "add_channel_bias", {x, b}, x.shape(), std::move(out),
                [c, plane](Tape::Node& node) {
                  const auto& g = node.output.grad();
                  Tensor& tx = node.inputs[0];
                  Tensor& tb = node.inputs[1];
                  if (tx.requires_grad()) {
                    auto& gx = tx.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (tb.requires_grad()) {
                    auto& gb = tb.grad();
                    for (std::size_t ci = 0; ci < c; ++ci) {
                      const double* grow = g.data() + ci * plane;
                      double s = 0.0;
                      for (std::size_t i = 0; i < plane; ++i) s += grow[i];
                      gb[ci] += s;
                    }
                  }
                });
}

Tensor temporal_conv(Tape* tape, const Tensor& x, const Tensor& w,
                     const Tensor& b, std::size_t stride) {
  require_rank(x, 3, "temporal_conv");
  require_rank(w, 3, "temporal_conv");
  require_rank(b, 1, "temporal_conv");
  if (stride == 0) throw ContractError("temporal_conv: stride must be positive");
  const std::size_t cin = x.extent(0), t = x.extent(1), n = x.extent(2);
  const std::size_t cout = w.extent(0), k = w.extent(2);
  if (w.extent(1) != cin) throw DimError("temporal_conv: input channel mismatch");
  if (b.numel() != cout) throw DimError("temporal_conv: bias channel mismatch");
  if (k % 2 == 0) throw ContractError("temporal_conv: kernel must be odd");
  const std::size_t pad = (k - 1) / 2;
  const std::size_t tout = (t - 1) / stride + 1;

  std::vector<double> out(cout * tout * n);
  const double* px = x.data().data();
  const double* pw = w.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t to = 0; to < tout; ++to) {
      double* orow = out.data() + (co * tout + to) * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] = b.data()[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* wrow = pw + (co * cin + ci) * k;
        for (std::size_t dt = 0; dt < k; ++dt) {
          const long ti = static_cast<long>(to * stride + dt) - static_cast<long>(pad);
          if (ti < 0 || ti >= static_cast<long>(t)) continue;
          const double wv = wrow[dt];
          const double* xrow = px + (ci * t + static_cast<std::size_t>(ti)) * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += wv * xrow[j];
        }
      }
    }
  }

  return finish(
      tape, "temporal_conv", {x, w, b}, {cout, tout, n}, std::move(out),
      [cin, t, n, cout, k, pad, tout, stride](Tape::Node& node) {
        const auto& g = node.output.grad();
        Tensor& tx = node.inputs[0];
        Tensor& tw = node.inputs[1];
        Tensor& tb = node.inputs[2];
        if (tb.requires_grad()) {
          auto& gb = tb.grad();
          for (std::size_t co = 0; co < cout; ++co) {
            double s = 0.0;
            const double* gplane = g.data() + co * tout * n;
            for (std::size_t i = 0; i < tout * n; ++i) s += gplane[i];
            gb[co] += s;
          }
        }
        const bool need_x = tx.requires_grad();
        const bool need_w = tw.requires_grad();
        if (!need_x && !need_w) return;
        double* gx = need_x ? tx.grad().data() : nullptr;
        double* gw = need_w ? tw.grad().data() : nullptr;
        const double* px = tx.data().data();
        const double* pw = tw.data().data();
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t to = 0; to < tout; ++to) {
            const double* grow = g.data() + (co * tout + to) * n;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* wrow = pw + (co * cin + ci) * k;
              for (std::size_t dt = 0; dt < k; ++dt) {
                const long ti =
                    static_cast<long>(to * stride + dt) - static_cast<long>(pad);
                if (ti < 0 || ti >= static_cast<long>(t)) continue;
                const std::size_t xoff = (ci * t + static_cast<std::size_t>(ti)) * n;
                if (need_w) {
                  double s = 0.0;
                  for (std::size_t j = 0; j < n; ++j) s += grow[j] * px[xoff + j];
                  gw[(co * cin + ci) * k + dt] += s;
                }
                if (need_x) {
                  const double wv = wrow[dt];
                  for (std::size_t j = 0; j < n; ++j) gx[xoff + j] += wv * grow[j];
                }
              }
            }
          }
        }
      });
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t c = x.extent(0), t = x.extent(1), n = x.extent(2);
  const std::size_t plane = t * n;
  const double inv = 1.0 / static_cast<double>(plane);
  std::vector<double> out(c, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double* src = x.data().data() + ci * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out[ci] = s * inv;
  }
  return finish(tape, "global_avg_pool", {x}, {c}, std::move(out),
                [c, plane, inv](Tape::Node& node) {
                  Tensor& tx = node.inputs[0];
                  if (!tx.requires_grad()) return;
                  const auto& g = node.output.grad();
                  auto& gx = tx.grad();
                  for (std::size_t ci = 0; ci < c; ++ci) {
                    const double gv = g[ci] * inv;
                    double* dst = gx.data() + ci * plane;
                    for (std::size_t i = 0; i < plane; ++i) dst[i] += gv;
                  }
                });
}

Tensor channel_norm(Tape* tape, const Tensor& x, double eps) {
  require_rank(x, 3, "channel_norm");
  const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
  std::vector<double> out(x.numel());
  std::vector<double> scale_by_channel(c);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double* src = x.data().data() + ci * plane;
    double mu = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mu += src[i];
    mu /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(plane);
    const double s = std::sqrt(var + eps);
    scale_by_channel[ci] = s;
    double* dst = out.data() + ci * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) / s;
  }
  return finish(tape, "channel_norm", {x}, x.shape(), std::move(out),
                [c, plane, scale_by_channel](Tape::Node& node) {
                  Tensor& tx = node.inputs[0];
                  if (!tx.requires_grad()) return;
                  const auto& g = node.output.grad();
                  const auto& y = node.output.data();
                  auto& gx = tx.grad();
                  for (std::size_t ci = 0; ci < c; ++ci) {
                    const double* gc = g.data() + ci * plane;
                    const double* yc = y.data() + ci * plane;
                    double gmean = 0.0, gymean = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                      gmean += gc[i];
                      gymean += gc[i] * yc[i];
                    }
                    gmean /= static_cast<double>(plane);
                    gymean /= static_cast<double>(plane);
                    double* dst = gx.data() + ci * plane;
                    const double s = scale_by_channel[ci];
                    for (std::size_t i = 0; i < plane; ++i) {
                      dst[i] += (gc[i] - gmean - yc[i] * gymean) / s;
                    }
                  }
                });
}

Tensor standardize(Tape* tape, const Tensor& x, double eps) {
  const std::size_t n = x.numel();
  if (n == 0) throw DimError("standardize: empty tensor");
  double mu = 0.0;
  for (double v : x.data()) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x.data()) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double s = std::sqrt(var + eps);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x.data()[i] - mu) / s;
  return finish(tape, "standardize", {x}, x.shape(), std::move(out),
                [s, n](Tape::Node& node) {
                  Tensor& tx = node.inputs[0];
                  if (!tx.requires_grad()) return;
                  const auto& g = node.output.grad();
                  const auto& y = node.output.data();
                  double gmean = 0.0, gymean = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    gmean += g[i];
                    gymean += g[i] * y[i];
                  }
                  gmean /= static_cast<double>(n);
                  gymean /= static_cast<double>(n);
                  auto& gx = tx.grad();
                  for (std::size_t i = 0; i < n; ++i) {
                    gx[i] += (g[i] - gmean - y[i] * gymean) / s;
                  }
                });
}

}  // namespace vcl::ops
