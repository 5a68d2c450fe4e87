#include "vcl/tensor.hpp"

#include <cmath>

#include "vcl/errors.hpp"

namespace vcl {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->data.assign(shape_numel(shape), 0.0);
  s->shape = std::move(shape);
  Tensor t{std::move(s)};
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->data.assign(shape_numel(shape), value);
  s->shape = std::move(shape);
  Tensor t{std::move(s)};
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape,
                         std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimError("Tensor::from_data: shape does not match data length");
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  Tensor t{std::move(s)};
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  if (!d_) throw ContractError("Tensor: undefined handle");
  return d_->shape;
}

std::size_t Tensor::numel() const { return d_ ? d_->data.size() : 0; }

std::vector<double>& Tensor::data() {
  if (!d_) throw ContractError("Tensor: undefined handle");
  return d_->data;
}

const std::vector<double>& Tensor::data() const {
  if (!d_) throw ContractError("Tensor: undefined handle");
  return d_->data;
}

double Tensor::value() const {
  if (numel() != 1) throw ContractError("Tensor::value: tensor is not scalar");
  return data()[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!d_) throw ContractError("Tensor: undefined handle");
  d_->requires_grad = on;
  if (on) {
    if (d_->grad.size() != d_->data.size()) {
      d_->grad.assign(d_->data.size(), 0.0);
    }
  } else {
    d_->grad.clear();
  }
}

bool Tensor::has_grad() const { return d_ && !d_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  if (!d_) throw ContractError("Tensor: undefined handle");
  if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("Tensor::grad: no gradient present");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_ && !d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  if (!d_) throw ContractError("Tensor: undefined handle");
  return from_data(d_->shape, d_->data, requires_grad);
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw ContractError(std::string(op) + ": non-finite value produced");
    }
  }
}

void Tape::record(std::vector<Tensor> inputs, Tensor output,
                  std::function<void(Node&)> backward) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

bool Tape::produced(const Tensor& t) const {
  for (const auto& n : nodes_) {
    if (n.output.id() == t.id()) return true;
  }
  return false;
}

void backward(Tape& tape, const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar");
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  // Reverse replay. A node fires only if some later node (or the seed)
  // deposited a gradient on its output; each node is visited exactly once.
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    if (it->output.has_grad() && it->backward) {
      it->backward(*it);
    }
  }
}

double finite_diff_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
    double h) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");

  Tensor probe = x.clone(/*requires_grad=*/true);
  Tape tape;
  Tensor out = f(tape, probe);
  if (out.numel() != 1) {
    throw ContractError("finite_diff_check: f must return a scalar");
  }
  backward(tape, out);
  const std::vector<double> analytic = probe.grad();

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x.clone();
    Tensor xm = x.clone();
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Tape tp, tm;
    const double fp = f(tp, xp).value();
    const double fm = f(tm, xm).value();
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace vcl
