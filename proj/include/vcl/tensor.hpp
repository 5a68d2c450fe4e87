#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vcl {

// Dense row-major tensor of 64-bit floats. A Tensor is a cheap handle onto
// shared storage; copying a handle never copies data. Data is immutable after
// an operation completes except for the gradient buffer, which backward()
// accumulates into.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape,
                          std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t extent(std::size_t axis) const { return shape().at(axis); }

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;  // scalar tensors only

  bool requires_grad() const;
  // Enabling allocates a zeroed gradient buffer; disabling drops it.
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::vector<double>& grad();  // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy (fresh storage, gradient buffer not copied).
  Tensor clone(bool requires_grad = false) const;

  // Storage identity, used for structure checks and tape bookkeeping.
  const void* id() const { return d_.get(); }

 private:
  struct Storage {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until needed
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Storage> d) : d_(std::move(d)) {}
  std::shared_ptr<Storage> d_;
};

// Throws if any element of t is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

// Execution tape for reverse-mode differentiation. Operations append nodes in
// execution order, which is already topological; backward() replays the nodes
// once, in reverse. A tape is confined to one thread.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output,
              std::function<void(Node&)> backward);
  std::size_t size() const { return nodes_.size(); }
  bool produced(const Tensor& t) const;
  void clear() { nodes_.clear(); }

  friend void backward(Tape& tape, const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and walks the tape in reverse, accumulating
// gradients additively into every requires_grad tensor reachable from loss.
void backward(Tape& tape, const Tensor& loss);

// Compares the analytic gradient of a scalar-valued function against central
// finite differences. Returns max over coordinates of
// |analytic - numeric| / max(1, |analytic|).
double finite_diff_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
    double h);

}  // namespace vcl
