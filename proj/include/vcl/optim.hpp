#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcl/tensor.hpp"

namespace vcl {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. The decay shrink is applied first
// (param *= 1 - lr * wd), then the bias-corrected moment step.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // Validates all gradients first and throws ContractError without touching
  // any parameter if one is non-finite.
  void step();
  void zero_grad();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::uint64_t step_count() const { return step_; }

  // Moment buffers aligned with the parameter list, for checkpointing.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(const std::vector<Tensor>& m, const std::vector<Tensor>& v,
               std::uint64_t step);

 private:
  std::vector<Tensor> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamWConfig cfg_;
  std::uint64_t step_ = 0;
};

// Piecewise-constant learning-rate decay: the base rate times the product of
// the factors of all milestones whose epoch has been reached.
struct Schedule {
  double base_lr = 1e-3;
  std::vector<std::pair<std::size_t, double>> milestones;  // (epoch, factor)

  double lr_at(std::size_t epoch) const;
  void validate() const;
};

}  // namespace vcl
