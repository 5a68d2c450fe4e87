#include "vcl/optim.hpp"

#include <cmath>

#include "vcl/errors.hpp"

namespace vcl {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) {
      throw ContractError("AdamW: all parameters must require gradients");
    }
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double g : params_[i].grad()) {
      if (!std::isfinite(g)) {
        throw ContractError("AdamW::step: non-finite gradient in parameter " +
                            std::to_string(i) + "; step aborted");
      }
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].data();
    const auto& g = params_[i].grad();
    auto& m = m_[i].data();
    auto& v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= cfg_.lr * cfg_.weight_decay * p[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::restore(const std::vector<Tensor>& m, const std::vector<Tensor>& v,
                    std::uint64_t step) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw ContractError("AdamW::restore: moment count mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].shape() != params_[i].shape() ||
        v[i].shape() != params_[i].shape()) {
      throw ContractError("AdamW::restore: moment shape mismatch");
    }
    m_[i].data() = m[i].data();
    v_[i].data() = v[i].data();
  }
  step_ = step;
}

double Schedule::lr_at(std::size_t epoch) const {
  double lr = base_lr;
  for (auto [at, factor] : milestones) {
    if (epoch >= at) lr *= factor;
  }
  return lr;
}

void Schedule::validate() const {
  if (base_lr <= 0.0) throw ContractError("Schedule: base_lr must be positive");
  std::size_t prev = 0;
  bool first = true;
  for (auto [at, factor] : milestones) {
    if (!first && at <= prev) {
      throw ContractError("Schedule: milestones must be strictly increasing");
    }
    if (factor <= 0.0) throw ContractError("Schedule: factors must be positive");
    prev = at;
    first = false;
  }
}

}  // namespace vcl
