#include "vcl/contrastive.hpp"

#include <cmath>

#include "vcl/errors.hpp"
#include "vcl/ops.hpp"

namespace vcl {

MemoryQueue::MemoryQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), entries_(capacity * dim, 0.0) {
  if (capacity == 0) throw ContractError("MemoryQueue: capacity must be positive");
  if (dim == 0) throw ContractError("MemoryQueue: dim must be positive");
}

void MemoryQueue::fill_random(RngStream& rng) {
  for (std::size_t s = 0; s < capacity_; ++s) {
    double norm = 0.0;
    std::vector<double> v(dim_);
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (std::size_t i = 0; i < dim_; ++i) entries_[s * dim_ + i] = v[i] / norm;
  }
  cursor_ = 0;
  count_ = capacity_;
}

void MemoryQueue::push(const std::vector<std::vector<double>>& batch) {
  for (const auto& v : batch) {
    if (v.size() != dim_) throw DimError("MemoryQueue::push: wrong dimension");
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ContractError("MemoryQueue::push: vector is not unit-normalized");
    }
  }
  for (const auto& v : batch) {
    for (std::size_t i = 0; i < dim_; ++i) entries_[cursor_ * dim_ + i] = v[i];
    cursor_ = (cursor_ + 1) % capacity_;
    if (count_ < capacity_) ++count_;
    ++total_pushed_;
  }
}

Tensor MemoryQueue::snapshot() const {
  std::vector<double> out(count_ * dim_);
  // Oldest entry sits at the cursor once the buffer has wrapped.
  const std::size_t first = count_ == capacity_ ? cursor_ : 0;
  for (std::size_t i = 0; i < count_; ++i) {
    const std::size_t slot = (first + i) % capacity_;
    for (std::size_t j = 0; j < dim_; ++j) {
      out[i * dim_ + j] = entries_[slot * dim_ + j];
    }
  }
  return Tensor::from_data({count_, dim_}, std::move(out));
}

void MemoryQueue::restore(std::vector<double> entries, std::size_t cursor,
                          std::size_t count, std::uint64_t total_pushed) {
  if (entries.size() != capacity_ * dim_ || cursor >= capacity_ ||
      count > capacity_) {
    throw ContractError("MemoryQueue::restore: state does not fit this queue");
  }
  entries_ = std::move(entries);
  cursor_ = cursor;
  count_ = count;
  total_pushed_ = total_pushed;
}

EncoderPair EncoderPair::init(const StgcnConfig& cfg, std::size_t in_channels,
                              double momentum, RngStream& rng) {
  if (momentum < 0.0 || momentum > 1.0) {
    throw ContractError("EncoderPair: momentum must lie in [0, 1]");
  }
  EncoderPair p;
  p.query = EncoderParams::init(cfg, in_channels, rng);
  p.key = p.query.clone(/*requires_grad=*/false);
  p.momentum = momentum;
  return p;
}

void momentum_update(EncoderPair& pair) {
  const auto q = pair.query.named();
  auto k = pair.key.named();
  if (q.size() != k.size()) {
    throw ContractError("momentum_update: parameter structures differ");
  }
  const double eps = pair.momentum;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i].first != k[i].first ||
        q[i].second.shape() != k[i].second.shape()) {
      throw ContractError("momentum_update: parameter structures differ");
    }
    const auto& qd = q[i].second.data();
    auto& kd = k[i].second.data();
    for (std::size_t j = 0; j < kd.size(); ++j) {
      kd[j] = eps * kd[j] + (1.0 - eps) * qd[j];
    }
  }
}

Tensor infonce_loss(Tape* tape, const Tensor& z_q, const Tensor& z_k,
                    const Tensor& negatives, double tau) {
  if (tau <= 0.0) throw ContractError("infonce_loss: tau must be positive");
  if (z_q.rank() != 1 || z_q.shape() != z_k.shape()) {
    throw DimError("infonce_loss: z_q and z_k must be matching vectors");
  }
  if (negatives.rank() != 2 || negatives.extent(1) != z_q.numel()) {
    throw DimError("infonce_loss: negatives must be J x d");
  }
  Tensor q = ops::l2_normalize(tape, z_q);
  Tensor k = ops::l2_normalize(tape, z_k);
  Tensor pos = ops::scale(tape, ops::dot(tape, q, k), 1.0 / tau);
  Tensor logits;
  if (negatives.extent(0) == 0) {
    logits = pos;
  } else {
    Tensor neg = ops::scale(tape, ops::matvec_nograd(tape, negatives, q),
                            1.0 / tau);
    logits = ops::concat(tape, {pos, neg});
  }
  Tensor log_probs = ops::log_softmax(tape, logits);
  return ops::scale(tape, ops::pick(tape, log_probs, 0), -1.0);
}

Tensor kl_loss(Tape* tape, const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) throw DimError("kl_loss: shape mismatch");
  // sum 1/2 (exp(logvar) + mu^2 - logvar - 1), the closed form against a
  // standard-normal prior.
  Tensor var = ops::exp(tape, logvar);
  Tensor inner = ops::add_scalar(
      tape,
      ops::sub(tape, ops::add(tape, var, ops::square(tape, mu)), logvar),
      -1.0);
  return ops::scale(tape, ops::sum(tape, inner), 0.5);
}

TotalLoss total_loss(Tape* tape, const Tensor& z_q, const Tensor& z_k,
                     const Tensor& negatives, double tau, const Tensor& mu_q,
                     const Tensor& logvar_q, const Tensor& mu_k,
                     const Tensor& logvar_k) {
  TotalLoss out;
  Tensor nce = infonce_loss(tape, z_q, z_k, negatives, tau);
  Tensor klq = kl_loss(tape, mu_q, logvar_q);
  // The key-branch term enters as a value only (stop-gradient).
  const double klk = kl_loss(nullptr, mu_k, logvar_k).value();
  out.infonce = nce.value();
  out.kl_query = klq.value();
  out.kl_key = klk;
  out.total =
      ops::add(tape, ops::add(tape, nce, klq), Tensor::scalar(klk));
  return out;
}

}  // namespace vcl
