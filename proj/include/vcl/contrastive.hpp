#pragma once

#include <cstdint>
#include <vector>

#include "vcl/encoder.hpp"
#include "vcl/tensor.hpp"

namespace vcl {

// Fixed-capacity FIFO of unit-normalized key latents, kept as a ring buffer.
// Vectors are stored exactly as pushed; pushing a vector whose norm is off by
// more than 1e-6 is a contract error.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t capacity, std::size_t dim);

  // Fills to capacity with seed-controlled random unit vectors so the
  // contrastive loss is well defined from step 0.
  void fill_random(RngStream& rng);

  void push(const std::vector<std::vector<double>>& batch);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  std::uint64_t total_pushed() const { return total_pushed_; }

  // Contents oldest-to-newest as a [size x dim] tensor (the negatives).
  Tensor snapshot() const;

  // Raw ring-buffer state, for checkpointing.
  const std::vector<double>& storage() const { return entries_; }
  std::size_t cursor() const { return cursor_; }
  void restore(std::vector<double> entries, std::size_t cursor,
               std::size_t count, std::uint64_t total_pushed);

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::vector<double> entries_;  // capacity x dim, slot-indexed
  std::size_t cursor_ = 0;       // next slot to write
  std::size_t count_ = 0;
  std::uint64_t total_pushed_ = 0;
};

// Query/key parameter twins with the momentum coefficient. The key branch is
// created as an exact copy of the query branch and never receives gradients.
struct EncoderPair {
  EncoderParams query;
  EncoderParams key;
  double momentum = 0.99;  // epsilon

  static EncoderPair init(const StgcnConfig& cfg, std::size_t in_channels,
                          double momentum, RngStream& rng);
};

// theta_k <- eps * theta_k + (1 - eps) * theta_q, elementwise over the whole
// parameter list; throws ContractError when the structures disagree.
void momentum_update(EncoderPair& pair);

// InfoNCE over one positive and J queued negatives at temperature tau.
// Both z vectors are l2-normalized inside; negatives are held constant
// (stop-gradient). J = 0 yields exactly zero loss.
Tensor infonce_loss(Tape* tape, const Tensor& z_q, const Tensor& z_k,
                    const Tensor& negatives, double tau);

// KL(N(mu, sigma^2) || N(0, I)) in closed form, summed over coordinates:
// sum_i -1/2 (1 + logvar_i - exp(logvar_i) - mu_i^2). Always >= 0.
Tensor kl_loss(Tape* tape, const Tensor& mu, const Tensor& logvar);

struct TotalLoss {
  Tensor total;           // infonce + kl_q + kl_k (kl_k enters as a constant)
  double infonce = 0.0;   // component values, for metrics
  double kl_query = 0.0;
  double kl_key = 0.0;
};

// Pretext objective. The key-branch KL is reported but contributes no
// gradient: the key branch only ever moves by momentum updates.
TotalLoss total_loss(Tape* tape, const Tensor& z_q, const Tensor& z_k,
                     const Tensor& negatives, double tau, const Tensor& mu_q,
                     const Tensor& logvar_q, const Tensor& mu_k,
                     const Tensor& logvar_k);

}  // namespace vcl
