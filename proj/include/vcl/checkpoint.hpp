#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vcl/tensor.hpp"

namespace vcl {

// Ordered named-tensor table, the single envelope every checkpoint uses for
// model weights, optimizer moments, queue state, RNG state and metadata.
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, Tensor t);
  void add_value(const std::string& name, double v);
  void add_values(const std::string& name, const std::vector<double>& v);
  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
  double value(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
};

// VCLC container, little-endian: magic "VCLC", u32 version=1, u64 config
// hash, u32 tensor count, then per tensor: u32 name length, UTF-8 name,
// u32 rank, u64 extents, float64 payload. Writing the result of a read
// reproduces the input byte for byte.
void write_checkpoint(const std::string& path, std::uint64_t config_hash,
                      const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::string& path,
                             std::uint64_t* config_hash);

// FNV-1a over a byte string; used for config hashing.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace vcl
