#include "vcl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vcl/errors.hpp"

namespace vcl {

void NamedTensors::add(const std::string& name, Tensor t) {
  if (find(name) != nullptr) {
    throw ContractError("NamedTensors: duplicate name " + name);
  }
  items.emplace_back(name, std::move(t));
}

void NamedTensors::add_value(const std::string& name, double v) {
  add(name, Tensor::scalar(v));
}

void NamedTensors::add_values(const std::string& name,
                              const std::vector<double>& v) {
  add(name, Tensor::from_data({v.size()}, v));
}

const Tensor* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& NamedTensors::require(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) {
    throw FormatError("checkpoint: missing tensor '" + name + "'");
  }
  return *t;
}

double NamedTensors::value(const std::string& name) const {
  return require(name).value();
}

namespace {

void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  std::ifstream in;
  std::size_t offset = 0;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {}

  void need(void* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw FormatError(std::string("checkpoint: truncated ") + what +
                        " at byte offset " + std::to_string(offset));
    }
    offset += n;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    need(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    need(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void write_checkpoint(const std::string& path, std::uint64_t config_hash,
                      const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
  out.write("VCLC", 4);
  put_u32(out, 1);
  put_u64(out, config_hash);
  put_u32(out, static_cast<std::uint32_t>(tensors.items.size()));
  for (const auto& [name, t] : tensors.items) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    for (double v : t.data()) put_f64(out, v);
  }
  if (!out) throw FormatError("checkpoint: write failed for " + path);
}

NamedTensors read_checkpoint(const std::string& path,
                             std::uint64_t* config_hash) {
  Reader r(path);
  if (!r.in) throw FormatError("checkpoint: cannot open " + path);
  char magic[4];
  r.need(magic, 4, "magic");
  if (std::memcmp(magic, "VCLC", 4) != 0) {
    throw FormatError("checkpoint: bad magic at byte offset 0");
  }
  const std::uint32_t version = r.u32("version");
  if (version != 1) {
    throw FormatError("checkpoint: unsupported version at byte offset 4");
  }
  const std::uint64_t hash = r.u64("config hash");
  if (config_hash != nullptr) *config_hash = hash;
  const std::uint32_t count = r.u32("tensor count");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name(name_len, '\0');
    r.need(name.data(), name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(r.u64("extent"));
      numel *= e;
    }
    std::vector<double> data(numel);
    for (auto& v : data) v = r.f64("payload");
    out.add(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace vcl
