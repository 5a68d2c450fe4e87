#include "vcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vcl/errors.hpp"

namespace vcl {

Stream stream_from_name(const std::string& name) {
  if (name == "joint") return Stream::kJoint;
  if (name == "bone") return Stream::kBone;
  if (name == "motion") return Stream::kMotion;
  throw ConfigError("unknown stream '" + name + "'");
}

const char* stream_name(Stream s) {
  switch (s) {
    case Stream::kJoint: return "joint";
    case Stream::kBone: return "bone";
    case Stream::kMotion: return "motion";
  }
  return "?";
}

void Dataset::validate() const {
  topology.validate();
  for (const auto& s : samples) {
    s.validate();
    if (s.joints != topology.n_joints) {
      throw DimError("Dataset: sample joint count differs from topology");
    }
    if (!samples.empty() && (s.channels != samples.front().channels ||
                             s.joints != samples.front().joints)) {
      throw DimError("Dataset: samples disagree on (C, N)");
    }
    if (s.label >= class_names.size()) {
      throw ContractError("Dataset: label out of range");
    }
  }
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> h(class_names.size(), 0);
  for (const auto& s : samples) h[s.label]++;
  return h;
}

namespace {

// Static pose shared by all classes, laid out by walking the tree.
std::vector<double> base_pose(const SkeletonTopology& topo, std::uint64_t seed) {
  auto rng = stream_for(seed, StreamTag::kSynthPose);
  std::vector<double> pose(3 * topo.n_joints, 0.0);
  // Children placed breadth-first at parent + random offset of length
  // 0.2..0.35, so the skeleton has plausible limb proportions.
  std::vector<char> placed(topo.n_joints, 0);
  placed[topo.root] = 1;
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto [p, c] : topo.edges) {
      if (!placed[p] || placed[c]) continue;
      double dx = rng.uniform(-1.0, 1.0);
      double dy = rng.uniform(-1.0, 1.0);
      double dz = rng.uniform(-1.0, 1.0);
      const double norm = std::sqrt(dx * dx + dy * dy + dz * dz) + 1e-9;
      const double len = rng.uniform(0.2, 0.35);
      pose[3 * c + 0] = pose[3 * p + 0] + dx / norm * len;
      pose[3 * c + 1] = pose[3 * p + 1] + dy / norm * len;
      pose[3 * c + 2] = pose[3 * p + 2] + dz / norm * len;
      placed[c] = 1;
      progress = true;
    }
  }
  return pose;
}

struct ClassMotion {
  std::size_t joint_a = 0, joint_b = 0;
  // Per joint (2) and channel (3): amplitude, integer frequency, phase.
  double amp[2][3];
  double freq[2][3];
  double phase[2][3];
};

ClassMotion class_motion(const SkeletonTopology& topo, std::uint64_t seed,
                         std::size_t class_index) {
  ClassMotion m;
  const std::size_t span = topo.n_joints - 2;
  m.joint_a = 2 + (2 * class_index) % span;
  m.joint_b = 2 + (2 * class_index + 1) % span;
  auto rng = stream_for(seed, StreamTag::kSynthClass, class_index);
  for (int j = 0; j < 2; ++j) {
    for (int c = 0; c < 3; ++c) {
      m.amp[j][c] = rng.uniform(0.5, 1.0);
      m.freq[j][c] = 1.0 + static_cast<double>(rng.uniform_int(3));
      m.phase[j][c] = rng.uniform(0.0, 6.28318530717958647692);
    }
  }
  return m;
}

SkeletonSequence render(const SkeletonTopology& topo,
                        const std::vector<double>& pose, const ClassMotion& m,
                        std::size_t frames, double speed, double yaw,
                        double noise_sigma, RngStream* noise_rng) {
  SkeletonSequence s;
  s.channels = 3;
  s.frames = frames;
  s.joints = topo.n_joints;
  s.coords.assign(3 * frames * topo.n_joints, 0.0);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  for (std::size_t t = 0; t < frames; ++t) {
    const double tau = static_cast<double>(t) / static_cast<double>(frames);
    for (std::size_t n = 0; n < topo.n_joints; ++n) {
      double p[3] = {pose[3 * n + 0], pose[3 * n + 1], pose[3 * n + 2]};
      for (int j = 0; j < 2; ++j) {
        const std::size_t mj = j == 0 ? m.joint_a : m.joint_b;
        if (mj != n) continue;
        for (int c = 0; c < 3; ++c) {
          p[c] += m.amp[j][c] *
                  std::sin(6.28318530717958647692 * m.freq[j][c] * speed * tau +
                           m.phase[j][c]);
        }
      }
      // Yaw about the vertical (z) axis.
      const double rx = cy * p[0] - sy * p[1];
      const double ry = sy * p[0] + cy * p[1];
      double out[3] = {rx, ry, p[2]};
      if (noise_rng != nullptr && noise_sigma > 0.0) {
        for (double& v : out) v += noise_sigma * noise_rng->normal();
      }
      for (int c = 0; c < 3; ++c) s.at(c, t, n) = out[c];
    }
  }
  return s;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg, const SkeletonTopology& topo) {
  if (cfg.n_classes < 2) throw ContractError("synth_generate: need >= 2 classes");
  if (cfg.per_class < 2) {
    throw ContractError("synth_generate: need >= 2 samples per class");
  }
  topo.validate();
  Dataset d;
  d.topology = topo;
  const std::vector<double> pose = base_pose(topo, cfg.seed);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    d.class_names.push_back("class_" + std::to_string(c));
    const ClassMotion m = class_motion(topo, cfg.seed, c);
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      auto rng = stream_for(cfg.seed, StreamTag::kSynthSample, c, i);
      const double yaw = cfg.jitter * rng.uniform(-0.2, 0.2);
      const double speed = 1.0 + cfg.jitter * rng.uniform(-0.1, 0.1);
      const double sigma = 0.02 * cfg.jitter;
      SkeletonSequence s =
          render(topo, pose, m, cfg.frames, speed, yaw, sigma, &rng);
      s.label = static_cast<std::uint32_t>(c);
      s.subject_id = static_cast<std::uint32_t>(i);
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

SkeletonSequence synth_template(const SynthConfig& cfg,
                                const SkeletonTopology& topo,
                                std::size_t class_index) {
  const std::vector<double> pose = base_pose(topo, cfg.seed);
  const ClassMotion m = class_motion(topo, cfg.seed, class_index);
  SkeletonSequence s = render(topo, pose, m, cfg.frames, 1.0, 0.0, 0.0, nullptr);
  s.label = static_cast<std::uint32_t>(class_index);
  return s;
}

Dataset category_balanced_subset(const Dataset& d, double fraction,
                                 RngStream& rng) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ContractError("category_balanced_subset: fraction must be in (0, 1]");
  }
  std::vector<std::vector<std::size_t>> per_class(d.n_classes());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    per_class[d.samples[i].label].push_back(i);
  }
  Dataset out;
  out.topology = d.topology;
  out.class_names = d.class_names;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& pool = per_class[c];
    const std::size_t want = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(pool.size())));
    if (want == 0) {
      throw InsufficientLabelsError(
          "category_balanced_subset: class " + std::to_string(c) +
          " rounds to zero samples");
    }
    // Partial Fisher-Yates, uniform without replacement.
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + rng.uniform_int(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    for (std::size_t i = 0; i < want; ++i) {
      out.samples.push_back(d.samples[pool[i]]);
    }
  }
  return out;
}

Dataset derive_stream(const Dataset& d, Stream stream) {
  if (stream == Stream::kJoint) return d;
  Dataset out;
  out.topology = d.topology;
  out.class_names = d.class_names;
  out.samples.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    out.samples.push_back(stream == Stream::kBone
                              ? derive_bone_stream(s, d.topology)
                              : derive_motion_stream(s));
  }
  return out;
}

SplitView subject_split(const Dataset& d, std::size_t mod) {
  if (mod < 2) throw ContractError("subject_split: mod must be >= 2");
  SplitView v;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (d.samples[i].subject_id % mod == mod - 1) {
      v.test.push_back(i);
    } else {
      v.train.push_back(i);
    }
  }
  return v;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
  std::ifstream in;
  std::size_t offset = 0;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {}

  void need(void* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw FormatError(std::string("dataset: truncated ") + what +
                        " at byte offset " + std::to_string(offset));
    }
    offset += n;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    need(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  double f64(const char* what) {
    unsigned char b[8];
    need(b, 8, what);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void save_dataset(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("dataset: cannot open " + path + " for writing");
  if (d.samples.empty()) throw ContractError("save_dataset: empty dataset");
  const auto& first = d.samples.front();
  for (const auto& s : d.samples) {
    if (s.frames != first.frames) {
      throw DimError("save_dataset: samples must share T");
    }
  }
  out.write("SKL1", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(d.samples.size()));
  put_u32(out, static_cast<std::uint32_t>(first.channels));
  put_u32(out, static_cast<std::uint32_t>(first.frames));
  put_u32(out, static_cast<std::uint32_t>(first.joints));
  put_u32(out, static_cast<std::uint32_t>(d.n_classes()));
  put_u32(out, static_cast<std::uint32_t>(d.topology.n_joints));
  for (auto [p, c] : d.topology.edges) {
    put_u32(out, p);
    put_u32(out, c);
  }
  for (const auto& s : d.samples) {
    put_u32(out, s.label);
    put_u32(out, s.subject_id);
    for (double v : s.coords) put_f64(out, v);
  }
  if (!out) throw FormatError("dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  Reader r(path);
  if (!r.in) throw FormatError("dataset: cannot open " + path);
  char magic[4];
  r.need(magic, 4, "magic");
  if (std::memcmp(magic, "SKL1", 4) != 0) {
    throw FormatError("dataset: bad magic at byte offset 0");
  }
  const std::uint32_t version = r.u32("version");
  if (version != 1) {
    throw FormatError("dataset: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  const std::uint32_t n_samples = r.u32("sample count");
  const std::uint32_t channels = r.u32("C");
  const std::uint32_t frames = r.u32("T");
  const std::uint32_t joints = r.u32("N");
  const std::uint32_t n_classes = r.u32("class count");
  const std::uint32_t topo_joints = r.u32("topology joint count");
  if (channels != 3 || frames < 2 || joints < 2 || topo_joints != joints) {
    throw FormatError("dataset: inconsistent header extents at byte offset 12");
  }

  Dataset d;
  d.topology.n_joints = topo_joints;
  std::vector<char> is_child(topo_joints, 0);
  for (std::uint32_t e = 0; e + 1 < topo_joints; ++e) {
    const std::uint32_t p = r.u32("edge parent");
    const std::uint32_t c = r.u32("edge child");
    if (p >= topo_joints || c >= topo_joints) {
      throw FormatError("dataset: edge index out of range at byte offset " +
                        std::to_string(r.offset - 8));
    }
    d.topology.edges.emplace_back(p, c);
    is_child[c] = 1;
  }
  for (std::uint32_t j = 0; j < topo_joints; ++j) {
    if (!is_child[j]) {
      d.topology.root = j;
      break;
    }
  }
  d.topology.validate();

  for (std::uint32_t c = 0; c < n_classes; ++c) {
    d.class_names.push_back("class_" + std::to_string(c));
  }
  for (std::uint32_t i = 0; i < n_samples; ++i) {
    SkeletonSequence s;
    s.channels = channels;
    s.frames = frames;
    s.joints = joints;
    s.label = r.u32("label");
    s.subject_id = r.u32("subject id");
    if (s.label >= n_classes) {
      throw FormatError("dataset: label out of range at byte offset " +
                        std::to_string(r.offset - 8));
    }
    s.coords.resize(static_cast<std::size_t>(channels) * frames * joints);
    for (double& v : s.coords) v = r.f64("coords");
    d.samples.push_back(std::move(s));
  }
  d.validate();
  return d;
}

void save_manifest(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("manifest: cannot write " + path);
  out << "joints " << d.topology.n_joints << "\n";
  out << "root " << d.topology.root << "\n";
  for (auto [p, c] : d.topology.edges) out << "edge " << p << " " << c << "\n";
  for (const auto& name : d.class_names) out << "class " << name << "\n";
}

}  // namespace vcl
