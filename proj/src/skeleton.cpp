#include "vcl/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "vcl/errors.hpp"

namespace vcl {

void SkeletonSequence::validate() const {
  if (channels != 3) throw DimError("SkeletonSequence: C must be 3");
  if (frames < 2) throw DegenerateInputError("SkeletonSequence: T must be >= 2");
  if (joints < 2) throw DimError("SkeletonSequence: N must be >= 2");
  if (coords.size() != channels * frames * joints) {
    throw DimError("SkeletonSequence: coordinate buffer size mismatch");
  }
  for (double v : coords) {
    if (!std::isfinite(v)) {
      throw ContractError("SkeletonSequence: non-finite coordinate");
    }
  }
}

void SkeletonTopology::validate() const {
  if (n_joints == 0) throw ContractError("SkeletonTopology: no joints");
  if (root >= n_joints) throw ContractError("SkeletonTopology: root out of range");
  if (edges.size() + 1 != n_joints) {
    throw ContractError("SkeletonTopology: edge count must be n_joints - 1");
  }
  std::vector<int> child_seen(n_joints, 0);
  for (auto [p, c] : edges) {
    if (p >= n_joints || c >= n_joints) {
      throw ContractError("SkeletonTopology: edge index out of range");
    }
    if (c == root) throw ContractError("SkeletonTopology: root cannot be a child");
    if (child_seen[c]++) {
      throw ContractError("SkeletonTopology: joint is the child of two edges");
    }
  }
  // Connectivity: BFS over undirected edges must reach every joint.
  std::vector<std::vector<std::uint32_t>> adj(n_joints);
  for (auto [p, c] : edges) {
    adj[p].push_back(c);
    adj[c].push_back(p);
  }
  std::vector<char> seen(n_joints, 0);
  std::queue<std::uint32_t> q;
  q.push(root);
  seen[root] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::uint32_t u = q.front();
    q.pop();
    for (std::uint32_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != n_joints) {
    throw ContractError("SkeletonTopology: graph is disconnected");
  }
}

SkeletonTopology default_topology17() {
  SkeletonTopology t;
  t.n_joints = 17;
  t.root = 0;
  // 0 pelvis, 1 spine, 2 chest, 3 neck, 4 head, 5-7 left arm, 8-10 right arm,
  // 11-13 left leg, 14-16 right leg.
  t.edges = {{0, 1},  {1, 2},  {2, 3},  {3, 4},  {2, 5},  {5, 6},
             {6, 7},  {2, 8},  {8, 9},  {9, 10}, {0, 11}, {11, 12},
             {12, 13}, {0, 14}, {14, 15}, {15, 16}};
  return t;
}

SkeletonTopology topology_ntu25() {
  SkeletonTopology t;
  t.n_joints = 25;
  t.root = 20;
  t.edges = {{20, 1}, {1, 0},  {0, 12},  {12, 13}, {13, 14}, {14, 15},
             {0, 16}, {16, 17}, {17, 18}, {18, 19}, {20, 2},  {2, 3},
             {20, 4}, {4, 5},  {5, 6},   {6, 7},   {7, 22},  {22, 21},
             {20, 8}, {8, 9},  {9, 10},  {10, 11}, {11, 24}, {24, 23}};
  return t;
}

SkeletonTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("topology: cannot open " + path);
  SkeletonTopology t;
  bool have_joints = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "joints") {
      if (!(ls >> t.n_joints)) {
        throw FormatError("topology: bad joints line " + std::to_string(lineno));
      }
      have_joints = true;
    } else if (word == "root") {
      if (!(ls >> t.root)) {
        throw FormatError("topology: bad root line " + std::to_string(lineno));
      }
    } else if (word == "edge") {
      std::uint32_t p, c;
      if (!(ls >> p >> c)) {
        throw FormatError("topology: bad edge line " + std::to_string(lineno));
      }
      t.edges.emplace_back(p, c);
    } else {
      throw FormatError("topology: unknown directive '" + word + "' at line " +
                        std::to_string(lineno));
    }
  }
  if (!have_joints) throw FormatError("topology: missing joints directive");
  t.validate();
  return t;
}

void save_topology(const SkeletonTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("topology: cannot write " + path);
  out << "joints " << topo.n_joints << "\n";
  out << "root " << topo.root << "\n";
  for (auto [p, c] : topo.edges) out << "edge " << p << " " << c << "\n";
}

SkeletonSequence interpolate_to_length(const SkeletonSequence& s,
                                       std::size_t t_out) {
  if (s.frames < 2) {
    throw DegenerateInputError("interpolate_to_length: need at least 2 frames");
  }
  if (t_out < 2) {
    throw DegenerateInputError("interpolate_to_length: T_out must be >= 2");
  }
  SkeletonSequence out = s;
  out.frames = t_out;
  out.coords.assign(s.channels * t_out * s.joints, 0.0);
  const double step =
      static_cast<double>(s.frames - 1) / static_cast<double>(t_out - 1);
  for (std::size_t j = 0; j < t_out; ++j) {
    const double src = static_cast<double>(j) * step;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 >= s.frames - 1) i0 = s.frames - 2;
    const double frac = src - static_cast<double>(i0);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t n = 0; n < s.joints; ++n) {
        const double a = s.at(c, i0, n);
        const double b = s.at(c, i0 + 1, n);
        // frac == 0 reproduces the source frame bit-exactly.
        out.at(c, j, n) = frac == 0.0 ? a : a + frac * (b - a);
      }
    }
  }
  return out;
}

SkeletonSequence derive_bone_stream(const SkeletonSequence& s,
                                    const SkeletonTopology& topo) {
  if (topo.n_joints != s.joints) {
    throw DimError("derive_bone_stream: topology joint count mismatch");
  }
  SkeletonSequence out = s;
  std::fill(out.coords.begin(), out.coords.end(), 0.0);
  for (auto [p, c] : topo.edges) {
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      for (std::size_t t = 0; t < s.frames; ++t) {
        out.at(ch, t, c) = s.at(ch, t, c) - s.at(ch, t, p);
      }
    }
  }
  return out;
}

SkeletonSequence derive_motion_stream(const SkeletonSequence& s) {
  if (s.frames < 2) {
    throw DegenerateInputError("derive_motion_stream: need at least 2 frames");
  }
  SkeletonSequence out = s;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t t = 0; t + 1 < s.frames; ++t) {
      for (std::size_t n = 0; n < s.joints; ++n) {
        out.at(c, t, n) = s.at(c, t + 1, n) - s.at(c, t, n);
      }
    }
    for (std::size_t n = 0; n < s.joints; ++n) {
      out.at(c, s.frames - 1, n) = 0.0;
    }
  }
  return out;
}

SkeletonSequence shear_augment(const SkeletonSequence& s, double beta,
                               RngStream& rng) {
  if (beta < 0.0) throw ContractError("shear_augment: beta must be >= 0");
  // Off-diagonals drawn row-major: (0,1) (0,2) (1,0) (1,2) (2,0) (2,1).
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  m[0][1] = rng.uniform(-beta, beta);
  m[0][2] = rng.uniform(-beta, beta);
  m[1][0] = rng.uniform(-beta, beta);
  m[1][2] = rng.uniform(-beta, beta);
  m[2][0] = rng.uniform(-beta, beta);
  m[2][1] = rng.uniform(-beta, beta);
  SkeletonSequence out = s;
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t n = 0; n < s.joints; ++n) {
      const double x = s.at(0, t, n), y = s.at(1, t, n), z = s.at(2, t, n);
      out.at(0, t, n) = m[0][0] * x + m[0][1] * y + m[0][2] * z;
      out.at(1, t, n) = m[1][0] * x + m[1][1] * y + m[1][2] * z;
      out.at(2, t, n) = m[2][0] * x + m[2][1] * y + m[2][2] * z;
    }
  }
  return out;
}

SkeletonSequence temporal_crop_augment(const SkeletonSequence& s,
                                       std::size_t gamma, RngStream& rng) {
  if (gamma < 1) throw ContractError("temporal_crop_augment: gamma must be >= 1");
  if (s.frames < 2) {
    throw DegenerateInputError("temporal_crop_augment: need at least 2 frames");
  }
  const std::size_t t = s.frames;
  const std::size_t p = t / gamma;
  if (p == 0) return s;

  // Symmetric reflection pad: index -1 mirrors frame 0, index t mirrors t-1.
  const std::size_t padded_len = t + 2 * p;
  auto src_frame = [&](std::size_t i) {
    const long rel = static_cast<long>(i) - static_cast<long>(p);
    if (rel < 0) return static_cast<std::size_t>(-rel - 1);
    if (rel >= static_cast<long>(t)) {
      return static_cast<std::size_t>(2 * static_cast<long>(t) - rel - 1);
    }
    return static_cast<std::size_t>(rel);
  };

  const std::size_t start = rng.uniform_int(2 * p + 1);
  const std::size_t max_len = t + 2 * p - start;
  const std::size_t len = t + rng.uniform_int(max_len - t + 1);
  if (start + len > padded_len) {
    throw ContractError("temporal_crop_augment: window out of range");
  }

  SkeletonSequence window = s;
  window.frames = len;
  window.coords.assign(s.channels * len * s.joints, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t f = src_frame(start + i);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t n = 0; n < s.joints; ++n) {
        window.at(c, i, n) = s.at(c, f, n);
      }
    }
  }
  return interpolate_to_length(window, t);
}

SkeletonSequence center_on_root(const SkeletonSequence& s, std::uint32_t root) {
  if (root >= s.joints) throw DimError("center_on_root: root out of range");
  SkeletonSequence out = s;
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double offset = s.at(c, 0, root);
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t n = 0; n < s.joints; ++n) {
        out.at(c, t, n) = s.at(c, t, n) - offset;
      }
    }
  }
  return out;
}

}  // namespace vcl
