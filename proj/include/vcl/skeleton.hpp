#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vcl/rng.hpp"

namespace vcl {

// One skeleton sample: C x T x N coordinates (row-major, C=3 spatial
// channels), a class label, and the id of the performing subject.
struct SkeletonSequence {
  std::size_t channels = 3;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> coords;  // index = (c * frames + t) * joints + n
  std::uint32_t label = 0;
  std::uint32_t subject_id = 0;

  double at(std::size_t c, std::size_t t, std::size_t n) const {
    return coords[(c * frames + t) * joints + n];
  }
  double& at(std::size_t c, std::size_t t, std::size_t n) {
    return coords[(c * frames + t) * joints + n];
  }
  void validate() const;  // throws on bad extents or non-finite coords
};

// Tree of joints; every non-root joint appears as the child of exactly one
// edge.
struct SkeletonTopology {
  std::size_t n_joints = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // (parent, child)
  std::uint32_t root = 0;

  void validate() const;  // throws unless edges form a tree over all joints
};

// The built-in 17-joint humanoid tree (also shipped as configs/topology17.txt).
SkeletonTopology default_topology17();
// The 25-joint layout used by the NTU datasets.
SkeletonTopology topology_ntu25();

// Plain-text manifest: "joints N", "root R", then one "edge P C" per line.
SkeletonTopology load_topology(const std::string& path);
void save_topology(const SkeletonTopology& topo, const std::string& path);

struct AugmentationConfig {
  double shear_amplitude = 0.5;       // beta
  std::size_t crop_padding_ratio = 6; // gamma
};

// Per-channel, per-joint linear interpolation onto a uniform grid mapping
// [0, T-1] -> [0, T_out-1]. Endpoints are preserved exactly.
SkeletonSequence interpolate_to_length(const SkeletonSequence& s,
                                       std::size_t t_out);

// bone[., t, child] = coords[., t, child] - coords[., t, parent]; the root
// joint keeps a zero bone vector so the shape stays C x T x N.
SkeletonSequence derive_bone_stream(const SkeletonSequence& s,
                                    const SkeletonTopology& topo);

// motion[., t, .] = coords[., t+1, .] - coords[., t, .]; last frame is zero.
SkeletonSequence derive_motion_stream(const SkeletonSequence& s);

// Applies a random shear: unit diagonal, six off-diagonal coefficients drawn
// independently from U[-beta, beta], one matrix for the whole sequence.
SkeletonSequence shear_augment(const SkeletonSequence& s, double beta,
                               RngStream& rng);

// Symmetric-reflect pads both temporal ends by floor(T/gamma) frames, crops a
// random window of at least T frames, and re-interpolates to exactly T.
SkeletonSequence temporal_crop_augment(const SkeletonSequence& s,
                                       std::size_t gamma, RngStream& rng);

// Translates every frame so the root joint of frame 0 sits at the origin.
SkeletonSequence center_on_root(const SkeletonSequence& s, std::uint32_t root);

}  // namespace vcl
