#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcl/skeleton.hpp"

namespace vcl {

enum class Stream { kJoint, kBone, kMotion };

Stream stream_from_name(const std::string& name);
const char* stream_name(Stream s);

struct Dataset {
  std::vector<SkeletonSequence> samples;
  SkeletonTopology topology;
  std::vector<std::string> class_names;

  std::size_t n_classes() const { return class_names.size(); }
  void validate() const;
  std::vector<std::size_t> class_histogram() const;
};

struct SynthConfig {
  std::size_t n_classes = 8;
  std::size_t per_class = 100;
  std::size_t frames = 32;
  std::uint64_t seed = 1;
  // Scales every per-sample perturbation (coordinate noise, yaw rotation,
  // speed warp). 0 makes all samples of a class identical.
  double jitter = 1.0;
};

// Procedural dataset: all classes share one static pose; each class animates
// its own pair of joints with a class-specific sinusoidal signature. Class 0
// always animates joints {2, 3}. Deterministic in the seed; subject ids run
// 0..per_class-1 within each class.
Dataset synth_generate(const SynthConfig& cfg, const SkeletonTopology& topo);

// The clean (jitter-free) motion template of one class, used by tests.
SkeletonSequence synth_template(const SynthConfig& cfg,
                                const SkeletonTopology& topo,
                                std::size_t class_index);

// Selects round(fraction * per-class-count) samples per class, uniformly
// without replacement; throws InsufficientLabelsError if a class rounds to 0.
Dataset category_balanced_subset(const Dataset& d, double fraction,
                                 RngStream& rng);

// Derives the requested modality for every sample (joint = identity).
Dataset derive_stream(const Dataset& d, Stream stream);

// Cross-subject style split: test samples are those with
// subject_id % mod == mod - 1.
struct SplitView {
  std::vector<std::size_t> train;  // indices into Dataset::samples
  std::vector<std::size_t> test;
};
SplitView subject_split(const Dataset& d, std::size_t mod);

// SKL1 container, little-endian. Layout: magic "SKL1", u32 version=1,
// u32 n_samples, u32 C, u32 T, u32 N, u32 n_classes, u32 n_joints_topology,
// (n_joints-1) x (u32 parent, u32 child), then per sample: u32 label,
// u32 subject_id, C*T*N float64 row-major coords. The root is implied: the
// one joint that never appears as a child.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// Plain-text companion manifest: the topology directives followed by one
// "class <name>" line per class.
void save_manifest(const Dataset& d, const std::string& path);

}  // namespace vcl
