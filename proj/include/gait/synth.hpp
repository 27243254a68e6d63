#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gait/data.hpp"
#include "gait/prior.hpp"

namespace gait {

/// Indices into the 10-dim synthetic shape vector (pixel units at canvas scale, radians for
/// the stride amplitude).
enum ShapeParam : int {
  kTorsoWidth = 0,
  kTorsoHeight,
  kArmThickness,
  kLegThickness,
  kArmLength,
  kLegLength,
  kHeadRadius,
  kShoulderWidth,
  kHipWidth,
  kStrideAmplitude,
};

inline constexpr std::array<double, kShapeDim> kShapeLo = {14, 34, 4, 6, 22, 40, 6, 30, 10, 0.25};
inline constexpr std::array<double, kShapeDim> kShapeHi = {22, 44, 7, 10, 27, 52, 9, 38, 16, 0.50};
inline constexpr std::array<const char*, kShapeDim> kShapeNames = {
    "torso_width", "torso_height", "arm_thickness", "leg_thickness",  "arm_length",
    "leg_length",  "head_radius",  "shoulder_width", "hip_width",     "stride_amplitude"};

inline constexpr int kCanvasHeight = 128;
inline constexpr int kCanvasWidth = 160;

struct VariantEffects {
  bool bag = false;
  double coat_dilation = 1.0;  // 1 = no coat; CL uses > 1
};

struct SyntheticWalkerParams {
  ShapeVector shape{};
  double gait_phase_rate = 0.04;  // gait cycles per frame
  VariantEffects effects;
  int view = 90;  // degrees; 0 = facing the camera, 90 = side view
};

/// Throws ConfigError when a value leaves its documented range.
void validate(const SyntheticWalkerParams& params);

struct SyntheticSequence {
  std::vector<Mask> raw_frames;  // canvas-sized, values {0, 255}
  SilhouetteSequence sequence;   // normalized 64x44 {0,1}
  ShapeVector shape{};           // ground truth, identical across views and variants
  DetectabilityMask detectable;  // 0 where the walker touches the canvas border
};

/// Renders an articulated 2-D walker. Deterministic in (params, m, seed).
SyntheticSequence generate_synthetic_walker(const SyntheticWalkerParams& params, int m,
                                            std::uint64_t seed, const SequenceKey& key = {});

/// Per-subject parameters drawn uniformly from the documented ranges.
SyntheticWalkerParams sample_subject_params(std::uint64_t seed, int subject);
VariantEffects effects_for(Variant v);

struct SyntheticDatasetSpec {
  int n_subjects = 20;
  std::vector<std::pair<Variant, int>> variants = {{Variant::NM, 2}, {Variant::BG, 1}, {Variant::CL, 1}};
  std::vector<int> views = {0, 18, 36, 54, 72, 90};
  int frames = 30;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  DatasetIndex index;
  SequenceStore store;
  std::vector<PriorRecord> ground_truth;  // raw shape vectors + detectability per sequence
};

/// Builds the whole dataset in memory (locators are "mem:<key>").
SyntheticDataset make_synthetic_dataset(const SyntheticDatasetSpec& spec);

/// Writes <out>/<subject>/<variant>-<seq>/<view>/<frame>.png plus priors.tsv (ground truth in the
/// prior sidecar format) and manifest.txt. Returns the number of sequences written.
std::size_t emit_synthetic_dataset(const SyntheticDatasetSpec& spec, const std::filesystem::path& out);

std::string subject_label(int subject);  // 1 -> "001"

}  // namespace gait
