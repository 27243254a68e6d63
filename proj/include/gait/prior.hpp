#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gait/data.hpp"

namespace gait {

/// Per-frame pose-detector success flags (1 = skeleton detectable).
using DetectabilityMask = std::vector<std::uint8_t>;

/// Middle frame of the longest run of detectable frames (earliest run wins ties).
/// Throws DataError("no usable frame") when nothing is detectable.
int select_reference_frame(const DetectabilityMask& mask);

/// Fit (x - mean) * scale so the training betas get mean 0 and population std 0.1.
/// Dimensions with std < 1e-8 get scale 0 and therefore always map to 0.
PriorNormStats fit_prior_norm(const std::vector<ShapeVector>& raw_betas);
ShapeVector apply_prior_norm(const ShapeVector& raw, const PriorNormStats& stats);
/// Inverse of apply_prior_norm in non-degenerate dimensions; degenerate ones return the mean.
ShapeVector invert_prior_norm(const ShapeVector& normalized, const PriorNormStats& stats);

/// One line of the prior sidecar file.
struct PriorRecord {
  SequenceKey key;
  ShapeVector beta{};
  DetectabilityMask detectable;
};

/// Tab-separated: subject, variant, seqidx, view, beta[10], detectability 0/1 string.
std::vector<PriorRecord> read_prior_sidecar(const std::filesystem::path& path);
void write_prior_sidecar(const std::filesystem::path& path, const std::vector<PriorRecord>& records);
std::string format_prior_record(const PriorRecord& r);
PriorRecord parse_prior_record(const std::string& line);

/// Flags a seed-chosen `coverage` fraction of training sequences as prior-covered, attaches their
/// normalized priors and stores the fitted statistics in the index. Test entries never get priors.
DatasetIndex attach_priors(DatasetIndex index, const std::vector<PriorRecord>& records,
                           double coverage, std::uint64_t seed);
DatasetIndex attach_priors(DatasetIndex index, const std::filesystem::path& sidecar, double coverage,
                           std::uint64_t seed);

}  // namespace gait
