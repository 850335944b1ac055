#pragma once

#include <span>

#include "partseg/volume.hpp"

namespace partseg {

struct GlobalStats {
  double mu = 0.0;
  double sigma = 1.0;

  void validate() const;
};

struct SizeNormSpec {
  /// Measured average particle diameter of the sample, in voxels.
  double reference_particle_size_vox = 60.0;
  double target_particle_size_vox = 60.0;

  double scale() const { return target_particle_size_vox / reference_particle_size_vox; }
  void validate() const;
};

/// Mean and population standard deviation over every voxel of every volume.
GlobalStats global_stats(std::span<const ScalarVolume> volumes);

/// Streaming accumulator behind global_stats, usable over block stores.
class StatsAccumulator {
 public:
  void add(std::span<const float> values);
  void merge(const StatsAccumulator& other);
  GlobalStats finish() const;

 private:
  // Chan et al. pairwise merge of (count, mean, M2).
  double count_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  float min_ = 0.0f;
  float max_ = 0.0f;
};

/// (I - mu) / sigma per voxel, as f32.
ScalarVolume zscore_normalize(const ScalarVolume& vol, const GlobalStats& stats);

/// Per-axis output size round(n * scale), at least 1.
Vec3i normalized_shape(const Vec3i& shape, double scale);

/// Trilinear resample to round(shape * scale); spacing divided by scale.
ScalarVolume size_normalize(const ScalarVolume& vol, const SizeNormSpec& spec);

/// Nearest-neighbour resample of labels onto the normalized grid.
LabelVolume size_normalize_labels(const LabelVolume& labels, const SizeNormSpec& spec);

/// Nearest-neighbour resample of labels onto `target_shape`.
LabelVolume size_denormalize_labels(const LabelVolume& labels, const Vec3i& target_shape);

/// Particle size in voxels from a physical size and voxel spacing.
double estimate_voxel_particle_size(double particle_size_mm, double spacing_mm);
/// Physical particle size from a size in voxels; inverse of the above.
double particle_size_mm(double particle_size_vox, double spacing_mm);

// Resampling pieces shared by the whole-volume and the windowed paths. Voxel
// centres are aligned: destination index i maps to source coordinate
// (i + 0.5) * n_src / n_dst - 0.5.
namespace resample {

struct LinearTap {
  std::int64_t i0;
  std::int64_t i1;
  double w;  // weight of i1
};

LinearTap linear_tap(std::int64_t i, std::int64_t n_src, std::int64_t n_dst);
std::int64_t nearest_tap(std::int64_t i, std::int64_t n_src, std::int64_t n_dst);

/// Source box needed to produce destination box [lo, hi) by trilinear interpolation.
void linear_source_window(const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                          const Vec3i& hi, Vec3i& src_lo, Vec3i& src_hi);
void nearest_source_window(const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                           const Vec3i& hi, Vec3i& src_lo, Vec3i& src_hi);

/// Destination box [lo, hi) of a resample from src_shape to dst_shape,
/// reading only `window`, which holds the source box starting at `window_lo`.
ScalarVolume trilinear_region(const ScalarVolume& window, const Vec3i& window_lo,
                              const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                              const Vec3i& hi);
LabelVolume nearest_region(const LabelVolume& window, const Vec3i& window_lo,
                           const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                           const Vec3i& hi);

}  // namespace resample

}  // namespace partseg
