#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

enum class ShapeKind { sphere, ellipsoid, superellipsoid };

std::string_view shape_kind_name(ShapeKind k);
ShapeKind parse_shape_kind(std::string_view name);

struct PhantomSpec {
  Vec3i shape{64, 64, 64};
  Vec3d spacing_mm{1.0, 1.0, 1.0};
  int particle_count = 10;
  double radius_min_vox = 4.0;
  double radius_max_vox = 8.0;
  std::vector<ShapeKind> shape_kinds{ShapeKind::sphere};
  /// Fraction of particles placed as members of face-touching pairs.
  double touching_pair_fraction = 0.0;
  double fg_mean = 1.0;
  double fg_std = 0.1;
  double bg_mean = 0.0;
  double bg_std = 0.1;
  int streak_artifact_count = 0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Phantom {
  ScalarVolume volume;
  LabelVolume labels;
  /// Label pairs placed face to face.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> touching_pairs;
};

/// Rejection-sampled particles with exact labels. Free particles keep at
/// least one background voxel (26-neighbourhood) between each other; pair
/// partners share a face contact and no voxels.
Phantom generate(const PhantomSpec& spec);

struct ParticleRecord {
  std::uint32_t id = 0;
  std::uint64_t voxels = 0;
  double eq_diameter_vox = 0.0;
  Vec3i bb_lo{};
  Vec3i bb_hi{};
};

double equivalent_diameter(std::uint64_t voxels);

/// One record per instance in ascending id order; bb_hi is exclusive.
std::vector<ParticleRecord> measure(const LabelVolume& labels);

/// CSV with header id,voxels,eq_diameter_vox,bb_lo,bb_hi; boxes as "x y z".
std::string measure_csv(const std::vector<ParticleRecord>& records);

}  // namespace partseg
