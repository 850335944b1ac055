#pragma once

#include <span>
#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

enum class SeKind { ball, cross };

/// Ball: offsets with Euclidean norm <= radius. Cross: the 6-neighbourhood
/// dilated radius times (an L1 ball).
struct StructuringElement {
  SeKind kind = SeKind::ball;
  int radius = 1;

  std::vector<Vec3i> offsets() const;
};

inline StructuringElement ball(int radius) { return {SeKind::ball, radius}; }
inline StructuringElement cross(int radius) { return {SeKind::cross, radius}; }

enum class DistanceMetric { euclidean, geodesic };

struct DistanceMap {
  Volume<float> distances;
  DistanceMetric metric = DistanceMetric::euclidean;
};

/// 6- or 26-neighbourhood offsets (centre excluded), in raster order.
std::span<const Vec3i> neighborhood(int connectivity);

/// Exact squared Euclidean distance from every voxel to the nearest voxel
/// with targets != 0. With `outside_is_target` the region outside the
/// volume also counts as target. +inf where no target exists.
Volume<float> squared_edt(const Mask& targets, bool outside_is_target = false);

/// Voxels outside the volume count as unset, so erosion eats in from the edges.
Mask erode(const Mask& mask, const StructuringElement& se);
Mask dilate(const Mask& mask, const StructuringElement& se);
Mask opening(const Mask& mask, const StructuringElement& se);

enum class DistanceTarget { boundary, complement };

/// Distance from each set voxel to the nearest target voxel: the unset voxels
/// (`complement`) or the set voxels that have an unset 6-neighbour
/// (`boundary`). Unset voxels get 0; +inf when the target set is empty.
DistanceMap euclidean_distance(const Mask& mask, DistanceTarget to = DistanceTarget::complement);

/// Shortest-path length inside `domain` over the 26-neighbourhood with
/// Euclidean step lengths. +inf outside the domain or where unreachable.
DistanceMap geodesic_distance(const Mask& domain, std::span<const Vec3i> seeds);

/// Components get labels 1..K in raster order of their first voxel.
LabelVolume connected_components(const Mask& mask, int connectivity = 26);

struct WatershedOptions {
  int connectivity = 26;
  /// Equal priorities are popped in raster order of the voxel's position in
  /// this frame. A window cut from a larger volume passes its origin and the
  /// full volume shape so ties resolve exactly as they would globally.
  Vec3i frame_origin{0, 0, 0};
  Vec3i frame_shape{0, 0, 0};
};

/// Priority flood from labelled seeds over `domain`, lowest priority first.
/// Seeds keep their labels; domain voxels not reachable from any seed stay 0.
LabelVolume seeded_watershed(const Volume<float>& priority, const LabelVolume& seeds,
                             const Mask& domain, const WatershedOptions& options = {});

}  // namespace partseg
