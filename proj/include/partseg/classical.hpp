#pragma once

#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

struct ThreshWaterParams {
  double threshold = 0.5;
  int opening_radius = 1;
  int seed_erosion_radius = 3;

  void validate() const;
};

/// Threshold, ball opening, seeds from a ball erosion, then a watershed on
/// the negated distance to background restricted to the opened mask.
LabelVolume threshwater(const ScalarVolume& vol, const ThreshWaterParams& params);

struct SplitRequest {
  std::uint32_t target_label = 0;
  std::vector<Vec3i> markers;
  /// Voxels of the separating surface drawn through the instance.
  std::vector<Vec3i> border_voxels;
};

/// Splits one instance along a drawn border. The rest of the instance is
/// flooded from the markers over the negated geodesic distance to the
/// border (6-connected, so the border must separate the markers face-wise).
/// Border voxels and any part no marker reaches go to the marker with the
/// smallest geodesic distance. The target id is replaced by max_label + 1,
/// max_label + 2, ... in marker order.
LabelVolume split_particle(const LabelVolume& labels, const SplitRequest& request);

}  // namespace partseg
