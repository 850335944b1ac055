#pragma once

#include <filesystem>

#include "partseg/blockstore.hpp"
#include "partseg/volume.hpp"

namespace partseg {

struct BorderCoreConfig {
  int border_thickness_vox = 3;
  /// A core voxel counts as "near the border" when its Euclidean distance to
  /// the nearest non-core voxel is <= this value.
  double filter_min_distance = 1.0;
  /// A core component is dropped when more than this fraction of its voxels is near the border.
  double filter_threshold = 0.95;

  void validate() const;
};

/// Instance labels to border-core classes. Each instance is eroded on its own
/// with a ball of radius border_thickness_vox; the eroded part is core, the
/// rest border. Cores of different instances are never 26-adjacent.
SemanticVolume encode(const LabelVolume& instances, const BorderCoreConfig& cfg);

/// Reclassifies as border every 26-connected core component whose fraction
/// of near-border voxels exceeds cfg.filter_threshold.
SemanticVolume small_core_filter(const SemanticVolume& sem, const BorderCoreConfig& cfg);

/// Border-core classes back to instances: filter, label cores in raster
/// order, then flood border voxels from the cores by distance to core.
/// Border not reachable from any core becomes background.
LabelVolume decode(const SemanticVolume& sem, const BorderCoreConfig& cfg);

struct StreamingOptions {
  /// Directory for intermediate stores; a fresh one under the output's parent when empty.
  std::filesystem::path scratch;
  int threads = 0;
  /// Extra voxels read around each block for the border flood; < 0 means border_thickness_vox + 1.
  int halo = -1;
};

/// Out-of-core decode over a semantic block store, one block (plus halo) in
/// memory at a time. Core components are joined across block faces with a
/// union-find; labels equal decode() on the same volume.
BlockStore decode_streaming(const BlockStore& sem, const std::filesystem::path& out_root,
                            const BorderCoreConfig& cfg, const StreamingOptions& options = {});

}  // namespace partseg
