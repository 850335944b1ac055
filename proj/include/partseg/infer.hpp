#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "partseg/blockstore.hpp"
#include "partseg/bordercore.hpp"
#include "partseg/classical.hpp"
#include "partseg/preprocess.hpp"
#include "partseg/volume.hpp"

namespace partseg {

inline constexpr int kNumClasses = 3;

struct PatchPlan {
  Vec3i patch_shape{};
  Vec3i stride{};
  /// Patch origins relative to the region, raster order (x fastest).
  std::vector<Vec3i> positions;
};

/// Sliding-window layout over a region. The last origin per axis is clamped
/// so the final patch ends at the region edge; a patch larger than the region
/// gives a single origin at 0.
PatchPlan plan_patches(const Vec3i& region_shape, const Vec3i& patch_shape, double overlap_fraction);

struct ChunkPlan {
  Vec3i chunk_shape{};
  Vec3i overlap{};
  std::vector<Vec3i> chunk_origins;
  /// Per chunk, the box it owns. The interiors tile the volume exactly.
  std::vector<std::pair<Vec3i, Vec3i>> interiors;
};

/// Chunks stride by chunk - patch so neighbours share one patch of overlap.
/// The boundary between two neighbours lies half a patch into the shared
/// overlap.
ChunkPlan plan_chunks(const Vec3i& volume_shape, const Vec3i& chunk_shape, const Vec3i& patch_shape);

/// Class probabilities for one patch, class-major: probs[c * voxels + i].
struct ProbabilityPatch {
  Vec3i shape{};
  std::vector<float> probs;
};

/// Interface for the semantic model. predict() gets a patch of exactly
/// patch_shape() plus the patch origin in the normalized volume; it must be
/// deterministic and safe to call from several threads.
class PatchPredictor {
 public:
  virtual ~PatchPredictor() = default;
  virtual Vec3i patch_shape() const = 0;
  virtual ProbabilityPatch predict(const ScalarVolume& patch, const Vec3i& origin) const = 0;
};

ProbabilityPatch one_hot(const SemanticVolume& classes);

/// Emits one-hot encode(reference) at the queried position, ignoring the
/// intensities. Voxels outside the reference are background.
class OraclePredictor final : public PatchPredictor {
 public:
  /// `reference` is an instance labelling on the normalized grid.
  OraclePredictor(const LabelVolume& reference, const BorderCoreConfig& cfg, const Vec3i& patch_shape);
  /// Reads patches from an already encoded semantic store.
  OraclePredictor(BlockStore encoded, const Vec3i& patch_shape);

  Vec3i patch_shape() const override { return patch_shape_; }
  ProbabilityPatch predict(const ScalarVolume& patch, const Vec3i& origin) const override;

 private:
  SemanticVolume classes_at(const Vec3i& lo, const Vec3i& hi) const;

  Vec3i patch_shape_;
  std::optional<SemanticVolume> encoded_;
  std::optional<BlockStore> store_;
};

/// Runs threshwater on each patch on its own and emits its one-hot encoding.
class ThreshWaterPredictor final : public PatchPredictor {
 public:
  ThreshWaterPredictor(ThreshWaterParams params, BorderCoreConfig cfg, const Vec3i& patch_shape);

  Vec3i patch_shape() const override { return patch_shape_; }
  ProbabilityPatch predict(const ScalarVolume& patch, const Vec3i& origin) const override;

 private:
  ThreshWaterParams params_;
  BorderCoreConfig cfg_;
  Vec3i patch_shape_;
};

/// Mean class probabilities over all covering patches, then argmax with ties
/// going to the higher class. `chunk_origin` is the chunk position in the
/// normalized volume and is forwarded to the predictor.
SemanticVolume infer_chunk(const ScalarVolume& chunk, const PatchPredictor& predictor,
                           const PatchPlan& plan, const Vec3i& chunk_origin = {0, 0, 0});

struct InferenceOptions {
  Vec3i chunk_shape{384, 384, 384};
  double overlap_fraction = 0.5;
  /// Intermediate stores live here; created if missing.
  std::filesystem::path scratch;
  bool keep_scratch = false;
  int threads = 0;
};

/// Reads boxes [lo, hi) of a source volume in its original grid.
using VoxelSource = std::function<ScalarVolume(const Vec3i& lo, const Vec3i& hi)>;

VoxelSource memory_source(const ScalarVolume& vol);
VoxelSource store_source(const BlockStore& store);

/// Z-score, on-the-fly size normalization and chunked patch inference. The
/// semantic result on the normalized grid is written to `out_root`, cell
/// shape equal to the chunk shape.
BlockStore predict_semantic(const VoxelSource& source, const VolumeMeta& source_meta,
                            const PatchPredictor& predictor, const SizeNormSpec& size,
                            const GlobalStats& stats, const std::filesystem::path& out_root,
                            const InferenceOptions& options);

/// predict_semantic, decode_streaming, then nearest-neighbour resampling of
/// the instances back to the source grid into `out_root`.
BlockStore run_inference(const VoxelSource& source, const VolumeMeta& source_meta,
                         const PatchPredictor& predictor, const BorderCoreConfig& cfg,
                         const SizeNormSpec& size, const GlobalStats& stats,
                         const std::filesystem::path& out_root, const InferenceOptions& options);

/// In-memory convenience wrapper; `options.scratch` must be set.
LabelVolume run_inference(const ScalarVolume& vol, const PatchPredictor& predictor,
                          const BorderCoreConfig& cfg, const SizeNormSpec& size,
                          const GlobalStats& stats, const InferenceOptions& options);

}  // namespace partseg
