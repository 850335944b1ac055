#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "partseg/bordercore.hpp"
#include "partseg/preprocess.hpp"
#include "partseg/volume.hpp"

namespace partseg {

struct BankEntry {
  ScalarVolume intensity;  // tight bounding-box crop
  Mask mask;
  std::size_t source = 0;  // index of the volume it came from
  std::uint32_t label = 0;
};

struct ParticleBank {
  std::vector<BankEntry> entries;
};

/// One entry per instance, ordered by volume index then label.
ParticleBank build_bank(std::span<const ScalarVolume> vols, std::span<const LabelVolume> labels);

struct AugmentResult {
  ScalarVolume volume;
  LabelVolume labels;
  bool placed = false;
};

inline constexpr double kDefaultAugmentProbability = 0.3;
inline constexpr int kDefaultAugmentRetries = 32;

/// With the given probability, copies a random bank particle next to a
/// random patch particle so the two share a face contact without overlap.
/// Only background voxels are written. Returns the input unchanged when not
/// triggered or when no placement is found within `retries` directions.
AugmentResult touching_augment(const ScalarVolume& vol, const LabelVolume& labels, const ParticleBank& bank,
                               double probability, std::uint64_t seed,
                               int retries = kDefaultAugmentRetries);

struct TrainingPair {
  std::filesystem::path image;
  std::filesystem::path target;
};

/// Writes z-scored, size-normalized images and their encoded targets as
/// block stores under `out_dir`, plus manifest.json. Returns the manifest path.
std::filesystem::path export_training_pairs(std::span<const ScalarVolume> vols,
                                            std::span<const LabelVolume> labels, const BorderCoreConfig& cfg,
                                            const SizeNormSpec& size, const GlobalStats& stats,
                                            const std::filesystem::path& out_dir,
                                            const Vec3i& chunk_shape = {64, 64, 64});

/// Pairs listed in a manifest, with paths resolved against its directory.
std::vector<TrainingPair> read_manifest(const std::filesystem::path& manifest);

}  // namespace partseg
