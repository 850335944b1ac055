#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string_view>
#include <variant>
#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

enum class VolumeKind { scalar, label, semantic };

std::string_view kind_name(VolumeKind k);
VolumeKind parse_kind(std::string_view name);

template <class T>
struct KindOf;
template <>
struct KindOf<float> {
  static constexpr VolumeKind value = VolumeKind::scalar;
};
template <>
struct KindOf<std::uint32_t> {
  static constexpr VolumeKind value = VolumeKind::label;
};
template <>
struct KindOf<SemanticClass> {
  static constexpr VolumeKind value = VolumeKind::semantic;
};

/// On-disk chunked volume: a directory holding a JSON sidecar (`store.json`)
/// and one little-endian raw file per grid cell named `cx_cy_cz.blk`.
///
/// Trailing cells along each axis are truncated to the volume bounds. Reads
/// of arbitrary boxes touch only the cells they intersect, so a consumer can
/// walk a volume much larger than memory one window at a time.
///
/// Distinct cells may be written concurrently. `write_region` does a
/// read-modify-write of partially covered cells and serializes on an internal
/// lock. The sidecar is written last by `write_sidecar`; a store without a
/// sidecar cannot be opened.
class BlockStore {
 public:
  static constexpr const char* kSidecarName = "store.json";

  /// Creates the directory (if needed) but not the sidecar.
  static BlockStore create(const std::filesystem::path& root, VolumeMeta meta, VolumeKind kind,
                           const Vec3i& chunk_shape);
  static BlockStore open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const VolumeMeta& meta() const { return meta_; }
  const Vec3i& shape() const { return meta_.shape; }
  VolumeKind kind() const { return kind_; }
  const Vec3i& chunk_shape() const { return chunk_shape_; }
  Vec3i grid_shape() const;
  std::size_t cell_count() const { return static_cast<std::size_t>(product(grid_shape())); }

  /// All grid cells in raster order (x fastest).
  std::vector<Vec3i> cells() const;
  Vec3i cell_lo(const Vec3i& cell) const;
  Vec3i cell_hi(const Vec3i& cell) const;
  /// Grid cell containing voxel `p`.
  Vec3i cell_of(const Vec3i& p) const;
  std::filesystem::path cell_path(const Vec3i& cell) const;

  template <class T>
  Volume<T> read_cell(const Vec3i& cell) const;
  template <class T>
  void write_cell(const Vec3i& cell, const Volume<T>& data) const;

  /// Box [lo, hi) assembled from the intersecting cells.
  template <class T>
  Volume<T> read_region(const Vec3i& lo, const Vec3i& hi) const;
  /// Writes `data` with its voxel 0 at `lo`. Cells that do not exist yet start zero-filled.
  template <class T>
  void write_region(const Vec3i& lo, const Volume<T>& data) const;

  template <class T>
  Volume<T> read_all() const;

  void write_sidecar() const;

 private:
  BlockStore() = default;
  template <class T>
  void check_type() const;
  void read_cell_box(const Vec3i& cell, const Vec3i& lo, const Vec3i& hi, std::span<std::byte> out,
                     bool missing_ok) const;

  std::filesystem::path root_;
  VolumeMeta meta_;
  VolumeKind kind_ = VolumeKind::scalar;
  Vec3i chunk_shape_{1, 1, 1};
  std::shared_ptr<std::mutex> write_lock_ = std::make_shared<std::mutex>();
};

using AnyVolume = std::variant<ScalarVolume, LabelVolume, SemanticVolume>;

template <class T>
BlockStore write_blockstore(const Volume<T>& vol, const std::filesystem::path& root,
                            const Vec3i& chunk_shape);

/// Reads a whole store, typed by its sidecar kind.
AnyVolume read_blockstore(const std::filesystem::path& root);

}  // namespace partseg
