#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partseg/error.hpp"

namespace partseg {

/// Integer voxel triple. Used for shapes, coordinates and offsets.
using Vec3i = std::array<std::int64_t, 3>;
using Vec3d = std::array<double, 3>;

inline std::int64_t product(const Vec3i& v) { return v[0] * v[1] * v[2]; }

inline Vec3i operator+(const Vec3i& a, const Vec3i& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3i operator-(const Vec3i& a, const Vec3i& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

std::string to_string(const Vec3i& v);

enum class DType { u8, u16, u32, f32 };

std::string_view dtype_name(DType t);
DType parse_dtype(std::string_view name);
std::size_t dtype_width(DType t);

struct VolumeMeta {
  Vec3i shape{1, 1, 1};
  Vec3d spacing_mm{1.0, 1.0, 1.0};
  DType dtype = DType::f32;
  std::string origin_name;

  /// Throws RangeError when a shape entry is < 1 or a spacing entry is <= 0.
  void validate() const;
  bool operator==(const VolumeMeta&) const = default;
};

/// Semantic classes of the border-core representation.
enum class SemanticClass : std::uint8_t { background = 0, core = 1, border = 2 };

/// Dense 3D grid, x-fastest linearization: index = x + nx * (y + ny * z).
template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(VolumeMeta meta, T fill = T{})
      : meta_(std::move(meta)) {
    meta_.validate();
    data_.assign(static_cast<std::size_t>(product(meta_.shape)), fill);
  }
  Volume(const Vec3i& shape, T fill = T{}) : Volume(meta_for(shape), fill) {}
  Volume(VolumeMeta meta, std::vector<T> data) : meta_(std::move(meta)), data_(std::move(data)) {
    meta_.validate();
    if (data_.size() != static_cast<std::size_t>(product(meta_.shape))) {
      throw ArgumentError("volume data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(meta_.shape));
    }
  }

  const VolumeMeta& meta() const { return meta_; }
  VolumeMeta& meta() { return meta_; }
  const Vec3i& shape() const { return meta_.shape; }
  std::int64_t nx() const { return meta_.shape[0]; }
  std::int64_t ny() const { return meta_.shape[1]; }
  std::int64_t nz() const { return meta_.shape[2]; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + nx() * (y + ny() * z));
  }
  std::size_t index(const Vec3i& p) const { return index(p[0], p[1], p[2]); }
  Vec3i coord(std::size_t i) const {
    const auto ii = static_cast<std::int64_t>(i);
    return {ii % nx(), (ii / nx()) % ny(), ii / (nx() * ny())};
  }
  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx() && y < ny() && z < nz();
  }
  bool contains(const Vec3i& p) const { return contains(p[0], p[1], p[2]); }

  T& operator()(std::int64_t x, std::int64_t y, std::int64_t z) { return data_[index(x, y, z)]; }
  const T& operator()(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[index(x, y, z)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(const Vec3i& p) { return data_[index(p)]; }
  const T& at(const Vec3i& p) const { return data_[index(p)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Volume& other) const = default;

 private:
  static VolumeMeta meta_for(const Vec3i& shape) {
    VolumeMeta m;
    m.shape = shape;
    m.dtype = default_dtype();
    return m;
  }
  static DType default_dtype();

  VolumeMeta meta_;
  std::vector<T> data_;
};

template <>
inline DType Volume<float>::default_dtype() { return DType::f32; }
template <>
inline DType Volume<std::uint32_t>::default_dtype() { return DType::u32; }
template <>
inline DType Volume<std::uint8_t>::default_dtype() { return DType::u8; }
template <>
inline DType Volume<SemanticClass>::default_dtype() { return DType::u8; }

/// Intensities are held as f32 in memory; meta.dtype records the source width.
using ScalarVolume = Volume<float>;
using LabelVolume = Volume<std::uint32_t>;
using SemanticVolume = Volume<SemanticClass>;
/// Binary mask, 0 or 1 per voxel.
using Mask = Volume<std::uint8_t>;

enum class Endianness { little, big };

/// Reads a flat raw file in x-fastest order. Integers are widened to f32.
ScalarVolume import_raw(const std::string& path, const VolumeMeta& meta,
                        Endianness endianness = Endianness::little);

/// Sub-box [lo, hi). Spacing and dtype are preserved.
template <class T>
Volume<T> crop(const Volume<T>& vol, const Vec3i& lo, const Vec3i& hi);

/// Copies `src` into `dst` with src voxel 0 landing at `dst_origin`; out-of-range parts are skipped.
template <class T>
void paste(Volume<T>& dst, const Volume<T>& src, const Vec3i& dst_origin);

std::uint32_t max_label(const LabelVolume& labels);

/// Sorted distinct positive labels.
std::vector<std::uint32_t> unique_labels(const LabelVolume& labels);

template <class T>
Mask mask_where(const Volume<T>& vol, T value) {
  VolumeMeta m = vol.meta();
  m.dtype = DType::u8;
  Mask out(m, std::uint8_t{0});
  for (std::size_t i = 0; i < vol.size(); ++i) out[i] = vol[i] == value ? 1 : 0;
  return out;
}

Mask foreground(const LabelVolume& labels);

}  // namespace partseg
