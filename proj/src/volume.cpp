#include "partseg/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "byteorder.hpp"

namespace partseg {

std::string to_string(const Vec3i& v) {
  return "(" + std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]) +
         ")";
}

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::u8: return "u8";
    case DType::u16: return "u16";
    case DType::u32: return "u32";
    case DType::f32: return "f32";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "u8") return DType::u8;
  if (name == "u16") return DType::u16;
  if (name == "u32") return DType::u32;
  if (name == "f32") return DType::f32;
  throw ArgumentError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_width(DType t) {
  switch (t) {
    case DType::u8: return 1;
    case DType::u16: return 2;
    case DType::u32:
    case DType::f32: return 4;
  }
  return 0;
}

void VolumeMeta::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw RangeError("shape entries must be >= 1, got " + to_string(shape));
    if (!(spacing_mm[a] > 0.0)) throw RangeError("spacing entries must be > 0");
  }
}

ScalarVolume import_raw(const std::string& path, const VolumeMeta& meta, Endianness endianness) {
  meta.validate();
  if (meta.dtype == DType::u32) throw ArgumentError("raw import supports u8, u16 and f32 only");
  const std::size_t width = dtype_width(meta.dtype);
  const auto count = static_cast<std::size_t>(product(meta.shape));
  const std::size_t expected = count * width;

  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + path + "': " + ec.message());
  if (actual != expected) {
    throw MalformedInputError("raw file '" + path + "' has " + std::to_string(actual) +
                              " bytes, expected " + std::to_string(expected) + " for shape " +
                              to_string(meta.shape) + " " + std::string(dtype_name(meta.dtype)));
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::byte> raw(expected);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("short read on '" + path + "'");

  const bool swap = (endianness == Endianness::little) != (std::endian::native == std::endian::little);
  if (swap) byteswap_inplace(raw, width);

  ScalarVolume out(meta, 0.0f);
  decode_samples(raw, meta.dtype, out.values());
  return out;
}

template <class T>
Volume<T> crop(const Volume<T>& vol, const Vec3i& lo, const Vec3i& hi) {
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < 0 || hi[a] > vol.shape()[a] || lo[a] >= hi[a]) {
      throw RangeError("crop bounds " + to_string(lo) + ".." + to_string(hi) +
                       " invalid for shape " + to_string(vol.shape()));
    }
  }
  VolumeMeta m = vol.meta();
  m.shape = hi - lo;
  Volume<T> out(m, T{});
  const auto row = static_cast<std::size_t>(m.shape[0]);
  for (std::int64_t z = 0; z < m.shape[2]; ++z) {
    for (std::int64_t y = 0; y < m.shape[1]; ++y) {
      const T* src = &vol(lo[0], lo[1] + y, lo[2] + z);
      std::copy(src, src + row, &out(0, y, z));
    }
  }
  return out;
}

template <class T>
void paste(Volume<T>& dst, const Volume<T>& src, const Vec3i& dst_origin) {
  Vec3i lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max<std::int64_t>(0, -dst_origin[a]);
    hi[a] = std::min<std::int64_t>(src.shape()[a], dst.shape()[a] - dst_origin[a]);
    if (lo[a] >= hi[a]) return;
  }
  const auto row = static_cast<std::size_t>(hi[0] - lo[0]);
  for (std::int64_t z = lo[2]; z < hi[2]; ++z) {
    for (std::int64_t y = lo[1]; y < hi[1]; ++y) {
      const T* s = &src(lo[0], y, z);
      std::copy(s, s + row, &dst(lo[0] + dst_origin[0], y + dst_origin[1], z + dst_origin[2]));
    }
  }
}

#define PARTSEG_INSTANTIATE(T)                                                   \
  template Volume<T> crop<T>(const Volume<T>&, const Vec3i&, const Vec3i&);     \
  template void paste<T>(Volume<T>&, const Volume<T>&, const Vec3i&);
PARTSEG_INSTANTIATE(float)
PARTSEG_INSTANTIATE(std::uint32_t)
PARTSEG_INSTANTIATE(std::uint8_t)
PARTSEG_INSTANTIATE(SemanticClass)
#undef PARTSEG_INSTANTIATE

std::uint32_t max_label(const LabelVolume& labels) {
  std::uint32_t m = 0;
  for (auto v : labels.values()) m = std::max(m, v);
  return m;
}

std::vector<std::uint32_t> unique_labels(const LabelVolume& labels) {
  std::vector<std::uint32_t> ids;
  std::uint32_t last = 0;
  for (auto v : labels.values()) {
    if (v != 0 && v != last) {
      ids.push_back(v);
      last = v;
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Mask foreground(const LabelVolume& labels) {
  VolumeMeta m = labels.meta();
  m.dtype = DType::u8;
  Mask out(m, std::uint8_t{0});
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != 0 ? 1 : 0;
  return out;
}

}  // namespace partseg
