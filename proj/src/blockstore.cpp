#include "partseg/blockstore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "byteorder.hpp"

namespace fs = std::filesystem;

namespace partseg {

std::string_view kind_name(VolumeKind k) {
  switch (k) {
    case VolumeKind::scalar: return "scalar";
    case VolumeKind::label: return "label";
    case VolumeKind::semantic: return "semantic";
  }
  return "?";
}

VolumeKind parse_kind(std::string_view name) {
  if (name == "scalar") return VolumeKind::scalar;
  if (name == "label") return VolumeKind::label;
  if (name == "semantic") return VolumeKind::semantic;
  throw ParseError("unknown volume kind '" + std::string(name) + "'");
}

namespace {

std::size_t disk_width(VolumeKind kind, DType dtype) {
  switch (kind) {
    case VolumeKind::scalar: return dtype_width(dtype);
    case VolumeKind::label: return 4;
    case VolumeKind::semantic: return 1;
  }
  return 0;
}

Vec3i intersect_lo(const Vec3i& a, const Vec3i& b) {
  return {std::max(a[0], b[0]), std::max(a[1], b[1]), std::max(a[2], b[2])};
}
Vec3i intersect_hi(const Vec3i& a, const Vec3i& b) {
  return {std::min(a[0], b[0]), std::min(a[1], b[1]), std::min(a[2], b[2])};
}

template <class T>
void bytes_to_values(std::span<std::byte> raw, VolumeKind kind, DType dtype, std::span<T> out) {
  const std::size_t w = disk_width(kind, dtype);
  if (!host_is_little()) byteswap_inplace(raw, w);
  if constexpr (std::is_same_v<T, float>) {
    decode_samples(raw, dtype, out);
  } else if constexpr (std::is_same_v<T, SemanticClass>) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto v = std::to_integer<std::uint8_t>(raw[i]);
      if (v > 2) throw IntegrityError("semantic store holds invalid class value " + std::to_string(v));
      out[i] = static_cast<SemanticClass>(v);
    }
  } else {
    std::memcpy(out.data(), raw.data(), out.size() * sizeof(T));
  }
}

template <class T>
std::vector<std::byte> values_to_bytes(std::span<const T> in, VolumeKind kind, DType dtype) {
  const std::size_t w = disk_width(kind, dtype);
  std::vector<std::byte> raw(in.size() * w);
  if constexpr (std::is_same_v<T, float>) {
    encode_samples(in, dtype, raw);
  } else {
    std::memcpy(raw.data(), in.data(), in.size() * sizeof(T));
  }
  if (!host_is_little()) byteswap_inplace(raw, w);
  return raw;
}

Vec3i json_vec3i(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ParseError(std::string("sidecar key '") + key + "' must be a 3-array");
  return {a[0].get<std::int64_t>(), a[1].get<std::int64_t>(), a[2].get<std::int64_t>()};
}

}  // namespace

BlockStore BlockStore::create(const fs::path& root, VolumeMeta meta, VolumeKind kind,
                              const Vec3i& chunk_shape) {
  meta.validate();
  for (auto c : chunk_shape) {
    if (c < 1) throw RangeError("chunk_shape entries must be >= 1, got " + to_string(chunk_shape));
  }
  if (kind == VolumeKind::label) meta.dtype = DType::u32;
  if (kind == VolumeKind::semantic) meta.dtype = DType::u8;
  if (kind == VolumeKind::scalar && meta.dtype == DType::u32) meta.dtype = DType::f32;

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create store directory '" + root.string() + "': " + ec.message());
  if (!fs::is_directory(root)) throw IoError("'" + root.string() + "' is not a directory");
  // Stale cells from an earlier store at the same path must not leak into this one.
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".blk" || name == kSidecarName) fs::remove(entry.path(), ec);
  }

  BlockStore s;
  s.root_ = root;
  s.meta_ = std::move(meta);
  s.kind_ = kind;
  s.chunk_shape_ = chunk_shape;
  return s;
}

BlockStore BlockStore::open(const fs::path& root) {
  const fs::path sidecar = root / kSidecarName;
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot open block store sidecar '" + sidecar.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();

  BlockStore s;
  s.root_ = root;
  try {
    const auto j = nlohmann::json::parse(buf.str());
    s.meta_.shape = json_vec3i(j, "shape");
    const auto& sp = j.at("spacing_mm");
    if (!sp.is_array() || sp.size() != 3) throw ParseError("sidecar key 'spacing_mm' must be a 3-array");
    s.meta_.spacing_mm = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    s.meta_.dtype = parse_dtype(j.at("dtype").get<std::string>());
    s.meta_.origin_name = j.value("origin_name", std::string{});
    s.chunk_shape_ = json_vec3i(j, "chunk_shape");
    s.kind_ = parse_kind(j.at("kind").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt block store sidecar '" + sidecar.string() + "': " + e.what());
  } catch (const ValidationError& e) {
    throw ParseError("corrupt block store sidecar '" + sidecar.string() + "': " + e.what());
  }
  try {
    s.meta_.validate();
    for (auto c : s.chunk_shape_) {
      if (c < 1) throw RangeError("chunk_shape entries must be >= 1");
    }
  } catch (const ValidationError& e) {
    throw ParseError("invalid block store sidecar '" + sidecar.string() + "': " + e.what());
  }
  return s;
}

void BlockStore::write_sidecar() const {
  nlohmann::json j;
  j["shape"] = meta_.shape;
  j["spacing_mm"] = meta_.spacing_mm;
  j["dtype"] = std::string(dtype_name(meta_.dtype));
  j["chunk_shape"] = chunk_shape_;
  j["kind"] = std::string(kind_name(kind_));
  j["origin_name"] = meta_.origin_name;
  const fs::path sidecar = root_ / kSidecarName;
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write sidecar '" + sidecar.string() + "'");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed on '" + sidecar.string() + "'");
}

Vec3i BlockStore::grid_shape() const {
  Vec3i g{};
  for (int a = 0; a < 3; ++a) g[a] = (meta_.shape[a] + chunk_shape_[a] - 1) / chunk_shape_[a];
  return g;
}

std::vector<Vec3i> BlockStore::cells() const {
  const Vec3i g = grid_shape();
  std::vector<Vec3i> out;
  out.reserve(static_cast<std::size_t>(product(g)));
  for (std::int64_t z = 0; z < g[2]; ++z)
    for (std::int64_t y = 0; y < g[1]; ++y)
      for (std::int64_t x = 0; x < g[0]; ++x) out.push_back({x, y, z});
  return out;
}

Vec3i BlockStore::cell_lo(const Vec3i& cell) const {
  return {cell[0] * chunk_shape_[0], cell[1] * chunk_shape_[1], cell[2] * chunk_shape_[2]};
}

Vec3i BlockStore::cell_hi(const Vec3i& cell) const {
  Vec3i hi{};
  for (int a = 0; a < 3; ++a) hi[a] = std::min((cell[a] + 1) * chunk_shape_[a], meta_.shape[a]);
  return hi;
}

Vec3i BlockStore::cell_of(const Vec3i& p) const {
  return {p[0] / chunk_shape_[0], p[1] / chunk_shape_[1], p[2] / chunk_shape_[2]};
}

fs::path BlockStore::cell_path(const Vec3i& cell) const {
  return root_ / (std::to_string(cell[0]) + "_" + std::to_string(cell[1]) + "_" +
                  std::to_string(cell[2]) + ".blk");
}

template <class T>
void BlockStore::check_type() const {
  if (KindOf<T>::value != kind_) {
    throw ArgumentError("block store '" + root_.string() + "' holds " +
                        std::string(kind_name(kind_)) + " data, requested " +
                        std::string(kind_name(KindOf<T>::value)));
  }
}

void BlockStore::read_cell_box(const Vec3i& cell, const Vec3i& lo, const Vec3i& hi,
                               std::span<std::byte> out, bool missing_ok) const {
  const fs::path path = cell_path(cell);
  const std::size_t w = disk_width(kind_, meta_.dtype);
  const Vec3i clo = cell_lo(cell);
  const Vec3i e = cell_hi(cell) - clo;
  const auto expected = static_cast<std::uintmax_t>(product(e)) * w;

  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) {
    if (missing_ok) {
      std::fill(out.begin(), out.end(), std::byte{0});
      return;
    }
    throw IntegrityError("missing chunk file for grid cell " + to_string(cell) + " in '" +
                         root_.string() + "'");
  }
  if (size != expected) {
    throw IntegrityError("chunk file for grid cell " + to_string(cell) + " has " +
                         std::to_string(size) + " bytes, expected " + std::to_string(expected));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  const Vec3i l = lo - clo;
  const Vec3i h = hi - clo;
  const Vec3i b = h - l;
  if (l == Vec3i{0, 0, 0} && h == e) {
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!in) throw IoError("short read on '" + path.string() + "'");
    return;
  }
  // One contiguous span per z plane covering the y range, then pick the x range.
  const std::size_t row_bytes = static_cast<std::size_t>(e[0]) * w;
  const std::size_t sub_row = static_cast<std::size_t>(b[0]) * w;
  std::vector<std::byte> plane(static_cast<std::size_t>(b[1]) * row_bytes);
  std::size_t dst = 0;
  for (std::int64_t z = l[2]; z < h[2]; ++z) {
    const auto offset = static_cast<std::streamoff>((l[1] + e[1] * z) * e[0]) * static_cast<std::streamoff>(w);
    in.seekg(offset);
    in.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
    if (!in) throw IoError("short read on '" + path.string() + "'");
    for (std::int64_t y = 0; y < b[1]; ++y) {
      std::memcpy(out.data() + dst, plane.data() + static_cast<std::size_t>(y) * row_bytes + static_cast<std::size_t>(l[0]) * w, sub_row);
      dst += sub_row;
    }
  }
}

template <class T>
Volume<T> BlockStore::read_cell(const Vec3i& cell) const {
  return read_region<T>(cell_lo(cell), cell_hi(cell));
}

template <class T>
void BlockStore::write_cell(const Vec3i& cell, const Volume<T>& data) const {
  check_type<T>();
  const Vec3i e = cell_hi(cell) - cell_lo(cell);
  if (data.shape() != e) {
    throw ArgumentError("cell " + to_string(cell) + " expects shape " + to_string(e) + ", got " +
                        to_string(data.shape()));
  }
  const auto raw = values_to_bytes<T>(data.values(), kind_, meta_.dtype);
  const fs::path path = cell_path(cell);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

template <class T>
Volume<T> BlockStore::read_region(const Vec3i& lo, const Vec3i& hi) const {
  check_type<T>();
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < 0 || hi[a] > meta_.shape[a] || lo[a] >= hi[a]) {
      throw RangeError("region " + to_string(lo) + ".." + to_string(hi) + " outside store shape " +
                       to_string(meta_.shape));
    }
  }
  VolumeMeta m = meta_;
  m.shape = hi - lo;
  Volume<T> out(m, T{});
  const Vec3i c0 = cell_of(lo);
  const Vec3i c1 = cell_of(hi - Vec3i{1, 1, 1});
  const std::size_t w = disk_width(kind_, meta_.dtype);
  std::vector<std::byte> raw;
  for (std::int64_t cz = c0[2]; cz <= c1[2]; ++cz) {
    for (std::int64_t cy = c0[1]; cy <= c1[1]; ++cy) {
      for (std::int64_t cx = c0[0]; cx <= c1[0]; ++cx) {
        const Vec3i cell{cx, cy, cz};
        const Vec3i blo = intersect_lo(lo, cell_lo(cell));
        const Vec3i bhi = intersect_hi(hi, cell_hi(cell));
        const Vec3i b = bhi - blo;
        raw.resize(static_cast<std::size_t>(product(b)) * w);
        read_cell_box(cell, blo, bhi, raw, false);
        Volume<T> piece(b, T{});
        bytes_to_values<T>(raw, kind_, meta_.dtype, piece.values());
        paste(out, piece, blo - lo);
      }
    }
  }
  return out;
}

template <class T>
void BlockStore::write_region(const Vec3i& lo, const Volume<T>& data) const {
  check_type<T>();
  const Vec3i hi = lo + data.shape();
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < 0 || hi[a] > meta_.shape[a]) {
      throw RangeError("region " + to_string(lo) + ".." + to_string(hi) + " outside store shape " +
                       to_string(meta_.shape));
    }
  }
  std::lock_guard<std::mutex> guard(*write_lock_);
  const Vec3i c0 = cell_of(lo);
  const Vec3i c1 = cell_of(hi - Vec3i{1, 1, 1});
  const std::size_t w = disk_width(kind_, meta_.dtype);
  for (std::int64_t cz = c0[2]; cz <= c1[2]; ++cz) {
    for (std::int64_t cy = c0[1]; cy <= c1[1]; ++cy) {
      for (std::int64_t cx = c0[0]; cx <= c1[0]; ++cx) {
        const Vec3i cell{cx, cy, cz};
        const Vec3i clo = cell_lo(cell);
        const Vec3i chi = cell_hi(cell);
        const Vec3i blo = intersect_lo(lo, clo);
        const Vec3i bhi = intersect_hi(hi, chi);
        Volume<T> block(chi - clo, T{});
        if (!(blo == clo && bhi == chi)) {
          std::vector<std::byte> raw(static_cast<std::size_t>(product(chi - clo)) * w);
          read_cell_box(cell, clo, chi, raw, true);
          bytes_to_values<T>(raw, kind_, meta_.dtype, block.values());
        }
        paste(block, crop(data, blo - lo, bhi - lo), blo - clo);
        write_cell(cell, block);
      }
    }
  }
}

template <class T>
Volume<T> BlockStore::read_all() const {
  return read_region<T>({0, 0, 0}, meta_.shape);
}

template <class T>
BlockStore write_blockstore(const Volume<T>& vol, const fs::path& root, const Vec3i& chunk_shape) {
  auto store = BlockStore::create(root, vol.meta(), KindOf<T>::value, chunk_shape);
  for (const auto& cell : store.cells()) {
    store.write_cell(cell, crop(vol, store.cell_lo(cell), store.cell_hi(cell)));
  }
  store.write_sidecar();
  return store;
}

AnyVolume read_blockstore(const fs::path& root) {
  const auto store = BlockStore::open(root);
  switch (store.kind()) {
    case VolumeKind::scalar: return store.read_all<float>();
    case VolumeKind::label: return store.read_all<std::uint32_t>();
    case VolumeKind::semantic: return store.read_all<SemanticClass>();
  }
  throw ParseError("unknown store kind");
}

#define PARTSEG_INSTANTIATE(T)                                                              \
  template Volume<T> BlockStore::read_cell<T>(const Vec3i&) const;                          \
  template void BlockStore::write_cell<T>(const Vec3i&, const Volume<T>&) const;            \
  template Volume<T> BlockStore::read_region<T>(const Vec3i&, const Vec3i&) const;          \
  template void BlockStore::write_region<T>(const Vec3i&, const Volume<T>&) const;          \
  template Volume<T> BlockStore::read_all<T>() const;                                       \
  template BlockStore write_blockstore<T>(const Volume<T>&, const fs::path&, const Vec3i&);
PARTSEG_INSTANTIATE(float)
PARTSEG_INSTANTIATE(std::uint32_t)
PARTSEG_INSTANTIATE(SemanticClass)
#undef PARTSEG_INSTANTIATE

}  // namespace partseg
