#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "partseg/volume.hpp"

namespace fixtures {

using partseg::LabelVolume;
using partseg::Mask;
using partseg::Vec3i;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "partseg") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void paint_sphere(LabelVolume& v, double cx, double cy, double cz, double r, std::uint32_t id) {
  for (std::int64_t z = 0; z < v.nz(); ++z)
    for (std::int64_t y = 0; y < v.ny(); ++y)
      for (std::int64_t x = 0; x < v.nx(); ++x) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        if (dx * dx + dy * dy + dz * dz <= r * r) v(x, y, z) = id;
      }
}

inline void paint_box(LabelVolume& v, const Vec3i& lo, const Vec3i& hi, std::uint32_t id) {
  for (std::int64_t z = lo[2]; z < hi[2]; ++z)
    for (std::int64_t y = lo[1]; y < hi[1]; ++y)
      for (std::int64_t x = lo[0]; x < hi[0]; ++x) v(x, y, z) = id;
}

inline Mask random_mask(const Vec3i& shape, double density, std::mt19937_64& rng) {
  Mask m(shape, std::uint8_t{0});
  std::bernoulli_distribution on(density);
  for (auto& x : m.values()) x = on(rng) ? 1 : 0;
  return m;
}

/// Random blocky labels in [0, max_id].
inline LabelVolume random_labels(const Vec3i& shape, std::uint32_t max_id, std::mt19937_64& rng) {
  LabelVolume v(shape, 0u);
  std::uniform_int_distribution<std::uint32_t> id(0, max_id);
  std::uniform_int_distribution<int> boxes(1, 8);
  const int n = boxes(rng);
  for (int k = 0; k < n; ++k) {
    Vec3i lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      std::uniform_int_distribution<std::int64_t> c(0, shape[a] - 1);
      auto p = c(rng), q = c(rng);
      lo[a] = std::min(p, q);
      hi[a] = std::max(p, q) + 1;
    }
    paint_box(v, lo, hi, id(rng));
  }
  return v;
}

}  // namespace fixtures
