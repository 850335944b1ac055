#include "partseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace partseg {

void GlobalStats::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
    throw DegenerateStatisticsError("global statistics need finite mu and sigma > 0");
  }
}

void SizeNormSpec::validate() const {
  if (!(reference_particle_size_vox > 0.0) || !(target_particle_size_vox > 0.0)) {
    throw RangeError("particle sizes must be > 0");
  }
  const double s = scale();
  if (!std::isfinite(s) || !(s > 0.0)) throw RangeError("size normalization scale must be finite and > 0");
}

void StatsAccumulator::add(std::span<const float> values) {
  if (values.empty()) return;
  double n = 0.0, mean = 0.0, m2 = 0.0;
  float lo = values[0], hi = values[0];
  for (float v : values) {
    n += 1.0;
    const double d = static_cast<double>(v) - mean;
    mean += d / n;
    m2 += d * (static_cast<double>(v) - mean);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  StatsAccumulator part;
  part.count_ = n;
  part.mean_ = mean;
  part.m2_ = m2;
  part.min_ = lo;
  part.max_ = hi;
  merge(part);
}

void StatsAccumulator::merge(const StatsAccumulator& o) {
  if (o.count_ == 0.0) return;
  if (count_ == 0.0) {
    *this = o;
    return;
  }
  const double n = count_ + o.count_;
  const double d = o.mean_ - mean_;
  mean_ += d * o.count_ / n;
  m2_ += o.m2_ + d * d * count_ * o.count_ / n;
  count_ = n;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
}

GlobalStats StatsAccumulator::finish() const {
  if (count_ == 0.0) throw DegenerateStatisticsError("no voxels to compute statistics from");
  if (min_ == max_) throw DegenerateStatisticsError("constant intensities give zero standard deviation");
  GlobalStats s{mean_, std::sqrt(m2_ / count_)};
  s.validate();
  return s;
}

GlobalStats global_stats(std::span<const ScalarVolume> volumes) {
  if (volumes.empty()) throw ArgumentError("global_stats needs at least one volume");
  StatsAccumulator acc;
  for (const auto& v : volumes) acc.add(v.values());
  return acc.finish();
}

ScalarVolume zscore_normalize(const ScalarVolume& vol, const GlobalStats& stats) {
  stats.validate();
  VolumeMeta m = vol.meta();
  m.dtype = DType::f32;
  ScalarVolume out(m, 0.0f);
  const double inv = 1.0 / stats.sigma;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(vol[i]) - stats.mu) * inv);
  }
  return out;
}

Vec3i normalized_shape(const Vec3i& shape, double scale) {
  Vec3i out{};
  for (int a = 0; a < 3; ++a) {
    const double n = std::round(static_cast<double>(shape[a]) * scale);
    if (!std::isfinite(n)) throw RangeError("size normalization produced a non-finite axis");
    out[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
  }
  return out;
}

namespace resample {

LinearTap linear_tap(std::int64_t i, std::int64_t n_src, std::int64_t n_dst) {
  double s = (static_cast<double>(i) + 0.5) * static_cast<double>(n_src) / static_cast<double>(n_dst) - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(n_src - 1));
  const auto i0 = static_cast<std::int64_t>(std::floor(s));
  const auto i1 = std::min(i0 + 1, n_src - 1);
  return {i0, i1, s - static_cast<double>(i0)};
}

std::int64_t nearest_tap(std::int64_t i, std::int64_t n_src, std::int64_t n_dst) {
  const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(n_src) / static_cast<double>(n_dst);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(s)), 0, n_src - 1);
}

void linear_source_window(const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                          const Vec3i& hi, Vec3i& src_lo, Vec3i& src_hi) {
  for (int a = 0; a < 3; ++a) {
    src_lo[a] = linear_tap(lo[a], src_shape[a], dst_shape[a]).i0;
    src_hi[a] = linear_tap(hi[a] - 1, src_shape[a], dst_shape[a]).i1 + 1;
  }
}

void nearest_source_window(const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                           const Vec3i& hi, Vec3i& src_lo, Vec3i& src_hi) {
  for (int a = 0; a < 3; ++a) {
    src_lo[a] = nearest_tap(lo[a], src_shape[a], dst_shape[a]);
    src_hi[a] = nearest_tap(hi[a] - 1, src_shape[a], dst_shape[a]) + 1;
  }
}

ScalarVolume trilinear_region(const ScalarVolume& window, const Vec3i& window_lo,
                              const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                              const Vec3i& hi) {
  VolumeMeta m = window.meta();
  m.shape = hi - lo;
  for (int a = 0; a < 3; ++a) {
    m.spacing_mm[a] = window.meta().spacing_mm[a] * static_cast<double>(src_shape[a]) /
                      static_cast<double>(dst_shape[a]);
  }
  m.dtype = DType::f32;
  ScalarVolume out(m, 0.0f);
  std::array<std::vector<LinearTap>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    for (std::int64_t i = lo[a]; i < hi[a]; ++i) {
      auto t = linear_tap(i, src_shape[a], dst_shape[a]);
      t.i0 -= window_lo[a];
      t.i1 -= window_lo[a];
      taps[a].push_back(t);
    }
  }
  for (std::int64_t z = 0; z < m.shape[2]; ++z) {
    const auto& tz = taps[2][static_cast<std::size_t>(z)];
    for (std::int64_t y = 0; y < m.shape[1]; ++y) {
      const auto& ty = taps[1][static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < m.shape[0]; ++x) {
        const auto& tx = taps[0][static_cast<std::size_t>(x)];
        auto v = [&](std::int64_t xi, std::int64_t yi, std::int64_t zi) {
          return static_cast<double>(window(xi, yi, zi));
        };
        const double c00 = v(tx.i0, ty.i0, tz.i0) * (1 - tx.w) + v(tx.i1, ty.i0, tz.i0) * tx.w;
        const double c10 = v(tx.i0, ty.i1, tz.i0) * (1 - tx.w) + v(tx.i1, ty.i1, tz.i0) * tx.w;
        const double c01 = v(tx.i0, ty.i0, tz.i1) * (1 - tx.w) + v(tx.i1, ty.i0, tz.i1) * tx.w;
        const double c11 = v(tx.i0, ty.i1, tz.i1) * (1 - tx.w) + v(tx.i1, ty.i1, tz.i1) * tx.w;
        const double c0 = c00 * (1 - ty.w) + c10 * ty.w;
        const double c1 = c01 * (1 - ty.w) + c11 * ty.w;
        out(x, y, z) = static_cast<float>(c0 * (1 - tz.w) + c1 * tz.w);
      }
    }
  }
  return out;
}

LabelVolume nearest_region(const LabelVolume& window, const Vec3i& window_lo,
                           const Vec3i& src_shape, const Vec3i& dst_shape, const Vec3i& lo,
                           const Vec3i& hi) {
  VolumeMeta m = window.meta();
  m.shape = hi - lo;
  for (int a = 0; a < 3; ++a) {
    m.spacing_mm[a] = window.meta().spacing_mm[a] * static_cast<double>(src_shape[a]) /
                      static_cast<double>(dst_shape[a]);
  }
  LabelVolume out(m, 0u);
  std::array<std::vector<std::int64_t>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    for (std::int64_t i = lo[a]; i < hi[a]; ++i) {
      taps[a].push_back(nearest_tap(i, src_shape[a], dst_shape[a]) - window_lo[a]);
    }
  }
  for (std::int64_t z = 0; z < m.shape[2]; ++z)
    for (std::int64_t y = 0; y < m.shape[1]; ++y)
      for (std::int64_t x = 0; x < m.shape[0]; ++x) {
        out(x, y, z) = window(taps[0][static_cast<std::size_t>(x)], taps[1][static_cast<std::size_t>(y)],
                              taps[2][static_cast<std::size_t>(z)]);
      }
  return out;
}

}  // namespace resample

ScalarVolume size_normalize(const ScalarVolume& vol, const SizeNormSpec& spec) {
  spec.validate();
  const double scale = spec.scale();
  if (scale == 1.0) return vol;
  const Vec3i dst = normalized_shape(vol.shape(), scale);
  auto out = resample::trilinear_region(vol, {0, 0, 0}, vol.shape(), dst, {0, 0, 0}, dst);
  out.meta().dtype = vol.meta().dtype;
  return out;
}

LabelVolume size_normalize_labels(const LabelVolume& labels, const SizeNormSpec& spec) {
  spec.validate();
  return size_denormalize_labels(labels, normalized_shape(labels.shape(), spec.scale()));
}

LabelVolume size_denormalize_labels(const LabelVolume& labels, const Vec3i& target_shape) {
  for (auto n : target_shape) {
    if (n < 1) throw RangeError("target shape entries must be >= 1");
  }
  if (target_shape == labels.shape()) return labels;
  return resample::nearest_region(labels, {0, 0, 0}, labels.shape(), target_shape, {0, 0, 0},
                                  target_shape);
}

double estimate_voxel_particle_size(double particle_size_mm, double spacing_mm) {
  if (!(particle_size_mm > 0.0) || !(spacing_mm > 0.0)) {
    throw RangeError("particle size and voxel spacing must be > 0");
  }
  return particle_size_mm / spacing_mm;
}

double particle_size_mm(double particle_size_vox, double spacing_mm) {
  if (!(particle_size_vox > 0.0) || !(spacing_mm > 0.0)) {
    throw RangeError("particle size and voxel spacing must be > 0");
  }
  return particle_size_vox * spacing_mm;
}

}  // namespace partseg
