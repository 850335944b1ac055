#include "partseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "partseg/morph.hpp"

namespace partseg {

std::string_view shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::ellipsoid: return "ellipsoid";
    case ShapeKind::superellipsoid: return "superellipsoid";
  }
  return "sphere";
}

ShapeKind parse_shape_kind(std::string_view name) {
  if (name == "sphere") return ShapeKind::sphere;
  if (name == "ellipsoid") return ShapeKind::ellipsoid;
  if (name == "superellipsoid") return ShapeKind::superellipsoid;
  throw ArgumentError("unknown shape kind '" + std::string(name) + "'");
}

void PhantomSpec::validate() const {
  VolumeMeta m;
  m.shape = shape;
  m.spacing_mm = spacing_mm;
  m.validate();
  if (particle_count < 0) throw RangeError("particle count must be >= 0");
  if (radius_min_vox < 2.0) throw RangeError("minimum radius must be >= 2 voxels");
  const auto smallest = static_cast<double>(std::min({shape[0], shape[1], shape[2]}));
  if (!(radius_max_vox >= radius_min_vox) || !(radius_max_vox < smallest / 2.0)) {
    throw RangeError("maximum radius must lie in [radius_min, min(shape) / 2)");
  }
  if (shape_kinds.empty()) throw ArgumentError("at least one shape kind is required");
  if (!(touching_pair_fraction >= 0.0 && touching_pair_fraction <= 1.0)) {
    throw RangeError("touching pair fraction must lie in [0, 1]");
  }
  if (fg_std < 0.0 || bg_std < 0.0) throw RangeError("noise standard deviations must be >= 0");
  if (streak_artifact_count < 0) throw RangeError("streak count must be >= 0");
}

namespace {

constexpr int kMaxAttempts = 1000;

struct Particle {
  Vec3d center{};
  Vec3d axes{};
  double exponent = 2.0;
};

class Placer {
 public:
  Placer(const PhantomSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng), labels_(spec.shape, 0u) {}

  LabelVolume& labels() { return labels_; }
  const std::vector<Vec3d>& centroids() const { return centroids_; }

  Particle draw_shape() {
    std::uniform_int_distribution<std::size_t> pick(0, spec_.shape_kinds.size() - 1);
    std::uniform_real_distribution<double> radius(spec_.radius_min_vox, spec_.radius_max_vox);
    Particle p;
    switch (spec_.shape_kinds[pick(rng_)]) {
      case ShapeKind::sphere: {
        const double r = radius(rng_);
        p.axes = {r, r, r};
        break;
      }
      case ShapeKind::ellipsoid:
        p.axes = {radius(rng_), radius(rng_), radius(rng_)};
        break;
      case ShapeKind::superellipsoid: {
        p.axes = {radius(rng_), radius(rng_), radius(rng_)};
        p.exponent = std::uniform_real_distribution<double>(2.0, 4.0)(rng_);
        break;
      }
    }
    return p;
  }

  void draw_center(Particle& p) {
    for (int a = 0; a < 3; ++a) {
      const double lo = p.axes[a] + 1.0;
      const double hi = static_cast<double>(spec_.shape[a]) - p.axes[a] - 2.0;
      p.center[a] = std::uniform_real_distribution<double>(lo, std::max(lo, hi))(rng_);
    }
  }

  /// Voxels whose centres lie inside the particle; empty when any would fall outside the volume.
  std::vector<Vec3i> rasterize(const Particle& p) const {
    std::vector<Vec3i> out;
    Vec3i lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = static_cast<std::int64_t>(std::floor(p.center[a] - p.axes[a]));
      hi[a] = static_cast<std::int64_t>(std::ceil(p.center[a] + p.axes[a])) + 1;
    }
    for (std::int64_t z = lo[2]; z < hi[2]; ++z)
      for (std::int64_t y = lo[1]; y < hi[1]; ++y)
        for (std::int64_t x = lo[0]; x < hi[0]; ++x) {
          const double u = std::abs((static_cast<double>(x) - p.center[0]) / p.axes[0]);
          const double v = std::abs((static_cast<double>(y) - p.center[1]) / p.axes[1]);
          const double w = std::abs((static_cast<double>(z) - p.center[2]) / p.axes[2]);
          const double s = p.exponent == 2.0 ? u * u + v * v + w * w
                                             : std::pow(u, p.exponent) + std::pow(v, p.exponent) +
                                                   std::pow(w, p.exponent);
          if (s > 1.0) continue;
          if (!labels_.contains(x, y, z)) return {};
          out.push_back({x, y, z});
        }
    return out;
  }

  enum class Fit { free, touching, blocked };

  /// `partner` may be touched; every other particle must stay out of the 26-neighbourhood.
  Fit check(const std::vector<Vec3i>& voxels, std::uint32_t partner) const {
    if (voxels.empty()) return Fit::blocked;
    bool touches = false;
    const auto n6 = neighborhood(6);
    const auto n26 = neighborhood(26);
    for (const auto& v : voxels) {
      if (labels_.at(v) != 0) return Fit::blocked;
      for (const auto& o : n26) {
        const Vec3i q = v + o;
        if (!labels_.contains(q)) continue;
        const auto id = labels_.at(q);
        if (id != 0 && id != partner) return Fit::blocked;
      }
      if (partner != 0 && !touches) {
        for (const auto& o : n6) {
          const Vec3i q = v + o;
          if (labels_.contains(q) && labels_.at(q) == partner) touches = true;
        }
      }
    }
    return touches ? Fit::touching : Fit::free;
  }

  std::uint32_t commit(const std::vector<Vec3i>& voxels) {
    const auto id = static_cast<std::uint32_t>(centroids_.size() + 1);
    Vec3d c{0, 0, 0};
    for (const auto& v : voxels) {
      labels_.at(v) = id;
      for (int a = 0; a < 3; ++a) c[a] += static_cast<double>(v[a]);
    }
    for (auto& x : c) x /= static_cast<double>(voxels.size());
    centroids_.push_back(c);
    return id;
  }

  std::uint32_t place_free() {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Particle p = draw_shape();
      draw_center(p);
      const auto voxels = rasterize(p);
      if (check(voxels, 0) == Fit::free) return commit(voxels);
    }
    throw CapacityError("could not place particle " + std::to_string(centroids_.size() + 1) + " after " +
                        std::to_string(kMaxAttempts) + " attempts; request fewer or smaller particles");
  }

  /// Slides a new particle toward `partner` along a random direction until their faces meet.
  std::uint32_t place_touching(std::uint32_t partner) {
    const Vec3d anchor = centroids_[partner - 1];
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Particle p = draw_shape();
      Vec3d dir{gauss(rng_), gauss(rng_), gauss(rng_)};
      const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      if (len < 1e-9) continue;
      for (auto& d : dir) d /= len;
      const double start = 2.0 * (spec_.radius_max_vox + 2.0);
      for (double t = start; t > 0.0; t -= 0.5) {
        for (int a = 0; a < 3; ++a) p.center[a] = anchor[a] + t * dir[a];
        const auto voxels = rasterize(p);
        if (voxels.empty()) continue;
        const auto fit = check(voxels, partner);
        if (fit == Fit::touching) return commit(voxels);
        if (fit == Fit::blocked) break;
      }
    }
    throw CapacityError("could not place a touching partner for particle " + std::to_string(partner) +
                        "; request fewer or smaller particles");
  }

 private:
  const PhantomSpec& spec_;
  std::mt19937_64& rng_;
  LabelVolume labels_;
  std::vector<Vec3d> centroids_;
};

}  // namespace

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  Placer placer(spec, rng);
  Phantom out;
  const int pairs = static_cast<int>(std::floor(spec.touching_pair_fraction * spec.particle_count / 2.0));
  for (int k = 0; k < pairs; ++k) {
    const auto first = placer.place_free();
    const auto second = placer.place_touching(first);
    out.touching_pairs.emplace_back(first, second);
  }
  for (int k = 2 * pairs; k < spec.particle_count; ++k) placer.place_free();

  VolumeMeta lm;
  lm.shape = spec.shape;
  lm.spacing_mm = spec.spacing_mm;
  lm.dtype = DType::u32;
  out.labels = LabelVolume(lm, std::move(placer.labels().storage()));

  VolumeMeta vm = lm;
  vm.dtype = DType::f32;
  out.volume = ScalarVolume(vm, 0.0f);
  std::normal_distribution<double> fg(spec.fg_mean, spec.fg_std);
  std::normal_distribution<double> bg(spec.bg_mean, spec.bg_std);
  for (std::size_t i = 0; i < out.volume.size(); ++i) {
    const bool inside = out.labels[i] != 0;
    const double sd = inside ? spec.fg_std : spec.bg_std;
    const double mean = inside ? spec.fg_mean : spec.bg_mean;
    out.volume[i] = static_cast<float>(sd > 0.0 ? (inside ? fg(rng) : bg(rng)) : mean);
  }

  // Streaks: bright lines of radius 1 through particle centroids.
  const auto& centroids = placer.centroids();
  const double gain = 0.5 * (spec.fg_mean - spec.bg_mean);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int s = 0; s < spec.streak_artifact_count && !centroids.empty(); ++s) {
    const auto& c = centroids[std::uniform_int_distribution<std::size_t>(0, centroids.size() - 1)(rng)];
    Vec3d d{gauss(rng), gauss(rng), gauss(rng)};
    const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (len < 1e-9) continue;
    for (auto& x : d) x /= len;
    for (std::int64_t z = 0; z < spec.shape[2]; ++z)
      for (std::int64_t y = 0; y < spec.shape[1]; ++y)
        for (std::int64_t x = 0; x < spec.shape[0]; ++x) {
          const Vec3d r{static_cast<double>(x) - c[0], static_cast<double>(y) - c[1],
                        static_cast<double>(z) - c[2]};
          const double along = r[0] * d[0] + r[1] * d[1] + r[2] * d[2];
          const double dist2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2] - along * along;
          if (dist2 <= 1.0) out.volume(x, y, z) += static_cast<float>(gain);
        }
  }
  return out;
}

double equivalent_diameter(std::uint64_t voxels) {
  return 2.0 * std::cbrt(3.0 * static_cast<double>(voxels) / (4.0 * std::numbers::pi));
}

std::vector<ParticleRecord> measure(const LabelVolume& labels) {
  std::map<std::uint32_t, ParticleRecord> acc;
  for (std::int64_t z = 0; z < labels.nz(); ++z)
    for (std::int64_t y = 0; y < labels.ny(); ++y)
      for (std::int64_t x = 0; x < labels.nx(); ++x) {
        const auto id = labels(x, y, z);
        if (id == 0) continue;
        auto [it, fresh] = acc.try_emplace(id);
        auto& r = it->second;
        if (fresh) {
          r.id = id;
          r.bb_lo = {x, y, z};
          r.bb_hi = {x + 1, y + 1, z + 1};
        }
        ++r.voxels;
        r.bb_lo = {std::min(r.bb_lo[0], x), std::min(r.bb_lo[1], y), std::min(r.bb_lo[2], z)};
        r.bb_hi = {std::max(r.bb_hi[0], x + 1), std::max(r.bb_hi[1], y + 1), std::max(r.bb_hi[2], z + 1)};
      }
  std::vector<ParticleRecord> out;
  out.reserve(acc.size());
  for (auto& [id, r] : acc) {
    r.eq_diameter_vox = equivalent_diameter(r.voxels);
    out.push_back(r);
  }
  return out;
}

std::string measure_csv(const std::vector<ParticleRecord>& records) {
  std::ostringstream os;
  os << "id,voxels,eq_diameter_vox,bb_lo,bb_hi\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.6f", r.eq_diameter_vox);
    os << r.id << ',' << r.voxels << ',' << buf << ',' << r.bb_lo[0] << ' ' << r.bb_lo[1] << ' ' << r.bb_lo[2]
       << ',' << r.bb_hi[0] << ' ' << r.bb_hi[1] << ' ' << r.bb_hi[2] << '\n';
  }
  return os.str();
}

}  // namespace partseg
