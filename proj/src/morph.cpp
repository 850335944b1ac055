#include "partseg/morph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "partseg/parallel.hpp"

namespace partseg {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

std::vector<Vec3i> make_neighborhood(int connectivity) {
  std::vector<Vec3i> out;
  for (std::int64_t dz = -1; dz <= 1; ++dz)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const auto n = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (n == 0) continue;
        if (connectivity == 6 && n != 1) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher). Sites with
// f = inf are skipped; `edge_sites` adds zero-cost sites at -1 and n.
class Envelope1D {
 public:
  void run(const float* f, float* d, std::int64_t n, bool edge_sites) {
    v_.resize(static_cast<std::size_t>(n) + 2);
    z_.resize(static_cast<std::size_t>(n) + 3);
    fv_.resize(static_cast<std::size_t>(n) + 2);
    std::int64_t k = -1;
    auto add = [&](std::int64_t q, double fq) {
      double s = -std::numeric_limits<double>::infinity();
      while (k >= 0) {
        const auto vk = v_[static_cast<std::size_t>(k)];
        const double fk = fv_[static_cast<std::size_t>(k)];
        s = ((fq + static_cast<double>(q * q)) - (fk + static_cast<double>(vk * vk))) /
            static_cast<double>(2 * (q - vk));
        if (s <= z_[static_cast<std::size_t>(k)]) {
          --k;
          s = -std::numeric_limits<double>::infinity();
        } else {
          break;
        }
      }
      ++k;
      const auto uk = static_cast<std::size_t>(k);
      v_[uk] = q;
      fv_[uk] = fq;
      z_[uk] = s;
      z_[uk + 1] = std::numeric_limits<double>::infinity();
    };
    if (edge_sites) add(-1, 0.0);
    for (std::int64_t q = 0; q < n; ++q) {
      if (f[q] != kInf) add(q, f[q]);
    }
    if (edge_sites) add(n, 0.0);
    if (k < 0) {
      std::fill(d, d + n, kInf);
      return;
    }
    std::size_t j = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      while (z_[j + 1] < static_cast<double>(i)) ++j;
      const double dx = static_cast<double>(i - v_[j]);
      d[i] = static_cast<float>(dx * dx + fv_[j]);
    }
  }

 private:
  std::vector<std::int64_t> v_;
  std::vector<double> z_;
  std::vector<double> fv_;
};

// One separable pass along `axis`, in place.
void edt_pass(Volume<float>& g, int axis, bool edge_sites) {
  const Vec3i s = g.shape();
  const std::int64_t n = s[axis];
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? s[0] : s[0] * s[1]);
  const auto lines = static_cast<std::size_t>(s[a2]);
  parallel_for(lines, 0, [&](std::size_t outer) {
    Envelope1D env;
    std::vector<float> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    for (std::int64_t inner = 0; inner < s[a1]; ++inner) {
      Vec3i p{};
      p[axis] = 0;
      p[a1] = inner;
      p[a2] = static_cast<std::int64_t>(outer);
      const std::size_t base = g.index(p);
      for (std::int64_t i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = g[base + static_cast<std::size_t>(i * stride)];
      env.run(in.data(), out.data(), n, edge_sites);
      for (std::int64_t i = 0; i < n; ++i) g[base + static_cast<std::size_t>(i * stride)] = out[static_cast<std::size_t>(i)];
    }
  });
}

Mask erode_cross_once(const Mask& m) {
  Mask out(m.meta(), std::uint8_t{0});
  const auto nb = neighborhood(6);
  for (std::int64_t z = 0; z < m.nz(); ++z)
    for (std::int64_t y = 0; y < m.ny(); ++y)
      for (std::int64_t x = 0; x < m.nx(); ++x) {
        if (!m(x, y, z)) continue;
        bool keep = true;
        for (const auto& o : nb) {
          const Vec3i q{x + o[0], y + o[1], z + o[2]};
          if (!m.contains(q) || !m.at(q)) {
            keep = false;
            break;
          }
        }
        out(x, y, z) = keep ? 1 : 0;
      }
  return out;
}

Mask dilate_cross_once(const Mask& m) {
  Mask out = m;
  const auto nb = neighborhood(6);
  for (std::int64_t z = 0; z < m.nz(); ++z)
    for (std::int64_t y = 0; y < m.ny(); ++y)
      for (std::int64_t x = 0; x < m.nx(); ++x) {
        if (!m(x, y, z)) continue;
        for (const auto& o : nb) {
          const Vec3i q{x + o[0], y + o[1], z + o[2]};
          if (m.contains(q)) out.at(q) = 1;
        }
      }
  return out;
}

Mask invert(const Mask& m) {
  Mask out(m.meta(), std::uint8_t{0});
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

}  // namespace

std::vector<Vec3i> StructuringElement::offsets() const {
  std::vector<Vec3i> out;
  const std::int64_t r = radius;
  for (std::int64_t dz = -r; dz <= r; ++dz)
    for (std::int64_t dy = -r; dy <= r; ++dy)
      for (std::int64_t dx = -r; dx <= r; ++dx) {
        const bool in = kind == SeKind::ball ? dx * dx + dy * dy + dz * dz <= r * r
                                             : std::abs(dx) + std::abs(dy) + std::abs(dz) <= r;
        if (in) out.push_back({dx, dy, dz});
      }
  return out;
}

std::span<const Vec3i> neighborhood(int connectivity) {
  static const std::vector<Vec3i> n6 = make_neighborhood(6);
  static const std::vector<Vec3i> n26 = make_neighborhood(26);
  if (connectivity == 6) return n6;
  if (connectivity == 26) return n26;
  throw ArgumentError("connectivity must be 6 or 26, got " + std::to_string(connectivity));
}

Volume<float> squared_edt(const Mask& targets, bool outside_is_target) {
  VolumeMeta m = targets.meta();
  m.dtype = DType::f32;
  Volume<float> g(m, kInf);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]) g[i] = 0.0f;
  }
  for (int axis = 0; axis < 3; ++axis) edt_pass(g, axis, outside_is_target);
  return g;
}

Mask erode(const Mask& mask, const StructuringElement& se) {
  if (se.radius < 1) throw ArgumentError("structuring element radius must be >= 1");
  if (se.kind == SeKind::cross) {
    Mask out = mask;
    for (int i = 0; i < se.radius; ++i) out = erode_cross_once(out);
    return out;
  }
  const auto sq = squared_edt(invert(mask), true);
  const auto r2 = static_cast<float>(se.radius) * static_cast<float>(se.radius);
  Mask out(mask.meta(), std::uint8_t{0});
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = (mask[i] && sq[i] > r2) ? 1 : 0;
  return out;
}

Mask dilate(const Mask& mask, const StructuringElement& se) {
  if (se.radius < 1) throw ArgumentError("structuring element radius must be >= 1");
  if (se.kind == SeKind::cross) {
    Mask out = mask;
    for (int i = 0; i < se.radius; ++i) out = dilate_cross_once(out);
    return out;
  }
  const auto sq = squared_edt(mask, false);
  const auto r2 = static_cast<float>(se.radius) * static_cast<float>(se.radius);
  Mask out(mask.meta(), std::uint8_t{0});
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = sq[i] <= r2 ? 1 : 0;
  return out;
}

Mask opening(const Mask& mask, const StructuringElement& se) { return dilate(erode(mask, se), se); }

DistanceMap euclidean_distance(const Mask& mask, DistanceTarget to) {
  Mask targets(mask.meta(), std::uint8_t{0});
  if (to == DistanceTarget::complement) {
    targets = invert(mask);
  } else {
    const auto nb = neighborhood(6);
    for (std::int64_t z = 0; z < mask.nz(); ++z)
      for (std::int64_t y = 0; y < mask.ny(); ++y)
        for (std::int64_t x = 0; x < mask.nx(); ++x) {
          if (!mask(x, y, z)) continue;
          for (const auto& o : nb) {
            const Vec3i q{x + o[0], y + o[1], z + o[2]};
            if (!mask.contains(q) || !mask.at(q)) {
              targets(x, y, z) = 1;
              break;
            }
          }
        }
  }
  auto sq = squared_edt(targets, false);
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = mask[i] ? std::sqrt(sq[i]) : 0.0f;
  return {std::move(sq), DistanceMetric::euclidean};
}

DistanceMap geodesic_distance(const Mask& domain, std::span<const Vec3i> seeds) {
  if (seeds.empty()) throw ArgumentError("geodesic distance needs at least one seed");
  VolumeMeta m = domain.meta();
  m.dtype = DType::f32;
  std::vector<double> dist(domain.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (const auto& s : seeds) {
    if (!domain.contains(s) || !domain.at(s)) {
      throw ArgumentError("geodesic seed " + to_string(s) + " lies outside the domain");
    }
    const auto i = domain.index(s);
    if (dist[i] != 0.0) {
      dist[i] = 0.0;
      heap.push({0.0, i});
    }
  }
  const auto nb = neighborhood(26);
  std::vector<double> step(nb.size());
  for (std::size_t k = 0; k < nb.size(); ++k) {
    step[k] = std::sqrt(static_cast<double>(nb[k][0] * nb[k][0] + nb[k][1] * nb[k][1] + nb[k][2] * nb[k][2]));
  }
  while (!heap.empty()) {
    const auto [d, i] = heap.top();
    heap.pop();
    if (d > dist[i]) continue;
    const Vec3i p = domain.coord(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const Vec3i q = p + nb[k];
      if (!domain.contains(q)) continue;
      const auto j = domain.index(q);
      if (!domain[j]) continue;
      const double nd = d + step[k];
      if (nd < dist[j]) {
        dist[j] = nd;
        heap.push({nd, j});
      }
    }
  }
  Volume<float> out(m, kInf);
  for (std::size_t i = 0; i < dist.size(); ++i) out[i] = static_cast<float>(dist[i]);
  return {std::move(out), DistanceMetric::geodesic};
}

LabelVolume connected_components(const Mask& mask, int connectivity) {
  const auto nb = neighborhood(connectivity);
  // Offsets already visited in a raster scan.
  std::vector<Vec3i> back;
  for (const auto& o : nb) {
    if (o[2] < 0 || (o[2] == 0 && (o[1] < 0 || (o[1] == 0 && o[0] < 0)))) back.push_back(o);
  }
  std::vector<std::uint32_t> parent(mask.size());
  auto find = [&](std::uint32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  for (std::int64_t z = 0; z < mask.nz(); ++z)
    for (std::int64_t y = 0; y < mask.ny(); ++y)
      for (std::int64_t x = 0; x < mask.nx(); ++x) {
        const auto i = static_cast<std::uint32_t>(mask.index(x, y, z));
        if (!mask[i]) continue;
        parent[i] = i;
        for (const auto& o : back) {
          const Vec3i q{x + o[0], y + o[1], z + o[2]};
          if (!mask.contains(q)) continue;
          const auto j = static_cast<std::uint32_t>(mask.index(q));
          if (!mask[j]) continue;
          auto ri = find(i);
          auto rj = find(j);
          if (ri != rj) {
            if (ri < rj) std::swap(ri, rj);
            parent[ri] = rj;
          }
        }
      }
  VolumeMeta m = mask.meta();
  m.dtype = DType::u32;
  LabelVolume out(m, 0u);
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto r = find(static_cast<std::uint32_t>(i));
    // The root is the smallest index in its set, so it is labelled first.
    if (r == i) out[i] = ++next;
    else out[i] = out[r];
  }
  return out;
}

LabelVolume seeded_watershed(const Volume<float>& priority, const LabelVolume& seeds,
                             const Mask& domain, const WatershedOptions& options) {
  if (priority.shape() != seeds.shape() || domain.shape() != seeds.shape()) {
    throw ArgumentError("watershed inputs must share one shape");
  }
  const auto nb = neighborhood(options.connectivity);
  const Vec3i origin = options.frame_origin;
  const Vec3i frame = options.frame_shape == Vec3i{0, 0, 0} ? seeds.shape() : options.frame_shape;
  auto key = [&](const Vec3i& p) {
    return static_cast<std::uint64_t>((p[0] + origin[0]) +
                                      frame[0] * ((p[1] + origin[1]) + frame[1] * (p[2] + origin[2])));
  };

  struct Item {
    float priority;
    std::uint64_t key;
    std::uint32_t index;
    bool operator>(const Item& o) const {
      return priority != o.priority ? priority > o.priority : key > o.key;
    }
  };
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;

  VolumeMeta m = seeds.meta();
  m.dtype = DType::u32;
  LabelVolume out(m, 0u);
  bool any = false;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i] == 0) continue;
    if (!domain[i]) throw ArgumentError("seed at " + to_string(seeds.coord(i)) + " lies outside the domain");
    out[i] = seeds[i];
    heap.push({priority[i], key(seeds.coord(i)), static_cast<std::uint32_t>(i)});
    any = true;
  }
  if (!any) throw ArgumentError("seeded watershed needs at least one seed");

  while (!heap.empty()) {
    const Item it = heap.top();
    heap.pop();
    const Vec3i p = out.coord(it.index);
    const auto label = out[it.index];
    for (const auto& o : nb) {
      const Vec3i q = p + o;
      if (!out.contains(q)) continue;
      const auto j = out.index(q);
      if (!domain[j] || out[j] != 0) continue;
      out[j] = label;
      heap.push({priority[j], key(q), static_cast<std::uint32_t>(j)});
    }
  }
  return out;
}

}  // namespace partseg
