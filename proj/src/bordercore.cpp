#include "partseg/bordercore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "partseg/morph.hpp"
#include "partseg/parallel.hpp"

namespace fs = std::filesystem;

namespace partseg {

void BorderCoreConfig::validate() const {
  if (border_thickness_vox < 1) throw RangeError("border thickness must be >= 1 voxel");
  if (!(filter_min_distance >= 0.0)) throw RangeError("filter minimum distance must be >= 0");
  if (!(filter_threshold >= 0.0 && filter_threshold <= 1.0)) {
    throw RangeError("filter threshold must lie in [0, 1]");
  }
}

namespace {

struct Box {
  Vec3i lo;
  Vec3i hi;
};

Mask class_mask(const SemanticVolume& sem, SemanticClass c) { return mask_where(sem, c); }

Mask noncore_mask(const SemanticVolume& sem) {
  Mask m(sem.shape(), std::uint8_t{0});
  for (std::size_t i = 0; i < sem.size(); ++i) m[i] = sem[i] != SemanticClass::core ? 1 : 0;
  return m;
}

bool near_border(float squared_distance, double min_distance) {
  return static_cast<double>(squared_distance) <= min_distance * min_distance;
}

bool drop_core(std::uint64_t near, std::uint64_t total, double threshold) {
  return total > 0 && static_cast<double>(near) / static_cast<double>(total) > threshold;
}

// Decode given an already-filtered semantic map.
LabelVolume flood_from_cores(const SemanticVolume& filtered) {
  const Mask core = class_mask(filtered, SemanticClass::core);
  LabelVolume seeds = connected_components(core, 26);
  VolumeMeta m = filtered.meta();
  m.dtype = DType::u32;
  if (std::all_of(seeds.values().begin(), seeds.values().end(), [](auto v) { return v == 0; })) {
    return LabelVolume(m, 0u);
  }
  const auto priority = squared_edt(core, false);
  Mask domain(filtered.shape(), std::uint8_t{0});
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    domain[i] = filtered[i] != SemanticClass::background ? 1 : 0;
  }
  auto out = seeded_watershed(priority, seeds, domain);
  out.meta() = m;
  return out;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }
  std::uint32_t find(std::uint32_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

Vec3i clamp_lo(const Vec3i& p, std::int64_t pad) {
  return {std::max<std::int64_t>(0, p[0] - pad), std::max<std::int64_t>(0, p[1] - pad),
          std::max<std::int64_t>(0, p[2] - pad)};
}
Vec3i clamp_hi(const Vec3i& p, std::int64_t pad, const Vec3i& n) {
  return {std::min(n[0], p[0] + pad), std::min(n[1], p[1] + pad), std::min(n[2], p[2] + pad)};
}

bool inside(const Vec3i& p, const Vec3i& lo, const Vec3i& hi) {
  return p[0] >= lo[0] && p[1] >= lo[1] && p[2] >= lo[2] && p[0] < hi[0] && p[1] < hi[1] && p[2] < hi[2];
}

std::uint64_t global_index(const Vec3i& p, const Vec3i& n) {
  return static_cast<std::uint64_t>(p[0] + n[0] * (p[1] + n[1] * p[2]));
}

// Floods the window [wlo, whi) and crops the cell [lo, hi) into `block`.
// Returns false when the window is too small to reproduce the whole-volume
// flood for this cell: an unreached region of the cell runs into an open
// window face, or a cell voxel is farther from every seen core than from an
// open face (an unseen core could be nearer).
template <typename FinalLabel>
bool flood_window(const BlockStore& sem, const BlockStore& cc_store, const Vec3i& wlo, const Vec3i& whi,
                  const Vec3i& lo, const Vec3i& hi, const Vec3i& n, bool whole, FinalLabel final_label,
                  LabelVolume& block) {
  auto window = sem.read_region<SemanticClass>(wlo, whi);
  const auto local = cc_store.read_region<std::uint32_t>(wlo, whi);
  const Vec3i ws = window.shape();
  LabelVolume seeds(ws, 0u);
  Mask core(ws, std::uint8_t{0});
  Mask domain(ws, std::uint8_t{0});
  bool any = false;
  for (std::int64_t z = 0; z < ws[2]; ++z)
    for (std::int64_t y = 0; y < ws[1]; ++y)
      for (std::int64_t x = 0; x < ws[0]; ++x) {
        const auto i = window.index(x, y, z);
        if (local[i] != 0) {
          const auto label = final_label(Vec3i{x, y, z} + wlo, local[i]);
          if (label == 0) {
            window[i] = SemanticClass::border;
          } else {
            seeds[i] = label;
            core[i] = 1;
            any = true;
          }
        }
        domain[i] = window[i] != SemanticClass::background ? 1 : 0;
      }

  LabelVolume labels(ws, 0u);
  Volume<float> priority;
  if (any) {
    priority = squared_edt(core, false);
    WatershedOptions opts;
    opts.frame_origin = wlo;
    opts.frame_shape = n;
    labels = seeded_watershed(priority, seeds, domain, opts);
  }
  block = crop(labels, lo - wlo, hi - wlo);
  if (whole) return true;

  // Distance from a window voxel to the nearest voxel beyond an open face.
  const Vec3i clo = lo - wlo, chi = hi - wlo;
  auto open_distance = [&](const Vec3i& p) {
    std::int64_t d = std::numeric_limits<std::int64_t>::max();
    for (int a = 0; a < 3; ++a) {
      if (wlo[a] > 0) d = std::min(d, p[a] + 1);
      if (whi[a] < n[a]) d = std::min(d, ws[a] - p[a]);
    }
    return d;
  };

  Mask unreached(ws, std::uint8_t{0});
  bool any_unreached = false;
  for (std::int64_t z = clo[2]; z < chi[2]; ++z)
    for (std::int64_t y = clo[1]; y < chi[1]; ++y)
      for (std::int64_t x = clo[0]; x < chi[0]; ++x) {
        const auto i = window.index(x, y, z);
        if (!domain[i]) continue;
        if (labels[i] == 0) {
          any_unreached = true;
          continue;
        }
        const auto d = static_cast<double>(open_distance({x, y, z}));
        if (static_cast<double>(priority[i]) > d * d) return false;
      }
  if (!any_unreached) return true;

  for (std::size_t i = 0; i < window.size(); ++i) unreached[i] = domain[i] && labels[i] == 0 ? 1 : 0;
  const auto comps = connected_components(unreached, 26);
  std::vector<std::uint8_t> open;
  for (std::int64_t z = 0; z < ws[2]; ++z)
    for (std::int64_t y = 0; y < ws[1]; ++y)
      for (std::int64_t x = 0; x < ws[0]; ++x) {
        const auto id = comps(x, y, z);
        if (id == 0 || open_distance({x, y, z}) != 1) continue;
        if (open.size() <= id) open.resize(id + 1, 0);
        open[id] = 1;
      }
  for (std::int64_t z = clo[2]; z < chi[2]; ++z)
    for (std::int64_t y = clo[1]; y < chi[1]; ++y)
      for (std::int64_t x = clo[0]; x < chi[0]; ++x) {
        const auto id = comps(x, y, z);
        if (id != 0 && id < open.size() && open[id]) return false;
      }
  return true;
}

}  // namespace

SemanticVolume encode(const LabelVolume& instances, const BorderCoreConfig& cfg) {
  cfg.validate();
  VolumeMeta m = instances.meta();
  m.dtype = DType::u8;
  SemanticVolume out(m, SemanticClass::background);

  std::unordered_map<std::uint32_t, Box> boxes;
  std::uint32_t last = 0;
  Box* cur = nullptr;
  for (std::int64_t z = 0; z < instances.nz(); ++z)
    for (std::int64_t y = 0; y < instances.ny(); ++y)
      for (std::int64_t x = 0; x < instances.nx(); ++x) {
        const auto id = instances(x, y, z);
        if (id == 0) continue;
        if (id != last || cur == nullptr) {
          auto [it, fresh] = boxes.try_emplace(id, Box{{x, y, z}, {x + 1, y + 1, z + 1}});
          cur = &it->second;
          last = id;
          if (fresh) continue;
        }
        cur->lo = {std::min(cur->lo[0], x), std::min(cur->lo[1], y), std::min(cur->lo[2], z)};
        cur->hi = {std::max(cur->hi[0], x + 1), std::max(cur->hi[1], y + 1), std::max(cur->hi[2], z + 1)};
      }
  std::vector<std::pair<std::uint32_t, Box>> work(boxes.begin(), boxes.end());
  std::sort(work.begin(), work.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  const auto t2 = static_cast<float>(cfg.border_thickness_vox) * static_cast<float>(cfg.border_thickness_vox);
  parallel_for(work.size(), 0, [&](std::size_t k) {
    const auto id = work[k].first;
    const Box& b = work[k].second;
    const auto patch = crop(instances, b.lo, b.hi);
    Mask outside(patch.shape(), std::uint8_t{0});
    for (std::size_t i = 0; i < patch.size(); ++i) outside[i] = patch[i] != id ? 1 : 0;
    // Everything beyond the bounding box is another instance, background or off-volume.
    const auto sq = squared_edt(outside, true);
    for (std::int64_t z = 0; z < patch.nz(); ++z)
      for (std::int64_t y = 0; y < patch.ny(); ++y)
        for (std::int64_t x = 0; x < patch.nx(); ++x) {
          const auto i = patch.index(x, y, z);
          if (patch[i] != id) continue;
          out(x + b.lo[0], y + b.lo[1], z + b.lo[2]) =
              sq[i] > t2 ? SemanticClass::core : SemanticClass::border;
        }
  });

  // With thickness 1 a ball is the 6-cross, which can leave cores of two
  // instances touching along a diagonal. Demote both sides of such contacts.
  const auto nb = neighborhood(26);
  std::vector<std::size_t> demote;
  for (std::int64_t z = 0; z < out.nz(); ++z)
    for (std::int64_t y = 0; y < out.ny(); ++y)
      for (std::int64_t x = 0; x < out.nx(); ++x) {
        const auto i = out.index(x, y, z);
        if (out[i] != SemanticClass::core) continue;
        for (const auto& o : nb) {
          const Vec3i q{x + o[0], y + o[1], z + o[2]};
          if (!out.contains(q)) continue;
          const auto j = out.index(q);
          if (out[j] == SemanticClass::core && instances[j] != instances[i]) {
            demote.push_back(i);
            break;
          }
        }
      }
  for (auto i : demote) out[i] = SemanticClass::border;
  return out;
}

SemanticVolume small_core_filter(const SemanticVolume& sem, const BorderCoreConfig& cfg) {
  cfg.validate();
  const Mask core = class_mask(sem, SemanticClass::core);
  const auto comps = connected_components(core, 26);
  const auto count = max_label(comps);
  if (count == 0) return sem;
  const auto sq = squared_edt(noncore_mask(sem), false);
  std::vector<std::uint64_t> total(count + 1, 0), near(count + 1, 0);
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const auto c = comps[i];
    if (c == 0) continue;
    ++total[c];
    if (near_border(sq[i], cfg.filter_min_distance)) ++near[c];
  }
  SemanticVolume out = sem;
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const auto c = comps[i];
    if (c != 0 && drop_core(near[c], total[c], cfg.filter_threshold)) out[i] = SemanticClass::border;
  }
  return out;
}

LabelVolume decode(const SemanticVolume& sem, const BorderCoreConfig& cfg) {
  return flood_from_cores(small_core_filter(sem, cfg));
}

BlockStore decode_streaming(const BlockStore& sem, const fs::path& out_root,
                            const BorderCoreConfig& cfg, const StreamingOptions& options) {
  cfg.validate();
  if (sem.kind() != VolumeKind::semantic) {
    throw ArgumentError("decode_streaming needs a semantic store, got " + std::string(kind_name(sem.kind())));
  }
  const Vec3i n = sem.shape();
  const auto cells = sem.cells();
  const auto near_halo = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(cfg.filter_min_distance)));
  const std::int64_t halo = options.halo >= 0 ? options.halo : cfg.border_thickness_vox + 1;

  bool own_scratch = options.scratch.empty();
  fs::path scratch = own_scratch ? fs::path(out_root.string() + ".scratch") : options.scratch;
  std::error_code ec;
  fs::create_directories(scratch, ec);
  if (ec) throw IoError("cannot create scratch directory '" + scratch.string() + "': " + ec.message());

  VolumeMeta label_meta = sem.meta();
  label_meta.dtype = DType::u32;
  auto cc_store = BlockStore::create(scratch / "cores.store", label_meta, VolumeKind::label, sem.chunk_shape());

  // Pass 1: per-block core components with size and near-border counts.
  struct CompStats {
    std::uint64_t total = 0;
    std::uint64_t near = 0;
    std::uint64_t first = ~std::uint64_t{0};
  };
  std::vector<std::vector<CompStats>> stats(cells.size());
  parallel_for(cells.size(), options.threads, [&](std::size_t c) {
    const Vec3i lo = sem.cell_lo(cells[c]);
    const Vec3i hi = sem.cell_hi(cells[c]);
    const Vec3i wlo = clamp_lo(lo, near_halo);
    const Vec3i whi = clamp_hi(hi, near_halo, n);
    const auto window = sem.read_region<SemanticClass>(wlo, whi);
    const auto sq = squared_edt(noncore_mask(window), false);
    const auto block = crop(window, lo - wlo, hi - wlo);
    auto comps = connected_components(class_mask(block, SemanticClass::core), 26);
    auto& st = stats[c];
    st.assign(max_label(comps), CompStats{});
    for (std::int64_t z = 0; z < comps.nz(); ++z)
      for (std::int64_t y = 0; y < comps.ny(); ++y)
        for (std::int64_t x = 0; x < comps.nx(); ++x) {
          const auto id = comps(x, y, z);
          if (id == 0) continue;
          auto& s = st[id - 1];
          const Vec3i g = Vec3i{x, y, z} + lo;
          ++s.total;
          if (near_border(sq.at(g - wlo), cfg.filter_min_distance)) ++s.near;
          s.first = std::min(s.first, global_index(g, n));
        }
    comps.meta() = label_meta;
    comps.meta().shape = hi - lo;
    cc_store.write_cell(cells[c], comps);
  });

  std::vector<std::uint32_t> base(cells.size() + 1, 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    base[c + 1] = base[c] + static_cast<std::uint32_t>(stats[c].size());
  }
  const Vec3i grid = sem.grid_shape();
  auto cell_number = [&](const Vec3i& cell) {
    return static_cast<std::size_t>(cell[0] + grid[0] * (cell[1] + grid[1] * cell[2]));
  };
  // Provisional ids are 1-based and unique across blocks.
  auto provisional = [&](const Vec3i& g, std::uint32_t local) {
    return base[cell_number(sem.cell_of(g))] + local;
  };

  // Pass 2: join components that touch across block faces.
  UnionFind uf(base.back() + 1);
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> links(cells.size());
  parallel_for(cells.size(), options.threads, [&](std::size_t c) {
    const Vec3i lo = sem.cell_lo(cells[c]);
    const Vec3i hi = sem.cell_hi(cells[c]);
    const Vec3i wlo = clamp_lo(lo, 1);
    const Vec3i whi = clamp_hi(hi, 1, n);
    if (wlo == lo && whi == hi) return;
    const auto window = cc_store.read_region<std::uint32_t>(wlo, whi);
    const auto nb = neighborhood(26);
    for (std::int64_t z = lo[2]; z < hi[2]; ++z)
      for (std::int64_t y = lo[1]; y < hi[1]; ++y)
        for (std::int64_t x = lo[0]; x < hi[0]; ++x) {
          const bool shell = x == lo[0] || y == lo[1] || z == lo[2] || x == hi[0] - 1 ||
                             y == hi[1] - 1 || z == hi[2] - 1;
          if (!shell) continue;
          const Vec3i g{x, y, z};
          const auto id = window.at(g - wlo);
          if (id == 0) continue;
          for (const auto& o : nb) {
            const Vec3i q = g + o;
            if (inside(q, lo, hi) || !inside(q, wlo, whi)) continue;
            const auto other = window.at(q - wlo);
            if (other != 0) links[c].emplace_back(provisional(g, id), provisional(q, other));
          }
        }
  });
  for (const auto& l : links) {
    for (const auto& [a, b] : l) uf.unite(a, b);
  }
  links.clear();
  links.shrink_to_fit();

  std::vector<CompStats> merged(base.back() + 1);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t k = 0; k < stats[c].size(); ++k) {
      const auto root = uf.find(base[c] + static_cast<std::uint32_t>(k) + 1);
      auto& r = merged[root];
      r.total += stats[c][k].total;
      r.near += stats[c][k].near;
      r.first = std::min(r.first, stats[c][k].first);
    }
  }
  std::vector<std::uint32_t> survivors;
  for (std::uint32_t id = 1; id <= base.back(); ++id) {
    if (uf.find(id) == id && !drop_core(merged[id].near, merged[id].total, cfg.filter_threshold)) {
      survivors.push_back(id);
    }
  }
  std::sort(survivors.begin(), survivors.end(),
            [&](auto a, auto b) { return merged[a].first < merged[b].first; });
  std::vector<std::uint32_t> root_label(base.back() + 1, 0);
  for (std::size_t k = 0; k < survivors.size(); ++k) {
    root_label[survivors[k]] = static_cast<std::uint32_t>(k + 1);
  }
  std::vector<std::uint32_t> final_label(base.back() + 1, 0);
  for (std::uint32_t id = 1; id <= base.back(); ++id) final_label[id] = root_label[uf.find(id)];
  merged.clear();
  merged.shrink_to_fit();
  stats.clear();
  stats.shrink_to_fit();

  // Pass 3: flood border voxels from the final cores, block by block.
  auto out = BlockStore::create(out_root, label_meta, VolumeKind::label, sem.chunk_shape());
  parallel_for(cells.size(), options.threads, [&](std::size_t c) {
    const Vec3i lo = sem.cell_lo(cells[c]);
    const Vec3i hi = sem.cell_hi(cells[c]);
    LabelVolume block;
    for (std::int64_t h = std::max<std::int64_t>(halo, 1);; h *= 2) {
      const Vec3i wlo = clamp_lo(lo, h);
      const Vec3i whi = clamp_hi(hi, h, n);
      const bool whole = wlo == Vec3i{0, 0, 0} && whi == n;
      if (flood_window(sem, cc_store, wlo, whi, lo, hi, n, whole, [&](const Vec3i& g, std::uint32_t local) {
            return final_label[provisional(g, local)];
          }, block)) {
        break;
      }
    }
    block.meta() = label_meta;
    block.meta().shape = hi - lo;
    out.write_cell(cells[c], block);
  });
  out.write_sidecar();

  if (own_scratch) fs::remove_all(scratch, ec);
  else fs::remove_all(scratch / "cores.store", ec);
  return out;
}

}  // namespace partseg
