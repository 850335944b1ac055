// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [--cli PATH] [--only N]...
//
// Criterion 10 needs the path of the partseg executable.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <new>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "partseg/blockstore.hpp"
#include "partseg/bordercore.hpp"
#include "partseg/classical.hpp"
#include "partseg/infer.hpp"
#include "partseg/metrics.hpp"
#include "partseg/morph.hpp"
#include "partseg/preprocess.hpp"
#include "partseg/synth.hpp"

// ---------------------------------------------------------------------------
// Heap high-water mark. Every allocation carries a 16-byte size header.

namespace heap {
std::atomic<std::size_t> current{0};
std::atomic<std::size_t> peak{0};

void* take(std::size_t n) {
  void* raw = std::malloc(n + 16);
  if (!raw) throw std::bad_alloc();
  *static_cast<std::size_t*>(raw) = n;
  const auto now = current.fetch_add(n) + n;
  auto seen = peak.load();
  while (now > seen && !peak.compare_exchange_weak(seen, now)) {
  }
  return static_cast<char*>(raw) + 16;
}

void give(void* p) noexcept {
  if (!p) return;
  char* raw = static_cast<char*>(p) - 16;
  current.fetch_sub(*reinterpret_cast<std::size_t*>(raw));
  std::free(raw);
}

void reset_peak() { peak.store(current.load()); }
}  // namespace heap

void* operator new(std::size_t n) { return heap::take(n); }
void* operator new[](std::size_t n) { return heap::take(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept {
  try {
    return heap::take(n);
  } catch (...) {
    return nullptr;
  }
}
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept {
  try {
    return heap::take(n);
  } catch (...) {
    return nullptr;
  }
}
void operator delete(void* p) noexcept { heap::give(p); }
void operator delete[](void* p) noexcept { heap::give(p); }
void operator delete(void* p, std::size_t) noexcept { heap::give(p); }
void operator delete[](void* p, std::size_t) noexcept { heap::give(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { heap::give(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { heap::give(p); }

// ---------------------------------------------------------------------------

namespace fs = std::filesystem;
using namespace partseg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// True when a and b induce the same partition of the volume with 0 <-> 0.
bool same_partition(const LabelVolume& a, const LabelVolume& b) {
  if (a.shape() != b.shape()) return false;
  std::map<std::uint32_t, std::uint32_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto [x, fresh_x] = ab.try_emplace(a[i], b[i]);
    auto [y, fresh_y] = ba.try_emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

std::uint32_t majority_label(const LabelVolume& pred, const LabelVolume& ref, std::uint32_t id) {
  std::map<std::uint32_t, std::uint64_t> votes;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (ref[i] == id) ++votes[pred[i]];
  std::uint32_t best = 0;
  std::uint64_t best_n = 0;
  for (const auto& [p, n] : votes)
    if (n > best_n) best = p, best_n = n;
  return best;
}

// 1. ------------------------------------------------------------------------
Outcome round_trip() {
  const auto t0 = Clock::now();
  const BorderCoreConfig cfg;
  int ok = 0;
  std::string fails;
  for (int k = 0; k < 20; ++k) {
    PhantomSpec spec;
    spec.shape = {128, 128, 128};
    spec.particle_count = 30 + (k * 50) / 19;
    spec.radius_min_vox = 5.0;  // diameter >= 10 > 2 * 3 + 3
    spec.radius_max_vox = 9.0;
    spec.shape_kinds = {ShapeKind::sphere, ShapeKind::ellipsoid, ShapeKind::superellipsoid};
    spec.rng_seed = 1000 + static_cast<std::uint64_t>(k);
    const auto ph = generate(spec);
    const auto decoded = decode(encode(ph.labels, cfg), cfg);
    const auto r = evaluate(decoded, ph.labels);
    if (r.f1_instance == 1.0 && r.merger_ratio == 0.0 && r.splitter_ratio == 0.0 &&
        same_partition(decoded, ph.labels)) {
      ++ok;
    } else {
      fails += " seed" + std::to_string(spec.rng_seed);
    }
  }
  const double t = seconds_since(t0);
  return {ok == 20 && t < 120.0,
          std::to_string(ok) + "/20 phantoms exact, " + fmt("%.1f", t) + " s (limit 120)" + fails};
}

// 2. ------------------------------------------------------------------------
Outcome touching_pairs() {
  const BorderCoreConfig cfg;
  const double min_diameter = 2.0 * cfg.border_thickness_vox + 3.0;
  int eligible = 0, merged = 0, total = 0;
  std::string cases;
  for (int k = 0; k < 10; ++k) {
    PhantomSpec spec;
    spec.shape = {128, 128, 128};
    spec.particle_count = 50;
    spec.radius_min_vox = 4.0;
    spec.radius_max_vox = 9.0;
    spec.shape_kinds = {ShapeKind::sphere, ShapeKind::ellipsoid, ShapeKind::superellipsoid};
    spec.touching_pair_fraction = 0.3;
    spec.rng_seed = 2000 + static_cast<std::uint64_t>(k);
    const auto ph = generate(spec);
    const auto decoded = decode(encode(ph.labels, cfg), cfg);
    std::map<std::uint32_t, double> thinnest;
    for (const auto& rec : measure(ph.labels)) {
      const auto ext = rec.bb_hi - rec.bb_lo;
      thinnest[rec.id] = static_cast<double>(std::min({ext[0], ext[1], ext[2]}));
    }
    for (const auto& [a, b] : ph.touching_pairs) {
      ++total;
      if (thinnest[a] < min_diameter || thinnest[b] < min_diameter) continue;
      ++eligible;
      const auto la = majority_label(decoded, ph.labels, a);
      const auto lb = majority_label(decoded, ph.labels, b);
      if (la == 0 || la == lb) {
        ++merged;
        // Report how thin the members are and whether their cores survived the filter.
        const auto filtered = small_core_filter(encode(ph.labels, cfg), cfg);
        auto has_core = [&](std::uint32_t id) {
          for (std::size_t i = 0; i < filtered.size(); ++i)
            if (ph.labels[i] == id && filtered[i] == SemanticClass::core) return true;
          return false;
        };
        cases += "; seed " + std::to_string(spec.rng_seed) + " pair (" + std::to_string(a) + "," +
                 std::to_string(b) + ") thickness " + fmt("%.0f", thinnest[a]) + "/" + fmt("%.0f", thinnest[b]) +
                 ", filtered core " + (has_core(a) ? "kept" : "removed") + "/" + (has_core(b) ? "kept" : "removed");
      }
    }
  }
  return {eligible > 0 && merged == 0, std::to_string(merged) + " merged of " + std::to_string(eligible) +
                                           " eligible pairs (" + std::to_string(total) + " placed)" + cases};
}

// 3. ------------------------------------------------------------------------
Outcome chunk_seams() {
  const auto t0 = Clock::now();
  PhantomSpec spec;
  spec.shape = {192, 192, 192};
  spec.particle_count = 160;
  spec.radius_min_vox = 5.0;
  spec.radius_max_vox = 12.0;
  spec.shape_kinds = {ShapeKind::sphere, ShapeKind::ellipsoid, ShapeKind::superellipsoid};
  spec.touching_pair_fraction = 0.2;
  spec.rng_seed = 3000;
  const auto ph = generate(spec);
  const BorderCoreConfig cfg;
  const OraclePredictor oracle(ph.labels, cfg, {32, 32, 32});
  const GlobalStats stats = global_stats(std::span<const ScalarVolume>(&ph.volume, 1));
  const SizeNormSpec size{60.0, 60.0};
  fixtures::TempDir dir("partseg_seams");
  InferenceOptions chunked;
  chunked.chunk_shape = {64, 64, 64};
  InferenceOptions whole;
  whole.chunk_shape = spec.shape;
  const auto a = predict_semantic(memory_source(ph.volume), ph.volume.meta(), oracle, size, stats,
                                  dir / "chunked.store", chunked)
                     .read_all<SemanticClass>();
  const auto b = predict_semantic(memory_source(ph.volume), ph.volume.meta(), oracle, size, stats,
                                  dir / "whole.store", whole)
                     .read_all<SemanticClass>();
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
  const double t = seconds_since(t0);
  return {differ == 0 && t < 300.0,
          std::to_string(differ) + " differing voxels, " + fmt("%.1f", t) + " s (limit 300)"};
}

// 4. ------------------------------------------------------------------------
// Lattice phantom written cell by cell so the whole volume never sits in memory.
constexpr std::int64_t kTile = 32;

SemanticVolume lattice_tile() {
  LabelVolume tile(Vec3i{kTile, kTile, kTile}, 0u);
  fixtures::paint_sphere(tile, 15.5, 15.5, 15.5, 11.0, 1);
  return encode(tile, BorderCoreConfig{});
}

void write_lattice(const fs::path& vol_root, const fs::path& sem_root, std::int64_t n) {
  const auto tile = lattice_tile();
  VolumeMeta m;
  m.shape = {n, n, n};
  m.dtype = DType::f32;
  auto vol = BlockStore::create(vol_root, m, VolumeKind::scalar, {64, 64, 64});
  m.dtype = DType::u8;
  auto sem = BlockStore::create(sem_root, m, VolumeKind::semantic, {64, 64, 64});
  for (const auto& cell : vol.cells()) {
    const Vec3i lo = vol.cell_lo(cell), hi = vol.cell_hi(cell);
    ScalarVolume v(hi - lo, 0.0f);
    SemanticVolume s(hi - lo, SemanticClass::background);
    for (std::int64_t z = lo[2]; z < hi[2]; ++z)
      for (std::int64_t y = lo[1]; y < hi[1]; ++y)
        for (std::int64_t x = lo[0]; x < hi[0]; ++x) {
          const auto c = tile(x % kTile, y % kTile, z % kTile);
          s(x - lo[0], y - lo[1], z - lo[2]) = c;
          v(x - lo[0], y - lo[1], z - lo[2]) = c == SemanticClass::background ? 0.0f : 1.0f;
        }
    vol.write_cell(cell, v);
    sem.write_cell(cell, s);
  }
  vol.write_sidecar();
  sem.write_sidecar();
}

std::size_t inference_peak(std::int64_t n, const fs::path& dir) {
  write_lattice(dir / "vol.store", dir / "sem.store", n);
  const auto input = BlockStore::open(dir / "vol.store");
  const OraclePredictor oracle(BlockStore::open(dir / "sem.store"), {32, 32, 32});
  InferenceOptions opts;
  opts.chunk_shape = {64, 64, 64};
  opts.scratch = dir / "scratch";
  opts.threads = 1;
  const auto source = store_source(input);
  const auto base = heap::current.load();
  heap::reset_peak();
  run_inference(source, input.meta(), oracle, BorderCoreConfig{}, SizeNormSpec{60.0, 60.0}, GlobalStats{0.5, 0.5},
                dir / "labels.store", opts);
  return heap::peak.load() - base;
}

Outcome memory_bound() {
  const auto t0 = Clock::now();
  fixtures::TempDir small("partseg_mem256");
  const auto p256 = inference_peak(256, small.path());
  fixtures::TempDir large("partseg_mem384");
  const auto p384 = inference_peak(384, large.path());
  const double ratio = static_cast<double>(p384) / static_cast<double>(p256);
  return {ratio <= 1.10, "peak heap " + fmt("%.1f", p256 / 1048576.0) + " MiB at 256^3, " +
                             fmt("%.1f", p384 / 1048576.0) + " MiB at 384^3, ratio " + fmt("%.3f", ratio) +
                             " (limit 1.10), " + fmt("%.1f", seconds_since(t0)) + " s"};
}

// 5. ------------------------------------------------------------------------
// Exhaustive oracle: every (pred, ref) overlap counted by its own pass.
struct BruteMetrics {
  double f1_voxel, f1_match, f1_instance, merger, splitter;
  std::set<std::vector<std::uint32_t>> mergers, splitters;
};

BruteMetrics brute_metrics(const LabelVolume& pred, const LabelVolume& ref) {
  std::set<std::uint32_t> pid, rid;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pid.insert(pred[i]);
    rid.insert(ref[i]);
  }
  pid.insert(0);
  rid.insert(0);
  auto overlap = [&](std::uint32_t p, std::uint32_t r) {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == p && ref[i] == r;
    return n;
  };
  auto size_of = [](const LabelVolume& v, std::uint32_t id) {
    return static_cast<std::uint64_t>(std::count(v.values().begin(), v.values().end(), id));
  };
  auto f1 = [](double tp, double fp, double fn) { return tp + fp + fn == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn); };

  BruteMetrics out{};
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] && ref[i];
    fp += pred[i] && !ref[i];
    fn += !pred[i] && ref[i];
  }
  out.f1_voxel = f1(tp, fp, fn);

  struct Cand {
    double f1;
    std::uint32_t ref, pred;
  };
  std::vector<Cand> cands;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> table;
  for (auto p : pid)
    for (auto r : rid) table[{p, r}] = overlap(p, r);
  for (auto p : pid)
    for (auto r : rid) {
      if (!p || !r || !table[{p, r}]) continue;
      const double s = 2.0 * static_cast<double>(table[{p, r}]) /
                       static_cast<double>(size_of(pred, p) + size_of(ref, r));
      if (s >= 0.1) cands.push_back({s, r, p});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.f1 != b.f1) return a.f1 > b.f1;
    if (a.ref != b.ref) return a.ref < b.ref;
    return a.pred < b.pred;
  });
  std::set<std::uint32_t> used_p, used_r;
  double sum = 0;
  std::size_t pairs = 0;
  for (const auto& c : cands) {
    if (used_p.count(c.pred) || used_r.count(c.ref)) continue;
    used_p.insert(c.pred);
    used_r.insert(c.ref);
    sum += c.f1;
    ++pairs;
  }
  const double n_pred = static_cast<double>(pid.size() - 1), n_ref = static_cast<double>(rid.size() - 1);
  const double up = n_pred - static_cast<double>(pairs), ur = n_ref - static_cast<double>(pairs);
  out.f1_match = f1(static_cast<double>(pairs), up, ur);
  const double denom = static_cast<double>(pairs) + up + ur;
  out.f1_instance = denom == 0 ? 1.0 : sum / denom;

  // Majority partner, background included, ties to the smaller id.
  auto groups = [&](const std::set<std::uint32_t>& owners, const std::set<std::uint32_t>& members, bool owner_is_pred) {
    std::map<std::uint32_t, std::vector<std::uint32_t>> by_owner;
    for (auto m : members) {
      if (!m) continue;
      std::uint32_t best = 0;
      std::uint64_t best_n = 0;
      bool first = true;
      for (auto o : owners) {
        const auto n = owner_is_pred ? table[{o, m}] : table[{m, o}];
        if (first || n > best_n) best = o, best_n = n, first = false;
      }
      if (best) by_owner[best].push_back(m);
    }
    std::set<std::vector<std::uint32_t>> out_groups;
    double excess = 0;
    for (auto& [o, g] : by_owner) {
      if (g.size() < 2) continue;
      std::sort(g.begin(), g.end());
      out_groups.insert(g);
      excess += static_cast<double>(g.size() - 1);
    }
    return std::pair{out_groups, n_ref == 0 ? 0.0 : excess / n_ref};
  };
  std::tie(out.mergers, out.merger) = groups(pid, rid, true);
  std::tie(out.splitters, out.splitter) = groups(rid, pid, false);
  return out;
}

LabelVolume random_label_volume(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> side(1, 12);
  const Vec3i shape{side(rng), side(rng), side(rng)};
  std::uniform_int_distribution<int> style(0, 2);
  if (style(rng) == 0) {
    LabelVolume v(shape, 0u);
    std::uniform_int_distribution<std::uint32_t> id(0, 5);
    for (auto& x : v.values()) x = id(rng);
    return v;
  }
  return fixtures::random_labels(shape, 7, rng);
}

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5005);
  int agree = 0;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    LabelVolume ref = random_label_volume(rng);
    LabelVolume pred = fixtures::random_labels(ref.shape(), 7, rng);
    if (k % 4 == 0) {
      // Perturbed copy of the reference: realistic near-matches.
      pred = ref;
      std::uniform_int_distribution<std::uint32_t> id(0, 7);
      std::bernoulli_distribution flip(0.15);
      for (auto& x : pred.values())
        if (flip(rng)) x = id(rng);
    }
    const auto got = evaluate(pred, ref);
    const auto want = brute_metrics(pred, ref);
    const double d = std::max({std::abs(got.f1_voxel - want.f1_voxel), std::abs(got.f1_match - want.f1_match),
                               std::abs(got.f1_instance - want.f1_instance),
                               std::abs(got.merger_ratio - want.merger), std::abs(got.splitter_ratio - want.splitter)});
    worst = std::max(worst, d);
    auto as_set = [](const std::vector<std::vector<std::uint32_t>>& gs) {
      std::set<std::vector<std::uint32_t>> s;
      for (auto g : gs) {
        std::sort(g.begin(), g.end());
        s.insert(g);
      }
      return s;
    };
    if (d <= 1e-9 && as_set(got.mergers) == want.mergers && as_set(got.splitters) == want.splitters) ++agree;
  }
  const double t = seconds_since(t0);
  return {agree == 100 && t < 60.0, std::to_string(agree) + "/100 volumes agree, max |diff| " + fmt("%.2e", worst) +
                                        ", " + fmt("%.2f", t) + " s"};
}

// 6. ------------------------------------------------------------------------
// Direct evaluation of the rule: fraction of core voxels within the minimum
// distance of a non-core voxel (inside the volume).
double near_fraction(const SemanticVolume& sem, double min_d) {
  std::uint64_t core = 0, near = 0;
  const auto r = static_cast<std::int64_t>(std::ceil(min_d));
  for (std::int64_t z = 0; z < sem.nz(); ++z)
    for (std::int64_t y = 0; y < sem.ny(); ++y)
      for (std::int64_t x = 0; x < sem.nx(); ++x) {
        if (sem(x, y, z) != SemanticClass::core) continue;
        ++core;
        bool hit = false;
        for (std::int64_t dz = -r; dz <= r && !hit; ++dz)
          for (std::int64_t dy = -r; dy <= r && !hit; ++dy)
            for (std::int64_t dx = -r; dx <= r && !hit; ++dx) {
              if (static_cast<double>(dx * dx + dy * dy + dz * dz) > min_d * min_d) continue;
              const Vec3i q{x + dx, y + dy, z + dz};
              if (sem.contains(q) && sem.at(q) != SemanticClass::core) hit = true;
            }
        near += hit;
      }
  return core ? static_cast<double>(near) / static_cast<double>(core) : 0.0;
}

SemanticVolume core_fixture(const Vec3i& core_extent) {
  const Vec3i shape = core_extent + Vec3i{6, 6, 6};
  SemanticVolume s(shape, SemanticClass::background);
  for (std::int64_t z = 1; z < shape[2] - 1; ++z)
    for (std::int64_t y = 1; y < shape[1] - 1; ++y)
      for (std::int64_t x = 1; x < shape[0] - 1; ++x) s(x, y, z) = SemanticClass::border;
  for (std::int64_t z = 3; z < 3 + core_extent[2]; ++z)
    for (std::int64_t y = 3; y < 3 + core_extent[1]; ++y)
      for (std::int64_t x = 3; x < 3 + core_extent[0]; ++x) s(x, y, z) = SemanticClass::core;
  return s;
}

Outcome small_cores() {
  const BorderCoreConfig cfg;  // min distance 1, threshold 0.95
  struct Case {
    const char* name;
    Vec3i extent;
    bool keep;
  };
  const Case cases[] = {{"single voxel", {1, 1, 1}, false},
                        {"2-thick plate", {9, 9, 2}, false},
                        {"7^3 cube", {7, 7, 7}, true}};
  bool all = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto sem = core_fixture(c.extent);
    const double frac = near_fraction(sem, cfg.filter_min_distance);
    const bool rule_keeps = !(frac > cfg.filter_threshold);
    const auto filtered = small_core_filter(sem, cfg);
    const bool kept = std::count(filtered.values().begin(), filtered.values().end(), SemanticClass::core) > 0;
    const bool ok = kept == c.keep && rule_keeps == c.keep;
    all = all && ok;
    detail += std::string(detail.empty() ? "" : ", ") + c.name + (kept ? " kept" : " removed") + " (near " +
              fmt("%.3f", frac) + ")";
  }
  return {all, detail};
}

// 7. ------------------------------------------------------------------------
Outcome threshwater_behaviour() {
  const BorderCoreConfig cfg;
  const ThreshWaterParams tw;  // threshold 0.5, opening 1, seed erosion 3
  double tw_split = 0.0, oracle_split = 0.0;
  // Contrast 0.2 at contrast-to-noise ratios 3..5. Below about 2.5 the
  // thresholded mask is too ragged for any seed to survive erosion.
  const double cnrs[] = {3.0, 3.5, 4.0, 4.5, 5.0};
  const int suite = 5;
  for (int k = 0; k < suite; ++k) {
    PhantomSpec spec;
    spec.shape = {96, 96, 96};
    spec.particle_count = 40;
    spec.radius_min_vox = 5.0;
    spec.radius_max_vox = 11.0;
    spec.shape_kinds = {ShapeKind::sphere, ShapeKind::ellipsoid, ShapeKind::superellipsoid};
    spec.touching_pair_fraction = 0.3;
    spec.fg_mean = 0.6;
    spec.bg_mean = 0.4;
    spec.fg_std = 0.2 / cnrs[k];
    spec.bg_std = spec.fg_std;
    spec.streak_artifact_count = 3;
    spec.rng_seed = 7000 + static_cast<std::uint64_t>(k);
    const auto ph = generate(spec);
    tw_split += splitter_ratio(threshwater(ph.volume, tw), ph.labels).ratio;

    fixtures::TempDir dir("partseg_tw");
    const OraclePredictor oracle(ph.labels, cfg, {32, 32, 32});
    InferenceOptions opts;
    opts.chunk_shape = {64, 64, 64};
    opts.scratch = dir.path();
    const auto stats = global_stats(std::span<const ScalarVolume>(&ph.volume, 1));
    const auto pred = run_inference(ph.volume, oracle, cfg, SizeNormSpec{60.0, 60.0}, stats, opts);
    oracle_split += splitter_ratio(pred, ph.labels).ratio;
  }
  tw_split /= suite;
  oracle_split /= suite;
  const bool splits_ok = tw_split > oracle_split && tw_split >= 5.0 * oracle_split;

  // Touching spheres with neck radius below half the sphere radius.
  std::mt19937_64 rng(7100);
  std::uniform_real_distribution<double> radius(6.0, 10.0), neck(0.05, 0.5), unit(-1.0, 1.0);
  int pairs = 0, separated = 0;
  double widest_ok = 0.0, narrowest_fail = 1e9;
  for (int k = 0; k < 60; ++k) {
    const double r = radius(rng);
    const double rho = neck(rng) * r;
    const double d = 2.0 * std::sqrt(r * r - rho * rho);
    Vec3d dir{unit(rng), unit(rng), unit(rng)};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    for (auto& v : dir) v /= len;
    const std::int64_t n = static_cast<std::int64_t>(std::ceil(2 * r + d)) + 6;
    LabelVolume l(Vec3i{n, n, n}, 0u);
    const double c = (n - 1) / 2.0;
    const Vec3d a{c - dir[0] * d / 2, c - dir[1] * d / 2, c - dir[2] * d / 2};
    const Vec3d b{c + dir[0] * d / 2, c + dir[1] * d / 2, c + dir[2] * d / 2};
    fixtures::paint_sphere(l, a[0], a[1], a[2], r, 1);
    fixtures::paint_sphere(l, b[0], b[1], b[2], r, 2);
    ScalarVolume v(l.shape(), 0.0f);
    for (std::size_t i = 0; i < l.size(); ++i) v[i] = l[i] ? 1.0f : 0.0f;
    const auto out = threshwater(v, tw);
    ++pairs;
    const auto la = majority_label(out, l, 1), lb = majority_label(out, l, 2);
    if (la != 0 && lb != 0 && la != lb) {
      ++separated;
      widest_ok = std::max(widest_ok, rho);
    } else {
      narrowest_fail = std::min(narrowest_fail, rho);
    }
  }
  const double rate = static_cast<double>(separated) / pairs;
  return {splits_ok && rate >= 0.9,
          "splitter ratio threshwater " + fmt("%.4f", tw_split) + " vs oracle " + fmt("%.4f", oracle_split) +
              "; touching spheres separated " + std::to_string(separated) + "/" + std::to_string(pairs) + " (" +
              fmt("%.1f", 100 * rate) + "%, need 90%; widest separated neck " + fmt("%.2f", widest_ok) +
              " vox, narrowest failure " + (separated == pairs ? std::string("none") : fmt("%.2f", narrowest_fail)) +
              " vox)"};
}

// 8. ------------------------------------------------------------------------
struct Fused {
  LabelVolume labels;
  SplitRequest request;
  double half_volume = 0.0;  // analytic volume of each part
};

// Two spheres of radius r, centres d apart along `dir`, with a one-voxel-thick
// border drawn where the bisecting plane crosses the instance. The volume side
// is even so the plane passes between voxel centres, and the markers mirror
// each other through the volume centre.
Fused fused_pair(double r, double d, const Vec3d& dir, std::uint32_t id, bool with_neighbour) {
  std::int64_t n = static_cast<std::int64_t>(std::ceil(2 * r + d)) + (with_neighbour ? 20 : 6);
  n += n % 2;
  Fused f{LabelVolume(Vec3i{n, n, n}, 0u), {}, 0.0};
  const double c = (n - 1) / 2.0 - (with_neighbour ? 7.0 : 0.0);
  const Vec3d a{c - dir[0] * d / 2, c - dir[1] * d / 2, c - dir[2] * d / 2};
  const Vec3d b{c + dir[0] * d / 2, c + dir[1] * d / 2, c + dir[2] * d / 2};
  fixtures::paint_sphere(f.labels, a[0], a[1], a[2], r, id);
  fixtures::paint_sphere(f.labels, b[0], b[1], b[2], r, id);
  if (with_neighbour) fixtures::paint_sphere(f.labels, n - 5.0, n - 5.0, n - 5.0, 3.0, id + 1);
  f.request.target_label = id;
  for (std::int64_t z = 0; z < n; ++z)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x) {
        if (f.labels(x, y, z) != id) continue;
        const double s = (x - c) * dir[0] + (y - c) * dir[1] + (z - c) * dir[2];
        if (s > -0.5 && s <= 0.5) f.request.border_voxels.push_back({x, y, z});
      }
  const Vec3i ma{std::llround(a[0]), std::llround(a[1]), std::llround(a[2])};
  const auto twice_c = static_cast<std::int64_t>(std::llround(2 * c));
  f.request.markers = {ma, Vec3i{twice_c - ma[0], twice_c - ma[1], twice_c - ma[2]}};
  const double h = r - d / 2;
  const double cap = std::numbers::pi * h * h * (3 * r - h) / 3.0;
  f.half_volume = 4.0 / 3.0 * std::numbers::pi * r * r * r - cap;
  return f;
}

Outcome geodesic_split() {
  int volume_ok = 0, volume_cases = 0;
  double worst = 0.0;
  for (double r : {8.0, 10.0, 12.0})
    for (double ratio : {1.2, 1.5, 1.8}) {
      const auto f = fused_pair(r, ratio * r, {1.0, 0.0, 0.0}, 1, false);
      const auto out = split_particle(f.labels, f.request);
      const auto a = out.at(f.request.markers[0]), b = out.at(f.request.markers[1]);
      const auto na = std::count(out.values().begin(), out.values().end(), a);
      const auto nb = std::count(out.values().begin(), out.values().end(), b);
      const double ea = std::abs(na - f.half_volume) / f.half_volume;
      const double eb = std::abs(nb - f.half_volume) / f.half_volume;
      worst = std::max({worst, ea, eb});
      ++volume_cases;
      volume_ok += a != b && ea <= 0.05 && eb <= 0.05;
    }

  std::mt19937_64 rng(8000);
  std::uniform_real_distribution<double> radius(5.0, 10.0), sep(1.1, 1.8), unit(-1.0, 1.0);
  int partition_ok = 0;
  for (int k = 0; k < 50; ++k) {
    Vec3d dir{unit(rng), unit(rng), unit(rng)};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    for (auto& v : dir) v /= len;
    const double r = radius(rng);
    const auto id = static_cast<std::uint32_t>(1 + k % 5);
    const auto f = fused_pair(r, sep(rng) * r, dir, id, true);
    const auto out = split_particle(f.labels, f.request);
    bool ok = true;
    const auto top = max_label(f.labels);
    std::set<std::uint32_t> fresh;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (f.labels[i] == id) {
        ok = ok && out[i] > top;
        fresh.insert(out[i]);
      } else {
        ok = ok && out[i] == f.labels[i];
      }
    }
    ok = ok && fresh.size() == 2 && out.at(f.request.markers[0]) != out.at(f.request.markers[1]);
    partition_ok += ok;
  }
  return {volume_ok == volume_cases && partition_ok == 50,
          std::to_string(volume_ok) + "/" + std::to_string(volume_cases) + " fused volumes within 5% (worst " +
              fmt("%.2f", 100 * worst) + "%), partition holds on " + std::to_string(partition_ok) + "/50 requests"};
}

// 9. ------------------------------------------------------------------------
Outcome cost_model() {
  std::mt19937_64 rng(9000);
  std::uniform_real_distribution<double> log_mm(std::log(1e-3), std::log(50.0));
  std::uniform_real_distribution<double> log_sp(std::log(1e-4), std::log(1.0));
  double worst = 0.0;
  int ok = 0;
  for (int k = 0; k < 1000; ++k) {
    const double mm = std::exp(log_mm(rng));
    const double spacing = std::exp(log_sp(rng));
    const double vox = estimate_voxel_particle_size(mm, spacing);
    const double back = particle_size_mm(vox, spacing);
    const double err = std::abs(back - mm) / mm;
    worst = std::max(worst, err);
    ok += err <= 1e-12 && vox == mm / spacing;
  }
  return {ok == 1000, std::to_string(ok) + "/1000 round trips, worst relative error " + fmt("%.2e", worst)};
}

// 10. -----------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.rfind("log/", 0) == 0) continue;
    files[rel] = slurp(e.path());
  }
  return files;
}

void write_inputs(const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> v(0, 65535);
    std::ofstream os(dir / "in.raw", std::ios::binary);
    for (int i = 0; i < 24 * 20 * 16; ++i) {
      const auto x = static_cast<std::uint16_t>(v(rng));
      const unsigned char b[2] = {static_cast<unsigned char>(x & 0xff), static_cast<unsigned char>(x >> 8)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  std::ofstream(dir / "spec.json") << R"({"shape": [64, 64, 64], "particle_count": 14, "radius_min_vox": 5,
 "radius_max_vox": 8, "shape_kinds": ["sphere", "ellipsoid", "superellipsoid"],
 "touching_pair_fraction": 0.3, "streak_artifact_count": 2, "rng_seed": 77})";
  const auto f = fused_pair(8.0, 12.0, {1.0, 0.0, 0.0}, 1, false);
  write_blockstore(f.labels, dir / "fused.store", {16, 16, 16});
  auto triplets = [](const std::vector<Vec3i>& pts) {
    std::string s = "[";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += (i ? ", [" : "[") + std::to_string(pts[i][0]) + ", " + std::to_string(pts[i][1]) + ", " +
           std::to_string(pts[i][2]) + "]";
    }
    return s + "]";
  };
  std::ofstream(dir / "markers.json") << triplets(f.request.markers);
  std::ofstream(dir / "border.json") << triplets(f.request.border_voxels);
}

Outcome cli_determinism(const std::string& cli) {
  if (cli.empty()) return {false, "no --cli path given"};
  const std::string exe = fs::absolute(cli).string();
  const auto t0 = Clock::now();
  const std::vector<std::string> steps = {
      "import --raw in.raw --shape 24 20 16 --dtype u16 --endian big --out imp.store --store-chunk 8",
      "synth --spec spec.json --out-vol v.store --out-labels l.store --store-chunk 32",
      "stats --in v.store --out stats/stats.json",
      "stats --in v.store imp.store",
      "encode --in l.store --out sem.store",
      "decode --in sem.store --out dec.store",
      "infer --in v.store --out inf.store --predictor oracle:l.store --patch 16 --chunk 32 --ref-size-vox 60 "
      "--stats stats/stats.json",
      "infer --in v.store --out inf_tw.store --predictor threshwater:0.5,1,2 --patch 16 --chunk 32 "
      "--ref-size-vox 40",
      "threshwater --in v.store --out tw.store",
      "split --in fused.store --label 1 --markers markers.json --border border.json --out split.store",
      "augment --vol v.store --labels l.store --bank v.store,l.store --prob 1 --seed 5 --out-vol aug_v.store "
      "--out-labels aug_l.store",
      "export-train --vol v.store --labels l.store --stats stats/stats.json --ref-size-vox 50 --out train",
      "eval --pred inf.store --ref l.store --out eval/report.json",
      "eval --pred tw.store --ref l.store",
      "measure --in l.store --out measure/table.csv",
      "measure --in dec.store",
  };
  fixtures::TempDir root("partseg_cli");
  const std::vector<int> threads = {1, 8, 1, 8};
  std::vector<std::map<std::string, std::string>> runs;
  for (std::size_t r = 0; r < threads.size(); ++r) {
    const auto dir = root / ("run" + std::to_string(r));
    write_inputs(dir);
    fs::create_directories(dir / "log");
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const std::string cmd = "cd '" + dir.string() + "' && '" + exe + "' --threads " +
                              std::to_string(threads[r]) + " " + steps[s] + " > out_" + std::to_string(s) +
                              ".txt 2> log/err_" + std::to_string(s) + ".txt";
      if (std::system(cmd.c_str()) != 0) {
        return {false, "step failed at --threads " + std::to_string(threads[r]) + ": " + steps[s] + "\n    " +
                           slurp(dir / "log" / ("err_" + std::to_string(s) + ".txt"))};
      }
    }
    runs.push_back(snapshot(dir));
  }
  std::size_t mismatched = 0;
  std::string first;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    for (const auto& [name, bytes] : runs[0]) {
      auto it = runs[r].find(name);
      if (it == runs[r].end() || it->second != bytes) {
        ++mismatched;
        if (first.empty()) first = " first: " + name;
      }
    }
    if (runs[r].size() != runs[0].size()) ++mismatched;
  }
  return {mismatched == 0, std::to_string(steps.size()) + " invocations x " + std::to_string(threads.size()) +
                               " runs (threads 1/8), " + std::to_string(runs[0].size()) + " files, " +
                               std::to_string(mismatched) + " mismatches" + first + ", " +
                               fmt("%.1f", seconds_since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (a == "--only" && i + 1 < argc) only.insert(std::atoi(argv[++i]));
    else {
      std::fprintf(stderr, "usage: acceptance [--cli PATH] [--only N]...\n");
      return 2;
    }
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"border-core round trip", round_trip},
      {"touching-pair separation", touching_pairs},
      {"chunk seamlessness", chunk_seams},
      {"memory bound", memory_bound},
      {"metric oracle equivalence", metric_oracle},
      {"small-core filter", small_cores},
      {"threshwater behaviour", threshwater_behaviour},
      {"geodesic splitter", geodesic_split},
      {"cost model round trip", cost_model},
      {"cli determinism", [&] { return cli_determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
