#include <map>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "partseg/bordercore.hpp"
#include "partseg/metrics.hpp"
#include "partseg/morph.hpp"
#include "partseg/synth.hpp"

using namespace partseg;

namespace {

BorderCoreConfig thickness(int t) {
  BorderCoreConfig cfg;
  cfg.border_thickness_vox = t;
  return cfg;
}

std::size_t count_class(const SemanticVolume& s, SemanticClass c) {
  return static_cast<std::size_t>(std::count(s.values().begin(), s.values().end(), c));
}

/// True when `a` and `b` are the same partition up to a relabelling.
bool same_partition(const LabelVolume& a, const LabelVolume& b) {
  if (a.shape() != b.shape()) return false;
  std::map<std::uint32_t, std::uint32_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == 0) != (b[i] == 0)) return false;
    if (a[i] == 0) continue;
    auto [i1, f1] = ab.try_emplace(a[i], b[i]);
    auto [i2, f2] = ba.try_emplace(b[i], a[i]);
    if (i1->second != b[i] || i2->second != a[i]) return false;
  }
  return true;
}

bool cores_separated(const SemanticVolume& s, const LabelVolume& labels) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != SemanticClass::core) continue;
    for (const auto& o : neighborhood(26)) {
      const Vec3i q = s.coord(i) + o;
      if (s.contains(q) && s.at(q) == SemanticClass::core && labels.at(q) != labels[i]) return false;
    }
  }
  return true;
}

SemanticVolume core_block(const Vec3i& shape, const Vec3i& lo, const Vec3i& hi) {
  SemanticVolume s(shape, SemanticClass::background);
  for (std::int64_t z = 0; z < shape[2]; ++z)
    for (std::int64_t y = 0; y < shape[1]; ++y)
      for (std::int64_t x = 0; x < shape[0]; ++x) {
        const bool in = x >= lo[0] && y >= lo[1] && z >= lo[2] && x < hi[0] && y < hi[1] && z < hi[2];
        const bool near = x >= lo[0] - 1 && y >= lo[1] - 1 && z >= lo[2] - 1 && x <= hi[0] && y <= hi[1] && z <= hi[2];
        if (in) s(x, y, z) = SemanticClass::core;
        else if (near) s(x, y, z) = SemanticClass::border;
      }
  return s;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  BorderCoreConfig cfg;
  CHECK(cfg.border_thickness_vox == 3);
  CHECK(cfg.filter_min_distance == 1.0);
  CHECK(cfg.filter_threshold == 0.95);
  cfg.border_thickness_vox = 0;
  CHECK_THROWS_AS(cfg.validate(), RangeError);
  cfg = {};
  cfg.filter_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), RangeError);
}

TEST_CASE("encode of an empty volume is all background") {
  const auto s = encode(LabelVolume(Vec3i{6, 6, 6}, 0u), BorderCoreConfig{});
  CHECK(count_class(s, SemanticClass::background) == s.size());
}

TEST_CASE("9^3 cube with thickness 2 has a 5^3 core") {
  LabelVolume l(Vec3i{13, 13, 13}, 0u);
  fixtures::paint_box(l, {2, 2, 2}, {11, 11, 11}, 4);
  const auto s = encode(l, thickness(2));
  CHECK(count_class(s, SemanticClass::core) == 125);
  CHECK(count_class(s, SemanticClass::border) == 729 - 125);
  CHECK(s(4, 4, 4) == SemanticClass::core);
  CHECK(s(8, 8, 8) == SemanticClass::core);
  CHECK(s(3, 6, 6) == SemanticClass::border);
  CHECK(s(1, 6, 6) == SemanticClass::background);
}

TEST_CASE("instances thinner than twice the thickness have no core") {
  LabelVolume l(Vec3i{12, 12, 9}, 0u);
  fixtures::paint_box(l, {1, 1, 3}, {11, 11, 6}, 1);
  const auto s = encode(l, thickness(2));
  CHECK(count_class(s, SemanticClass::core) == 0);
  CHECK(count_class(s, SemanticClass::border) == 300);
}

TEST_CASE("encode keeps cores of touching instances apart") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = fixtures::random_labels({14, 12, 10}, 6, rng);
    for (int t : {1, 2}) {
      const auto s = encode(l, thickness(t));
      CHECK(cores_separated(s, l));
      for (std::size_t i = 0; i < l.size(); ++i) CHECK((l[i] == 0) == (s[i] == SemanticClass::background));
    }
  }
}

TEST_CASE("small-core filter on the rule's reference shapes") {
  BorderCoreConfig cfg;
  SUBCASE("single voxel core is removed") {
    const auto s = core_block({5, 5, 5}, {2, 2, 2}, {3, 3, 3});
    const auto f = small_core_filter(s, cfg);
    CHECK(count_class(f, SemanticClass::core) == 0);
    CHECK(count_class(f, SemanticClass::border) == 27);
  }
  SUBCASE("two voxel thick plate is removed") {
    const auto s = core_block({14, 14, 6}, {2, 2, 2}, {12, 12, 4});
    CHECK(count_class(small_core_filter(s, cfg), SemanticClass::core) == 0);
  }
  SUBCASE("7^3 cube is retained") {
    const auto s = core_block({11, 11, 11}, {2, 2, 2}, {9, 9, 9});
    const auto f = small_core_filter(s, cfg);
    CHECK(f == s);
  }
  SUBCASE("no cores leaves the volume unchanged") {
    SemanticVolume s(Vec3i{4, 4, 4}, SemanticClass::border);
    CHECK(small_core_filter(s, cfg) == s);
  }
}

TEST_CASE("small-core filter is idempotent") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    SemanticVolume s(Vec3i{12, 12, 12}, SemanticClass::background);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& v : s.values()) v = static_cast<SemanticClass>(cls(rng) == 0 ? 1 : 2);
    const auto once = small_core_filter(s, BorderCoreConfig{});
    CHECK(small_core_filter(once, BorderCoreConfig{}) == once);
  }
}

TEST_CASE("decode of background is empty") {
  const auto l = decode(SemanticVolume(Vec3i{5, 5, 5}, SemanticClass::background), BorderCoreConfig{});
  CHECK(max_label(l) == 0);
}

TEST_CASE("decode drops border that no core reaches") {
  SemanticVolume s(Vec3i{9, 5, 5}, SemanticClass::background);
  for (std::int64_t x = 0; x < 3; ++x) s(x, 2, 2) = SemanticClass::border;
  const auto l = decode(s, BorderCoreConfig{});
  CHECK(max_label(l) == 0);
}

TEST_CASE("decode inverts encode on separated spheres") {
  LabelVolume l(Vec3i{40, 40, 40}, 0u);
  fixtures::paint_sphere(l, 10, 10, 10, 6.0, 3);
  fixtures::paint_sphere(l, 27, 12, 20, 7.5, 9);
  fixtures::paint_sphere(l, 15, 28, 28, 5.0, 5);
  const auto back = decode(encode(l, BorderCoreConfig{}), BorderCoreConfig{});
  CHECK(same_partition(back, l));
}

TEST_CASE("touching spheres decode to two instances split near the contact") {
  LabelVolume l(Vec3i{40, 26, 26}, 0u);
  fixtures::paint_sphere(l, 12, 13, 13, 8.0, 1);
  LabelVolume b(l.shape(), 0u);
  fixtures::paint_sphere(b, 28, 13, 13, 8.0, 2);
  for (std::size_t i = 0; i < l.size(); ++i)
    if (b[i] && !l[i]) l[i] = 2;
  const auto back = decode(encode(l, BorderCoreConfig{}), BorderCoreConfig{});
  CHECK(unique_labels(back).size() == 2);
  const auto m = match_instances(back, l);
  REQUIRE(m.pairs.size() == 2);
  std::map<std::uint32_t, std::uint32_t> to_ref;
  for (const auto& p : m.pairs) to_ref[p.pred] = p.ref;
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (!l[i]) continue;
    const auto got = to_ref[back[i]];
    if (got == l[i]) continue;
    // A misassigned voxel must touch the instance it was given.
    bool touches = false;
    for (const auto& o : neighborhood(26)) {
      const Vec3i q = l.coord(i) + o;
      if (l.contains(q) && l.at(q) == got) touches = true;
    }
    CHECK(touches);
  }
}

TEST_CASE("decode never creates foreground") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    SemanticVolume s(Vec3i{10, 10, 10}, SemanticClass::background);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& v : s.values()) v = static_cast<SemanticClass>(cls(rng));
    const auto l = decode(s, BorderCoreConfig{});
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] == SemanticClass::background) CHECK(l[i] == 0);
  }
}

TEST_CASE("streaming decode equals in-memory decode") {
  fixtures::TempDir dir;
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    PhantomSpec spec;
    spec.shape = {48, 44, 40};
    spec.particle_count = 8;
    spec.radius_min_vox = 3.0;
    spec.radius_max_vox = 8.0;
    spec.shape_kinds = {ShapeKind::sphere, ShapeKind::ellipsoid, ShapeKind::superellipsoid};
    spec.touching_pair_fraction = 0.5;
    spec.rng_seed = seed;
    const auto ph = generate(spec);
    BorderCoreConfig cfg;
    cfg.border_thickness_vox = 1 + static_cast<int>(seed % 3);
    const auto sem = encode(ph.labels, cfg);
    const auto expect = decode(sem, cfg);
    for (const Vec3i chunk : {Vec3i{16, 16, 16}, Vec3i{24, 24, 24}, spec.shape}) {
      const auto store = write_blockstore(sem, dir / "sem.store", chunk);
      const auto out = decode_streaming(store, dir / "lab.store", cfg);
      const auto got = out.read_all<std::uint32_t>();
      CHECK(got == expect);
      ++compared;
    }
  }
  CHECK(compared == 150);
}

TEST_CASE("a core spanning several blocks gets one label") {
  fixtures::TempDir dir;
  const auto s = core_block({30, 12, 12}, {2, 3, 3}, {28, 9, 9});
  const auto store = write_blockstore(s, dir / "sem.store", {8, 8, 8});
  const auto out = decode_streaming(store, dir / "lab.store", BorderCoreConfig{}).read_all<std::uint32_t>();
  CHECK(unique_labels(out) == std::vector<std::uint32_t>{1});
  CHECK(out(0, 0, 0) == 0);
  CHECK(out(1, 2, 2) == 1);
}

TEST_CASE("streaming decode of an empty store") {
  fixtures::TempDir dir;
  const auto store = write_blockstore(SemanticVolume(Vec3i{20, 20, 20}, SemanticClass::background),
                                      dir / "sem.store", {8, 8, 8});
  const auto out = decode_streaming(store, dir / "lab.store", BorderCoreConfig{});
  CHECK(out.kind() == VolumeKind::label);
  CHECK(max_label(out.read_all<std::uint32_t>()) == 0);
  CHECK_FALSE(std::filesystem::exists(dir / "lab.store.scratch"));
}

TEST_CASE("streaming decode rejects non-semantic stores") {
  fixtures::TempDir dir;
  const auto store = write_blockstore(LabelVolume(Vec3i{4, 4, 4}, 0u), dir / "l.store", {4, 4, 4});
  CHECK_THROWS_AS(decode_streaming(store, dir / "o.store", BorderCoreConfig{}), ArgumentError);
}
