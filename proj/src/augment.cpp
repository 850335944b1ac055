#include "partseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "json.hpp"
#include "partseg/blockstore.hpp"
#include "partseg/morph.hpp"

namespace fs = std::filesystem;

namespace partseg {

namespace {

struct Box {
  Vec3i lo;
  Vec3i hi;
};

std::map<std::uint32_t, Box> instance_boxes(const LabelVolume& labels) {
  std::map<std::uint32_t, Box> boxes;
  for (std::int64_t z = 0; z < labels.nz(); ++z)
    for (std::int64_t y = 0; y < labels.ny(); ++y)
      for (std::int64_t x = 0; x < labels.nx(); ++x) {
        const auto id = labels(x, y, z);
        if (id == 0) continue;
        auto [it, fresh] = boxes.try_emplace(id, Box{{x, y, z}, {x + 1, y + 1, z + 1}});
        if (fresh) continue;
        auto& b = it->second;
        b.lo = {std::min(b.lo[0], x), std::min(b.lo[1], y), std::min(b.lo[2], z)};
        b.hi = {std::max(b.hi[0], x + 1), std::max(b.hi[1], y + 1), std::max(b.hi[2], z + 1)};
      }
  return boxes;
}

Vec3d centroid_of(const std::vector<Vec3i>& voxels) {
  Vec3d c{0, 0, 0};
  for (const auto& v : voxels)
    for (int a = 0; a < 3; ++a) c[a] += static_cast<double>(v[a]);
  for (auto& x : c) x /= static_cast<double>(voxels.size());
  return c;
}

double half_diagonal(const Vec3i& extent) {
  return 0.5 * std::sqrt(static_cast<double>(extent[0] * extent[0] + extent[1] * extent[1] + extent[2] * extent[2]));
}

}  // namespace

ParticleBank build_bank(std::span<const ScalarVolume> vols, std::span<const LabelVolume> labels) {
  if (vols.size() != labels.size()) {
    throw ArgumentError("build_bank needs as many label volumes as intensity volumes");
  }
  ParticleBank bank;
  for (std::size_t k = 0; k < vols.size(); ++k) {
    if (vols[k].shape() != labels[k].shape()) {
      throw ArgumentError("volume " + std::to_string(k) + " has shape " + to_string(vols[k].shape()) +
                          " but its labels have " + to_string(labels[k].shape()));
    }
    for (const auto& [id, box] : instance_boxes(labels[k])) {
      BankEntry e;
      e.intensity = crop(vols[k], box.lo, box.hi);
      e.mask = mask_where(crop(labels[k], box.lo, box.hi), id);
      e.source = k;
      e.label = id;
      bank.entries.push_back(std::move(e));
    }
  }
  return bank;
}

AugmentResult touching_augment(const ScalarVolume& vol, const LabelVolume& labels, const ParticleBank& bank,
                               double probability, std::uint64_t seed, int retries) {
  if (vol.shape() != labels.shape()) throw ArgumentError("patch volume and labels differ in shape");
  if (!(probability >= 0.0 && probability <= 1.0)) throw RangeError("augmentation probability must lie in [0, 1]");
  AugmentResult result{vol, labels, false};
  std::mt19937_64 rng(seed);
  if (!(std::uniform_real_distribution<double>(0.0, 1.0)(rng) < probability)) return result;
  const auto ids = unique_labels(labels);
  if (ids.empty() || bank.entries.empty()) return result;

  const auto target = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
  const auto& donor = bank.entries[std::uniform_int_distribution<std::size_t>(0, bank.entries.size() - 1)(rng)];

  std::vector<Vec3i> target_voxels, donor_voxels;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == target) target_voxels.push_back(labels.coord(i));
  }
  for (std::size_t i = 0; i < donor.mask.size(); ++i) {
    if (donor.mask[i]) donor_voxels.push_back(donor.mask.coord(i));
  }
  if (donor_voxels.empty()) return result;
  const Vec3d anchor = centroid_of(target_voxels);
  const Vec3d donor_centre = centroid_of(donor_voxels);
  const auto boxes = instance_boxes(labels);
  const auto& tb = boxes.at(target);
  const double start = half_diagonal(tb.hi - tb.lo) + half_diagonal(donor.mask.shape()) + 2.0;

  const auto n6 = neighborhood(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < retries; ++attempt) {
    Vec3d dir{gauss(rng), gauss(rng), gauss(rng)};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    if (len < 1e-9) continue;
    for (auto& d : dir) d /= len;
    for (double t = start; t > 0.0; t -= 0.5) {
      Vec3i shift{};
      for (int a = 0; a < 3; ++a) {
        shift[a] = static_cast<std::int64_t>(std::lround(anchor[a] + t * dir[a] - donor_centre[a]));
      }
      bool outside = false, overlap = false, touches = false;
      for (const auto& v : donor_voxels) {
        const Vec3i q = v + shift;
        if (!labels.contains(q)) {
          outside = true;
          break;
        }
        if (labels.at(q) != 0) {
          overlap = true;
          break;
        }
        for (const auto& o : n6) {
          const Vec3i r = q + o;
          if (labels.contains(r) && labels.at(r) == target) touches = true;
        }
      }
      if (overlap) break;
      if (outside || !touches) continue;
      const auto fresh = max_label(labels) + 1;
      for (const auto& v : donor_voxels) {
        const Vec3i q = v + shift;
        result.volume.at(q) = donor.intensity.at(v);
        result.labels.at(q) = fresh;
      }
      result.placed = true;
      return result;
    }
  }
  return result;
}

fs::path export_training_pairs(std::span<const ScalarVolume> vols, std::span<const LabelVolume> labels,
                               const BorderCoreConfig& cfg, const SizeNormSpec& size, const GlobalStats& stats,
                               const fs::path& out_dir, const Vec3i& chunk_shape) {
  if (vols.size() != labels.size()) throw ArgumentError("export needs as many label volumes as intensity volumes");
  cfg.validate();
  size.validate();
  stats.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["border_thickness_vox"] = cfg.border_thickness_vox;
  manifest["reference_particle_size_vox"] = size.reference_particle_size_vox;
  manifest["target_particle_size_vox"] = size.target_particle_size_vox;
  manifest["mu"] = stats.mu;
  manifest["sigma"] = stats.sigma;
  manifest["classes"] = {"background", "core", "border"};
  auto pairs = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < vols.size(); ++k) {
    if (vols[k].shape() != labels[k].shape()) {
      throw ArgumentError("pair " + std::to_string(k) + " has mismatched volume and label shapes");
    }
    const auto image = size_normalize(zscore_normalize(vols[k], stats), size);
    auto target = encode(size_normalize_labels(labels[k], size), cfg);
    char name[32];
    std::snprintf(name, sizeof name, "pair_%04zu", k);
    const fs::path image_rel = fs::path(name) / "image.store";
    const fs::path target_rel = fs::path(name) / "target.store";
    Vec3i chunk{};
    for (int a = 0; a < 3; ++a) chunk[a] = std::min(chunk_shape[a], image.shape()[a]);
    write_blockstore(image, out_dir / image_rel, chunk);
    write_blockstore(target, out_dir / target_rel, chunk);
    pairs.push_back({{"image", image_rel.generic_string()}, {"target", target_rel.generic_string()},
                     {"shape", image.shape()}});
  }
  manifest["pairs"] = pairs;
  const fs::path path = out_dir / "manifest.json";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << manifest.dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path.string() + "'");
  return path;
}

std::vector<TrainingPair> read_manifest(const fs::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw IoError("cannot open manifest '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
    std::vector<TrainingPair> out;
    for (const auto& p : j.at("pairs")) {
      out.push_back({manifest.parent_path() / p.at("image").get<std::string>(),
                     manifest.parent_path() / p.at("target").get<std::string>()});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest '" + manifest.string() + "': " + e.what());
  }
}

}  // namespace partseg
