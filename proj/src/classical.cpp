#include "partseg/classical.hpp"

#include <algorithm>
#include <limits>

#include "partseg/morph.hpp"

namespace partseg {

void ThreshWaterParams::validate() const {
  if (opening_radius < 1) throw RangeError("opening radius must be >= 1");
  if (seed_erosion_radius < 1) throw RangeError("seed erosion radius must be >= 1");
}

LabelVolume threshwater(const ScalarVolume& vol, const ThreshWaterParams& params) {
  params.validate();
  VolumeMeta m = vol.meta();
  m.dtype = DType::u32;
  Mask mask(vol.shape(), std::uint8_t{0});
  for (std::size_t i = 0; i < vol.size(); ++i) mask[i] = vol[i] >= params.threshold ? 1 : 0;
  mask = opening(mask, ball(params.opening_radius));
  const auto seeds = connected_components(erode(mask, ball(params.seed_erosion_radius)), 26);
  if (max_label(seeds) == 0) return LabelVolume(m, 0u);

  // Negated squared distance orders voxels exactly like the negated distance.
  auto priority = squared_edt(mask_where(mask, std::uint8_t{0}), false);
  for (auto& v : priority.values()) v = -v;
  auto out = seeded_watershed(priority, seeds, mask);
  out.meta() = m;
  return out;
}

LabelVolume split_particle(const LabelVolume& labels, const SplitRequest& request) {
  const auto target = request.target_label;
  if (target == 0) throw ArgumentError("split target label must be positive");
  if (request.markers.size() < 2) throw ArgumentError("split needs at least two markers");
  auto check_inside = [&](const Vec3i& p, const char* what) {
    if (!labels.contains(p)) throw ArgumentError(std::string(what) + " " + to_string(p) + " lies outside the volume");
    if (labels.at(p) != target) {
      throw ArgumentError(std::string(what) + " " + to_string(p) + " is not inside instance " +
                          std::to_string(target));
    }
  };
  for (const auto& p : request.markers) check_inside(p, "marker");
  for (const auto& p : request.border_voxels) check_inside(p, "border voxel");

  Mask instance = mask_where(labels, target);
  Mask border(labels.shape(), std::uint8_t{0});
  for (const auto& p : request.border_voxels) border.at(p) = 1;
  for (const auto& p : request.markers) {
    if (border.at(p)) throw ArgumentError("marker " + to_string(p) + " lies on the border");
  }
  Mask inner = instance;
  for (std::size_t i = 0; i < inner.size(); ++i) inner[i] = instance[i] && !border[i] ? 1 : 0;

  // Markers must fall in different face-connected pieces of the instance minus the border.
  const auto pieces = connected_components(inner, 6);
  for (std::size_t a = 0; a < request.markers.size(); ++a)
    for (std::size_t b = a + 1; b < request.markers.size(); ++b) {
      if (pieces.at(request.markers[a]) == pieces.at(request.markers[b])) {
        throw ValidationError("markers " + to_string(request.markers[a]) + " and " +
                              to_string(request.markers[b]) + " are connected without crossing the border");
      }
    }

  const auto first = max_label(labels) + 1;
  LabelVolume seeds(labels.shape(), 0u);
  for (std::size_t k = 0; k < request.markers.size(); ++k) {
    seeds.at(request.markers[k]) = first + static_cast<std::uint32_t>(k);
  }
  Volume<float> priority(labels.shape(), 0.0f);
  if (!request.border_voxels.empty()) {
    const auto to_border = geodesic_distance(instance, request.border_voxels);
    for (std::size_t i = 0; i < priority.size(); ++i) priority[i] = -to_border.distances[i];
  }
  WatershedOptions ws;
  ws.connectivity = 6;
  const auto basins = seeded_watershed(priority, seeds, inner, ws);

  LabelVolume out = labels;
  std::vector<std::size_t> leftover;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!instance[i]) continue;
    if (basins[i] != 0) {
      out[i] = basins[i];
    } else {
      leftover.push_back(i);
    }
  }
  if (!leftover.empty()) {
    std::vector<Volume<float>> from_marker;
    for (const auto& p : request.markers) {
      const Vec3i one[] = {p};
      from_marker.push_back(geodesic_distance(instance, one).distances);
    }
    for (auto i : leftover) {
      std::size_t best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      for (std::size_t k = 0; k < from_marker.size(); ++k) {
        if (from_marker[k][i] < best_d) {
          best_d = from_marker[k][i];
          best = k;
        }
      }
      out[i] = first + static_cast<std::uint32_t>(best);
    }
  }
  return out;
}

}  // namespace partseg
