#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  /// 2TP / (2TP + FP + FN); 1.0 when there are no positives at all.
  double f1() const;
};

struct MatchPair {
  std::uint32_t pred = 0;
  std::uint32_t ref = 0;
  double f1 = 0.0;
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  std::vector<std::uint32_t> unmatched_pred;
  std::vector<std::uint32_t> unmatched_ref;
};

/// Voxel counts of every (pred, ref) combination, background (0) included.
struct OverlapTable {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  std::map<std::uint32_t, std::uint64_t> pred_sizes;
  std::map<std::uint32_t, std::uint64_t> ref_sizes;
};

OverlapTable overlap_table(const LabelVolume& pred, const LabelVolume& ref);

inline constexpr double kMinMatchF1 = 0.1;

double f1_voxel(const LabelVolume& pred, const LabelVolume& ref);

/// Greedy one-to-one matching by descending pair F1 (ties by ascending ref,
/// then pred id) among pairs with F1 >= 0.1.
MatchSet match_instances(const LabelVolume& pred, const LabelVolume& ref);
MatchSet match_instances(const OverlapTable& table);

double f1_match(const MatchSet& m);

/// Mean over matched pairs of their voxel F1, with every unmatched instance
/// on either side contributing 0.
double f1_instance(const LabelVolume& pred, const LabelVolume& ref, const MatchSet& m);
double f1_instance(const MatchSet& m);

struct GroupRatio {
  double ratio = 0.0;
  std::vector<std::vector<std::uint32_t>> groups;
};

/// Each reference instance is assigned to the predicted id (background
/// included) it overlaps most, ties to the smaller id. Predictions that
/// collect two or more references form the merger groups.
GroupRatio merger_ratio(const LabelVolume& pred, const LabelVolume& ref);
GroupRatio merger_ratio(const OverlapTable& table);
/// Mirror image of merger_ratio: predictions grouped by their majority reference.
GroupRatio splitter_ratio(const LabelVolume& pred, const LabelVolume& ref);
GroupRatio splitter_ratio(const OverlapTable& table);

struct MetricsReport {
  double f1_voxel = 0.0;
  double f1_match = 0.0;
  double f1_instance = 0.0;
  double merger_ratio = 0.0;
  double splitter_ratio = 0.0;
  std::vector<std::vector<std::uint32_t>> mergers;
  std::vector<std::vector<std::uint32_t>> splitters;
  std::uint64_t particle_count = 0;
  std::uint64_t predicted_count = 0;
  MatchSet matches;
};

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref);

std::string to_json(const MetricsReport& report, int indent = 2);

}  // namespace partseg
