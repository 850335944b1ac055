#include "partseg/metrics.hpp"

#include <algorithm>
#include <tuple>

#include "json.hpp"

namespace partseg {

namespace {

void check_shapes(const LabelVolume& pred, const LabelVolume& ref) {
  if (pred.shape() != ref.shape()) {
    throw ArgumentError("prediction shape " + to_string(pred.shape()) + " differs from reference shape " +
                        to_string(ref.shape()));
  }
}

double ratio_of_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const std::uint64_t den = 2 * tp + fp + fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

double pair_f1(const OverlapTable& t, std::uint32_t pred, std::uint32_t ref, std::uint64_t overlap) {
  return 2.0 * static_cast<double>(overlap) /
         static_cast<double>(t.pred_sizes.at(pred) + t.ref_sizes.at(ref));
}

// For every id on the `from` side, the id on the other side with the largest
// overlap (background included, ties to the smaller id); then groups of
// `from` ids sharing a non-background majority partner.
GroupRatio majority_groups(const OverlapTable& t, bool from_ref) {
  std::map<std::uint32_t, std::pair<std::uint64_t, std::uint32_t>> best;
  for (const auto& [key, count] : t.counts) {
    const auto from = from_ref ? key.second : key.first;
    const auto to = from_ref ? key.first : key.second;
    if (from == 0) continue;
    auto it = best.find(from);
    if (it == best.end()) {
      best.emplace(from, std::make_pair(count, to));
    } else if (count > it->second.first || (count == it->second.first && to < it->second.second)) {
      it->second = {count, to};
    }
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> by_partner;
  for (const auto& [from, choice] : best) {
    if (choice.second != 0) by_partner[choice.second].push_back(from);
  }
  GroupRatio out;
  std::uint64_t excess = 0;
  for (auto& [partner, members] : by_partner) {
    if (members.size() < 2) continue;
    excess += members.size() - 1;
    out.groups.push_back(std::move(members));
  }
  const auto particles = t.ref_sizes.size() - (t.ref_sizes.count(0) ? 1 : 0);
  out.ratio = particles == 0 ? 0.0 : static_cast<double>(excess) / static_cast<double>(particles);
  if (particles == 0) out.groups.clear();
  return out;
}

}  // namespace

double ConfusionMatrix::f1() const { return ratio_of_counts(tp, fp, fn); }

OverlapTable overlap_table(const LabelVolume& pred, const LabelVolume& ref) {
  check_shapes(pred, ref);
  OverlapTable t;
  // Run-length style accumulation keeps the map traffic low on large volumes.
  std::pair<std::uint32_t, std::uint32_t> run{0, 0};
  std::uint64_t run_len = 0;
  auto flush = [&] {
    if (run_len == 0) return;
    t.counts[run] += run_len;
    t.pred_sizes[run.first] += run_len;
    t.ref_sizes[run.second] += run_len;
  };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::pair<std::uint32_t, std::uint32_t> key{pred[i], ref[i]};
    if (key == run) {
      ++run_len;
      continue;
    }
    flush();
    run = key;
    run_len = 1;
  }
  flush();
  return t;
}

double f1_voxel(const LabelVolume& pred, const LabelVolume& ref) {
  check_shapes(pred, ref);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, r = ref[i] != 0;
    if (p && r) ++cm.tp;
    else if (p) ++cm.fp;
    else if (r) ++cm.fn;
    else ++cm.tn;
  }
  return cm.f1();
}

MatchSet match_instances(const OverlapTable& t) {
  struct Candidate {
    double f1;
    std::uint32_t ref;
    std::uint32_t pred;
  };
  std::vector<Candidate> cands;
  for (const auto& [key, count] : t.counts) {
    if (key.first == 0 || key.second == 0 || count == 0) continue;
    const double f = pair_f1(t, key.first, key.second, count);
    if (f >= kMinMatchF1) cands.push_back({f, key.second, key.first});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.f1, a.ref, a.pred) < std::tie(a.f1, b.ref, b.pred);
  });
  MatchSet m;
  std::map<std::uint32_t, bool> pred_used, ref_used;
  for (const auto& c : cands) {
    if (pred_used[c.pred] || ref_used[c.ref]) continue;
    pred_used[c.pred] = ref_used[c.ref] = true;
    m.pairs.push_back({c.pred, c.ref, c.f1});
  }
  for (const auto& [id, size] : t.pred_sizes) {
    if (id != 0 && !pred_used[id]) m.unmatched_pred.push_back(id);
  }
  for (const auto& [id, size] : t.ref_sizes) {
    if (id != 0 && !ref_used[id]) m.unmatched_ref.push_back(id);
  }
  return m;
}

MatchSet match_instances(const LabelVolume& pred, const LabelVolume& ref) {
  return match_instances(overlap_table(pred, ref));
}

double f1_match(const MatchSet& m) {
  return ratio_of_counts(m.pairs.size(), m.unmatched_pred.size(), m.unmatched_ref.size());
}

double f1_instance(const MatchSet& m) {
  const auto n = m.pairs.size() + m.unmatched_pred.size() + m.unmatched_ref.size();
  if (n == 0) return 1.0;
  double sum = 0.0;
  for (const auto& p : m.pairs) sum += p.f1;
  return sum / static_cast<double>(n);
}

double f1_instance(const LabelVolume& pred, const LabelVolume& ref, const MatchSet& m) {
  check_shapes(pred, ref);
  return f1_instance(m);
}

GroupRatio merger_ratio(const OverlapTable& t) { return majority_groups(t, true); }
GroupRatio splitter_ratio(const OverlapTable& t) { return majority_groups(t, false); }

GroupRatio merger_ratio(const LabelVolume& pred, const LabelVolume& ref) {
  return merger_ratio(overlap_table(pred, ref));
}
GroupRatio splitter_ratio(const LabelVolume& pred, const LabelVolume& ref) {
  return splitter_ratio(overlap_table(pred, ref));
}

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref) {
  const auto table = overlap_table(pred, ref);
  MetricsReport r;
  r.f1_voxel = f1_voxel(pred, ref);
  r.matches = match_instances(table);
  r.f1_match = f1_match(r.matches);
  r.f1_instance = f1_instance(r.matches);
  auto merged = merger_ratio(table);
  auto split = splitter_ratio(table);
  r.merger_ratio = merged.ratio;
  r.mergers = std::move(merged.groups);
  r.splitter_ratio = split.ratio;
  r.splitters = std::move(split.groups);
  r.particle_count = table.ref_sizes.size() - (table.ref_sizes.count(0) ? 1 : 0);
  r.predicted_count = table.pred_sizes.size() - (table.pred_sizes.count(0) ? 1 : 0);
  return r;
}

std::string to_json(const MetricsReport& r, int indent) {
  nlohmann::ordered_json j;
  j["f1_voxel"] = r.f1_voxel;
  j["f1_match"] = r.f1_match;
  j["f1_instance"] = r.f1_instance;
  j["merger_ratio"] = r.merger_ratio;
  j["splitter_ratio"] = r.splitter_ratio;
  j["mergers"] = r.mergers;
  j["splitters"] = r.splitters;
  j["particle_count"] = r.particle_count;
  j["predicted_count"] = r.predicted_count;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.matches.pairs) pairs.push_back({{"pred", p.pred}, {"ref", p.ref}, {"f1", p.f1}});
  j["matches"] = {{"pairs", pairs},
                  {"unmatched_pred", r.matches.unmatched_pred},
                  {"unmatched_ref", r.matches.unmatched_ref}};
  return j.dump(indent);
}

}  // namespace partseg
