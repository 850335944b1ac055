#include "partseg/infer.hpp"

#include <algorithm>
#include <cmath>

#include "partseg/parallel.hpp"

namespace fs = std::filesystem;

namespace partseg {

namespace {

std::vector<std::int64_t> patch_origins_1d(std::int64_t n, std::int64_t p, std::int64_t stride) {
  std::vector<std::int64_t> out{0};
  if (p >= n) return out;
  std::int64_t o = 0;
  while (o + p < n) {
    o = std::min(o + stride, n - p);
    out.push_back(o);
  }
  return out;
}

std::vector<std::int64_t> chunk_origins_1d(std::int64_t n, std::int64_t c, std::int64_t p) {
  std::vector<std::int64_t> out{0};
  if (c >= n) return out;
  if (c < 2 * p) {
    throw ArgumentError("chunk extent " + std::to_string(c) + " must be at least twice the patch extent " +
                        std::to_string(p));
  }
  std::int64_t o = 0;
  while (o + c < n) {
    o = std::min(o + c - p, n - c);
    out.push_back(o);
  }
  return out;
}

template <class Fn>
void for_each_origin(const std::array<std::vector<std::int64_t>, 3>& axes, Fn&& fn) {
  for (std::size_t k = 0; k < axes[2].size(); ++k)
    for (std::size_t j = 0; j < axes[1].size(); ++j)
      for (std::size_t i = 0; i < axes[0].size(); ++i) fn(i, j, k);
}

}  // namespace

PatchPlan plan_patches(const Vec3i& region_shape, const Vec3i& patch_shape, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ArgumentError("patch overlap must lie in [0, 1)");
  }
  PatchPlan plan;
  plan.patch_shape = patch_shape;
  std::array<std::vector<std::int64_t>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    if (patch_shape[a] < 1) throw ArgumentError("patch shape entries must be >= 1, got " + to_string(patch_shape));
    if (region_shape[a] < 1) throw ArgumentError("region shape entries must be >= 1");
    plan.stride[a] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::floor(static_cast<double>(patch_shape[a]) * (1.0 - overlap_fraction))));
    axes[a] = patch_origins_1d(region_shape[a], patch_shape[a], plan.stride[a]);
  }
  for_each_origin(axes, [&](std::size_t i, std::size_t j, std::size_t k) {
    plan.positions.push_back({axes[0][i], axes[1][j], axes[2][k]});
  });
  return plan;
}

ChunkPlan plan_chunks(const Vec3i& volume_shape, const Vec3i& chunk_shape, const Vec3i& patch_shape) {
  ChunkPlan plan;
  plan.chunk_shape = chunk_shape;
  plan.overlap = patch_shape;
  std::array<std::vector<std::int64_t>, 3> axes;
  std::array<std::vector<std::pair<std::int64_t, std::int64_t>>, 3> owned;
  for (int a = 0; a < 3; ++a) {
    if (chunk_shape[a] < 1 || patch_shape[a] < 1) throw ArgumentError("chunk and patch shapes must be >= 1");
    if (volume_shape[a] < 1) throw ArgumentError("volume shape entries must be >= 1");
    axes[a] = chunk_origins_1d(volume_shape[a], chunk_shape[a], patch_shape[a]);
    const auto& o = axes[a];
    for (std::size_t k = 0; k < o.size(); ++k) {
      const std::int64_t lo = k == 0 ? 0 : o[k] + patch_shape[a] / 2;
      const std::int64_t hi = k + 1 == o.size() ? volume_shape[a] : o[k + 1] + patch_shape[a] / 2;
      owned[a].emplace_back(lo, hi);
    }
  }
  for_each_origin(axes, [&](std::size_t i, std::size_t j, std::size_t k) {
    plan.chunk_origins.push_back({axes[0][i], axes[1][j], axes[2][k]});
    plan.interiors.push_back({{owned[0][i].first, owned[1][j].first, owned[2][k].first},
                              {owned[0][i].second, owned[1][j].second, owned[2][k].second}});
  });
  return plan;
}

ProbabilityPatch one_hot(const SemanticVolume& classes) {
  ProbabilityPatch out;
  out.shape = classes.shape();
  const std::size_t n = classes.size();
  out.probs.assign(kNumClasses * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    out.probs[static_cast<std::size_t>(classes[i]) * n + i] = 1.0f;
  }
  return out;
}

OraclePredictor::OraclePredictor(const LabelVolume& reference, const BorderCoreConfig& cfg,
                                 const Vec3i& patch_shape)
    : patch_shape_(patch_shape), encoded_(encode(reference, cfg)) {}

OraclePredictor::OraclePredictor(BlockStore encoded, const Vec3i& patch_shape)
    : patch_shape_(patch_shape), store_(std::move(encoded)) {
  if (store_->kind() != VolumeKind::semantic) throw ArgumentError("oracle store must hold semantic classes");
}

SemanticVolume OraclePredictor::classes_at(const Vec3i& lo, const Vec3i& hi) const {
  const Vec3i n = encoded_ ? encoded_->shape() : store_->shape();
  Vec3i clo{}, chi{};
  for (int a = 0; a < 3; ++a) {
    clo[a] = std::clamp<std::int64_t>(lo[a], 0, n[a]);
    chi[a] = std::clamp<std::int64_t>(hi[a], 0, n[a]);
  }
  SemanticVolume out(hi - lo, SemanticClass::background);
  if (clo[0] >= chi[0] || clo[1] >= chi[1] || clo[2] >= chi[2]) return out;
  const auto part = encoded_ ? crop(*encoded_, clo, chi) : store_->read_region<SemanticClass>(clo, chi);
  paste(out, part, clo - lo);
  return out;
}

ProbabilityPatch OraclePredictor::predict(const ScalarVolume& patch, const Vec3i& origin) const {
  return one_hot(classes_at(origin, origin + patch.shape()));
}

ThreshWaterPredictor::ThreshWaterPredictor(ThreshWaterParams params, BorderCoreConfig cfg,
                                           const Vec3i& patch_shape)
    : params_(params), cfg_(cfg), patch_shape_(patch_shape) {
  params_.validate();
  cfg_.validate();
}

ProbabilityPatch ThreshWaterPredictor::predict(const ScalarVolume& patch, const Vec3i&) const {
  return one_hot(encode(threshwater(patch, params_), cfg_));
}

SemanticVolume infer_chunk(const ScalarVolume& chunk, const PatchPredictor& predictor,
                           const PatchPlan& plan, const Vec3i& chunk_origin) {
  const Vec3i p = plan.patch_shape;
  if (p != predictor.patch_shape()) {
    throw ArgumentError("patch plan shape " + to_string(p) + " differs from the predictor's " +
                        to_string(predictor.patch_shape()));
  }
  const std::size_t n = chunk.size();
  const std::size_t pn = static_cast<std::size_t>(product(p));
  std::vector<float> sum(kNumClasses * n, 0.0f);
  std::vector<std::uint32_t> hits(n, 0);

  for (const auto& pos : plan.positions) {
    // Patches reaching past a small chunk are zero padded.
    ScalarVolume patch(p, 0.0f);
    patch.meta().spacing_mm = chunk.meta().spacing_mm;
    const Vec3i hi{std::min(pos[0] + p[0], chunk.nx()), std::min(pos[1] + p[1], chunk.ny()),
                   std::min(pos[2] + p[2], chunk.nz())};
    paste(patch, crop(chunk, pos, hi), {0, 0, 0});
    const auto probs = predictor.predict(patch, chunk_origin + pos);
    if (probs.shape != p || probs.probs.size() != kNumClasses * pn) {
      throw ContractViolation("predictor returned " + std::to_string(probs.probs.size()) +
                              " probabilities for a patch of " + to_string(p));
    }
    for (std::size_t i = 0; i < pn; ++i) {
      const float a = probs.probs[i], b = probs.probs[pn + i], c = probs.probs[2 * pn + i];
      if (!(a >= 0.0f && b >= 0.0f && c >= 0.0f) || std::abs(a + b + c - 1.0f) > 1e-5f) {
        throw ContractViolation("predictor probabilities at patch voxel " + std::to_string(i) +
                                " are negative or do not sum to 1");
      }
    }
    for (std::int64_t z = pos[2]; z < hi[2]; ++z)
      for (std::int64_t y = pos[1]; y < hi[1]; ++y)
        for (std::int64_t x = pos[0]; x < hi[0]; ++x) {
          const auto i = chunk.index(x, y, z);
          const auto j = static_cast<std::size_t>((x - pos[0]) + p[0] * ((y - pos[1]) + p[1] * (z - pos[2])));
          for (int c = 0; c < kNumClasses; ++c) sum[c * n + i] += probs.probs[c * pn + j];
          ++hits[i];
        }
  }

  VolumeMeta m = chunk.meta();
  m.dtype = DType::u8;
  SemanticVolume out(m, SemanticClass::background);
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i] == 0) throw ContractViolation("patch plan leaves voxels uncovered");
    const float inv = 1.0f / static_cast<float>(hits[i]);
    int best = 0;
    float best_p = sum[i] * inv;
    for (int c = 1; c < kNumClasses; ++c) {
      const float q = sum[c * n + i] * inv;
      if (q >= best_p) {
        best = c;
        best_p = q;
      }
    }
    out[i] = static_cast<SemanticClass>(best);
  }
  return out;
}

VoxelSource memory_source(const ScalarVolume& vol) {
  return [&vol](const Vec3i& lo, const Vec3i& hi) { return crop(vol, lo, hi); };
}

VoxelSource store_source(const BlockStore& store) {
  if (store.kind() != VolumeKind::scalar) throw ArgumentError("inference input must be a scalar store");
  return [store](const Vec3i& lo, const Vec3i& hi) { return store.read_region<float>(lo, hi); };
}

BlockStore predict_semantic(const VoxelSource& source, const VolumeMeta& source_meta,
                            const PatchPredictor& predictor, const SizeNormSpec& size,
                            const GlobalStats& stats, const fs::path& out_root,
                            const InferenceOptions& options) {
  source_meta.validate();
  size.validate();
  stats.validate();
  const Vec3i src_shape = source_meta.shape;
  const Vec3i dst_shape = normalized_shape(src_shape, size.scale());
  const Vec3i patch = predictor.patch_shape();
  const auto chunks = plan_chunks(dst_shape, options.chunk_shape, patch);

  VolumeMeta m = source_meta;
  m.shape = dst_shape;
  m.dtype = DType::u8;
  for (int a = 0; a < 3; ++a) {
    m.spacing_mm[a] = source_meta.spacing_mm[a] * static_cast<double>(src_shape[a]) / static_cast<double>(dst_shape[a]);
  }
  Vec3i cell{};
  for (int a = 0; a < 3; ++a) cell[a] = std::min(options.chunk_shape[a], dst_shape[a]);
  auto out = BlockStore::create(out_root, m, VolumeKind::semantic, cell);

  parallel_for(chunks.chunk_origins.size(), options.threads, [&](std::size_t k) {
    const Vec3i lo = chunks.chunk_origins[k];
    const Vec3i hi{std::min(lo[0] + options.chunk_shape[0], dst_shape[0]),
                   std::min(lo[1] + options.chunk_shape[1], dst_shape[1]),
                   std::min(lo[2] + options.chunk_shape[2], dst_shape[2])};
    Vec3i src_lo{}, src_hi{};
    resample::linear_source_window(src_shape, dst_shape, lo, hi, src_lo, src_hi);
    ScalarVolume window = source(src_lo, src_hi);
    window.meta().spacing_mm = source_meta.spacing_mm;
    window = zscore_normalize(window, stats);
    const auto normalized = resample::trilinear_region(window, src_lo, src_shape, dst_shape, lo, hi);
    const auto plan = plan_patches(hi - lo, patch, options.overlap_fraction);
    const auto classes = infer_chunk(normalized, predictor, plan, lo);
    const auto& [own_lo, own_hi] = chunks.interiors[k];
    out.write_region(own_lo, crop(classes, own_lo - lo, own_hi - lo));
  });
  out.write_sidecar();
  return out;
}

BlockStore run_inference(const VoxelSource& source, const VolumeMeta& source_meta,
                         const PatchPredictor& predictor, const BorderCoreConfig& cfg,
                         const SizeNormSpec& size, const GlobalStats& stats, const fs::path& out_root,
                         const InferenceOptions& options) {
  cfg.validate();
  if (options.scratch.empty()) throw ArgumentError("inference needs a scratch directory");
  std::error_code ec;
  fs::create_directories(options.scratch, ec);
  if (ec) throw IoError("cannot create scratch directory '" + options.scratch.string() + "': " + ec.message());

  const auto semantic = predict_semantic(source, source_meta, predictor, size, stats,
                                         options.scratch / "semantic.store", options);
  StreamingOptions streaming;
  streaming.scratch = options.scratch / "decode";
  streaming.threads = options.threads;
  const auto normalized = decode_streaming(semantic, options.scratch / "instances.store", cfg, streaming);

  const Vec3i src_shape = normalized.shape();
  const Vec3i dst_shape = source_meta.shape;
  VolumeMeta m = source_meta;
  m.dtype = DType::u32;
  Vec3i cell{};
  for (int a = 0; a < 3; ++a) cell[a] = std::min(options.chunk_shape[a], dst_shape[a]);
  auto out = BlockStore::create(out_root, m, VolumeKind::label, cell);
  const auto cells = out.cells();
  parallel_for(cells.size(), options.threads, [&](std::size_t k) {
    const Vec3i lo = out.cell_lo(cells[k]);
    const Vec3i hi = out.cell_hi(cells[k]);
    Vec3i src_lo{}, src_hi{};
    resample::nearest_source_window(src_shape, dst_shape, lo, hi, src_lo, src_hi);
    const auto window = normalized.read_region<std::uint32_t>(src_lo, src_hi);
    auto labels = resample::nearest_region(window, src_lo, src_shape, dst_shape, lo, hi);
    labels.meta() = m;
    labels.meta().shape = hi - lo;
    out.write_cell(cells[k], labels);
  });
  out.write_sidecar();

  if (!options.keep_scratch) {
    fs::remove_all(options.scratch / "semantic.store", ec);
    fs::remove_all(options.scratch / "instances.store", ec);
    fs::remove_all(options.scratch / "decode", ec);
  }
  return out;
}

LabelVolume run_inference(const ScalarVolume& vol, const PatchPredictor& predictor,
                          const BorderCoreConfig& cfg, const SizeNormSpec& size,
                          const GlobalStats& stats, const InferenceOptions& options) {
  if (options.scratch.empty()) throw ArgumentError("inference needs a scratch directory");
  const auto out = run_inference(memory_source(vol), vol.meta(), predictor, cfg, size, stats,
                                 options.scratch / "labels.store", options);
  auto labels = out.read_all<std::uint32_t>();
  if (!options.keep_scratch) {
    std::error_code ec;
    fs::remove_all(options.scratch / "labels.store", ec);
  }
  return labels;
}

}  // namespace partseg
