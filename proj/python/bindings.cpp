// Python bindings. Arrays cross the boundary as C-ordered (z, y, x) numpy
// arrays, which is the library's x-fastest layout.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "partseg/blockstore.hpp"
#include "partseg/bordercore.hpp"
#include "partseg/classical.hpp"
#include "partseg/infer.hpp"
#include "partseg/metrics.hpp"
#include "partseg/preprocess.hpp"
#include "partseg/synth.hpp"

namespace py = pybind11;
using namespace partseg;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class Py, class T = Py>
Volume<T> to_volume(const Array<Py>& a) {
  if (a.ndim() != 3) throw ArgumentError("expected a 3D array, got " + std::to_string(a.ndim()) + " dimensions");
  const Vec3i shape{a.shape(2), a.shape(1), a.shape(0)};
  Volume<T> v(shape);
  const Py* src = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(src[i]);
  return v;
}

template <class T, class Py = T>
Array<Py> to_array(const Volume<T>& v) {
  Array<Py> a({v.nz(), v.ny(), v.nx()});
  Py* dst = a.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i) dst[i] = static_cast<Py>(v[i]);
  return a;
}

ScalarVolume scalar_in(const Array<float>& a) { return to_volume<float>(a); }
LabelVolume labels_in(const Array<std::uint32_t>& a) { return to_volume<std::uint32_t>(a); }
SemanticVolume semantic_in(const Array<std::uint8_t>& a) {
  auto v = to_volume<std::uint8_t, SemanticClass>(a);
  for (auto c : v.values()) {
    if (static_cast<std::uint8_t>(c) > 2) throw ArgumentError("semantic classes must be 0, 1 or 2");
  }
  return v;
}

BorderCoreConfig border_config(int thickness, double min_distance, double threshold) {
  BorderCoreConfig cfg{thickness, min_distance, threshold};
  cfg.validate();
  return cfg;
}

std::vector<Vec3i> voxels_in(const std::vector<std::array<std::int64_t, 3>>& pts) {
  return {pts.begin(), pts.end()};
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["f1_voxel"] = r.f1_voxel;
  d["f1_match"] = r.f1_match;
  d["f1_instance"] = r.f1_instance;
  d["merger_ratio"] = r.merger_ratio;
  d["splitter_ratio"] = r.splitter_ratio;
  d["mergers"] = r.mergers;
  d["splitters"] = r.splitters;
  d["particle_count"] = r.particle_count;
  d["predicted_count"] = r.predicted_count;
  py::list pairs;
  for (const auto& p : r.matches.pairs) pairs.append(py::make_tuple(p.pred, p.ref, p.f1));
  d["pairs"] = pairs;
  d["unmatched_pred"] = r.matches.unmatched_pred;
  d["unmatched_ref"] = r.matches.unmatched_ref;
  return d;
}

py::object read_store(const std::filesystem::path& root) {
  const auto store = BlockStore::open(root);
  switch (store.kind()) {
    case VolumeKind::scalar: return to_array(store.read_all<float>());
    case VolumeKind::label: return to_array(store.read_all<std::uint32_t>());
    case VolumeKind::semantic: return to_array<SemanticClass, std::uint8_t>(store.read_all<SemanticClass>());
  }
  throw ArgumentError("unknown store kind");
}

void write_store(const py::array& a, const std::filesystem::path& root, const std::string& kind,
                 std::array<std::int64_t, 3> chunk) {
  const Vec3i c{chunk[0], chunk[1], chunk[2]};
  switch (parse_kind(kind)) {
    case VolumeKind::scalar: write_blockstore(scalar_in(a.cast<Array<float>>()), root, c); break;
    case VolumeKind::label: write_blockstore(labels_in(a.cast<Array<std::uint32_t>>()), root, c); break;
    case VolumeKind::semantic: write_blockstore(semantic_in(a.cast<Array<std::uint8_t>>()), root, c); break;
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Border-core instance segmentation of particle volumes";

  static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
  static py::exception<IoError> io(m, "StoreError", PyExc_OSError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation, e.what());
    } catch (const IoError& e) {
      py::set_error(io, e.what());
    }
  });

  m.def("read_store", &read_store, py::arg("root"), "Whole block store as a (z, y, x) array.");
  m.def("write_store", &write_store, py::arg("array"), py::arg("root"), py::arg("kind"),
        py::arg("chunk") = std::array<std::int64_t, 3>{64, 64, 64},
        "Writes a (z, y, x) array as a block store; kind is scalar, label or semantic. Chunk is (x, y, z).");

  m.def(
      "encode",
      [](const Array<std::uint32_t>& labels, int thickness, double min_distance, double threshold) {
        return to_array<SemanticClass, std::uint8_t>(
            encode(labels_in(labels), border_config(thickness, min_distance, threshold)));
      },
      py::arg("labels"), py::arg("thickness") = 3, py::arg("min_distance") = 1.0, py::arg("threshold") = 0.95);
  m.def(
      "small_core_filter",
      [](const Array<std::uint8_t>& sem, int thickness, double min_distance, double threshold) {
        return to_array<SemanticClass, std::uint8_t>(
            small_core_filter(semantic_in(sem), border_config(thickness, min_distance, threshold)));
      },
      py::arg("semantic"), py::arg("thickness") = 3, py::arg("min_distance") = 1.0, py::arg("threshold") = 0.95);
  m.def(
      "decode",
      [](const Array<std::uint8_t>& sem, int thickness, double min_distance, double threshold) {
        return to_array(decode(semantic_in(sem), border_config(thickness, min_distance, threshold)));
      },
      py::arg("semantic"), py::arg("thickness") = 3, py::arg("min_distance") = 1.0, py::arg("threshold") = 0.95);

  m.def(
      "threshwater",
      [](const Array<float>& vol, double threshold, int opening, int seed_erosion) {
        return to_array(threshwater(scalar_in(vol), ThreshWaterParams{threshold, opening, seed_erosion}));
      },
      py::arg("volume"), py::arg("threshold") = 0.5, py::arg("opening") = 1, py::arg("seed_erosion") = 3);
  m.def(
      "split_particle",
      [](const Array<std::uint32_t>& labels, std::uint32_t label,
         const std::vector<std::array<std::int64_t, 3>>& markers,
         const std::vector<std::array<std::int64_t, 3>>& border) {
        return to_array(split_particle(labels_in(labels), SplitRequest{label, voxels_in(markers), voxels_in(border)}));
      },
      py::arg("labels"), py::arg("label"), py::arg("markers"), py::arg("border"),
      "Markers and border voxels are (x, y, z) triplets.");

  m.def(
      "infer",
      [](const Array<float>& vol, const std::string& predictor, std::optional<Array<std::uint32_t>> reference,
         int patch, double overlap, int chunk, double ref_size_vox, double target_size_vox,
         std::optional<std::pair<double, double>> stats, const std::filesystem::path& scratch, int thickness) {
        const auto v = scalar_in(vol);
        const auto cfg = border_config(thickness, 1.0, 0.95);
        const SizeNormSpec size{ref_size_vox, target_size_vox};
        size.validate();
        const Vec3i p{patch, patch, patch};
        std::unique_ptr<PatchPredictor> pred;
        if (predictor == "oracle") {
          if (!reference) throw ArgumentError("the oracle predictor needs reference labels");
          auto ref = labels_in(*reference);
          if (ref.shape() != v.shape()) throw ArgumentError("reference labels must match the volume shape");
          if (size.scale() != 1.0) ref = size_normalize_labels(ref, size);
          pred = std::make_unique<OraclePredictor>(ref, cfg, p);
        } else if (predictor == "threshwater") {
          pred = std::make_unique<ThreshWaterPredictor>(ThreshWaterParams{}, cfg, p);
        } else {
          throw ArgumentError("predictor must be 'oracle' or 'threshwater'");
        }
        const GlobalStats gs =
            stats ? GlobalStats{stats->first, stats->second} : global_stats(std::span<const ScalarVolume>(&v, 1));
        InferenceOptions opts;
        opts.chunk_shape = {chunk, chunk, chunk};
        opts.overlap_fraction = overlap;
        opts.scratch = scratch;
        LabelVolume out;
        {
          py::gil_scoped_release release;
          out = run_inference(v, *pred, cfg, size, gs, opts);
        }
        return to_array(out);
      },
      py::arg("volume"), py::arg("predictor") = "oracle", py::arg("reference") = py::none(), py::arg("patch") = 128,
      py::arg("overlap") = 0.5, py::arg("chunk") = 384, py::arg("ref_size_vox") = 60.0,
      py::arg("target_size_vox") = 60.0, py::arg("stats") = py::none(), py::arg("scratch"), py::arg("thickness") = 3,
      "Chunked patch inference and decoding; returns instance labels at the input resolution.");

  m.def(
      "evaluate",
      [](const Array<std::uint32_t>& pred, const Array<std::uint32_t>& ref) {
        return report_dict(evaluate(labels_in(pred), labels_in(ref)));
      },
      py::arg("pred"), py::arg("ref"));

  m.def(
      "generate_phantom",
      [](std::array<std::int64_t, 3> shape, int particle_count, double radius_min, double radius_max,
         const std::vector<std::string>& shape_kinds, double touching_pair_fraction, double fg_mean, double fg_std,
         double bg_mean, double bg_std, int streaks, std::uint64_t seed) {
        PhantomSpec spec;
        spec.shape = {shape[2], shape[1], shape[0]};
        spec.particle_count = particle_count;
        spec.radius_min_vox = radius_min;
        spec.radius_max_vox = radius_max;
        spec.shape_kinds.clear();
        for (const auto& k : shape_kinds) spec.shape_kinds.push_back(parse_shape_kind(k));
        spec.touching_pair_fraction = touching_pair_fraction;
        spec.fg_mean = fg_mean;
        spec.fg_std = fg_std;
        spec.bg_mean = bg_mean;
        spec.bg_std = bg_std;
        spec.streak_artifact_count = streaks;
        spec.rng_seed = seed;
        const auto ph = generate(spec);
        return py::make_tuple(to_array(ph.volume), to_array(ph.labels), ph.touching_pairs);
      },
      py::arg("shape") = std::array<std::int64_t, 3>{64, 64, 64}, py::arg("particle_count") = 10,
      py::arg("radius_min") = 4.0, py::arg("radius_max") = 8.0,
      py::arg("shape_kinds") = std::vector<std::string>{"sphere"}, py::arg("touching_pair_fraction") = 0.0,
      py::arg("fg_mean") = 1.0, py::arg("fg_std") = 0.1, py::arg("bg_mean") = 0.0, py::arg("bg_std") = 0.1,
      py::arg("streaks") = 0, py::arg("seed") = 0,
      "Returns (volume, labels, touching_pairs). Shape is given as (z, y, x).");

  m.def(
      "measure",
      [](const Array<std::uint32_t>& labels) {
        py::list out;
        for (const auto& r : measure(labels_in(labels))) {
          py::dict d;
          d["id"] = r.id;
          d["voxels"] = r.voxels;
          d["eq_diameter_vox"] = r.eq_diameter_vox;
          d["bb_lo"] = r.bb_lo;
          d["bb_hi"] = r.bb_hi;
          out.append(d);
        }
        return out;
      },
      py::arg("labels"), "Per-instance records; boxes are (x, y, z) with exclusive upper bounds.");

  m.def(
      "global_stats",
      [](const std::vector<Array<float>>& vols) {
        std::vector<ScalarVolume> vs;
        for (const auto& a : vols) vs.push_back(scalar_in(a));
        const auto s = global_stats(vs);
        return py::make_tuple(s.mu, s.sigma);
      },
      py::arg("volumes"), "Returns (mu, sigma) over every voxel of every volume.");
  m.def(
      "zscore_normalize",
      [](const Array<float>& vol, double mu, double sigma) {
        GlobalStats s{mu, sigma};
        s.validate();
        return to_array(zscore_normalize(scalar_in(vol), s));
      },
      py::arg("volume"), py::arg("mu"), py::arg("sigma"));
  m.def(
      "size_normalize",
      [](const Array<float>& vol, double ref_size_vox, double target_size_vox) {
        return to_array(size_normalize(scalar_in(vol), SizeNormSpec{ref_size_vox, target_size_vox}));
      },
      py::arg("volume"), py::arg("ref_size_vox"), py::arg("target_size_vox") = 60.0);
  m.def("estimate_voxel_particle_size", &estimate_voxel_particle_size, py::arg("particle_size_mm"),
        py::arg("spacing_mm"));
  m.def("particle_size_mm", &particle_size_mm, py::arg("particle_size_vox"), py::arg("spacing_mm"));
}
