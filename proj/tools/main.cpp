#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "partseg/augment.hpp"
#include "partseg/blockstore.hpp"
#include "partseg/bordercore.hpp"
#include "partseg/classical.hpp"
#include "partseg/error.hpp"
#include "partseg/infer.hpp"
#include "partseg/metrics.hpp"
#include "partseg/parallel.hpp"
#include "partseg/preprocess.hpp"
#include "partseg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace partseg;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level g_level = Level::warn;

void log(Level lvl, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (lvl <= g_level) std::cerr << "partseg: " << names[static_cast<int>(lvl)] << ": " << msg << '\n';
}

Vec3i to_vec3i(const std::vector<std::int64_t>& v, const char* what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ArgumentError(std::string(what) + " takes one or three integers");
}

Vec3d to_vec3d(const std::vector<double>& v, const char* what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ArgumentError(std::string(what) + " takes one or three numbers");
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

// Stores are replaced wholesale so reruns never see stale cells.
void clear_store(const fs::path& root) {
  std::error_code ec;
  if (fs::exists(root / BlockStore::kSidecarName, ec) || fs::exists(root / "run_config.json", ec)) {
    fs::remove_all(root, ec);
  }
}

template <class T>
Volume<T> load(const fs::path& root) {
  const auto store = BlockStore::open(root);
  if (store.kind() != KindOf<T>::value) {
    throw ArgumentError("'" + root.string() + "' holds a " + std::string(kind_name(store.kind())) +
                        " volume, expected " + std::string(kind_name(KindOf<T>::value)));
  }
  return store.read_all<T>();
}

template <class T>
void save(const Volume<T>& vol, const fs::path& root, const Vec3i& chunk) {
  clear_store(root);
  write_blockstore(vol, root, chunk);
}

GlobalStats load_stats(const fs::path& path) {
  const auto j = read_json(path);
  try {
    GlobalStats s{j.at("mu").get<double>(), j.at("sigma").get<double>()};
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError("stats file '" + path.string() + "' needs numeric mu and sigma: " + e.what());
  }
}

GlobalStats stats_of_store(const BlockStore& store) {
  StatsAccumulator acc;
  for (const auto& cell : store.cells()) acc.add(store.read_cell<float>(cell).values());
  return acc.finish();
}

std::vector<Vec3i> read_voxels(const fs::path& path) {
  const auto j = read_json(path);
  std::vector<Vec3i> out;
  try {
    for (const auto& p : j) {
      const auto v = p.get<std::vector<std::int64_t>>();
      if (v.size() != 3) throw ArgumentError("voxel entries in '" + path.string() + "' must be [x, y, z]");
      out.push_back({v[0], v[1], v[2]});
    }
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "' must be a list of integer triplets: " + e.what());
  }
  return out;
}

PhantomSpec parse_phantom_spec(const json& j) {
  PhantomSpec s;
  try {
    if (j.contains("shape")) s.shape = to_vec3i(j["shape"].get<std::vector<std::int64_t>>(), "shape");
    if (j.contains("spacing_mm")) s.spacing_mm = to_vec3d(j["spacing_mm"].get<std::vector<double>>(), "spacing_mm");
    s.particle_count = j.value("particle_count", s.particle_count);
    s.radius_min_vox = j.value("radius_min_vox", s.radius_min_vox);
    s.radius_max_vox = j.value("radius_max_vox", s.radius_max_vox);
    if (j.contains("shape_kinds")) {
      s.shape_kinds.clear();
      for (const auto& k : j["shape_kinds"]) s.shape_kinds.push_back(parse_shape_kind(k.get<std::string>()));
    }
    s.touching_pair_fraction = j.value("touching_pair_fraction", s.touching_pair_fraction);
    s.fg_mean = j.value("fg_mean", s.fg_mean);
    s.fg_std = j.value("fg_std", s.fg_std);
    s.bg_mean = j.value("bg_mean", s.bg_mean);
    s.bg_std = j.value("bg_std", s.bg_std);
    s.streak_artifact_count = j.value("streak_artifact_count", s.streak_artifact_count);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad phantom spec: ") + e.what());
  }
  return s;
}

// Echo of the effective options of one subcommand. Thread count is left out
// so that runs at different pool sizes produce identical files.
class ConfigEcho {
 public:
  explicit ConfigEcho(const CLI::App* sub, const std::string& log_level) {
    doc_["subcommand"] = sub->get_name();
    ordered_json flags = ordered_json::object();
    json seed = nullptr;
    for (const CLI::Option* opt : sub->get_options()) {
      if (opt == sub->get_help_ptr()) continue;
      const auto name = opt->get_name(false, true);
      ordered_json value;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        if (opt->get_expected_max() > 1 || r.size() > 1) value = r;
        else value = r.empty() ? "" : r.front();
      } else if (!opt->get_default_str().empty()) {
        value = opt->get_default_str();
      }
      if (name == "--seed") seed = value;
      flags[name.substr(2)] = value;
    }
    doc_["flags"] = flags;
    doc_["log_level"] = log_level;
    doc_["seed"] = seed;
  }

  // Directory outputs get the echo inside; file outputs get it beside them.
  void write_for(const fs::path& output, bool is_dir) const {
    const fs::path dir = is_dir ? output : (output.has_parent_path() ? output.parent_path() : fs::path("."));
    write_text(dir / "run_config.json", doc_.dump(2) + "\n");
  }

 private:
  ordered_json doc_;
};

struct Global {
  int threads = 0;
  std::string log_level = "warn";
};

struct Command {
  CLI::App* app = nullptr;
  std::function<void(const ConfigEcho&)> run;
};

void add_border_flags(CLI::App* sub, BorderCoreConfig& cfg) {
  sub->add_option("--thickness", cfg.border_thickness_vox, "Border thickness in voxels")->capture_default_str();
  sub->add_option("--min-distance", cfg.filter_min_distance, "Small-core filter distance in voxels")
      ->capture_default_str();
  sub->add_option("--filter-threshold", cfg.filter_threshold, "Small-core filter fraction")->capture_default_str();
}

struct Options {
  // shared
  fs::path in, out, scratch;
  std::vector<std::int64_t> store_chunk{64};
  BorderCoreConfig cfg;
  SizeNormSpec size;
  std::optional<fs::path> stats_path;
  std::uint64_t seed = 0;

  // import
  std::vector<std::int64_t> shape;
  std::vector<double> spacing{1.0};
  std::string dtype = "u16";
  std::string endian = "little";
  std::string origin_name;

  // stats
  std::vector<fs::path> inputs;

  // synth
  fs::path spec_path, out_vol, out_labels;

  // infer
  std::string predictor;
  std::vector<std::int64_t> patch{128};
  double overlap = 0.5;
  std::vector<std::int64_t> chunk{384};
  bool keep_scratch = false;

  // threshwater
  ThreshWaterParams tw;

  // split
  std::uint32_t label = 0;
  fs::path markers, border;

  // augment
  fs::path vol, labels;
  std::vector<std::string> bank;
  double prob = kDefaultAugmentProbability;
  int retries = kDefaultAugmentRetries;

  // export-train
  std::vector<fs::path> vols, label_stores;

  // eval
  fs::path pred, ref;

  // decode
  std::int64_t halo = -1;
};

std::unique_ptr<PatchPredictor> make_predictor(const Options& o, const VolumeMeta& input_meta) {
  const Vec3i patch = to_vec3i(o.patch, "--patch");
  const auto colon = o.predictor.find(':');
  const std::string kind = o.predictor.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : o.predictor.substr(colon + 1);
  if (kind == "oracle") {
    if (arg.empty()) throw ArgumentError("oracle predictor needs a store path: oracle:<labels.store>");
    auto store = BlockStore::open(arg);
    if (store.shape() != input_meta.shape) {
      throw ArgumentError("oracle store shape " + to_string(store.shape()) + " differs from the input's " +
                          to_string(input_meta.shape));
    }
    if (store.kind() == VolumeKind::semantic && o.size.scale() == 1.0) {
      return std::make_unique<OraclePredictor>(std::move(store), patch);
    }
    if (store.kind() != VolumeKind::label) {
      throw ArgumentError("oracle store must hold labels (or a semantic map when no resizing is applied)");
    }
    auto ref = store.read_all<std::uint32_t>();
    if (o.size.scale() != 1.0) ref = size_normalize_labels(ref, o.size);
    return std::make_unique<OraclePredictor>(ref, o.cfg, patch);
  }
  if (kind == "threshwater") {
    ThreshWaterParams p;
    if (!arg.empty()) {
      std::stringstream ss(arg);
      std::string tok;
      std::vector<std::string> parts;
      while (std::getline(ss, tok, ',')) parts.push_back(tok);
      try {
        if (parts.size() > 0) p.threshold = std::stod(parts[0]);
        if (parts.size() > 1) p.opening_radius = std::stoi(parts[1]);
        if (parts.size() > 2) p.seed_erosion_radius = std::stoi(parts[2]);
      } catch (const std::exception&) {
        throw ArgumentError("threshwater predictor takes threshwater:T[,OPENING[,SEED_EROSION]]");
      }
      if (parts.size() > 3) throw ArgumentError("threshwater predictor takes at most three parameters");
    }
    p.validate();
    return std::make_unique<ThreshWaterPredictor>(p, o.cfg, patch);
  }
  throw ArgumentError("unknown predictor '" + o.predictor + "'; use oracle:<store> or threshwater:<params>");
}

void register_commands(CLI::App& app, Options& o, std::vector<Command>& cmds) {
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough(false);
    return sub;
  };
  auto add_chunk = [&](CLI::App* sub) {
    sub->add_option("--store-chunk", o.store_chunk, "Chunk shape of written stores (1 or 3 ints)")
        ->capture_default_str()
        ->expected(1, 3);
  };
  auto add_size = [&](CLI::App* sub, bool required) {
    auto* r = sub->add_option("--ref-size-vox", o.size.reference_particle_size_vox,
                              "Measured mean particle diameter in voxels");
    if (required) r->required();
    else r->capture_default_str();
    sub->add_option("--target-size-vox", o.size.target_particle_size_vox, "Normalized particle diameter in voxels")
        ->capture_default_str();
  };

  {
    auto* sub = add("import", "Import a flat raw file (x fastest) into a block store");
    sub->add_option("--raw", o.in, "Raw input file")->required();
    sub->add_option("--shape", o.shape, "Voxels per axis: X Y Z")->required()->expected(3);
    sub->add_option("--spacing", o.spacing, "Voxel spacing in mm (1 or 3 numbers)")->capture_default_str()->expected(1, 3);
    sub->add_option("--dtype", o.dtype, "Sample type")->check(CLI::IsMember({"u8", "u16", "f32"}))->capture_default_str();
    sub->add_option("--endian", o.endian, "Byte order")->check(CLI::IsMember({"little", "big"}))->capture_default_str();
    sub->add_option("--name", o.origin_name, "Free-text origin name");
    sub->add_option("--out", o.out, "Output scalar store")->required();
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      VolumeMeta meta;
                      meta.shape = to_vec3i(o.shape, "--shape");
                      meta.spacing_mm = to_vec3d(o.spacing, "--spacing");
                      meta.dtype = parse_dtype(o.dtype);
                      meta.origin_name = o.origin_name;
                      const auto vol = import_raw(o.in.string(), meta,
                                                  o.endian == "big" ? Endianness::big : Endianness::little);
                      save(vol, o.out, to_vec3i(o.store_chunk, "--store-chunk"));
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("synth", "Generate a phantom volume and its exact labels");
    sub->add_option("--spec", o.spec_path, "Phantom spec JSON (missing keys take defaults)")->required();
    sub->add_option("--seed", o.seed, "Overrides rng_seed from the spec when given");
    sub->add_option("--out-vol", o.out_vol, "Output scalar store")->required();
    sub->add_option("--out-labels", o.out_labels, "Output label store")->required();
    add_chunk(sub);
    cmds.push_back({sub, [&o, sub](const ConfigEcho& echo) {
                      auto spec = parse_phantom_spec(read_json(o.spec_path));
                      if (sub->get_option("--seed")->count() > 0) spec.rng_seed = o.seed;
                      const auto ph = generate(spec);
                      const Vec3i chunk = to_vec3i(o.store_chunk, "--store-chunk");
                      save(ph.volume, o.out_vol, chunk);
                      save(ph.labels, o.out_labels, chunk);
                      echo.write_for(o.out_vol, true);
                      echo.write_for(o.out_labels, true);
                      log(Level::info, "placed " + std::to_string(max_label(ph.labels)) + " particles");
                    }});
  }
  {
    auto* sub = add("stats", "Global mean and standard deviation over scalar stores");
    sub->add_option("--in", o.inputs, "Input scalar stores")->required();
    sub->add_option("--out", o.out, "Output JSON {mu, sigma}; standard output when omitted");
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      StatsAccumulator acc;
                      for (const auto& p : o.inputs) {
                        const auto store = BlockStore::open(p);
                        if (store.kind() != VolumeKind::scalar) {
                          throw ArgumentError("'" + p.string() + "' is not a scalar store");
                        }
                        for (const auto& cell : store.cells()) acc.add(store.read_cell<float>(cell).values());
                      }
                      const auto s = acc.finish();
                      ordered_json j;
                      j["mu"] = s.mu;
                      j["sigma"] = s.sigma;
                      if (o.out.empty()) {
                        std::cout << j.dump(2) << '\n';
                      } else {
                        write_text(o.out, j.dump(2) + "\n");
                        echo.write_for(o.out, false);
                      }
                    }});
  }
  {
    auto* sub = add("encode", "Encode instance labels as background/core/border");
    sub->add_option("--in", o.in, "Input label store")->required();
    sub->add_option("--out", o.out, "Output semantic store")->required();
    add_border_flags(sub, o.cfg);
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto sem = encode(load<std::uint32_t>(o.in), o.cfg);
                      save(sem, o.out, to_vec3i(o.store_chunk, "--store-chunk"));
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("decode", "Recover instances from a semantic store, chunk by chunk");
    sub->add_option("--in", o.in, "Input semantic store")->required();
    sub->add_option("--out", o.out, "Output label store")->required();
    sub->add_option("--scratch", o.scratch, "Scratch directory (default: <out>.scratch)");
    sub->add_option("--halo", o.halo, "Initial flood halo in voxels (-1: thickness + 1)")->capture_default_str();
    add_border_flags(sub, o.cfg);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto sem = BlockStore::open(o.in);
                      if (sem.kind() != VolumeKind::semantic) throw ArgumentError("'" + o.in.string() + "' is not a semantic store");
                      StreamingOptions so;
                      so.scratch = o.scratch;
                      so.halo = o.halo;
                      clear_store(o.out);
                      decode_streaming(sem, o.out, o.cfg, so);
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("infer", "Chunked patch inference followed by decoding");
    sub->add_option("--in", o.in, "Input scalar store")->required();
    sub->add_option("--out", o.out, "Output label store")->required();
    sub->add_option("--predictor", o.predictor, "oracle:<labels.store> or threshwater:T[,OPENING[,SEED_EROSION]]")
        ->required();
    sub->add_option("--patch", o.patch, "Patch shape (1 or 3 ints)")->capture_default_str()->expected(1, 3);
    sub->add_option("--overlap", o.overlap, "Patch overlap fraction")->capture_default_str();
    sub->add_option("--chunk", o.chunk, "Chunk shape (1 or 3 ints)")->capture_default_str()->expected(1, 3);
    sub->add_option("--stats", o.stats_path, "JSON {mu, sigma}; computed from the input when omitted");
    sub->add_option("--scratch", o.scratch, "Scratch directory (default: <out>.scratch)");
    sub->add_flag("--keep-scratch", o.keep_scratch, "Keep intermediate stores");
    add_size(sub, true);
    add_border_flags(sub, o.cfg);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto input = BlockStore::open(o.in);
                      if (input.kind() != VolumeKind::scalar) throw ArgumentError("'" + o.in.string() + "' is not a scalar store");
                      o.size.validate();
                      const auto stats = o.stats_path ? load_stats(*o.stats_path) : stats_of_store(input);
                      const auto predictor = make_predictor(o, input.meta());
                      InferenceOptions io;
                      io.chunk_shape = to_vec3i(o.chunk, "--chunk");
                      io.overlap_fraction = o.overlap;
                      io.scratch = o.scratch.empty() ? fs::path(o.out.string() + ".scratch") : o.scratch;
                      io.keep_scratch = o.keep_scratch;
                      clear_store(o.out);
                      run_inference(store_source(input), input.meta(), *predictor, o.cfg, o.size, stats, o.out, io);
                      std::error_code ec;
                      if (!o.keep_scratch && o.scratch.empty()) fs::remove(io.scratch, ec);
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("threshwater", "Threshold, opening and distance watershed baseline");
    sub->add_option("--in", o.in, "Input scalar store")->required();
    sub->add_option("--out", o.out, "Output label store")->required();
    sub->add_option("--threshold", o.tw.threshold, "Foreground threshold")->capture_default_str();
    sub->add_option("--opening", o.tw.opening_radius, "Opening radius in voxels")->capture_default_str();
    sub->add_option("--seed-erosion", o.tw.seed_erosion_radius, "Seed erosion radius in voxels")->capture_default_str();
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto labels = threshwater(load<float>(o.in), o.tw);
                      save(labels, o.out, to_vec3i(o.store_chunk, "--store-chunk"));
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("split", "Split one instance along a drawn border");
    sub->add_option("--in", o.in, "Input label store")->required();
    sub->add_option("--label", o.label, "Instance to split")->required();
    sub->add_option("--markers", o.markers, "JSON list of [x, y, z] markers, one per part")->required();
    sub->add_option("--border", o.border, "JSON list of [x, y, z] border voxels")->required();
    sub->add_option("--out", o.out, "Output label store")->required();
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      SplitRequest req{o.label, read_voxels(o.markers), read_voxels(o.border)};
                      const auto labels = split_particle(load<std::uint32_t>(o.in), req);
                      save(labels, o.out, to_vec3i(o.store_chunk, "--store-chunk"));
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("augment", "Paste a bank particle in face contact with a patch particle");
    sub->add_option("--vol", o.vol, "Patch scalar store")->required();
    sub->add_option("--labels", o.labels, "Patch label store")->required();
    sub->add_option("--bank", o.bank, "Bank source as VOL_STORE,LABEL_STORE (repeatable)")->required();
    sub->add_option("--prob", o.prob, "Trigger probability")->capture_default_str();
    sub->add_option("--retries", o.retries, "Directions tried before giving up")->capture_default_str();
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    sub->add_option("--out-vol", o.out_vol, "Output scalar store")->required();
    sub->add_option("--out-labels", o.out_labels, "Output label store")->required();
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      std::vector<ScalarVolume> bank_vols;
                      std::vector<LabelVolume> bank_labels;
                      for (const auto& b : o.bank) {
                        const auto comma = b.find(',');
                        if (comma == std::string::npos) throw ArgumentError("--bank takes VOL_STORE,LABEL_STORE, got '" + b + "'");
                        bank_vols.push_back(load<float>(b.substr(0, comma)));
                        bank_labels.push_back(load<std::uint32_t>(b.substr(comma + 1)));
                      }
                      const auto bank = build_bank(bank_vols, bank_labels);
                      const auto r = touching_augment(load<float>(o.vol), load<std::uint32_t>(o.labels), bank, o.prob,
                                                      o.seed, o.retries);
                      const Vec3i chunk = to_vec3i(o.store_chunk, "--store-chunk");
                      save(r.volume, o.out_vol, chunk);
                      save(r.labels, o.out_labels, chunk);
                      echo.write_for(o.out_vol, true);
                      echo.write_for(o.out_labels, true);
                      ordered_json j;
                      j["placed"] = r.placed;
                      std::cout << j.dump() << '\n';
                    }});
  }
  {
    auto* sub = add("export-train", "Write normalized image/target pairs and a manifest");
    sub->add_option("--vol", o.vols, "Scalar stores (repeatable, paired with --labels)")->required();
    sub->add_option("--labels", o.label_stores, "Label stores (repeatable)")->required();
    sub->add_option("--stats", o.stats_path, "JSON {mu, sigma}; computed over all --vol when omitted");
    sub->add_option("--out", o.out, "Output directory")->required();
    add_size(sub, true);
    add_border_flags(sub, o.cfg);
    add_chunk(sub);
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      if (o.vols.size() != o.label_stores.size()) {
                        throw ArgumentError("--vol and --labels must be given the same number of times");
                      }
                      std::vector<ScalarVolume> vols;
                      std::vector<LabelVolume> labels;
                      for (std::size_t k = 0; k < o.vols.size(); ++k) {
                        vols.push_back(load<float>(o.vols[k]));
                        labels.push_back(load<std::uint32_t>(o.label_stores[k]));
                      }
                      const auto stats = o.stats_path ? load_stats(*o.stats_path) : global_stats(vols);
                      std::error_code ec;
                      if (fs::exists(o.out / "manifest.json", ec)) fs::remove_all(o.out, ec);
                      export_training_pairs(vols, labels, o.cfg, o.size, stats, o.out,
                                            to_vec3i(o.store_chunk, "--store-chunk"));
                      echo.write_for(o.out, true);
                    }});
  }
  {
    auto* sub = add("eval", "Voxel and instance metrics of a prediction against a reference");
    sub->add_option("--pred", o.pred, "Predicted label store")->required();
    sub->add_option("--ref", o.ref, "Reference label store")->required();
    sub->add_option("--out", o.out, "Report JSON; standard output when omitted");
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto report = evaluate(load<std::uint32_t>(o.pred), load<std::uint32_t>(o.ref));
                      const auto text = to_json(report, 2) + "\n";
                      if (o.out.empty()) {
                        std::cout << text;
                      } else {
                        write_text(o.out, text);
                        echo.write_for(o.out, false);
                      }
                    }});
  }
  {
    auto* sub = add("measure", "Per-particle size table as CSV");
    sub->add_option("--in", o.in, "Label store")->required();
    sub->add_option("--out", o.out, "Output CSV; standard output when omitted");
    cmds.push_back({sub, [&o](const ConfigEcho& echo) {
                      const auto csv = measure_csv(measure(load<std::uint32_t>(o.in)));
                      if (o.out.empty()) {
                        std::cout << csv;
                      } else {
                        write_text(o.out, csv);
                        echo.write_for(o.out, false);
                      }
                    }});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partseg: border-core instance segmentation of particle volumes"};
  app.require_subcommand(1, 1);
  Global global;
  app.add_option("--threads", global.threads, "Worker threads (0: all cores)")->capture_default_str();
  app.add_option("--log-level", global.log_level, "Diagnostics verbosity")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
      ->capture_default_str();

  Options options;
  std::vector<Command> commands;
  register_commands(app, options, commands);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const CLI::App* usage = &app;
    for (const auto* sub : app.get_subcommands()) usage = sub;
    std::cerr << "partseg: " << e.what() << "\n\n" << usage->help();
    return 1;
  }

  g_level = global.log_level == "error"  ? Level::error
            : global.log_level == "info" ? Level::info
            : global.log_level == "debug" ? Level::debug
                                          : Level::warn;
  set_default_threads(global.threads);

  try {
    for (const auto& cmd : commands) {
      if (!cmd.app->parsed()) continue;
      log(Level::debug, "running " + cmd.app->get_name() + " with " + std::to_string(default_threads()) + " threads");
      cmd.run(ConfigEcho(cmd.app, global.log_level));
    }
  } catch (const ValidationError& e) {
    log(Level::error, e.what());
    return 1;
  } catch (const IoError& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::error, std::string("unexpected failure: ") + e.what());
    return 2;
  }
  return 0;
}
