#pragma once

// Paired dataset generation: one simulated raw stack per pair, branched into a
// clean copy and a noisy copy, both reconstructed with identical MUSICAL
// parameters. Also evaluation of predictions against the clean references.

#include <nanosim/io.hpp>
#include <nanosim/metrics.hpp>

#include <functional>
#include <map>
#include <numeric>

namespace nanosim::pipeline {

using io::json;
namespace fs = std::filesystem;

struct DatasetConfig {
  std::size_t pairs_per_structure = 24;
  std::vector<geometry::StructureKind> structures{geometry::kAllKinds.begin(), geometry::kAllKinds.end()};
  std::size_t frames = 200;
  std::size_t image_width = 64;
  std::size_t image_height = 64;
  double train_fraction = 0.75;
  noise::NoiseSpec noise{};
  Interval na_range{1.2, 1.49};
  IntRange tau_on{1, 5};
  IntRange tau_off{1, 20};
  std::vector<double> pixel_sizes_nm{optics::kPixelSizesNm.begin(), optics::kPixelSizesNm.end()};
  double wavelength_nm = 660.0;
  double scene_depth_um = 0.5;
  musical::MusicalParams musical{};
  bool save_raw_stacks = false;
  std::uint64_t master_seed = 0;

  void validate() const {
    if (pairs_per_structure < 1) throw ConfigError("pairs per structure must be at least 1");
    if (structures.empty()) throw ConfigError("no structure kinds selected");
    if (frames < 2) throw ConfigError("stacks need at least 2 frames");
    if (image_width < 1 || image_height < 1) throw ConfigError("image size must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
    if (!na_range.valid() || !(na_range.lo > 0.0)) throw ConfigError("NA range must be a nonempty positive interval");
    if (!tau_on.valid() || tau_on.lo < 1 || !tau_off.valid() || tau_off.lo < 1)
      throw ConfigError("tau ranges must be nonempty intervals of positive integers");
    if (pixel_sizes_nm.empty()) throw ConfigError("pixel size list is empty");
    for (double p : pixel_sizes_nm)
      if (!(p > 0.0)) throw ConfigError("pixel sizes must be positive");
    if (!(wavelength_nm > 0.0)) throw ConfigError("wavelength must be positive");
    if (!(scene_depth_um > 0.0)) throw ConfigError("scene depth must be positive");
    noise.validate();
    if (musical.window_size != 0 && (musical.window_size < 3 || musical.window_size % 2 == 0))
      throw ConfigError("window size must be odd and at least 3");
    if (!(musical.alpha > 0.0) || musical.subpixels < 1) throw ConfigError("invalid MUSICAL parameters");
  }

  std::size_t total_pairs() const noexcept { return pairs_per_structure * structures.size(); }
};

inline json to_json(const DatasetConfig& c) {
  json kinds = json::array();
  for (auto k : c.structures) kinds.push_back(std::string(geometry::to_string(k)));
  json noise = io::to_json(c.noise);
  noise.erase("seed");
  return {{"pairs_per_structure", c.pairs_per_structure},
          {"structures", kinds},
          {"frames", c.frames},
          {"image_width", c.image_width},
          {"image_height", c.image_height},
          {"train_fraction", c.train_fraction},
          {"noise", noise},
          {"na_range", {c.na_range.lo, c.na_range.hi}},
          {"tau_on", {c.tau_on.lo, c.tau_on.hi}},
          {"tau_off", {c.tau_off.lo, c.tau_off.hi}},
          {"pixel_sizes_nm", c.pixel_sizes_nm},
          {"wavelength_nm", c.wavelength_nm},
          {"scene_depth_um", c.scene_depth_um},
          {"musical",
           {{"alpha", c.musical.alpha},
            {"subpixels", c.musical.subpixels},
            {"window_size", c.musical.window_size},
            {"threshold", io::threshold_name(c.musical.threshold)},
            {"threshold_value", c.musical.threshold.value}}},
          {"save_raw_stacks", c.save_raw_stacks},
          {"master_seed", c.master_seed}};
}

inline DatasetConfig config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "pairs_per_structure", "structures", "frames",         "image_width",   "image_height",
      "train_fraction",      "noise",      "na_range",       "tau_on",        "tau_off",
      "pixel_sizes_nm",      "wavelength_nm", "scene_depth_um", "musical",    "save_raw_stacks",
      "master_seed"};
  if (!j.is_object()) throw ConfigError("dataset configuration must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown configuration key '" + key + "'");
  DatasetConfig c;
  try {
    c.pairs_per_structure = j.value("pairs_per_structure", c.pairs_per_structure);
    if (j.contains("structures")) {
      c.structures.clear();
      for (const auto& k : j["structures"]) c.structures.push_back(geometry::parse_kind(k.get<std::string>()));
    }
    c.frames = j.value("frames", c.frames);
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    if (j.contains("noise")) c.noise = io::noise_from_json(j["noise"]);
    if (j.contains("na_range")) c.na_range = {j["na_range"].at(0).get<double>(), j["na_range"].at(1).get<double>()};
    if (j.contains("tau_on")) c.tau_on = {j["tau_on"].at(0).get<int>(), j["tau_on"].at(1).get<int>()};
    if (j.contains("tau_off")) c.tau_off = {j["tau_off"].at(0).get<int>(), j["tau_off"].at(1).get<int>()};
    c.pixel_sizes_nm = j.value("pixel_sizes_nm", c.pixel_sizes_nm);
    c.wavelength_nm = j.value("wavelength_nm", c.wavelength_nm);
    c.scene_depth_um = j.value("scene_depth_um", c.scene_depth_um);
    if (j.contains("musical")) {
      const auto& m = j["musical"];
      c.musical.alpha = m.value("alpha", c.musical.alpha);
      c.musical.subpixels = m.value("subpixels", c.musical.subpixels);
      c.musical.window_size = m.value("window_size", c.musical.window_size);
      c.musical.threshold =
          io::parse_threshold(m.value("threshold", std::string("optimal")), m.value("threshold_value", 0.0));
    }
    c.save_raw_stacks = j.value("save_raw_stacks", c.save_raw_stacks);
    c.master_seed = j.value("master_seed", c.master_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid dataset configuration: ") + e.what());
  }
  c.validate();
  return c;
}

inline DatasetConfig load_config(const fs::path& path) {
  try {
    return config_from_json(io::read_json(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Seeds and sampled parameters.

enum SeedStream : std::uint64_t { kParamStream = 0, kSceneStream = 1, kTraceStream = 2, kNoiseStream = 3 };
inline constexpr std::uint64_t kPairDomain = 0;
inline constexpr std::uint64_t kSplitDomain = 1;

inline std::uint64_t pair_seed(std::uint64_t master, std::size_t global_index) {
  return derive_seed(derive_seed(master, kPairDomain), global_index);
}

struct PairSeeds {
  std::uint64_t pair = 0;
  std::uint64_t params = 0;
  std::uint64_t scene = 0;
  std::uint64_t trace = 0;
  std::uint64_t noise = 0;

  static PairSeeds from(std::uint64_t pair) {
    return {pair, derive_seed(pair, kParamStream), derive_seed(pair, kSceneStream), derive_seed(pair, kTraceStream),
            derive_seed(pair, kNoiseStream)};
  }
  friend bool operator==(const PairSeeds&, const PairSeeds&) = default;
};

struct PairParams {
  double na = 0.0;
  int tau_on = 1;
  int tau_off = 1;
  double pixel_size_nm = 0.0;
  friend bool operator==(const PairParams&, const PairParams&) = default;
};

// Pixel size for the index-th pair of a structure: round-robin over the list,
// which gives exact quarters whenever the count is a multiple of 4.
inline double pixel_size_for(const DatasetConfig& c, std::size_t index_in_structure) {
  return c.pixel_sizes_nm[index_in_structure % c.pixel_sizes_nm.size()];
}

inline PairParams sample_params(const DatasetConfig& c, std::uint64_t params_seed, double pixel_size_nm) {
  Rng rng(params_seed);
  std::uniform_real_distribution<double> una(c.na_range.lo, c.na_range.hi);
  PairParams p;
  p.na = una(rng);
  p.tau_on = geometry::uniform_int(c.tau_on, rng);
  p.tau_off = geometry::uniform_int(c.tau_off, rng);
  p.pixel_size_nm = pixel_size_nm;
  return p;
}

inline optics::OpticsParams pair_optics(const DatasetConfig& c, const PairParams& p) {
  optics::OpticsParams o;
  o.na = p.na;
  o.wavelength_nm = c.wavelength_nm;
  o.pixel_size_nm = p.pixel_size_nm;
  return o;
}

inline imaging::FieldOfView pair_fov(const DatasetConfig& c, double pixel_size_nm) {
  return imaging::FieldOfView::centered(c.image_width, c.image_height, pixel_size_nm);
}

// Scene bounds covering the camera field laterally.
inline geometry::SceneBounds pair_bounds(const DatasetConfig& c, double pixel_size_nm) {
  const double hx = 0.5e-3 * static_cast<double>(c.image_width) * pixel_size_nm;
  const double hy = 0.5e-3 * static_cast<double>(c.image_height) * pixel_size_nm;
  return {{-hx, hx}, {-hy, hy}, {-c.scene_depth_um, c.scene_depth_um}};
}

// ---------------------------------------------------------------------------

struct PairId {
  geometry::StructureKind kind = geometry::StructureKind::ActinFilament;
  std::size_t index_in_structure = 0;
  std::size_t global_index = 0;

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", index_in_structure);
    return std::string(geometry::to_string(kind)) + "-" + buf;
  }
};

inline PairId pair_id(const DatasetConfig& c, std::size_t structure_slot, std::size_t index_in_structure) {
  return {c.structures[structure_slot], index_in_structure, structure_slot * c.pairs_per_structure + index_in_structure};
}

struct SamplePair {
  std::string id;
  geometry::StructureKind kind = geometry::StructureKind::ActinFilament;
  PairSeeds seeds;
  PairParams params;
  std::size_t emitter_count = 0;
  noise::NoiseSpec noise;
  imaging::ImageStack clean_stack;
  imaging::ImageStack noisy_stack;
  musical::NanoscopyImage clean_nanoscopy;
  musical::NanoscopyImage noisy_nanoscopy;
};

inline json metadata(const SamplePair& p) {
  return {{"id", p.id},
          {"kind", std::string(geometry::to_string(p.kind))},
          {"seeds",
           {{"pair", p.seeds.pair},
            {"params", p.seeds.params},
            {"scene", p.seeds.scene},
            {"trace", p.seeds.trace},
            {"noise", p.seeds.noise}}},
          {"params",
           {{"na", p.params.na},
            {"tau_on", p.params.tau_on},
            {"tau_off", p.params.tau_off},
            {"pixel_size_nm", p.params.pixel_size_nm}}},
          {"emitter_count", p.emitter_count},
          {"noise", io::to_json(p.noise)},
          {"optics", io::to_json(p.clean_stack.optics)},
          {"musical", io::to_json(p.clean_nanoscopy.params)},
          {"window_size_used", p.clean_nanoscopy.window_size}};
}

// geometry -> photokinetics -> imaging once, then {identity, noise} and MUSICAL
// on both branches.
inline SamplePair generate_pair(const DatasetConfig& config, const PairId& id, std::uint64_t seed) {
  SamplePair out;
  out.id = id.str();
  out.kind = id.kind;
  out.seeds = PairSeeds::from(seed);
  const double pixel = pixel_size_for(config, id.index_in_structure);
  out.params = sample_params(config, out.seeds.params, pixel);

  auto stage = [&](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw StageError(out.id + " " + name, e);
    }
  };

  const auto optics = pair_optics(config, out.params);
  const auto psf = stage("optics", [&] { return optics::build_psf(optics); });
  const auto scene = stage("geometry", [&] {
    return geometry::generate_scene(geometry::StructureSpec::defaults(id.kind), pair_bounds(config, pixel),
                                    out.seeds.scene);
  });
  out.emitter_count = scene.size();
  const photokinetics::KineticsParams kinetics{static_cast<double>(out.params.tau_on),
                                               static_cast<double>(out.params.tau_off), 1.0};
  out.clean_stack = stage("imaging", [&] {
    return imaging::render_blinking(scene, kinetics, out.seeds.trace, config.frames, psf, pair_fov(config, pixel));
  });
  if (!(out.clean_stack.frames.max() > 0.0))
    throw StageError(out.id + " imaging", NumericalError("rendered stack is empty"));

  out.noise = config.noise;
  out.noise.seed = out.seeds.noise;
  out.noisy_stack = stage("noise", [&] { return noise::apply_noise(out.clean_stack, out.noise); });

  musical::MusicalParams mp = config.musical;
  mp.optics = optics;
  mp.workers = 1;
  out.clean_nanoscopy = stage("musical", [&] { return musical::reconstruct(out.clean_stack, mp, psf, out.id + "/clean"); });
  out.noisy_nanoscopy = stage("musical", [&] { return musical::reconstruct(out.noisy_stack, mp, psf, out.id + "/noisy"); });
  return out;
}

inline SamplePair generate_pair(const DatasetConfig& config, std::size_t structure_slot, std::size_t index_in_structure) {
  const PairId id = pair_id(config, structure_slot, index_in_structure);
  return generate_pair(config, id, pair_seed(config.master_seed, id.global_index));
}

// ---------------------------------------------------------------------------
// Files of one pair, relative to the dataset root.

struct PairFiles {
  fs::path dir, noisy, clean, noisy_stack, clean_stack, meta;

  static PairFiles of(const std::string& id) {
    const fs::path d = fs::path("pairs") / id;
    return {d, d / "noisy", d / "clean", d / "noisy_stack", d / "clean_stack", d / "pair.json"};
  }
};

// Pair metadata is written last and marks the pair as complete.
inline void write_pair(const fs::path& root, const SamplePair& p, bool raw_stacks) {
  const auto f = PairFiles::of(p.id);
  const json meta = metadata(p);
  const json tag = {{"pair_id", p.id}, {"pair_seed", p.seeds.pair}};
  json noisy_tag = tag, clean_tag = tag;
  noisy_tag["branch"] = "noisy";
  noisy_tag["noise"] = io::to_json(p.noise);
  clean_tag["branch"] = "clean";
  io::write_nanoscopy(root / f.noisy, p.noisy_nanoscopy, noisy_tag);
  io::write_nanoscopy(root / f.clean, p.clean_nanoscopy, clean_tag);
  if (raw_stacks) {
    io::write_stack(root / f.noisy_stack, p.noisy_stack, noisy_tag);
    io::write_stack(root / f.clean_stack, p.clean_stack, clean_tag);
  }
  io::write_text_atomic(root / f.meta, meta.dump(2) + "\n");
}

inline bool pair_complete(const fs::path& root, const std::string& id, bool raw_stacks) {
  const auto f = PairFiles::of(id);
  if (!fs::exists(root / f.meta) || !io::exists(root / f.noisy) || !io::exists(root / f.clean)) return false;
  return !raw_stacks || (io::exists(root / f.noisy_stack) && io::exists(root / f.clean_stack));
}

// Seeded Fisher-Yates; the first round(fraction * n) positions of the
// permutation go to training.
inline std::vector<bool> split_assignment(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> u(0, i - 1);
    std::swap(perm[i - 1], perm[u(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<bool> train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) train[perm[i]] = true;
  return train;
}

struct ManifestEntry {
  std::string id;
  geometry::StructureKind kind = geometry::StructureKind::ActinFilament;
  std::size_t index_in_structure = 0;
  std::size_t global_index = 0;
  bool train = true;
  json meta;
};

struct Manifest {
  DatasetConfig config;
  std::vector<ManifestEntry> pairs;
};

inline constexpr const char* kManifestName = "manifest.json";

inline json to_json(const Manifest& m) {
  json pairs = json::array();
  for (const auto& e : m.pairs) {
    const auto f = PairFiles::of(e.id);
    json files = {{"noisy", f.noisy.string()}, {"clean", f.clean.string()}, {"metadata", f.meta.string()}};
    if (m.config.save_raw_stacks) {
      files["noisy_stack"] = f.noisy_stack.string();
      files["clean_stack"] = f.clean_stack.string();
    }
    json j = e.meta;
    j["id"] = e.id;
    j["kind"] = std::string(geometry::to_string(e.kind));
    j["index_in_structure"] = e.index_in_structure;
    j["global_index"] = e.global_index;
    j["split"] = e.train ? "train" : "test";
    j["files"] = files;
    pairs.push_back(std::move(j));
  }
  return {{"format", "nanosim-manifest"},
          {"version", io::kFormatVersion},
          {"file_format", io::kFormatName},
          {"config", to_json(m.config)},
          {"pairs", pairs}};
}

inline Manifest manifest_from_json(const json& j) {
  if (j.value("format", "") != "nanosim-manifest") throw IoError("not a dataset manifest");
  Manifest m;
  m.config = config_from_json(j.at("config"));
  for (const auto& p : j.at("pairs")) {
    ManifestEntry e;
    e.id = p.at("id").get<std::string>();
    e.kind = geometry::parse_kind(p.at("kind").get<std::string>());
    e.index_in_structure = p.at("index_in_structure").get<std::size_t>();
    e.global_index = p.at("global_index").get<std::size_t>();
    e.train = p.at("split").get<std::string>() == "train";
    e.meta = p;
    m.pairs.push_back(std::move(e));
  }
  return m;
}

inline Manifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_json(io::read_json(path));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

struct DatasetOptions {
  std::size_t workers = 1;
  std::function<void(const std::string&)> progress;
};

struct DatasetSummary {
  Manifest manifest;
  std::size_t generated = 0;
  std::size_t skipped = 0;
};

// Resumable: pairs whose files are already complete are kept as they are.
inline DatasetSummary generate_dataset(const DatasetConfig& config, const fs::path& root,
                                       const DatasetOptions& options = {}) {
  config.validate();
  fs::create_directories(root);
  const std::size_t n = config.total_pairs();
  std::vector<PairId> ids(n);
  for (std::size_t s = 0; s < config.structures.size(); ++s)
    for (std::size_t i = 0; i < config.pairs_per_structure; ++i) ids[s * config.pairs_per_structure + i] = pair_id(config, s, i);

  std::vector<char> fresh(n, 0);
  std::mutex progress_mutex;
  std::size_t done = 0;
  parallel_for(n, options.workers, [&](std::size_t g) {
    const std::string name = ids[g].str();
    bool made = false;
    if (!pair_complete(root, name, config.save_raw_stacks)) {
      write_pair(root, generate_pair(config, ids[g], pair_seed(config.master_seed, g)), config.save_raw_stacks);
      fresh[g] = 1;
      made = true;
    }
    if (options.progress) {
      std::lock_guard lock(progress_mutex);
      ++done;
      options.progress(name + (made ? " generated" : " present") + " (" + std::to_string(done) + "/" +
                       std::to_string(n) + ")");
    }
  });

  DatasetSummary summary;
  summary.manifest.config = config;
  for (std::size_t s = 0; s < config.structures.size(); ++s) {
    const auto train = split_assignment(config.pairs_per_structure, config.train_fraction,
                                        derive_seed(derive_seed(config.master_seed, kSplitDomain), s));
    for (std::size_t i = 0; i < config.pairs_per_structure; ++i) {
      const std::size_t g = s * config.pairs_per_structure + i;
      ManifestEntry e;
      e.id = ids[g].str();
      e.kind = ids[g].kind;
      e.index_in_structure = i;
      e.global_index = g;
      e.train = train[i];
      e.meta = io::read_json(root / PairFiles::of(e.id).meta);
      summary.manifest.pairs.push_back(std::move(e));
    }
  }
  for (char f : fresh) (f ? summary.generated : summary.skipped) += 1;
  io::write_text_atomic(root / kManifestName, to_json(summary.manifest).dump(2) + "\n");
  return summary;
}

// Rebuilds one pair from its manifest entry alone.
inline SamplePair regenerate(const Manifest& m, const ManifestEntry& e) {
  const PairId id{e.kind, e.index_in_structure, e.global_index};
  const std::uint64_t seed = e.meta.at("seeds").at("pair").get<std::uint64_t>();
  return generate_pair(m.config, id, seed);
}

// ---------------------------------------------------------------------------
// Evaluation.

enum class SplitFilter { All, Train, Test };

inline SplitFilter parse_split_filter(std::string_view s) {
  if (s == "all") return SplitFilter::All;
  if (s == "train") return SplitFilter::Train;
  if (s == "test") return SplitFilter::Test;
  throw ConfigError("split must be all, train or test");
}

struct PairScore {
  std::string id;
  geometry::StructureKind kind = geometry::StructureKind::ActinFilament;
  metrics::MetricReport report;
};

struct StructureMeans {
  std::size_t count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
};

struct EvaluationReport {
  std::string source;
  std::vector<PairScore> pairs;
  std::map<std::string, StructureMeans> per_structure;
  StructureMeans overall;
};

inline StructureMeans mean_of(std::span<const PairScore* const> scores) {
  StructureMeans m;
  m.count = scores.size();
  if (scores.empty()) return m;
  for (const auto* s : scores) {
    m.psnr += s->report.psnr;
    m.ssim += s->report.ssim;
    m.ms_ssim += s->report.ms_ssim;
    m.l1 += s->report.l1;
    m.l2 += s->report.l2;
  }
  const auto n = static_cast<double>(scores.size());
  m.psnr /= n;
  m.ssim /= n;
  m.ms_ssim /= n;
  m.l1 /= n;
  m.l2 /= n;
  return m;
}

// Predictions are read from `<pred_dir>/<pair id>`; an empty pred_dir scores
// the noisy reconstructions, which is the baseline row.
inline EvaluationReport evaluate(const fs::path& dataset_root, const Manifest& manifest, const fs::path& pred_dir,
                                 SplitFilter split = SplitFilter::Test) {
  EvaluationReport rep;
  rep.source = pred_dir.empty() ? "noisy-baseline" : pred_dir.string();
  for (const auto& e : manifest.pairs) {
    if (split == SplitFilter::Train && !e.train) continue;
    if (split == SplitFilter::Test && e.train) continue;
    const auto f = PairFiles::of(e.id);
    const fs::path cand = pred_dir.empty() ? dataset_root / f.noisy : pred_dir / e.id;
    if (!io::exists(cand)) throw IoError("missing prediction for pair " + e.id + " at " + cand.string());
    const Image c = io::read_image(cand);
    const Image r = io::read_image(dataset_root / f.clean);
    if (c.height() != r.height() || c.width() != r.width())
      throw DimensionError("prediction for " + e.id + " has the wrong size");
    rep.pairs.push_back({e.id, e.kind, metrics::compare(c, r)});
  }
  std::map<std::string, std::vector<const PairScore*>> groups;
  std::vector<const PairScore*> all;
  for (const auto& s : rep.pairs) {
    groups[std::string(geometry::to_string(s.kind))].push_back(&s);
    all.push_back(&s);
  }
  for (const auto& [k, v] : groups) rep.per_structure[k] = mean_of(v);
  rep.overall = mean_of(all);
  return rep;
}

// Infinite PSNR is written as the string "inf".
inline json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

inline json to_json(const StructureMeans& m) {
  return {{"count", m.count},
          {"psnr", number_or_inf(m.psnr)},
          {"ssim", m.ssim},
          {"ms_ssim", number_or_inf(m.ms_ssim)},
          {"l1", m.l1},
          {"l2", m.l2}};
}

inline json to_json(const EvaluationReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"id", p.id},
                     {"kind", std::string(geometry::to_string(p.kind))},
                     {"psnr", number_or_inf(p.report.psnr)},
                     {"ssim", p.report.ssim},
                     {"ms_ssim", number_or_inf(p.report.ms_ssim)},
                     {"l1", p.report.l1},
                     {"l2", p.report.l2}});
  json per = json::object();
  for (const auto& [k, m] : r.per_structure) per[k] = to_json(m);
  return {{"source", r.source}, {"pairs", pairs}, {"per_structure", per}, {"overall", to_json(r.overall)}};
}

}  // namespace nanosim::pipeline
