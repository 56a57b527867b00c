// nanosim command-line tool.

#include <nanosim/pipeline.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace nanosim;
using nanosim::io::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out = ".";
  bool quiet = false;
};

pipeline::DatasetConfig base_config(const Globals& g) {
  pipeline::DatasetConfig c = g.config.empty() ? pipeline::DatasetConfig{} : pipeline::load_config(g.config);
  if (g.seed) c.master_seed = *g.seed;
  return c;
}

fs::path output_base(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out) / p;
}

// Accepts "name", "name.f32" or "name.json".
fs::path strip_extension(const std::string& s) {
  fs::path p(s);
  if (p.extension() == ".f32" || p.extension() == ".json") p.replace_extension();
  return p;
}

struct SimulateArgs {
  std::string kind = "actin";
  double na = 1.4;
  double pixel = 65.0;
  int tau_on = 1;
  int tau_off = 20;
  std::optional<std::size_t> frames;
  std::string name = "clean";
  bool no_normalize = false;
  bool dump_trace = false;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const auto c = base_config(g);
  const auto kind = geometry::parse_kind(a.kind);
  optics::OpticsParams o;
  o.na = a.na;
  o.wavelength_nm = c.wavelength_nm;
  o.pixel_size_nm = a.pixel;
  o.validate();
  const auto psf = optics::build_psf(o);
  const auto scene = geometry::generate_scene(geometry::StructureSpec::defaults(kind), pipeline::pair_bounds(c, a.pixel),
                                              derive_seed(c.master_seed, pipeline::kSceneStream));
  const photokinetics::KineticsParams k{static_cast<double>(a.tau_on), static_cast<double>(a.tau_off), 1.0};
  k.validate();
  const std::size_t frames = a.frames.value_or(c.frames);
  const std::uint64_t trace_seed = derive_seed(c.master_seed, pipeline::kTraceStream);
  const auto stack =
      imaging::render_blinking(scene, k, trace_seed, frames, psf, pipeline::pair_fov(c, a.pixel), !a.no_normalize);
  const fs::path base = output_base(g, a.name);
  json meta = {{"structure", a.kind},
               {"emitter_count", scene.size()},
               {"seeds", {{"master", c.master_seed}, {"scene", scene.seed}, {"trace", trace_seed}}},
               {"kinetics", {{"tau_on", a.tau_on}, {"tau_off", a.tau_off}}}};
  io::write_stack(base, stack, meta);
  {
    std::ostringstream table;
    geometry::write_emitter_table(table, scene);
    io::write_text_atomic(fs::path(base.string() + ".emitters.txt"), table.str());
  }
  if (a.dump_trace)
    io::write_trace(fs::path(base.string() + ".trace"),
                    photokinetics::simulate_trace(scene.size(), frames, k, trace_seed), meta);
  if (!g.quiet)
    std::cout << "wrote " << io::data_path(base).string() << " (" << frames << " x " << stack.height() << " x "
              << stack.width() << ", " << scene.size() << " emitters)\n";
  return 0;
}

struct NoiseArgs {
  std::string input;
  std::optional<std::string> model;
  std::optional<double> snr, background, variance;
  std::string name = "noisy";
};

int run_noise(const Globals& g, const NoiseArgs& a) {
  const auto c = base_config(g);
  noise::NoiseSpec spec = c.noise;
  if (a.model) spec.model = noise::parse_noise_model(*a.model);
  if (a.snr) spec.snr = *a.snr;
  if (a.background) spec.background = *a.background;
  if (a.variance) spec.variance = *a.variance;
  spec.seed = derive_seed(c.master_seed, pipeline::kNoiseStream);
  const auto in = io::read_stack(strip_extension(a.input));
  const auto out = noise::apply_noise(in, spec, g.workers);
  const fs::path base = output_base(g, a.name);
  io::write_stack(base, out, {{"noise", io::to_json(spec)}, {"source", a.input}});
  if (!g.quiet) std::cout << "wrote " << io::data_path(base).string() << " (" << noise::to_string(spec.model) << ")\n";
  return 0;
}

struct MusicalArgs {
  std::string input;
  std::optional<double> alpha;
  std::optional<int> subpixels, window;
  std::optional<std::string> threshold;
  double threshold_value = 0.0;
  std::string name = "nanoscopy";
};

int run_musical(const Globals& g, const MusicalArgs& a) {
  const auto c = base_config(g);
  const auto stack = io::read_stack(strip_extension(a.input));
  musical::MusicalParams p = c.musical;
  if (a.alpha) p.alpha = *a.alpha;
  if (a.subpixels) p.subpixels = *a.subpixels;
  if (a.window) p.window_size = *a.window;
  if (a.threshold) p.threshold = io::parse_threshold(*a.threshold, a.threshold_value);
  p.optics = stack.optics;
  p.optics.pixel_size_nm = stack.pixel_size_nm();
  p.workers = g.workers;
  const auto img = musical::reconstruct(stack, p, a.input);
  const fs::path base = output_base(g, a.name);
  io::write_nanoscopy(base, img);
  if (!g.quiet)
    std::cout << "wrote " << io::data_path(base).string() << " (" << img.pixels.height() << " x " << img.pixels.width()
              << ", window " << img.window_size << ")\n";
  return 0;
}

struct DatasetArgs {
  std::optional<std::size_t> pairs;
  bool raw_stacks = false;
};

int run_dataset(const Globals& g, const DatasetArgs& a) {
  auto c = base_config(g);
  if (a.pairs) c.pairs_per_structure = *a.pairs;
  if (a.raw_stacks) c.save_raw_stacks = true;
  c.validate();
  pipeline::DatasetOptions opt;
  opt.workers = g.workers;
  if (!g.quiet) opt.progress = [](const std::string& m) { std::cerr << m << '\n'; };
  const auto summary = pipeline::generate_dataset(c, g.out, opt);
  std::size_t train = 0;
  for (const auto& e : summary.manifest.pairs) train += e.train ? 1 : 0;
  if (!g.quiet)
    std::cout << "dataset in " << g.out << ": " << summary.manifest.pairs.size() << " pairs (" << summary.generated
              << " generated, " << summary.skipped << " present), " << train << " train / "
              << summary.manifest.pairs.size() - train << " test\n";
  return 0;
}

std::string fmt(double v, int prec = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

struct MetricsArgs {
  std::string a, b;
  bool as_json = false;
};

int run_metrics(const Globals&, const MetricsArgs& a) {
  const Image x = io::read_image(strip_extension(a.a));
  const Image y = io::read_image(strip_extension(a.b));
  const auto r = metrics::compare(x, y);
  if (a.as_json) {
    std::cout << json{{"l1", r.l1},
                      {"l2", r.l2},
                      {"psnr", pipeline::number_or_inf(r.psnr)},
                      {"ssim", r.ssim},
                      {"ms_ssim", pipeline::number_or_inf(r.ms_ssim)},
                      {"ms_ssim_levels", r.ms_ssim_levels}}
                     .dump(2)
              << '\n';
    return 0;
  }
  std::cout << "L1       " << fmt(r.l1) << "\nL2       " << fmt(r.l2) << "\nPSNR     " << fmt(r.psnr) << " dB\nSSIM     "
            << fmt(r.ssim) << "\nMS-SSIM  " << fmt(r.ms_ssim) << " (" << r.ms_ssim_levels << " levels)\n";
  return 0;
}

struct EvaluateArgs {
  std::string dataset;
  std::string predictions;
  std::string split = "test";
  std::string report = "evaluation.json";
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const fs::path root = a.dataset.empty() ? fs::path(g.out) : fs::path(a.dataset);
  const auto manifest = pipeline::read_manifest(root / pipeline::kManifestName);
  const auto rep = pipeline::evaluate(root, manifest, a.predictions, pipeline::parse_split_filter(a.split));
  const fs::path report = output_base(g, a.report);
  io::write_text_atomic(report, pipeline::to_json(rep).dump(2) + "\n");
  if (!g.quiet) {
    std::cout << "source: " << rep.source << "\n";
    std::cout << std::left << std::setw(14) << "structure" << std::setw(7) << "pairs" << std::setw(12) << "PSNR"
              << std::setw(12) << "SSIM" << "MS-SSIM\n";
    auto row = [](const std::string& name, const pipeline::StructureMeans& m) {
      std::cout << std::left << std::setw(14) << name << std::setw(7) << m.count << std::setw(12) << fmt(m.psnr, 5)
                << std::setw(12) << fmt(m.ssim, 5) << fmt(m.ms_ssim, 5) << '\n';
    };
    for (const auto& [k, m] : rep.per_structure) row(k, m);
    row("all", rep.overall);
    std::cout << "report: " << report.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation of paired noisy and clean MUSICAL nanoscopy images"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "Dataset configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("-s,--seed", g.seed, "Master seed");
  app.add_option("-j,--workers", g.workers, "Worker threads (0 = all cores)");
  app.add_option("-o,--out", g.out, "Output directory");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Render a clean blinking stack of one synthetic scene");
  s->add_option("--kind", sim.kind, "actin, mitochondria or vesicles");
  s->add_option("--na", sim.na, "Numerical aperture");
  s->add_option("--pixel", sim.pixel, "Pixel size in nm");
  s->add_option("--tau-on", sim.tau_on, "Mean on time in frames");
  s->add_option("--tau-off", sim.tau_off, "Mean off time in frames");
  s->add_option("--frames", sim.frames, "Number of frames");
  s->add_option("--name", sim.name, "Output base name");
  s->add_flag("--no-normalize", sim.no_normalize, "Keep raw photon-weighted intensities");
  s->add_flag("--trace", sim.dump_trace, "Also write the blinking trace");

  NoiseArgs na;
  auto* n = app.add_subcommand("noise", "Apply a noise model to a stack");
  n->add_option("input", na.input, "Input stack")->required();
  n->add_option("--model", na.model, "poisson, speckle or gaussian");
  n->add_option("--snr", na.snr, "Signal-to-background ratio (poisson)");
  n->add_option("--background", na.background, "Camera background level (poisson)");
  n->add_option("--variance", na.variance, "Relative noise variance (speckle, gaussian)");
  n->add_option("--name", na.name, "Output base name");

  MusicalArgs ma;
  auto* m = app.add_subcommand("musical", "Reconstruct a MUSICAL nanoscopy image from a stack");
  m->add_option("input", ma.input, "Input stack")->required();
  m->add_option("--alpha", ma.alpha, "Contrast exponent");
  m->add_option("--subpixels", ma.subpixels, "Subpixels per camera pixel");
  m->add_option("--window", ma.window, "Window size in pixels (odd)");
  m->add_option("--threshold", ma.threshold, "optimal, auto or fixed");
  m->add_option("--threshold-value", ma.threshold_value, "Level for the fixed threshold");
  m->add_option("--name", ma.name, "Output base name");

  DatasetArgs da;
  auto* d = app.add_subcommand("dataset", "Generate a paired dataset into the output directory");
  d->add_option("--pairs", da.pairs, "Pairs per structure");
  d->add_flag("--raw-stacks", da.raw_stacks, "Also keep the raw stacks");

  MetricsArgs me;
  auto* mt = app.add_subcommand("metrics", "Compare two images");
  mt->add_option("candidate", me.a, "Candidate image")->required();
  mt->add_option("reference", me.b, "Reference image")->required();
  mt->add_flag("--json", me.as_json, "Print JSON");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score predictions against the clean references of a dataset");
  ev->add_option("--dataset", ea.dataset, "Dataset directory (default: output directory)");
  ev->add_option("--predictions", ea.predictions, "Prediction directory (omit for the noisy baseline)");
  ev->add_option("--split", ea.split, "all, train or test")->check(CLI::IsMember({"all", "train", "test"}));
  ev->add_option("--report", ea.report, "Report file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ConfigError("").exit_code();
  }

  try {
    if (*s) return run_simulate(g, sim);
    if (*n) return run_noise(g, na);
    if (*m) return run_musical(g, ma);
    if (*d) return run_dataset(g, da);
    if (*mt) return run_metrics(g, me);
    if (*ev) return run_evaluate(g, ea);
  } catch (const nanosim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return IoError("").exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
