#pragma once

// On-disk array format: raw little-endian float32, C order, in `<base>.f32`,
// with a JSON sidecar `<base>.json` holding shape and metadata. Writes go to
// a temporary file first and are renamed into place.

#include <nanosim/musical.hpp>
#include <nanosim/noise.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace nanosim::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kFormatName = "nanosim-f32";
inline constexpr int kFormatVersion = 1;

struct RawArray {
  std::vector<std::size_t> shape;
  std::vector<float> data;
  json metadata = json::object();

  std::size_t element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

inline fs::path data_path(const fs::path& base) { return fs::path(base.string() + ".f32"); }
inline fs::path meta_path(const fs::path& base) { return fs::path(base.string() + ".json"); }

inline bool exists(const fs::path& base) { return fs::exists(data_path(base)) && fs::exists(meta_path(base)); }

// Writes bytes to `target` via a sibling temporary and rename.
inline void write_atomic(const fs::path& target, std::span<const char> bytes) {
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " + ec.message());
}

inline void write_text_atomic(const fs::path& target, const std::string& text) {
  write_atomic(target, std::span<const char>(text.data(), text.size()));
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_array(const fs::path& base, const RawArray& arr) {
  if (arr.data.size() != arr.element_count()) throw DimensionError("array data does not match its shape");
  std::vector<char> bytes(arr.data.size() * sizeof(float));
  for (std::size_t i = 0; i < arr.data.size(); ++i) {
    auto word = std::bit_cast<std::uint32_t>(arr.data[i]);
    if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
    std::memcpy(bytes.data() + i * sizeof(float), &word, sizeof(word));
  }
  json meta = arr.metadata;
  meta["format"] = kFormatName;
  meta["version"] = kFormatVersion;
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  meta["order"] = "C";
  meta["shape"] = arr.shape;
  write_atomic(data_path(base), bytes);
  write_text_atomic(meta_path(base), meta.dump(2) + "\n");
}

inline RawArray read_array(const fs::path& base) {
  RawArray arr;
  arr.metadata = read_json(meta_path(base));
  const auto& m = arr.metadata;
  if (m.value("format", "") != kFormatName) throw IoError(meta_path(base).string() + " is not a " + kFormatName + " sidecar");
  if (m.value("version", 0) != kFormatVersion) throw IoError("unsupported format version in " + meta_path(base).string());
  if (m.value("dtype", "") != "float32" || m.value("byte_order", "") != "little")
    throw IoError("unsupported dtype or byte order in " + meta_path(base).string());
  arr.shape = m.at("shape").get<std::vector<std::size_t>>();
  const std::string bytes = read_text(data_path(base));
  if (bytes.size() != arr.element_count() * sizeof(float))
    throw IoError(data_path(base).string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(arr.element_count() * sizeof(float)));
  arr.data.resize(arr.element_count());
  for (std::size_t i = 0; i < arr.data.size(); ++i) {
    std::uint32_t word;
    std::memcpy(&word, bytes.data() + i * sizeof(float), sizeof(word));
    if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
    arr.data[i] = std::bit_cast<float>(word);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Metadata serialization.

inline json to_json(const optics::OpticsParams& p) {
  return {{"na", p.na},
          {"wavelength_nm", p.wavelength_nm},
          {"pixel_size_nm", p.pixel_size_nm},
          {"n_sample", p.n_sample},
          {"n_immersion", p.n_immersion},
          {"n_immersion_design", p.n_immersion_design},
          {"n_coverslip", p.n_coverslip},
          {"n_coverslip_design", p.n_coverslip_design},
          {"coverslip_um", p.coverslip_um},
          {"coverslip_design_um", p.coverslip_design_um},
          {"working_distance_um", p.working_distance_um},
          {"working_distance_design_um", p.working_distance_design_um}};
}

inline optics::OpticsParams optics_from_json(const json& j) {
  optics::OpticsParams p;
  p.na = j.value("na", p.na);
  p.wavelength_nm = j.value("wavelength_nm", p.wavelength_nm);
  p.pixel_size_nm = j.value("pixel_size_nm", p.pixel_size_nm);
  p.n_sample = j.value("n_sample", p.n_sample);
  p.n_immersion = j.value("n_immersion", p.n_immersion);
  p.n_immersion_design = j.value("n_immersion_design", p.n_immersion_design);
  p.n_coverslip = j.value("n_coverslip", p.n_coverslip);
  p.n_coverslip_design = j.value("n_coverslip_design", p.n_coverslip_design);
  p.coverslip_um = j.value("coverslip_um", p.coverslip_um);
  p.coverslip_design_um = j.value("coverslip_design_um", p.coverslip_design_um);
  p.working_distance_um = j.value("working_distance_um", p.working_distance_um);
  p.working_distance_design_um = j.value("working_distance_design_um", p.working_distance_design_um);
  return p;
}

inline json to_json(const imaging::FieldOfView& f) {
  return {{"width", f.width},
          {"height", f.height},
          {"pixel_size_nm", f.pixel_size_nm},
          {"origin_x_nm", f.origin_x_nm},
          {"origin_y_nm", f.origin_y_nm}};
}

inline imaging::FieldOfView fov_from_json(const json& j) {
  imaging::FieldOfView f;
  f.width = j.at("width").get<std::size_t>();
  f.height = j.at("height").get<std::size_t>();
  f.pixel_size_nm = j.at("pixel_size_nm").get<double>();
  f.origin_x_nm = j.value("origin_x_nm", 0.0);
  f.origin_y_nm = j.value("origin_y_nm", 0.0);
  return f;
}

inline json to_json(const noise::NoiseSpec& n) {
  return {{"model", std::string(noise::to_string(n.model))},
          {"snr", n.snr},
          {"background", n.background},
          {"variance", n.variance},
          {"seed", n.seed}};
}

inline noise::NoiseSpec noise_from_json(const json& j) {
  noise::NoiseSpec n;
  n.model = noise::parse_noise_model(j.value("model", std::string("poisson")));
  n.snr = j.value("snr", n.snr);
  n.background = j.value("background", n.background);
  n.variance = j.value("variance", n.variance);
  n.seed = j.value("seed", n.seed);
  return n;
}

inline std::string threshold_name(musical::Threshold t) {
  switch (t.mode) {
    case musical::Threshold::Mode::Auto: return "auto";
    case musical::Threshold::Mode::Fixed: return "fixed";
    case musical::Threshold::Mode::OptimalHard: return "optimal";
  }
  return "unknown";
}

inline musical::Threshold parse_threshold(std::string_view mode, double value = 0.0) {
  if (mode == "auto") return musical::Threshold::automatic();
  if (mode == "optimal") return musical::Threshold::optimal_hard();
  if (mode == "fixed") return musical::Threshold::fixed(value);
  throw ConfigError("unknown threshold mode '" + std::string(mode) + "' (expected auto, optimal or fixed)");
}

inline json to_json(const musical::MusicalParams& p) {
  return {{"alpha", p.alpha},
          {"subpixels", p.subpixels},
          {"window_size", p.window_size},
          {"threshold", threshold_name(p.threshold)},
          {"threshold_value", p.threshold.value},
          {"optics", to_json(p.optics)}};
}

// ---------------------------------------------------------------------------

inline RawArray to_array(const imaging::ImageStack& stack, json extra = json::object()) {
  RawArray arr;
  arr.shape = {stack.frame_count(), stack.height(), stack.width()};
  arr.data.assign(stack.frames.data().begin(), stack.frames.data().end());
  arr.metadata = std::move(extra);
  arr.metadata["kind"] = "stack";
  arr.metadata["pixel_size_nm"] = stack.pixel_size_nm();
  arr.metadata["optics"] = to_json(stack.optics);
  arr.metadata["fov"] = to_json(stack.fov);
  arr.metadata["intensity_scale"] = stack.intensity_scale;
  return arr;
}

inline void write_stack(const fs::path& base, const imaging::ImageStack& stack, json extra = json::object()) {
  write_array(base, to_array(stack, std::move(extra)));
}

// Accepts 3D arrays and 2D arrays (a single frame).
inline imaging::ImageStack read_stack(const fs::path& base) {
  RawArray arr = read_array(base);
  std::size_t t = 1, h = 0, w = 0;
  if (arr.shape.size() == 3) {
    t = arr.shape[0];
    h = arr.shape[1];
    w = arr.shape[2];
  } else if (arr.shape.size() == 2) {
    h = arr.shape[0];
    w = arr.shape[1];
  } else {
    throw DimensionError("stack file must be 2D or 3D");
  }
  imaging::ImageStack stack;
  stack.frames = FrameBuffer(t, h, w, std::vector<double>(arr.data.begin(), arr.data.end()));
  const auto& m = arr.metadata;
  if (m.contains("optics")) stack.optics = optics_from_json(m["optics"]);
  if (m.contains("pixel_size_nm")) stack.optics.pixel_size_nm = m["pixel_size_nm"].get<double>();
  stack.fov = m.contains("fov") ? fov_from_json(m["fov"])
                                : imaging::FieldOfView::centered(w, h, stack.optics.pixel_size_nm);
  if (stack.fov.width != w || stack.fov.height != h) throw DimensionError("field of view metadata disagrees with shape");
  stack.intensity_scale = m.value("intensity_scale", 1.0);
  return stack;
}

inline RawArray to_array(const Image& img, json extra = json::object()) {
  RawArray arr;
  arr.shape = {img.height(), img.width()};
  arr.data.assign(img.data().begin(), img.data().end());
  arr.metadata = std::move(extra);
  if (!arr.metadata.contains("kind")) arr.metadata["kind"] = "image";
  return arr;
}

inline void write_image(const fs::path& base, const Image& img, json extra = json::object()) {
  write_array(base, to_array(img, std::move(extra)));
}

inline Image read_image(const fs::path& base) {
  RawArray arr = read_array(base);
  if (arr.shape.size() == 3 && arr.shape[0] == 1) arr.shape.erase(arr.shape.begin());
  if (arr.shape.size() != 2) throw DimensionError(base.string() + " is not a single image");
  return Image(arr.shape[0], arr.shape[1], std::vector<double>(arr.data.begin(), arr.data.end()));
}

inline void write_nanoscopy(const fs::path& base, const musical::NanoscopyImage& img, json extra = json::object()) {
  extra["kind"] = "nanoscopy";
  extra["musical"] = to_json(img.params);
  extra["window_size_used"] = img.window_size;
  extra["source_id"] = img.source_id;
  extra["capped_points"] = img.capped_points;
  extra["degenerate_windows"] = img.degenerate_windows;
  extra["exponent_convention"] = std::string(musical::NanoscopyImage::kExponentConvention);
  extra["pixel_size_nm"] = img.params.optics.pixel_size_nm / img.params.subpixels;
  write_image(base, img.pixels, std::move(extra));
}

inline void write_trace(const fs::path& base, const photokinetics::BlinkTrace& trace, json extra = json::object()) {
  RawArray arr;
  arr.shape = {trace.emitters(), trace.frames()};
  arr.data.assign(trace.data().begin(), trace.data().end());
  arr.metadata = std::move(extra);
  arr.metadata["kind"] = "trace";
  write_array(base, arr);
}

inline void write_psf_table(const fs::path& base, const optics::PsfModel& psf) {
  RawArray arr;
  arr.shape = {psf.grid().nz(), psf.grid().nr()};
  arr.data.assign(psf.table().begin(), psf.table().end());
  arr.metadata = {{"kind", "psf_table"},
                  {"optics", to_json(psf.params())},
                  {"r_max_nm", psf.grid().r_max_nm},
                  {"dr_nm", psf.grid().dr_nm},
                  {"z_min_nm", psf.grid().z_min_nm},
                  {"z_max_nm", psf.grid().z_max_nm},
                  {"dz_nm", psf.grid().dz_nm},
                  {"peak_raw", psf.peak_raw()},
                  {"in_focus_integral_nm2", psf.in_focus_integral_nm2()}};
  write_array(base, arr);
}

}  // namespace nanosim::io
