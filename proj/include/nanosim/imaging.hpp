#pragma once

// Noise-free frame formation: every frame is the sum of PSF footprints of all
// emitters weighted by that frame's photon counts.

#include <nanosim/geometry.hpp>
#include <nanosim/optics.hpp>
#include <nanosim/photokinetics.hpp>

#include <Eigen/Dense>

namespace nanosim::imaging {

struct FieldOfView {
  std::size_t width = 64;
  std::size_t height = 64;
  double pixel_size_nm = 65.0;
  // Sample-plane coordinates (nm) of the centre of pixel (row 0, col 0).
  double origin_x_nm = 0.0;
  double origin_y_nm = 0.0;

  // Field centred on the scene origin.
  static FieldOfView centered(std::size_t width, std::size_t height, double pixel_size_nm) {
    return {width, height, pixel_size_nm, -0.5 * static_cast<double>(width - 1) * pixel_size_nm,
            -0.5 * static_cast<double>(height - 1) * pixel_size_nm};
  }

  double x_nm(std::size_t col) const noexcept { return origin_x_nm + static_cast<double>(col) * pixel_size_nm; }
  double y_nm(std::size_t row) const noexcept { return origin_y_nm + static_cast<double>(row) * pixel_size_nm; }

  friend bool operator==(const FieldOfView&, const FieldOfView&) = default;
};

struct ImageStack {
  FrameBuffer frames;
  optics::OpticsParams optics;
  FieldOfView fov;
  // Factor the raw photon-weighted sum was multiplied by (1 if not normalized).
  double intensity_scale = 1.0;

  std::size_t frame_count() const noexcept { return frames.frames(); }
  std::size_t height() const noexcept { return frames.height(); }
  std::size_t width() const noexcept { return frames.width(); }
  double pixel_size_nm() const noexcept { return fov.pixel_size_nm; }

  friend bool operator==(const ImageStack&, const ImageStack&) = default;
};

inline constexpr std::size_t kEmitterChunk = 512;

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Footprints of emitters [e0, e1) over all pixels, one row per emitter.
inline RowMat footprints(const geometry::EmitterSet& emitters, std::size_t e0, std::size_t e1,
                         const optics::PsfModel& psf, const FieldOfView& fov) {
  const double r_max = psf.grid().r_max_nm;
  const double r_max2 = r_max * r_max;
  RowMat k = RowMat::Zero(static_cast<Eigen::Index>(e1 - e0), static_cast<Eigen::Index>(fov.width * fov.height));
  for (std::size_t e = e0; e < e1; ++e) {
    const Vec3 p = emitters.positions[e];
    const double ex = p.x * 1e3, ey = p.y * 1e3, ez = p.z * 1e3;
    if (ez < psf.grid().z_min_nm || ez > psf.grid().z_max_nm)
      throw NumericalError("emitter depth " + std::to_string(ez) + " nm outside the PSF table");
    double* row = k.data() + (e - e0) * fov.width * fov.height;
    for (std::size_t y = 0; y < fov.height; ++y) {
      const double dy = fov.y_nm(y) - ey;
      if (dy * dy > r_max2) continue;
      for (std::size_t x = 0; x < fov.width; ++x) {
        const double dx = fov.x_nm(x) - ex;
        const double r2 = dx * dx + dy * dy;
        if (r2 <= r_max2) row[y * fov.width + x] = psf.interpolate(std::sqrt(r2), ez);
      }
    }
  }
  return k;
}

inline void accumulate(FrameBuffer& frames, const RowMat& k, const double* photons, std::size_t rows,
                       std::size_t n_frames) {
  Eigen::Map<RowMat> out(frames.data().data(), static_cast<Eigen::Index>(n_frames), k.cols());
  Eigen::Map<const RowMat> ph(photons, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_frames));
  out.noalias() += ph.transpose() * k;
}

inline ImageStack finish(FrameBuffer frames, const optics::PsfModel& psf, const FieldOfView& fov, bool normalize) {
  ImageStack stack{std::move(frames), psf.params(), fov, 1.0};
  stack.optics.pixel_size_nm = fov.pixel_size_nm;
  for (auto& v : stack.frames.data()) v = std::max(v, 0.0);
  if (normalize) {
    const double m = stack.frames.max();
    if (m > 0.0) {
      stack.intensity_scale = 1.0 / m;
      for (auto& v : stack.frames.data()) v *= stack.intensity_scale;
    }
  }
  return stack;
}

}  // namespace detail

// frames[f][p] = sum_e photons[e][f] * psf(pos_e - centre_p). With normalize
// the stack is scaled so its global maximum is 1.
inline ImageStack render_stack(const geometry::EmitterSet& emitters, const photokinetics::BlinkTrace& trace,
                               const optics::PsfModel& psf, const FieldOfView& fov, bool normalize = true) {
  if (trace.emitters() != emitters.size())
    throw DimensionError("trace has " + std::to_string(trace.emitters()) + " emitters, scene has " +
                         std::to_string(emitters.size()));
  if (fov.width == 0 || fov.height == 0) throw DimensionError("field of view is empty");
  const std::size_t n_frames = emitters.empty() ? std::max<std::size_t>(trace.frames(), 1) : trace.frames();
  FrameBuffer frames(n_frames, fov.height, fov.width);
  if (emitters.empty()) {
    warn("render_stack: empty emitter set, stack is all zeros");
    return detail::finish(std::move(frames), psf, fov, normalize);
  }
  for (std::size_t e0 = 0; e0 < emitters.size(); e0 += kEmitterChunk) {
    const std::size_t e1 = std::min(e0 + kEmitterChunk, emitters.size());
    const auto k = detail::footprints(emitters, e0, e1, psf, fov);
    detail::accumulate(frames, k, trace.data().data() + e0 * n_frames, e1 - e0, n_frames);
  }
  return detail::finish(std::move(frames), psf, fov, normalize);
}

// Same result as simulate_trace + render_stack, without materializing the
// whole trace (per-emitter seed streams make chunks independent).
inline ImageStack render_blinking(const geometry::EmitterSet& emitters, const photokinetics::KineticsParams& kinetics,
                                  std::uint64_t trace_seed, std::size_t n_frames, const optics::PsfModel& psf,
                                  const FieldOfView& fov, bool normalize = true) {
  if (n_frames < 1) throw ConfigError("stack needs at least one frame");
  if (fov.width == 0 || fov.height == 0) throw DimensionError("field of view is empty");
  FrameBuffer frames(n_frames, fov.height, fov.width);
  if (emitters.empty()) {
    warn("render_blinking: empty emitter set, stack is all zeros");
    return detail::finish(std::move(frames), psf, fov, normalize);
  }
  for (std::size_t e0 = 0; e0 < emitters.size(); e0 += kEmitterChunk) {
    const std::size_t e1 = std::min(e0 + kEmitterChunk, emitters.size());
    const auto trace = photokinetics::simulate_trace(e1 - e0, n_frames, kinetics, trace_seed, e0);
    const auto k = detail::footprints(emitters, e0, e1, psf, fov);
    detail::accumulate(frames, k, trace.data().data(), e1 - e0, n_frames);
  }
  return detail::finish(std::move(frames), psf, fov, normalize);
}

// Sum over the field of view of one emitter's footprint.
inline double footprint_sum(Vec3 position_um, const optics::PsfModel& psf, const FieldOfView& fov) {
  geometry::EmitterSet one;
  one.positions = {position_um};
  one.structure_id = {0};
  return detail::footprints(one, 0, 1, psf, fov).sum();
}

inline Image mean_image(const FrameBuffer& frames) {
  if (frames.frames() < 1) throw DimensionError("mean image of an empty stack");
  Image out(frames.height(), frames.width());
  auto acc = out.pixels();
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    auto f = frames.frame(t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
  }
  const double inv = 1.0 / static_cast<double>(frames.frames());
  for (auto& v : acc) v *= inv;
  return out;
}

inline Image mean_image(const ImageStack& stack) { return mean_image(stack.frames); }

}  // namespace nanosim::imaging
