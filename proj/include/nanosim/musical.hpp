#pragma once

// MUSICAL reconstruction: per-window eigenimages of the image stack, a hard
// split into signal and noise subspaces, and the projection-ratio indicator
// evaluated on a subpixel grid.

#include <nanosim/imaging.hpp>

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace nanosim::musical {

// Auto: largest drop in log singular value. Fixed: user level.
// OptimalHard: Gavish-Donoho hard threshold omega(beta) * median singular
// value, which adapts to the noise level of each window.
struct Threshold {
  enum class Mode { Auto, Fixed, OptimalHard };
  Mode mode = Mode::OptimalHard;
  double value = 0.0;

  static constexpr Threshold automatic() noexcept { return {Mode::Auto, 0.0}; }
  static constexpr Threshold fixed(double v) noexcept { return {Mode::Fixed, v}; }
  static constexpr Threshold optimal_hard() noexcept { return {Mode::OptimalHard, 0.0}; }

  friend bool operator==(const Threshold&, const Threshold&) = default;
};

struct MusicalParams {
  double alpha = 4.0;
  int subpixels = 10;
  int window_size = 0;  // 0 selects the default from the PSF width
  Threshold threshold = Threshold::optimal_hard();
  optics::OpticsParams optics;
  std::size_t workers = 1;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (subpixels < 1) throw ConfigError("subpixelation must be at least 1");
    if (window_size != 0 && (window_size < 3 || window_size % 2 == 0))
      throw ConfigError("window size must be odd and at least 3");
    optics.validate();
  }
};

// Eigenimages are the columns of `eigenimages`, sorted by decreasing value.
// `singular_values` holds the min(w^2, T) singular values of the patch
// matrix; the remaining eigenimages span its null space.
struct SubspaceSplit {
  Eigen::MatrixXd eigenimages;
  std::vector<double> singular_values;
  std::size_t signal_count = 0;

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(eigenimages.rows()); }
};

// Relative eigenvalue level below which a Gram eigenvalue counts as zero.
inline constexpr double kDegenerateEigenvalue = 1e-14;

// Eigen-decomposition of a w^2 x w^2 Gram matrix A A^T built from T frames.
inline SubspaceSplit decompose_gram(const Eigen::MatrixXd& gram, std::size_t frames) {
  if (gram.rows() < 1 || gram.rows() != gram.cols()) throw DimensionError("Gram matrix must be square and nonempty");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("window eigen-decomposition failed");
  const Eigen::Index n = gram.rows();
  SubspaceSplit split;
  split.eigenimages = es.eigenvectors().rowwise().reverse();
  const std::size_t rank_bound = std::min<std::size_t>(static_cast<std::size_t>(n), frames);
  const double top = std::max(es.eigenvalues()[n - 1], 0.0);
  split.singular_values.resize(rank_bound);
  for (std::size_t i = 0; i < rank_bound; ++i) {
    const double lambda = es.eigenvalues()[n - 1 - static_cast<Eigen::Index>(i)];
    split.singular_values[i] = lambda > kDegenerateEigenvalue * static_cast<double>(n) * top ? std::sqrt(lambda) : 0.0;
  }
  return split;
}

// patches: w^2 x T matrix, one column per frame. No temporal mean removal.
inline SubspaceSplit decompose_window(const Eigen::MatrixXd& patches) {
  if (patches.cols() < 2) throw DimensionError("window decomposition needs at least 2 frames");
  if (patches.rows() < 1) throw DimensionError("window has no pixels");
  return decompose_gram(patches * patches.transpose(), static_cast<std::size_t>(patches.cols()));
}

// Approximation of the optimal hard-threshold coefficient for unknown noise
// level, aspect ratio beta in (0, 1].
inline double optimal_hard_coefficient(double beta) noexcept {
  return 0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
}

namespace detail {

inline double median_of(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

inline std::size_t select_signal_dimension(std::span<const double> values, Threshold threshold, bool& degenerate,
                                           double aspect_ratio = 1.0) {
  const std::size_t n = values.size();
  if (n < 2) throw ConfigError("signal dimension selection needs at least 2 singular values");
  degenerate = std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
  if (degenerate) return 1;
  if (threshold.mode == Threshold::Mode::Fixed) {
    const auto k = static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [&](double v) { return v >= threshold.value; }));
    return std::clamp<std::size_t>(k, 1, n - 1);
  }
  if (threshold.mode == Threshold::Mode::OptimalHard) {
    const double level = optimal_hard_coefficient(std::clamp(aspect_ratio, 1e-6, 1.0)) * median_of(values);
    const auto k = static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [&](double v) { return v > level; }));
    return std::clamp<std::size_t>(k, 1, n - 1);
  }
  auto log_of = [](double v) { return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity(); };
  std::size_t best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < n; ++i) {
    if (!(values[i - 1] > 0.0)) break;  // gaps between zeros are undefined
    const double gap = log_of(values[i - 1]) - log_of(values[i]);
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

// Auto: largest drop in log singular value (first one on ties);
// Fixed(v): number of values >= v; OptimalHard: values above
// omega(aspect_ratio) * median. Result clamped to [1, n-1].
inline std::size_t select_signal_dimension(std::span<const double> values, Threshold threshold,
                                           double aspect_ratio = 1.0) {
  bool degenerate = false;
  const std::size_t k = detail::select_signal_dimension(values, threshold, degenerate, aspect_ratio);
  if (degenerate) warn("select_signal_dimension: all singular values equal, using k = 1");
  return k;
}

inline constexpr double kNoiseFloor = 1e-12;

struct IndicatorValue {
  double value = 0.0;
  bool capped = false;
};

// (|P_S g| / |P_N g|)^alpha for the normalized test vector g; the noise
// projection is floored at kNoiseFloor.
inline IndicatorValue indicator_detail(const Eigen::VectorXd& test_psf, const SubspaceSplit& split, double alpha) {
  if (static_cast<std::size_t>(test_psf.size()) != split.dimension())
    throw DimensionError("test PSF length does not match the window");
  if (split.signal_count < 1 || split.signal_count >= split.dimension())
    throw ConfigError("signal subspace dimension out of range");
  const double gnorm = test_psf.norm();
  if (!(gnorm > 0.0)) throw NumericalError("test PSF vector is zero");
  const Eigen::VectorXd coeff = split.eigenimages.transpose() * (test_psf / gnorm);
  const auto k = static_cast<Eigen::Index>(split.signal_count);
  const double ps = coeff.head(k).norm();
  const double pn = coeff.tail(coeff.size() - k).norm();
  const bool capped = pn < kNoiseFloor;
  return {std::pow(ps / std::max(pn, kNoiseFloor), alpha), capped};
}

inline double indicator(const Eigen::VectorXd& test_psf, const SubspaceSplit& split, double alpha) {
  return indicator_detail(test_psf, split, alpha).value;
}

// Projection norms of a unit vector onto both subspaces.
inline std::pair<double, double> projection_norms(const Eigen::VectorXd& g, const SubspaceSplit& split) {
  const Eigen::VectorXd coeff = split.eigenimages.transpose() * g;
  const auto k = static_cast<Eigen::Index>(split.signal_count);
  return {coeff.head(k).norm(), coeff.tail(coeff.size() - k).norm()};
}

// ---------------------------------------------------------------------------

struct NanoscopyImage {
  Image pixels;  // (H * subpixels) x (W * subpixels)
  MusicalParams params;
  int window_size = 0;
  std::string source_id;
  std::size_t capped_points = 0;
  std::size_t degenerate_windows = 0;
  // The indicator is (norm ratio)^alpha; (squared-norm ratio)^a equals alpha = 2a.
  static constexpr std::string_view kExponentConvention = "norm_ratio";
};

// Smallest odd w with w * pixel >= 2 * in-focus lateral FWHM.
inline int default_window_size(const optics::PsfModel& psf, double pixel_size_nm) {
  const double fwhm = psf.lateral_fwhm_nm(0.0);
  int w = static_cast<int>(std::ceil(2.0 * fwhm / pixel_size_nm));
  if (w % 2 == 0) ++w;
  return std::max(w, 3);
}

namespace detail {

// Temporal correlations sum_t f_t(p) f_t(p + d) for every pixel p and every
// offset d = (dr, dc) with 0 <= dr < w, |dc| < w.
class PairCorrelations {
 public:
  PairCorrelations(const FrameBuffer& frames, int w) : h_(frames.height()), wd_(frames.width()), w_(w) {
    const std::size_t n_off = static_cast<std::size_t>(w) * static_cast<std::size_t>(2 * w - 1);
    data_.assign(n_off * h_ * wd_, 0.0);
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      auto f = frames.frame(t);
      for (int dr = 0; dr < w; ++dr)
        for (int dc = -(w - 1); dc <= w - 1; ++dc) {
          double* out = data_.data() + offset_index(dr, dc) * h_ * wd_;
          for (std::size_t r = 0; r + static_cast<std::size_t>(dr) < h_; ++r) {
            const std::size_t c0 = dc < 0 ? static_cast<std::size_t>(-dc) : 0;
            const std::size_t c1 = dc > 0 ? wd_ - static_cast<std::size_t>(dc) : wd_;
            const double* a = f.data() + r * wd_;
            const double* b = f.data() + (r + static_cast<std::size_t>(dr)) * wd_;
            double* o = out + r * wd_;
            for (std::size_t c = c0; c < c1; ++c) o[c] += a[c] * b[c + static_cast<std::ptrdiff_t>(dc)];
          }
        }
    }
  }

  // sum_t f_t(r1, c1) f_t(r2, c2), both inside the image and within w.
  double at(std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2) const noexcept {
    if (r2 < r1 || (r2 == r1 && c2 < c1)) {
      std::swap(r1, r2);
      std::swap(c1, c2);
    }
    const int dr = static_cast<int>(r2 - r1);
    const int dc = static_cast<int>(c2) - static_cast<int>(c1);
    return data_[offset_index(dr, dc) * h_ * wd_ + r1 * wd_ + c1];
  }

 private:
  std::size_t offset_index(int dr, int dc) const noexcept {
    return static_cast<std::size_t>(dr) * static_cast<std::size_t>(2 * w_ - 1) + static_cast<std::size_t>(dc + w_ - 1);
  }

  std::size_t h_, wd_;
  int w_;
  std::vector<double> data_;
};

inline std::size_t window_origin(std::size_t centre, std::size_t extent, int w) {
  const auto half = static_cast<std::ptrdiff_t>((w - 1) / 2);
  const auto hi = static_cast<std::ptrdiff_t>(extent) - w;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(centre) - half, 0, hi));
}

}  // namespace detail

// Test-point PSF vectors (unit columns, one per subpixel of the central pixel)
// for a central pixel at (orow, ocol) inside the window.
inline Eigen::MatrixXd test_psf_matrix(const optics::PsfModel& psf, double pixel_nm, int w, int subpixels, int orow,
                                       int ocol) {
  const int s = subpixels;
  Eigen::MatrixXd g(w * w, s * s);
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) {
      const double ty = (orow + (a + 0.5) / s - 0.5) * pixel_nm;
      const double tx = (ocol + (b + 0.5) / s - 0.5) * pixel_nm;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double r = std::hypot(i * pixel_nm - ty, j * pixel_nm - tx);
          g(i * w + j, a * s + b) = r <= psf.grid().r_max_nm ? psf.interpolate(r, 0.0) : 0.0;
        }
      const double n = g.col(a * s + b).norm();
      if (n > 0.0) g.col(a * s + b) /= n;
    }
  return g;
}

inline NanoscopyImage reconstruct(const imaging::ImageStack& stack, const MusicalParams& params,
                                  const optics::PsfModel& psf, std::string source_id = {}) {
  params.validate();
  if (stack.frame_count() < 2) throw DimensionError("MUSICAL needs at least 2 frames");
  const auto& so = stack.optics;
  const auto& po = params.optics;
  if (std::abs(so.na - po.na) > 1e-9 || std::abs(so.wavelength_nm - po.wavelength_nm) > 1e-9 ||
      std::abs(stack.pixel_size_nm() - po.pixel_size_nm) > 1e-9)
    throw ConfigError("stack optics metadata (NA, wavelength, pixel size) disagree with MUSICAL parameters");

  const double pixel = po.pixel_size_nm;
  const int w = params.window_size != 0 ? params.window_size : default_window_size(psf, pixel);
  const std::size_t H = stack.height(), W = stack.width();
  if (static_cast<std::size_t>(w) > H || static_cast<std::size_t>(w) > W)
    throw DimensionError("window of " + std::to_string(w) + " pixels is larger than the image");
  const int s = params.subpixels;
  const std::size_t w2 = static_cast<std::size_t>(w) * static_cast<std::size_t>(w);

  // One test matrix per possible position of the central pixel in its window.
  std::vector<Eigen::MatrixXd> tests(w2);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) tests[static_cast<std::size_t>(i * w + j)] = test_psf_matrix(psf, pixel, w, s, i, j);

  const detail::PairCorrelations corr(stack.frames, w);
  NanoscopyImage out;
  out.pixels = Image(H * static_cast<std::size_t>(s), W * static_cast<std::size_t>(s));
  out.params = params;
  out.window_size = w;
  out.source_id = std::move(source_id);

  const double aspect = static_cast<double>(std::min(w2, stack.frame_count())) /
                        static_cast<double>(std::max(w2, stack.frame_count()));
  std::vector<std::size_t> capped(H, 0), degenerate(H, 0);
  parallel_for(H, params.workers, [&](std::size_t pr) {
    Eigen::MatrixXd gram(static_cast<Eigen::Index>(w2), static_cast<Eigen::Index>(w2));
    const std::size_t r0 = detail::window_origin(pr, H, w);
    for (std::size_t pc = 0; pc < W; ++pc) {
      const std::size_t c0 = detail::window_origin(pc, W, w);
      for (std::size_t a = 0; a < w2; ++a)
        for (std::size_t b = a; b < w2; ++b) {
          const double v = corr.at(r0 + a / w, c0 + a % w, r0 + b / w, c0 + b % w);
          gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
          gram(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }
      SubspaceSplit split = decompose_gram(gram, stack.frame_count());
      bool deg = false;
      split.signal_count = detail::select_signal_dimension(split.singular_values, params.threshold, deg, aspect);
      degenerate[pr] += deg ? 1 : 0;

      const auto& g = tests[(pr - r0) * static_cast<std::size_t>(w) + (pc - c0)];
      const Eigen::MatrixXd coeff = split.eigenimages.transpose() * g;
      const auto k = static_cast<Eigen::Index>(split.signal_count);
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) {
          const auto col = coeff.col(a * s + b);
          const double ps = col.head(k).norm();
          const double pn = col.tail(col.size() - k).norm();
          if (pn < kNoiseFloor) ++capped[pr];
          out.pixels(pr * static_cast<std::size_t>(s) + static_cast<std::size_t>(a),
                     pc * static_cast<std::size_t>(s) + static_cast<std::size_t>(b)) =
              std::pow(ps / std::max(pn, kNoiseFloor), params.alpha);
        }
    }
  });
  for (std::size_t r = 0; r < H; ++r) {
    out.capped_points += capped[r];
    out.degenerate_windows += degenerate[r];
  }
  if (out.degenerate_windows > 0)
    warn("MUSICAL: " + std::to_string(out.degenerate_windows) + " windows had all-equal singular values (k = 1)");
  return out;
}

inline NanoscopyImage reconstruct(const imaging::ImageStack& stack, const MusicalParams& params,
                                  std::string source_id = {}) {
  params.validate();
  return reconstruct(stack, params, optics::build_psf(params.optics), std::move(source_id));
}

}  // namespace nanosim::musical
