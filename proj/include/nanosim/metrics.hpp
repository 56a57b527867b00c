#pragma once

// Image quality metrics and losses on max-normalized image pairs.

#include <nanosim/core.hpp>

#include <limits>

namespace nanosim::metrics {

inline void require_same_shape(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DimensionError("image pair shapes differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  if (a.empty()) throw DimensionError("empty image pair");
}

// Divides by the maximum; images with no positive value are returned as is.
inline Image max_normalize(const Image& img) {
  const double m = img.max();
  if (!(m > 0.0)) return img;
  Image out = img;
  for (auto& v : out.pixels()) v /= m;
  return out;
}

inline double l1(const Image& candidate, const Image& reference) {
  require_same_shape(candidate, reference);
  double s = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) s += std::abs(candidate.data()[i] - reference.data()[i]);
  return s / static_cast<double>(candidate.size());
}

inline double l2(const Image& candidate, const Image& reference) {
  require_same_shape(candidate, reference);
  double s = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double d = candidate.data()[i] - reference.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(candidate.size());
}

// Peak 1; identical images give +infinity.
inline double psnr(const Image& candidate, const Image& reference) {
  const double mse = l2(candidate, reference);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;

  double c1() const noexcept { return (k1 * data_range) * (k1 * data_range); }
  double c2() const noexcept { return (k2 * data_range) * (k2 * data_range); }
};

// Window-averaged SSIM (l*c*s) and contrast-structure (c*s) terms.
struct SsimTerms {
  double ssim = 0.0;
  double cs = 0.0;
};

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

namespace detail {

// Separable 'valid' filtering.
inline Image filter_valid(const Image& in, std::span<const double> k) {
  const std::size_t n = k.size();
  const std::size_t h = in.height() - n + 1, w = in.width() - n + 1;
  Image tmp(in.height(), w);
  for (std::size_t r = 0; r < in.height(); ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * in(r, c + i);
      tmp(r, c) = s;
    }
  Image out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * tmp(r + i, c);
      out(r, c) = s;
    }
  return out;
}

inline Image product(const Image& a, const Image& b) {
  Image out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

}  // namespace detail

inline SsimTerms ssim_terms(const Image& x, const Image& y, const SsimOptions& opt = {}) {
  require_same_shape(x, y);
  if (opt.window < 1 || static_cast<std::size_t>(opt.window) > x.height() ||
      static_cast<std::size_t>(opt.window) > x.width())
    throw DimensionError("SSIM window larger than the image");
  const auto k = gaussian_kernel(opt.window, opt.sigma);
  const Image mx = detail::filter_valid(x, k);
  const Image my = detail::filter_valid(y, k);
  const Image sxx = detail::filter_valid(detail::product(x, x), k);
  const Image syy = detail::filter_valid(detail::product(y, y), k);
  const Image sxy = detail::filter_valid(detail::product(x, y), k);
  const double c1 = opt.c1(), c2 = opt.c2();
  double sum_ssim = 0.0, sum_cs = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx.data()[i], uy = my.data()[i];
    const double vx = sxx.data()[i] - ux * ux;
    const double vy = syy.data()[i] - uy * uy;
    const double cov = sxy.data()[i] - ux * uy;
    const double lum = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
    const double cs = (2.0 * cov + c2) / (vx + vy + c2);
    sum_ssim += lum * cs;
    sum_cs += cs;
  }
  const auto n = static_cast<double>(mx.size());
  return {sum_ssim / n, sum_cs / n};
}

// Raw SSIM in [-1, 1].
inline double ssim(const Image& x, const Image& y, const SsimOptions& opt = {}) { return ssim_terms(x, y, opt).ssim; }

inline double ssim_loss(const Image& x, const Image& y, const SsimOptions& opt = {}) {
  return 1.0 - std::clamp(ssim(x, y, opt), 0.0, 1.0);
}

// 2x2 average pooling with decimation (odd trailing row/column dropped).
inline Image downsample2(const Image& in) {
  Image out(in.height() / 2, in.width() / 2);
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c)
      out(r, c) = 0.25 * (in(2 * r, 2 * c) + in(2 * r, 2 * c + 1) + in(2 * r + 1, 2 * c) + in(2 * r + 1, 2 * c + 1));
  return out;
}

inline constexpr int kDefaultMsSsimLevels = 5;

// Product of the contrast-structure terms at scales 1..M-1 and the full SSIM
// term (luminance included) at scale M, each raised to its weight; the
// result is clamped to [0, 1]. Empty weights means all ones.
inline double ms_ssim(const Image& x, const Image& y, int levels = kDefaultMsSsimLevels,
                      std::span<const double> weights = {}, const SsimOptions& opt = {}) {
  require_same_shape(x, y);
  if (levels < 1) throw ConfigError("MS-SSIM needs at least one level");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(levels))
    throw ConfigError("MS-SSIM weights must have one entry per level");
  const std::size_t need = static_cast<std::size_t>(opt.window) << (levels - 1);
  if (x.height() < need || x.width() < need)
    throw DimensionError("image too small for " + std::to_string(levels) + " MS-SSIM levels");
  auto raise = [](double v, double w) { return w == 1.0 ? v : std::pow(std::max(v, 0.0), w); };
  Image a = x, b = y;
  double value = 1.0;
  for (int m = 0; m < levels; ++m) {
    const SsimTerms t = ssim_terms(a, b, opt);
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(m)];
    if (m == levels - 1) {
      value *= raise(t.ssim, w);
    } else {
      value *= raise(t.cs, w);
      a = downsample2(a);
      b = downsample2(b);
    }
  }
  return std::clamp(value, 0.0, 1.0);
}

inline double ms_ssim_loss(const Image& x, const Image& y, int levels = kDefaultMsSsimLevels) {
  return 1.0 - ms_ssim(x, y, levels);
}

// (1 - beta) * loss_i + beta * loss_j.
inline double weighted_combo(double loss_i, double loss_j, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("combination weight must lie in [0, 1]");
  return (1.0 - beta) * loss_i + beta * loss_j;
}

inline constexpr double kBetaMsSsimL1 = 0.6;
inline constexpr double kBetaSsimL1 = 0.4;

struct MetricReport {
  double l1 = 0.0;
  double l2 = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  int ms_ssim_levels = 0;
};

// All metrics on a max-normalized pair. MS-SSIM uses as many levels (up to
// 5) as the image size allows.
inline MetricReport compare(const Image& candidate, const Image& reference, const SsimOptions& opt = {}) {
  const Image c = max_normalize(candidate);
  const Image r = max_normalize(reference);
  MetricReport rep;
  rep.l1 = l1(c, r);
  rep.l2 = l2(c, r);
  rep.psnr = psnr(c, r);
  rep.ssim = ssim(c, r, opt);
  int levels = kDefaultMsSsimLevels;
  const std::size_t side = std::min(c.height(), c.width());
  while (levels > 0 && side < (static_cast<std::size_t>(opt.window) << (levels - 1))) --levels;
  rep.ms_ssim_levels = levels;
  rep.ms_ssim = levels > 0 ? ms_ssim(c, r, levels, {}, opt) : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

}  // namespace nanosim::metrics
