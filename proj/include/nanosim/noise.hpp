#pragma once

// Camera noise engines. Every frame draws from its own seed stream, so
// results do not depend on the number of worker threads.

#include <nanosim/imaging.hpp>

#include <string_view>

namespace nanosim::noise {

enum class NoiseModel { PoissonCamera, Speckle, Gaussian };

inline std::string_view to_string(NoiseModel m) noexcept {
  switch (m) {
    case NoiseModel::PoissonCamera: return "poisson";
    case NoiseModel::Speckle: return "speckle";
    case NoiseModel::Gaussian: return "gaussian";
  }
  return "unknown";
}

inline NoiseModel parse_noise_model(std::string_view name) {
  for (auto m : {NoiseModel::PoissonCamera, NoiseModel::Speckle, NoiseModel::Gaussian})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown noise model '" + std::string(name) + "'");
}

struct NoiseSpec {
  NoiseModel model = NoiseModel::PoissonCamera;
  double snr = 3.0;
  double background = 100.0;
  double variance = 0.1;  // relative to max intensity (speckle / gaussian)
  std::uint64_t seed = 0;

  void validate() const {
    switch (model) {
      case NoiseModel::PoissonCamera:
        if (!(snr > 1.0)) throw ConfigError("Poisson camera model needs SNR > 1");
        if (!(background > 0.0)) throw ConfigError("camera background must be positive");
        break;
      case NoiseModel::Speckle:
      case NoiseModel::Gaussian:
        if (!(variance > 0.0)) throw ConfigError("noise variance must be positive");
        break;
    }
  }
};

inline constexpr double kNormalizationTol = 1e-6;

namespace detail {

template <typename PixelFn>
imaging::ImageStack per_frame(const imaging::ImageStack& in, std::uint64_t seed, std::size_t workers, PixelFn&& fn) {
  imaging::ImageStack out = in;
  parallel_for(in.frame_count(), workers, [&](std::size_t t) {
    Rng rng = make_rng(seed, t);
    auto src = in.frames.frame(t);
    auto dst = out.frames.frame(t);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i], rng);
  });
  return out;
}

}  // namespace detail

// I_hat = b (SNR - 1) I + b, then each pixel ~ Poisson(I_hat).
inline imaging::ImageStack apply_poisson_camera(const imaging::ImageStack& stack, double snr, double background,
                                                std::uint64_t seed, std::size_t workers = 1) {
  if (!(snr >= 1.0)) throw ConfigError("Poisson camera model needs SNR >= 1");
  if (!(background > 0.0)) throw ConfigError("camera background must be positive");
  const double peak = stack.frames.max();
  if (std::abs(peak - 1.0) > kNormalizationTol)
    throw ConfigError("Poisson camera model expects a stack scaled to [0, 1] (max is " + std::to_string(peak) +
                      "); normalize the stack first");
  const double gain = background * (snr - 1.0);
  return detail::per_frame(stack, seed, workers, [&](double v, Rng& rng) {
    std::poisson_distribution<long long> d(gain * v + background);
    return static_cast<double>(d(rng));
  });
}

// out = I (1 + n), n ~ N(0, variance); negative values clamped to 0.
inline imaging::ImageStack apply_speckle(const imaging::ImageStack& stack, double variance, std::uint64_t seed,
                                         std::size_t workers = 1) {
  if (!(variance > 0.0)) throw ConfigError("speckle variance must be positive");
  const double sd = std::sqrt(variance);
  return detail::per_frame(stack, seed, workers, [&](double v, Rng& rng) {
    std::normal_distribution<double> n(0.0, sd);
    return std::max(0.0, v + v * n(rng));
  });
}

// out = I + n, n ~ N(0, variance * max(I)^2); negative values clamped to 0.
inline imaging::ImageStack apply_gaussian(const imaging::ImageStack& stack, double variance, std::uint64_t seed,
                                          std::size_t workers = 1) {
  if (variance < 0.0) throw ConfigError("gaussian variance must be nonnegative");
  if (variance == 0.0) return stack;
  const double sd = std::sqrt(variance) * stack.frames.max();
  return detail::per_frame(stack, seed, workers, [&](double v, Rng& rng) {
    std::normal_distribution<double> n(0.0, sd);
    return std::max(0.0, v + n(rng));
  });
}

inline imaging::ImageStack apply_noise(const imaging::ImageStack& stack, const NoiseSpec& spec,
                                       std::size_t workers = 1) {
  spec.validate();
  switch (spec.model) {
    case NoiseModel::PoissonCamera: return apply_poisson_camera(stack, spec.snr, spec.background, spec.seed, workers);
    case NoiseModel::Speckle: return apply_speckle(stack, spec.variance, spec.seed, workers);
    case NoiseModel::Gaussian: return apply_gaussian(stack, spec.variance, spec.seed, workers);
  }
  throw ConfigError("unknown noise model");
}

// Power SNR implied by a relative noise variance (variance 0.1 -> SNR 10).
inline double snr_from_relative_variance(double variance) { return 1.0 / variance; }

// Linearly interpolated percentile, q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DimensionError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline constexpr double kBackgroundPercentile = 0.05;

// Peak of the temporal-mean image over its 5th percentile.
inline double measure_sbr(const FrameBuffer& frames) {
  const Image mean = imaging::mean_image(frames);
  const double background = percentile(mean.data(), kBackgroundPercentile);
  if (!(background > 0.0)) throw NumericalError("background level is not positive; SBR undefined");
  return mean.max() / background;
}

inline double measure_sbr(const imaging::ImageStack& stack) { return measure_sbr(stack.frames); }

}  // namespace nanosim::noise
