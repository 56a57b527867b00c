#pragma once

// Shared plumbing: error types, warning sink, seed derivation, small value
// types and the dense image containers used by every stage.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace nanosim {

// ---------------------------------------------------------------------------
// Errors. Each class maps onto a distinct CLI exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

// Wraps a failure from one pipeline stage with the stage name prepended.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(stage + ": " + cause.what()), stage_(std::move(stage)), code_(cause.exit_code()) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept override { return code_; }

 private:
  std::string stage_;
  int code_;
};

// ---------------------------------------------------------------------------
// Warnings go through a replaceable process-wide sink (stderr by default).

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}
}  // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(detail::warning_mutex());
  return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

// Collects warnings for the lifetime of the object; restores the previous
// sink on destruction.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture()
      : previous_(set_warning_sink([this](const std::string& m) { messages_.push_back(m); })) {}
  ~ScopedWarningCapture() { set_warning_sink(std::move(previous_)); }
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  std::vector<std::string> messages_;
  WarningSink previous_;
};

// ---------------------------------------------------------------------------
// Seeds. Streams are derived from (parent seed, counter) with SplitMix64 so a
// given stream is reproducible independent of how work is scheduled.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t counter) noexcept {
  return splitmix64(splitmix64(parent) ^ splitmix64(counter + 0x632BE59BD9B4E019ull));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) noexcept { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) noexcept { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) noexcept { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) noexcept { return s * a; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

inline constexpr double dot(Vec3 a, Vec3 b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline constexpr Vec3 cross(Vec3 a, Vec3 b) noexcept {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) noexcept { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) noexcept {
  const double n = norm(a);
  return n > 0.0 ? (1.0 / n) * a : Vec3{};
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr double length() const noexcept { return hi - lo; }
  constexpr bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  constexpr bool valid() const noexcept { return hi >= lo; }
  friend constexpr bool operator==(Interval, Interval) = default;
};

struct IntRange {
  int lo = 0;
  int hi = 0;

  constexpr bool valid() const noexcept { return hi >= lo; }
  friend constexpr bool operator==(IntRange, IntRange) = default;
};

// ---------------------------------------------------------------------------
// Row-major single image.

class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), data_(height * width, fill) {}
  Image(std::size_t height, std::size_t width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) throw DimensionError("image data size does not match dimensions");
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const noexcept { return data_[row * width_ + col]; }

  std::span<double> pixels() noexcept { return data_; }
  std::span<const double> pixels() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double max() const noexcept { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }
  double min() const noexcept { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

// T x H x W frames, contiguous, frame-major.
class FrameBuffer {
 public:
  FrameBuffer() = default;
  FrameBuffer(std::size_t frames, std::size_t height, std::size_t width, double fill = 0.0)
      : frames_(frames), height_(height), width_(width), data_(frames * height * width, fill) {}
  FrameBuffer(std::size_t frames, std::size_t height, std::size_t width, std::vector<double> data)
      : frames_(frames), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != frames_ * height_ * width_)
      throw DimensionError("frame buffer size does not match dimensions");
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t frame_size() const noexcept { return height_ * width_; }

  double& operator()(std::size_t t, std::size_t row, std::size_t col) noexcept {
    return data_[(t * height_ + row) * width_ + col];
  }
  double operator()(std::size_t t, std::size_t row, std::size_t col) const noexcept {
    return data_[(t * height_ + row) * width_ + col];
  }

  std::span<double> frame(std::size_t t) noexcept { return {data_.data() + t * frame_size(), frame_size()}; }
  std::span<const double> frame(std::size_t t) const noexcept {
    return {data_.data() + t * frame_size(), frame_size()};
  }
  Image frame_image(std::size_t t) const {
    auto f = frame(t);
    return Image(height_, width_, std::vector<double>(f.begin(), f.end()));
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double max() const noexcept { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

  friend bool operator==(const FrameBuffer&, const FrameBuffer&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Runs body(i) for i in [0, n) on up to `workers` threads. Work items are
// claimed dynamically; callers must write results into per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.

inline std::size_t default_workers() noexcept {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  if (workers == 0) workers = default_workers();
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace nanosim
