#pragma once

// Two-state (on/off) blinking with exponential dwell times, integrated over
// frame exposures. Time is in frame units.

#include <nanosim/core.hpp>

namespace nanosim::photokinetics {

struct KineticsParams {
  double tau_on = 1.0;
  double tau_off = 1.0;
  double photon_rate = 1.0;  // photons per frame while on

  void validate() const {
    if (!(tau_on > 0.0) || !(tau_off > 0.0)) throw ConfigError("tau_on and tau_off must be positive");
    if (!(photon_rate > 0.0)) throw ConfigError("photon rate must be positive");
  }
};

inline double duty_cycle(const KineticsParams& p) {
  p.validate();
  return p.tau_on / (p.tau_on + p.tau_off);
}

// Emitters x frames photon counts, row-major.
class BlinkTrace {
 public:
  BlinkTrace() = default;
  BlinkTrace(std::size_t emitters, std::size_t frames)
      : emitters_(emitters), frames_(frames), photons_(emitters * frames, 0.0) {}

  std::size_t emitters() const noexcept { return emitters_; }
  std::size_t frames() const noexcept { return frames_; }

  double& operator()(std::size_t e, std::size_t f) noexcept { return photons_[e * frames_ + f]; }
  double operator()(std::size_t e, std::size_t f) const noexcept { return photons_[e * frames_ + f]; }

  std::span<double> row(std::size_t e) noexcept { return {photons_.data() + e * frames_, frames_}; }
  std::span<const double> row(std::size_t e) const noexcept { return {photons_.data() + e * frames_, frames_}; }

  const std::vector<double>& data() const noexcept { return photons_; }
  std::vector<double>& data() noexcept { return photons_; }

  friend BlinkTrace operator+(const BlinkTrace& a, const BlinkTrace& b) {
    if (a.emitters_ != b.emitters_ || a.frames_ != b.frames_) throw DimensionError("trace shapes differ");
    BlinkTrace out = a;
    for (std::size_t i = 0; i < out.photons_.size(); ++i) out.photons_[i] += b.photons_[i];
    return out;
  }

  friend bool operator==(const BlinkTrace&, const BlinkTrace&) = default;

 private:
  std::size_t emitters_ = 0;
  std::size_t frames_ = 0;
  std::vector<double> photons_;
};

// Dwell record of one emitter, for statistics.
struct Dwell {
  bool on = false;
  double duration = 0.0;
  bool censored = false;  // cut by the start or end of the acquisition
};

namespace detail {

// Fills `out` (length n_frames) with rate * on-time per frame. The initial
// state is drawn from the stationary law; by memorylessness the residual
// dwell of the initial state has the same exponential law as a full dwell.
template <typename DwellSink>
void simulate_emitter(std::span<double> out, const KineticsParams& p, Rng& rng, DwellSink&& sink) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> on_dist(1.0 / p.tau_on);
  std::exponential_distribution<double> off_dist(1.0 / p.tau_off);
  const double duty = p.tau_on / (p.tau_on + p.tau_off);
  const double horizon = static_cast<double>(out.size());

  bool on = u(rng) < duty;
  double t = 0.0;
  bool first = true;
  while (t < horizon) {
    const double d = on ? on_dist(rng) : off_dist(rng);
    const double end = std::min(t + d, horizon);
    if (on) {
      // Distribute [t, end) over the frames it overlaps.
      auto f = static_cast<std::size_t>(t);
      double cur = t;
      while (cur < end && f < out.size()) {
        const double frame_end = std::min(static_cast<double>(f + 1), end);
        out[f] += frame_end - cur;
        cur = frame_end;
        ++f;
      }
    }
    sink(Dwell{on, d, first || t + d >= horizon});
    first = false;
    t += d;
    on = !on;
  }
  for (auto& v : out) v = p.photon_rate * std::min(v, 1.0);
}

}  // namespace detail

inline BlinkTrace simulate_trace(std::size_t n_emitters, std::size_t n_frames, const KineticsParams& params,
                                 std::uint64_t seed, std::size_t first_emitter = 0) {
  params.validate();
  if (n_emitters < 1 || n_frames < 1) throw ConfigError("trace needs at least one emitter and one frame");
  BlinkTrace trace(n_emitters, n_frames);
  for (std::size_t e = 0; e < n_emitters; ++e) {
    Rng rng = make_rng(seed, first_emitter + e);
    detail::simulate_emitter(trace.row(e), params, rng, [](const Dwell&) {});
  }
  return trace;
}

// Dwell times of a single long emitter history (diagnostics and tests).
inline std::vector<Dwell> simulate_dwells(std::size_t n_frames, const KineticsParams& params, std::uint64_t seed) {
  params.validate();
  std::vector<double> scratch(n_frames, 0.0);
  std::vector<Dwell> dwells;
  Rng rng = make_rng(seed, 0);
  detail::simulate_emitter(scratch, params, rng, [&](const Dwell& d) { dwells.push_back(d); });
  return dwells;
}

// Mean on-fraction over the whole trace.
inline double on_fraction(const BlinkTrace& trace, double photon_rate) {
  double sum = 0.0;
  for (double v : trace.data()) sum += v;
  return sum / (photon_rate * static_cast<double>(trace.data().size()));
}

}  // namespace nanosim::photokinetics
