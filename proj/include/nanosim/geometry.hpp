#pragma once

// Sample geometries (actin filaments, mitochondria, vesicles) and stochastic
// emitter labelling. Lengths are in micrometres unless a name says otherwise.

#include <nanosim/core.hpp>

#include <optional>
#include <ostream>
#include <string_view>

namespace nanosim::geometry {

enum class StructureKind { ActinFilament, Mitochondrion, Vesicle };

inline constexpr std::array<StructureKind, 3> kAllKinds = {StructureKind::ActinFilament, StructureKind::Mitochondrion,
                                                           StructureKind::Vesicle};

inline std::string_view to_string(StructureKind kind) noexcept {
  switch (kind) {
    case StructureKind::ActinFilament: return "actin";
    case StructureKind::Mitochondrion: return "mitochondria";
    case StructureKind::Vesicle: return "vesicles";
  }
  return "unknown";
}

inline StructureKind parse_kind(std::string_view name) {
  for (auto k : kAllKinds)
    if (name == to_string(k)) return k;
  if (name == "actin_filament" || name == "ActinFilament") return StructureKind::ActinFilament;
  if (name == "mitochondrion" || name == "Mitochondrion") return StructureKind::Mitochondrion;
  if (name == "vesicle" || name == "Vesicle") return StructureKind::Vesicle;
  throw ConfigError("unknown structure kind '" + std::string(name) + "'");
}

struct SceneBounds {
  Interval x{-2.5, 2.5};
  Interval y{-2.5, 2.5};
  Interval z{-0.5, 0.5};  // z = 0 is the focal plane

  bool valid() const noexcept { return x.valid() && y.valid() && z.valid(); }
  bool contains(Vec3 p, double tol = 0.0) const noexcept {
    return p.x >= x.lo - tol && p.x <= x.hi + tol && p.y >= y.lo - tol && p.y <= y.hi + tol && p.z >= z.lo - tol &&
           p.z <= z.hi + tol;
  }
  // Bounds with every face moved inward by margin; nullopt when empty.
  std::optional<SceneBounds> shrunk(double margin) const noexcept {
    SceneBounds b{{x.lo + margin, x.hi - margin}, {y.lo + margin, y.hi - margin}, {z.lo + margin, z.hi - margin}};
    if (!b.valid()) return std::nullopt;
    return b;
  }
  Vec3 sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return {x.lo + u(rng) * x.length(), y.lo + u(rng) * y.length(), z.lo + u(rng) * z.length()};
  }
};

struct StructureSpec {
  StructureKind kind = StructureKind::ActinFilament;
  IntRange count{3, 10};
  IntRange control_points{3, 6};
  double max_length_um = 5.0;
  double tube_radius_nm = 150.0;
  Interval vesicle_radius_nm{25.0, 500.0};
  // Emitters per um for filaments, per um^2 for surfaces.
  double density = 100.0;

  static StructureSpec defaults(StructureKind kind) {
    StructureSpec s;
    s.kind = kind;
    switch (kind) {
      case StructureKind::ActinFilament:
        s.count = {3, 10};
        s.density = 100.0;
        break;
      case StructureKind::Mitochondrion:
        s.count = {1, 4};
        s.density = 500.0;
        break;
      case StructureKind::Vesicle:
        s.count = {10, 30};
        s.density = 2000.0;
        break;
    }
    return s;
  }

  void validate() const {
    if (!count.valid() || count.lo < 0) throw ConfigError("structure count range must be a nonempty interval of nonnegative integers");
    if (!(density > 0.0)) throw ConfigError("emitter density must be positive");
    if (kind != StructureKind::Vesicle) {
      if (!control_points.valid() || control_points.lo < 3) throw ConfigError("control point range must satisfy 3 <= lo <= hi");
      if (!(max_length_um > 0.0)) throw ConfigError("maximum filament length must be positive");
    }
    if (kind == StructureKind::Mitochondrion && !(tube_radius_nm > 0.0))
      throw ConfigError("mitochondrion tube radius must be positive");
    if (kind == StructureKind::Vesicle && (!vesicle_radius_nm.valid() || !(vesicle_radius_nm.lo > 0.0)))
      throw ConfigError("vesicle radius range must be a nonempty positive interval");
  }
};

struct EmitterSet {
  std::vector<Vec3> positions;
  std::vector<int> structure_id;
  StructureKind kind = StructureKind::ActinFilament;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }

  void append(const EmitterSet& other, int id) {
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
    structure_id.insert(structure_id.end(), other.size(), id);
  }

  friend bool operator==(const EmitterSet&, const EmitterSet&) = default;
};

// ---------------------------------------------------------------------------
// Natural cubic interpolating spline in 3D, chord-length parametrized, with a
// dense arc-length table for uniform-in-length sampling.

class SplineCurve {
 public:
  // Arc-length table spacing upper bound (1 nm).
  static constexpr double kTableResolution = 1e-3;
  // Consecutive control points closer than this are considered coincident.
  static constexpr double kCoincidentTol = 1e-6;

  static SplineCurve through(std::vector<Vec3> points) {
    if (points.empty()) throw NumericalError("spline needs at least one control point");
    SplineCurve c;
    c.points_ = std::move(points);
    const std::size_t n = c.points_.size();
    c.knots_.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const double chord = norm(c.points_[i] - c.points_[i - 1]);
      if (chord < kCoincidentTol) throw NumericalError("coincident control points");
      c.knots_[i] = c.knots_[i - 1] + chord;
    }
    c.second_.assign(n, Vec3{});
    if (n >= 3) c.solve_second_derivatives();
    c.build_table();
    return c;
  }

  std::span<const Vec3> control_points() const noexcept { return points_; }
  std::span<const double> knots() const noexcept { return knots_; }
  double parameter_end() const noexcept { return knots_.back(); }
  double length() const noexcept { return table_s_.empty() ? 0.0 : table_s_.back(); }

  Vec3 at(double t) const noexcept { return eval(t, 0); }
  Vec3 derivative(double t) const noexcept { return eval(t, 1); }
  Vec3 second_derivative(double t) const noexcept { return eval(t, 2); }

  double parameter_at_length(double s) const noexcept {
    if (table_s_.size() < 2) return 0.0;
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(table_s_.begin(), table_s_.end(), s);
    std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - table_s_.begin(), table_s_.size() - 1));
    std::size_t lo = hi - 1;
    const double ds = table_s_[hi] - table_s_[lo];
    const double w = ds > 0.0 ? (s - table_s_[lo]) / ds : 0.0;
    return table_t_[lo] + w * (table_t_[hi] - table_t_[lo]);
  }

  Vec3 point_at_length(double s) const noexcept { return at(parameter_at_length(s)); }

  Vec3 tangent_at_length(double s) const noexcept { return normalized(derivative(parameter_at_length(s))); }

  // dT/ds; its norm is the curvature.
  Vec3 curvature_vector_at_length(double s) const noexcept {
    const double t = parameter_at_length(s);
    const Vec3 d1 = derivative(t);
    const Vec3 d2 = second_derivative(t);
    const double speed2 = dot(d1, d1);
    if (speed2 <= 0.0) return {};
    const Vec3 tan = (1.0 / std::sqrt(speed2)) * d1;
    return (1.0 / speed2) * (d2 - dot(d2, tan) * tan);
  }

  double max_curvature() const noexcept {
    double kmax = 0.0;
    for (double t : table_t_) {
      const Vec3 d1 = derivative(t);
      const Vec3 d2 = second_derivative(t);
      const double speed = norm(d1);
      if (speed > 0.0) kmax = std::max(kmax, norm(cross(d1, d2)) / (speed * speed * speed));
    }
    return kmax;
  }

  // Dense samples of the curve (the arc-length table nodes).
  std::vector<Vec3> samples() const {
    std::vector<Vec3> out;
    out.reserve(table_t_.size());
    for (double t : table_t_) out.push_back(at(t));
    return out;
  }

 private:
  void solve_second_derivatives() {
    // Tridiagonal system for the natural spline: M_0 = M_{n-1} = 0.
    const std::size_t n = points_.size();
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), lower(m);
    std::vector<Vec3> rhs(m);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = knots_[i] - knots_[i - 1];
      const double h1 = knots_[i + 1] - knots_[i];
      lower[i - 1] = h0;
      diag[i - 1] = 2.0 * (h0 + h1);
      upper[i - 1] = h1;
      rhs[i - 1] = 6.0 * ((1.0 / h1) * (points_[i + 1] - points_[i]) - (1.0 / h0) * (points_[i] - points_[i - 1]));
    }
    for (std::size_t i = 1; i < m; ++i) {
      const double f = lower[i] / diag[i - 1];
      diag[i] -= f * upper[i - 1];
      rhs[i] = rhs[i] - f * rhs[i - 1];
    }
    std::vector<Vec3> sol(m);
    sol[m - 1] = (1.0 / diag[m - 1]) * rhs[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) sol[i] = (1.0 / diag[i]) * (rhs[i] - upper[i] * sol[i + 1]);
    for (std::size_t i = 0; i < m; ++i) second_[i + 1] = sol[i];
  }

  Vec3 eval(double t, int order) const noexcept {
    const std::size_t n = points_.size();
    if (n == 1) return order == 0 ? points_[0] : Vec3{};
    t = std::clamp(t, knots_.front(), knots_.back());
    std::size_t i = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = knots_[i + 1] - knots_[i];
    const double a = (knots_[i + 1] - t) / h;
    const double b = (t - knots_[i]) / h;
    const Vec3 &p0 = points_[i], &p1 = points_[i + 1], &m0 = second_[i], &m1 = second_[i + 1];
    switch (order) {
      case 0:
        return a * p0 + b * p1 + ((a * a * a - a) * h * h / 6.0) * m0 + ((b * b * b - b) * h * h / 6.0) * m1;
      case 1:
        return (1.0 / h) * (p1 - p0) + (-(3.0 * a * a - 1.0) * h / 6.0) * m0 + ((3.0 * b * b - 1.0) * h / 6.0) * m1;
      default:
        return a * m0 + b * m1;
    }
  }

  void build_table() {
    table_t_.clear();
    table_s_.clear();
    const std::size_t n = points_.size();
    table_t_.push_back(0.0);
    table_s_.push_back(0.0);
    if (n == 1) return;
    // Oversample 4x relative to the 1 nm target so table steps stay below it.
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = knots_[i + 1] - knots_[i];
      double est = 0.0;
      Vec3 prev = at(knots_[i]);
      for (int k = 1; k <= 16; ++k) {
        const Vec3 cur = at(knots_[i] + h * k / 16.0);
        est += norm(cur - prev);
        prev = cur;
      }
      const auto steps = static_cast<std::size_t>(std::ceil(4.0 * est / kTableResolution)) + 1;
      prev = at(knots_[i]);
      for (std::size_t k = 1; k <= steps; ++k) {
        const double t = knots_[i] + h * static_cast<double>(k) / static_cast<double>(steps);
        const Vec3 cur = at(t);
        table_t_.push_back(t);
        table_s_.push_back(table_s_.back() + norm(cur - prev));
        prev = cur;
      }
    }
  }

  std::vector<Vec3> points_;
  std::vector<double> knots_;
  std::vector<Vec3> second_;
  std::vector<double> table_t_;
  std::vector<double> table_s_;
};

inline constexpr int kMaxResampleAttempts = 100;

// Random control points inside `bounds` shrunk by `margin_um`; the curve is
// rescaled about the control-point centroid when longer than max_length_um.
// Curves leaving the shrunk bounds or with coincident points are resampled.
inline SplineCurve sample_spline_curve(int n_control, const SceneBounds& bounds, double max_length_um, Rng& rng,
                                       double margin_um = 0.0) {
  if (n_control < 3) throw ConfigError("spline needs at least 3 control points");
  if (!bounds.valid()) throw ConfigError("scene bounds are empty");
  if (!(max_length_um > 0.0)) throw ConfigError("maximum curve length must be positive");
  const auto inner = bounds.shrunk(margin_um);
  if (!inner) throw ConfigError("scene bounds too small for the structure radius");

  std::string last_cause = "unknown";
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    std::vector<Vec3> pts(static_cast<std::size_t>(n_control));
    for (auto& p : pts) p = inner->sample(rng);
    try {
      SplineCurve curve = SplineCurve::through(pts);
      if (curve.length() > max_length_um) {
        Vec3 centroid{};
        for (const auto& p : pts) centroid = centroid + p;
        centroid = (1.0 / static_cast<double>(pts.size())) * centroid;
        const double scale = (max_length_um / curve.length()) * (1.0 - 1e-9);
        for (auto& p : pts) p = centroid + scale * (p - centroid);
        curve = SplineCurve::through(pts);
      }
      bool inside = true;
      for (const auto& s : curve.samples()) {
        if (!inner->contains(s, 1e-12)) {
          inside = false;
          break;
        }
      }
      if (!inside) {
        last_cause = "interpolated curve leaves the scene bounds";
        continue;
      }
      return curve;
    } catch (const NumericalError& e) {
      last_cause = e.what();
    }
  }
  throw NumericalError("could not sample a valid spline curve after " + std::to_string(kMaxResampleAttempts) +
                       " attempts: " + last_cause);
}

inline std::size_t poisson_count(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<long long> dist(mean);
  return static_cast<std::size_t>(dist(rng));
}

// Poisson(density * length) emitters uniform in arc length.
inline EmitterSet label_curve(const SplineCurve& curve, double density, Rng& rng) {
  if (!(density > 0.0)) throw ConfigError("linear emitter density must be positive");
  EmitterSet set;
  const double len = curve.length();
  if (!(len > 0.0)) {
    warn("label_curve: zero-length curve, no emitters placed");
    return set;
  }
  const std::size_t n = poisson_count(density * len, rng);
  std::uniform_real_distribution<double> u(0.0, len);
  set.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) set.positions.push_back(curve.point_at_length(u(rng)));
  set.structure_id.assign(n, 0);
  return set;
}

// ---------------------------------------------------------------------------
// Surfaces.

// Tube of constant radius swept along a curve, closed by hemispherical caps.
class TubeSurface {
 public:
  TubeSurface(SplineCurve axis, double radius_um) : axis_(std::move(axis)), radius_(radius_um) {}

  const SplineCurve& axis() const noexcept { return axis_; }
  double radius() const noexcept { return radius_; }

  // The curvature term of the tube area element integrates to zero over the
  // angle, so the lateral area is exactly 2 pi r L without self-overlap.
  double lateral_area() const noexcept { return 2.0 * kPi * radius_ * axis_.length(); }
  double cap_area() const noexcept { return 4.0 * kPi * radius_ * radius_; }
  double area() const noexcept { return lateral_area() + cap_area(); }

  bool self_intersecting() const noexcept { return radius_ * axis_.max_curvature() >= 1.0; }

 private:
  SplineCurve axis_;
  double radius_;
};

struct SphereSurface {
  Vec3 center;
  double radius = 0.0;  // um

  double area() const noexcept { return 4.0 * kPi * radius * radius; }
};

inline TubeSurface build_mitochondrion(SplineCurve curve, double radius_nm) {
  if (!(radius_nm > 0.0)) throw ConfigError("tube radius must be positive");
  TubeSurface tube(std::move(curve), radius_nm * 1e-3);
  if (tube.self_intersecting())
    throw NumericalError("tube self-intersects: curvature radius below tube radius");
  return tube;
}

namespace detail {

inline Vec3 uniform_direction(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v{g(rng), g(rng), g(rng)};
    const double n = norm(v);
    if (n > 1e-12) return (1.0 / n) * v;
  }
}

// Any unit vector perpendicular to t.
inline Vec3 perpendicular(Vec3 t) {
  const Vec3 axis = std::abs(t.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(cross(t, axis));
}

}  // namespace detail

inline EmitterSet label_surface(const SphereSurface& sphere, double density, Rng& rng) {
  if (!(density > 0.0)) throw ConfigError("surface emitter density must be positive");
  EmitterSet set;
  if (!(sphere.area() > 0.0)) {
    warn("label_surface: zero-area sphere, no emitters placed");
    return set;
  }
  const std::size_t n = poisson_count(density * sphere.area(), rng);
  set.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    set.positions.push_back(sphere.center + sphere.radius * detail::uniform_direction(rng));
  set.structure_id.assign(n, 0);
  return set;
}

// Uniform on the tube: lateral points by rejection on the exact area element
// r (1 - r <kappa, n>) ds dtheta, caps as outward-facing hemispheres.
inline EmitterSet label_surface(const TubeSurface& tube, double density, Rng& rng) {
  if (!(density > 0.0)) throw ConfigError("surface emitter density must be positive");
  EmitterSet set;
  const double area = tube.area();
  if (!(area > 0.0)) {
    warn("label_surface: zero-area tube, no emitters placed");
    return set;
  }
  const std::size_t n = poisson_count(density * area, rng);
  const SplineCurve& axis = tube.axis();
  const double r = tube.radius();
  const double len = axis.length();
  const double p_lateral = tube.lateral_area() / area;
  const double bound = 1.0 + r * axis.max_curvature() * 1.05;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  set.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (len > 0.0 && u(rng) < p_lateral) {
      for (;;) {
        const double s = u(rng) * len;
        const double theta = 2.0 * kPi * u(rng);
        const Vec3 t = axis.tangent_at_length(s);
        const Vec3 n1 = detail::perpendicular(t);
        const Vec3 n2 = cross(t, n1);
        const Vec3 dir = std::cos(theta) * n1 + std::sin(theta) * n2;
        const double weight = 1.0 - r * dot(axis.curvature_vector_at_length(s), dir);
        if (u(rng) * bound <= weight) {
          set.positions.push_back(axis.point_at_length(s) + r * dir);
          break;
        }
      }
    } else {
      const bool at_start = u(rng) < 0.5;
      const double s = at_start ? 0.0 : len;
      Vec3 outward = axis.tangent_at_length(s);
      if (at_start) outward = -1.0 * outward;
      Vec3 dir = detail::uniform_direction(rng);
      if (len > 0.0 && dot(dir, outward) < 0.0) dir = -1.0 * dir;
      set.positions.push_back(axis.point_at_length(s) + r * dir);
    }
  }
  set.structure_id.assign(n, 0);
  return set;
}

// ---------------------------------------------------------------------------

inline int uniform_int(IntRange range, Rng& rng) {
  std::uniform_int_distribution<int> d(range.lo, range.hi);
  return d(rng);
}

// One structure kind per scene; instance i draws from its own seed stream.
inline EmitterSet generate_scene(const StructureSpec& spec, const SceneBounds& bounds, std::uint64_t seed) {
  spec.validate();
  if (!bounds.valid()) throw ConfigError("scene bounds are empty");
  Rng rng = make_rng(seed, 0);
  const int instances = uniform_int(spec.count, rng);

  EmitterSet scene;
  scene.kind = spec.kind;
  scene.seed = seed;
  for (int id = 0; id < instances; ++id) {
    Rng irng = make_rng(seed, static_cast<std::uint64_t>(id) + 1);
    try {
      EmitterSet part;
      switch (spec.kind) {
        case StructureKind::ActinFilament: {
          const int nc = uniform_int(spec.control_points, irng);
          part = label_curve(sample_spline_curve(nc, bounds, spec.max_length_um, irng), spec.density, irng);
          break;
        }
        case StructureKind::Mitochondrion: {
          const double radius_um = spec.tube_radius_nm * 1e-3;
          std::optional<TubeSurface> tube;
          std::string cause;
          for (int attempt = 0; attempt < kMaxResampleAttempts && !tube; ++attempt) {
            const int nc = uniform_int(spec.control_points, irng);
            try {
              tube.emplace(build_mitochondrion(
                  sample_spline_curve(nc, bounds, spec.max_length_um, irng, radius_um), spec.tube_radius_nm));
            } catch (const NumericalError& e) {
              cause = e.what();
            }
          }
          if (!tube) throw NumericalError("no valid mitochondrion after resampling: " + cause);
          part = label_surface(*tube, spec.density, irng);
          break;
        }
        case StructureKind::Vesicle: {
          std::uniform_real_distribution<double> ur(spec.vesicle_radius_nm.lo, spec.vesicle_radius_nm.hi);
          const double radius_um = ur(irng) * 1e-3;
          const auto inner = bounds.shrunk(radius_um);
          if (!inner) throw ConfigError("scene bounds too small for vesicle radius");
          part = label_surface(SphereSurface{inner->sample(irng), radius_um}, spec.density, irng);
          break;
        }
      }
      scene.append(part, id);
    } catch (const Error& e) {
      throw StageError(std::string(to_string(spec.kind)) + " instance " + std::to_string(id), e);
    }
  }
  return scene;
}

inline void write_emitter_table(std::ostream& os, const EmitterSet& set) {
  os << "# x_um y_um z_um structure_id\n";
  os.precision(9);
  for (std::size_t i = 0; i < set.size(); ++i)
    os << set.positions[i].x << ' ' << set.positions[i].y << ' ' << set.positions[i].z << ' ' << set.structure_id[i]
       << '\n';
}

}  // namespace nanosim::geometry
