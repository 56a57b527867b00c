#pragma once

// Gibson-Lanni scalar PSF. The radial integral is evaluated with the
// Bessel-series approximation of the pupil phase (Li, Xue & Blu 2017),
// tabulated on an (r, z) grid and peak-normalized. A direct adaptive
// quadrature of the same integral is kept as a reference path.

#include <nanosim/core.hpp>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <complex>
#include <memory>

namespace nanosim::optics {

inline constexpr std::array<double, 4> kPixelSizesNm = {65.0, 80.0, 108.0, 120.0};

struct OpticsParams {
  double na = 1.4;
  double wavelength_nm = 660.0;
  double pixel_size_nm = 65.0;
  // Refractive indices: sample, immersion, coverslip; *_design are nominal.
  double n_sample = 1.33;
  double n_immersion = 1.515;
  double n_immersion_design = 1.515;
  double n_coverslip = 1.515;
  double n_coverslip_design = 1.515;
  // Thicknesses in um.
  double coverslip_um = 170.0;
  double coverslip_design_um = 170.0;
  double working_distance_um = 150.0;
  double working_distance_design_um = 150.0;

  // Same optics with the sample medium index-matched to the immersion oil.
  static OpticsParams index_matched(double na, double wavelength_nm = 660.0, double pixel_size_nm = 65.0) {
    OpticsParams p;
    p.na = na;
    p.wavelength_nm = wavelength_nm;
    p.pixel_size_nm = pixel_size_nm;
    p.n_sample = p.n_immersion;
    return p;
  }

  // Largest normalized pupil radius carrying propagating light from the sample.
  double pupil_limit() const noexcept {
    return std::min({1.0, n_sample / na, n_immersion / na, n_immersion_design / na, n_coverslip / na,
                     n_coverslip_design / na});
  }

  void validate() const {
    if (!(na > 0.0)) throw ConfigError("numerical aperture must be positive");
    if (!(wavelength_nm > 0.0)) throw ConfigError("wavelength must be positive");
    if (!(pixel_size_nm > 0.0)) throw ConfigError("pixel size must be positive");
    if (!(n_sample > 0.0) || !(n_immersion > 0.0) || !(n_coverslip > 0.0) || !(n_immersion_design > 0.0) ||
        !(n_coverslip_design > 0.0))
      throw ConfigError("refractive indices must be positive");
    if (na >= std::min({n_immersion, n_immersion_design, n_coverslip, n_coverslip_design}))
      throw ConfigError("numerical aperture must stay below the immersion and coverslip indices "
                        "(total internal reflection regime is outside the model)");
    if (coverslip_um < 0.0 || working_distance_um < 0.0) throw ConfigError("thicknesses must be nonnegative");
  }

  friend bool operator==(const OpticsParams&, const OpticsParams&) = default;
};

// Optical path difference in um at normalized pupil radius rho for an
// emitter z_um from the focal plane.
inline double optical_path_difference(const OpticsParams& p, double rho, double z_um) noexcept {
  const double a = p.na * p.na * rho * rho;
  auto root = [a](double n) { return std::sqrt(std::max(n * n - a, 0.0)); };
  return z_um * root(p.n_sample) + p.working_distance_um * root(p.n_immersion) -
         p.working_distance_design_um * root(p.n_immersion_design) + p.coverslip_um * root(p.n_coverslip) -
         p.coverslip_design_um * root(p.n_coverslip_design);
}

// Unnormalized |integral|^2 by adaptive Gauss-Kronrod quadrature.
inline double psf_quadrature(const OpticsParams& p, double r_nm, double z_nm, double tol = 1e-11) {
  const double k = 2.0 * kPi / (p.wavelength_nm * 1e-3);
  const double beta = k * p.na * r_nm * 1e-3;
  const double z_um = z_nm * 1e-3;
  const double rho_max = p.pupil_limit();
  using boost::math::quadrature::gauss_kronrod;
  auto re = [&](double rho) {
    return std::cyl_bessel_j(0.0, beta * rho) * std::cos(k * optical_path_difference(p, rho, z_um)) * rho;
  };
  auto im = [&](double rho) {
    return std::cyl_bessel_j(0.0, beta * rho) * std::sin(k * optical_path_difference(p, rho, z_um)) * rho;
  };
  // Split the oscillatory integrand into panels.
  constexpr int panels = 32;
  double sr = 0.0, si = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double a = rho_max * i / panels;
    const double b = rho_max * (i + 1) / panels;
    sr += gauss_kronrod<double, 31>::integrate(re, a, b, 12, tol);
    si += gauss_kronrod<double, 31>::integrate(im, a, b, 12, tol);
  }
  return sr * sr + si * si;
}

struct TableGrid {
  double r_max_nm = 3000.0;
  double dr_nm = 2.0;
  double z_min_nm = -1000.0;
  double z_max_nm = 1000.0;
  double dz_nm = 10.0;

  std::size_t nr() const noexcept { return static_cast<std::size_t>(std::llround(r_max_nm / dr_nm)) + 1; }
  std::size_t nz() const noexcept { return static_cast<std::size_t>(std::llround((z_max_nm - z_min_nm) / dz_nm)) + 1; }
};

// Bessel-series fit controls.
struct SeriesOptions {
  int basis_size = 100;
  int pupil_samples = 1000;
  double min_wavelength_um = 0.436;
};

class PsfModel {
 public:
  PsfModel(OpticsParams params, TableGrid grid, std::vector<double> table, double peak_raw)
      : params_(params), grid_(grid), table_(std::move(table)), peak_raw_(peak_raw),
        out_of_range_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    in_focus_integral_ = compute_in_focus_integral();
  }

  const OpticsParams& params() const noexcept { return params_; }
  const TableGrid& grid() const noexcept { return grid_; }
  // nz x nr, row-major by z.
  std::span<const double> table() const noexcept { return table_; }
  double peak_raw() const noexcept { return peak_raw_; }
  double in_focus_integral_nm2() const noexcept { return in_focus_integral_; }
  std::uint64_t out_of_range_count() const noexcept { return out_of_range_->load(std::memory_order_relaxed); }

  double node(std::size_t iz, std::size_t ir) const noexcept { return table_[iz * grid_.nr() + ir]; }

  bool covers(double r_nm, double z_nm) const noexcept {
    return r_nm <= grid_.r_max_nm && z_nm >= grid_.z_min_nm && z_nm <= grid_.z_max_nm;
  }

  // Bilinear in (r, z); caller guarantees coverage.
  double interpolate(double r_nm, double z_nm) const noexcept {
    const std::size_t nr = grid_.nr(), nz = grid_.nz();
    const double fr = r_nm / grid_.dr_nm;
    const double fz = (z_nm - grid_.z_min_nm) / grid_.dz_nm;
    const std::size_t ir = std::min(static_cast<std::size_t>(fr), nr - 2);
    const std::size_t iz = std::min(static_cast<std::size_t>(fz), nz - 2);
    const double wr = fr - static_cast<double>(ir);
    const double wz = fz - static_cast<double>(iz);
    const double* row0 = table_.data() + iz * nr;
    const double* row1 = row0 + nr;
    const double a = row0[ir] + wr * (row0[ir + 1] - row0[ir]);
    const double b = row1[ir] + wr * (row1[ir + 1] - row1[ir]);
    return a + wz * (b - a);
  }

  double at(double dx_nm, double dy_nm, double z_nm) const noexcept {
    const double r = std::hypot(dx_nm, dy_nm);
    if (!covers(r, z_nm)) {
      out_of_range_->fetch_add(1, std::memory_order_relaxed);
      return 0.0;
    }
    return interpolate(r, z_nm);
  }

  // Full width at half of the on-axis value at depth z, from the table.
  double lateral_fwhm_nm(double z_nm) const {
    const double centre = interpolate(0.0, z_nm);
    if (!(centre > 0.0)) throw NumericalError("PSF vanishes on axis");
    const double half = 0.5 * centre;
    double prev_r = 0.0, prev_v = centre;
    for (double r = grid_.dr_nm * 0.25; r <= grid_.r_max_nm; r += grid_.dr_nm * 0.25) {
      const double v = interpolate(r, z_nm);
      if (v < half) return 2.0 * (prev_r + (prev_v - half) / (prev_v - v) * (r - prev_r));
      prev_r = r;
      prev_v = v;
    }
    throw NumericalError("PSF does not fall to half maximum inside the table");
  }

 private:
  double compute_in_focus_integral() const {
    const double fz = (0.0 - grid_.z_min_nm) / grid_.dz_nm;
    if (fz < 0.0 || fz > static_cast<double>(grid_.nz() - 1)) return 0.0;
    double sum = 0.0;
    for (std::size_t ir = 0; ir + 1 < grid_.nr(); ++ir) {
      const double r0 = static_cast<double>(ir) * grid_.dr_nm, r1 = r0 + grid_.dr_nm;
      sum += 0.5 * (interpolate(r0, 0.0) * r0 + interpolate(r1, 0.0) * r1) * grid_.dr_nm;
    }
    return 2.0 * kPi * sum;
  }

  OpticsParams params_;
  TableGrid grid_;
  std::vector<double> table_;
  double peak_raw_ = 1.0;
  double in_focus_integral_ = 0.0;
  std::shared_ptr<std::atomic<std::uint64_t>> out_of_range_;
};

namespace detail {

// int_0^R J0(s rho) J0(b rho) rho drho.
inline double bessel_product_integral(double s, double b, double R) {
  const double sr = s * R, br = b * R;
  const double denom = s * s - b * b;
  if (std::abs(denom) < 1e-9 * std::max(1.0, s * s)) {
    const double j0 = std::cyl_bessel_j(0.0, sr), j1 = std::cyl_bessel_j(1.0, sr);
    return 0.5 * R * R * (j0 * j0 + j1 * j1);
  }
  return R * (s * std::cyl_bessel_j(1.0, sr) * std::cyl_bessel_j(0.0, br) -
              b * std::cyl_bessel_j(0.0, sr) * std::cyl_bessel_j(1.0, br)) /
         denom;
}

}  // namespace detail

inline PsfModel build_psf(const OpticsParams& params, const TableGrid& grid = {}, const SeriesOptions& opts = {}) {
  params.validate();
  if (!(grid.dr_nm > 0.0) || !(grid.dz_nm > 0.0) || grid.z_max_nm <= grid.z_min_nm || !(grid.r_max_nm > grid.dr_nm))
    throw ConfigError("invalid PSF table grid");

  const double lambda_um = params.wavelength_nm * 1e-3;
  const double k = 2.0 * kPi / lambda_um;
  const double rho_max = params.pupil_limit();
  const int m_count = opts.basis_size;
  const int n_rho = opts.pupil_samples;
  const std::size_t nr = grid.nr(), nz = grid.nz();

  Eigen::VectorXd scale(m_count);
  for (int m = 0; m < m_count; ++m)
    scale[m] = params.na * (3.0 * (m + 1) - 2.0) * opts.min_wavelength_um / lambda_um;

  // Least-squares fit of exp(i k OPD(rho, z)) by J0(scale_m rho), all z at once.
  Eigen::MatrixXd basis(n_rho, m_count);
  Eigen::MatrixXd phase_re(n_rho, nz), phase_im(n_rho, nz);
  for (int i = 0; i < n_rho; ++i) {
    const double rho = rho_max * i / (n_rho - 1);
    for (int m = 0; m < m_count; ++m) basis(i, m) = std::cyl_bessel_j(0.0, scale[m] * rho);
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const double z_um = (grid.z_min_nm + static_cast<double>(iz) * grid.dz_nm) * 1e-3;
      const double w = k * optical_path_difference(params, rho, z_um);
      phase_re(i, static_cast<Eigen::Index>(iz)) = std::cos(w);
      phase_im(i, static_cast<Eigen::Index>(iz)) = std::sin(w);
    }
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd coef_re = qr.solve(phase_re);
  const Eigen::MatrixXd coef_im = qr.solve(phase_im);

  Eigen::MatrixXd radial(static_cast<Eigen::Index>(nr), m_count);
  for (std::size_t ir = 0; ir < nr; ++ir) {
    const double b = k * params.na * static_cast<double>(ir) * grid.dr_nm * 1e-3;
    for (int m = 0; m < m_count; ++m)
      radial(static_cast<Eigen::Index>(ir), m) = detail::bessel_product_integral(scale[m], b, rho_max);
  }
  const Eigen::MatrixXd amp_re = radial * coef_re;  // nr x nz
  const Eigen::MatrixXd amp_im = radial * coef_im;

  std::vector<double> table(nz * nr);
  double peak = 0.0;
  for (std::size_t iz = 0; iz < nz; ++iz)
    for (std::size_t ir = 0; ir < nr; ++ir) {
      const auto r = static_cast<Eigen::Index>(ir), z = static_cast<Eigen::Index>(iz);
      const double v = amp_re(r, z) * amp_re(r, z) + amp_im(r, z) * amp_im(r, z);
      table[iz * nr + ir] = v;
      peak = std::max(peak, v);
    }
  if (!(peak > 0.0) || !std::isfinite(peak)) throw NumericalError("PSF table is degenerate");
  for (auto& v : table) v /= peak;
  return PsfModel(params, grid, std::move(table), peak);
}

}  // namespace nanosim::optics
