#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/fft.hpp"
#include "avoinv/grid.hpp"
#include "avoinv/io.hpp"

// Stationary Gaussian fields on a 2D torus through circulant covariance
// bases. The dense N x N covariance never exists: its eigenvalues are the
// 2D DFT of the first row ("base"), so sampling and density evaluation are
// elementwise products in the Fourier domain.

namespace avoinv {

enum class correlation_kind { gaussian };

struct correlation_spec {
  double sigma = 1.0;
  double effective_range = 1.0;  // in grid cells
  correlation_kind kind = correlation_kind::gaussian;

  // rho(effective_range) = exp(-3) ~ 0.0498.
  double rho(double distance) const {
    double t = distance / effective_range;
    return std::exp(-3.0 * t * t);
  }
  bool valid() const { return sigma > 0.0 && effective_range > 0.0; }
};

struct circulant_base {
  grid_spec grid;
  std::vector<double> base;        // sigma^2 * rho(torus distance), row-major
  std::vector<double> eigen_sqrt;  // sqrt of the clamped DFT spectrum
  int clamped_eigenvalues = 0;     // negatives in [-eta*max, 0) zeroed out
};

namespace grf_limits {
// Gaussian correlation restricted to torus distances has small genuinely
// negative eigenvalues on short-period grids (about -2e-4 relative at
// 8x8 / range 3), so the abort threshold sits well above fp noise.
inline constexpr double kNegativeEigenRel = 1e-3;   // abort threshold (eta)
inline constexpr double kSingularEigenSqrt = 1e-12; // density floor (zeta)
inline constexpr double kImagResidualRel = 1e-8;    // real-part extraction
}  // namespace grf_limits

// Euclidean distance from cell (0,0) to every cell, measured the short way
// around the torus in each axis.
inline std::vector<double> torus_distance_base(const grid_spec& g) {
  check_grid(g);
  std::vector<double> d(g.size());
  for (std::uint32_t i = 0; i < g.nx; ++i) {
    double di = static_cast<double>(std::min(i, g.nx - i));
    for (std::uint32_t j = 0; j < g.ny; ++j) {
      double dj = static_cast<double>(std::min(j, g.ny - j));
      d[g.index(i, j)] = std::sqrt(di * di + dj * dj);
    }
  }
  return d;
}

inline circulant_base build_base(const grid_spec& g, const correlation_spec& corr,
                                 double negative_eigen_rel = grf_limits::kNegativeEigenRel) {
  check_grid(g);
  require(corr.valid(), "grf_fft: correlation spec needs sigma > 0 and range > 0");
  circulant_base out;
  out.grid = g;
  out.base.resize(g.size());
  const std::vector<double> dist = torus_distance_base(g);
  const double variance = corr.sigma * corr.sigma;
  for (std::size_t k = 0; k < out.base.size(); ++k)
    out.base[k] = variance * corr.rho(dist[k]);

  std::vector<fft::cplx> spec(out.base.begin(), out.base.end());
  fft::forward2(spec, g.nx, g.ny);
  double max_eigen = 0.0;
  for (const fft::cplx& c : spec) max_eigen = std::max(max_eigen, c.real());
  out.eigen_sqrt.resize(g.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    double lambda = spec[k].real();
    if (lambda < -negative_eigen_rel * max_eigen)
      throw sampling_error(
          "grf_fft: covariance spectrum has a significantly negative "
          "eigenvalue (" + io::format_double(lambda) + "); base is not embeddable");
    if (lambda < 0.0) {
      lambda = 0.0;
      ++out.clamped_eigenvalues;
    }
    out.eigen_sqrt[k] = std::sqrt(lambda);
  }
  return out;
}

namespace detail {

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Re(dft2(scale .* idft2(v))), checking that the discarded imaginary part
// is numerical noise relative to the input.
inline std::vector<double> spectral_product(const circulant_base& b,
                                            const std::vector<double>& scale,
                                            const std::vector<double>& v,
                                            const char* op) {
  const grid_spec& g = b.grid;
  std::vector<fft::cplx> work(v.begin(), v.end());
  fft::inverse2(work, g.nx, g.ny);
  for (std::size_t k = 0; k < work.size(); ++k) work[k] *= scale[k];
  fft::forward2(work, g.nx, g.ny);
  double tol = grf_limits::kImagResidualRel * l2_norm(v);
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < work.size(); ++k) {
    if (std::abs(work[k].imag()) > tol)
      throw sampling_error(std::string("grf_fft: ") + op +
                           " left a non-trivial imaginary residual");
    out[k] = work[k].real();
  }
  return out;
}

}  // namespace detail

// One draw from N(mu, Sigma); the standard-normal noise comes from the
// caller so sampling stays reproducible.
inline field sample_field(const circulant_base& b, const field& mu, const field& noise) {
  check_field(b.grid, mu, "sample_field mu");
  check_field(b.grid, noise, "sample_field noise");
  field out = detail::spectral_product(b, b.eigen_sqrt, noise, "sample_field");
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += mu[k];
  return out;
}

// C^{-1/2} (x - mu): the whitening map behind the quadratic form and the
// prior gradient (apply twice for Sigma^{-1} v).
inline field whiten(const circulant_base& b, const field& v) {
  check_field(b.grid, v, "whiten input");
  std::vector<double> inv_sqrt(b.eigen_sqrt.size());
  for (std::size_t k = 0; k < inv_sqrt.size(); ++k) {
    if (b.eigen_sqrt[k] <= grf_limits::kSingularEigenSqrt)
      throw sampling_error("grf_fft: spectrum is singular or clamped; density "
                           "evaluation is undefined");
    inv_sqrt[k] = 1.0 / b.eigen_sqrt[k];
  }
  return detail::spectral_product(b, inv_sqrt, v, "whiten");
}

// -1/2 u'u with u = C^{-1/2}(x - mu). The Gaussian normalization constant
// is deliberately not included; see log_det_sigma for callers that need it.
inline double log_density_quadform(const circulant_base& b, const field& mu, const field& x) {
  check_field(b.grid, mu, "log_density mu");
  check_field(b.grid, x, "log_density x");
  field v(x.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = x[k] - mu[k];
  field u = whiten(b, v);
  double q = 0.0;
  for (double t : u) q += t * t;
  return -0.5 * q;
}

// log det Sigma from the DFT eigenvalues; fails on clamped spectra.
inline double log_det_sigma(const circulant_base& b) {
  double s = 0.0;
  for (double e : b.eigen_sqrt) {
    if (e <= grf_limits::kSingularEigenSqrt)
      throw sampling_error("grf_fft: log det undefined for singular spectrum");
    s += 2.0 * std::log(e);
  }
  return s;
}

// ---- GRFB container ----
// "GRFB" | version u8 | nx u32 | ny u32 | base f64[] | eigen_sqrt f64[]

inline void write_base(std::ostream& os, const circulant_base& b) {
  io::write_magic(os, "GRFB");
  io::write_u8(os, 1);
  io::write_u32(os, b.grid.nx);
  io::write_u32(os, b.grid.ny);
  for (double v : b.base) io::write_f64(os, v);
  for (double v : b.eigen_sqrt) io::write_f64(os, v);
}

inline circulant_base read_base(std::istream& is) {
  io::expect_magic(is, "GRFB", "circulant base");
  if (io::read_u8(is) != 1) throw io_error("circulant base: unsupported version");
  circulant_base b;
  b.grid.nx = io::read_u32(is);
  b.grid.ny = io::read_u32(is);
  check_grid(b.grid);
  b.base.resize(b.grid.size());
  b.eigen_sqrt.resize(b.grid.size());
  for (double& v : b.base) v = io::read_f64(is);
  for (double& v : b.eigen_sqrt) v = io::read_f64(is);
  return b;
}

inline void save_base(const std::string& path, const circulant_base& b) {
  auto os = io::open_out(path);
  write_base(os, b);
}

inline circulant_base load_base(const std::string& path) {
  auto is = io::open_in(path);
  return read_base(is);
}

}  // namespace avoinv
