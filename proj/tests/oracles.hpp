#pragma once

#include <Eigen/Dense>
#include <vector>

#include "avoinv/grf.hpp"
#include "avoinv/rng.hpp"

// Brute-force references the fast paths are checked against. Everything here
// is dense, O(N^2) or worse, and only meant for desk-scale grids.

namespace oracles {

// Dense covariance built directly from torus distances, entry by entry.
inline Eigen::MatrixXd dense_covariance(const avoinv::grid_spec& g,
                                        const avoinv::correlation_spec& corr) {
  const std::size_t n = g.size();
  Eigen::MatrixXd sigma(n, n);
  const double var = corr.sigma * corr.sigma;
  for (std::uint32_t i1 = 0; i1 < g.nx; ++i1)
    for (std::uint32_t j1 = 0; j1 < g.ny; ++j1)
      for (std::uint32_t i2 = 0; i2 < g.nx; ++i2)
        for (std::uint32_t j2 = 0; j2 < g.ny; ++j2) {
          std::uint32_t di = i1 >= i2 ? i1 - i2 : i2 - i1;
          std::uint32_t dj = j1 >= j2 ? j1 - j2 : j2 - j1;
          double ddi = std::min(di, g.nx - di);
          double ddj = std::min(dj, g.ny - dj);
          double d = std::sqrt(ddi * ddi + ddj * ddj);
          sigma(g.index(i1, j1), g.index(i2, j2)) = var * corr.rho(d);
        }
  return sigma;
}

// Dense matrix reconstructed by circularly shifting a circulant base.
inline Eigen::MatrixXd dense_from_base(const avoinv::grid_spec& g,
                                       const std::vector<double>& base) {
  const std::size_t n = g.size();
  Eigen::MatrixXd m(n, n);
  for (std::uint32_t i1 = 0; i1 < g.nx; ++i1)
    for (std::uint32_t j1 = 0; j1 < g.ny; ++j1)
      for (std::uint32_t i2 = 0; i2 < g.nx; ++i2)
        for (std::uint32_t j2 = 0; j2 < g.ny; ++j2) {
          std::uint32_t di = (i1 + g.nx - i2) % g.nx;
          std::uint32_t dj = (j1 + g.ny - j2) % g.ny;
          m(g.index(i1, j1), g.index(i2, j2)) = base[g.index(di, dj)];
        }
  return m;
}

// Full multivariate-normal log density by direct solve.
inline double dense_mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& sigma) {
  const double n = static_cast<double>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  Eigen::VectorXd diff = x - mu;
  Eigen::VectorXd solved = llt.solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * log_det - 0.5 * diff.dot(solved);
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace oracles
