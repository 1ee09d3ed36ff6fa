#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/grf.hpp"
#include "avoinv/grid.hpp"
#include "avoinv/rng.hpp"

// Latent-to-reservoir transforms, the AVO likelihood, physically informed
// priors, and the synthetic forward model standing in for the proprietary
// rock-physics chain.

namespace avoinv {

// Three unconstrained fields on a shared grid; the MCMC state.
struct latent_state {
  field gas, oil, clay;

  std::size_t cells() const { return gas.size(); }
};

struct reservoir_state {
  field s_gas, s_oil, s_brine, v_clay;
};

struct avo_observation {
  field r0, grad;
};

// 2x2 noise block of the AVO likelihood.
struct noise_spec {
  double var_r0 = 0.003;
  double var_g = 0.03;
  double corr = -0.6;

  bool positive_definite() const {
    return var_r0 > 0.0 && var_g > 0.0 && std::abs(corr) < 1.0;
  }
  double det() const { return var_r0 * var_g * (1.0 - corr * corr); }
};

// Piecewise-linear curve over normalized depth in [0,1]; flat beyond the
// outermost break points.
struct depth_trend {
  std::vector<std::pair<double, double>> points;  // (depth_norm, value), sorted

  double at(double d) const {
    require(!points.empty(), "model: empty depth trend");
    if (d <= points.front().first) return points.front().second;
    if (d >= points.back().first) return points.back().second;
    for (std::size_t k = 1; k < points.size(); ++k) {
      if (d <= points[k].first) {
        auto [d0, v0] = points[k - 1];
        auto [d1, v1] = points[k];
        double t = (d - d0) / (d1 - d0);
        return v0 + t * (v1 - v0);
      }
    }
    return points.back().second;
  }
};

struct prior_spec {
  field mu_gas, mu_oil, mu_clay;
  correlation_spec corr_gas, corr_oil, corr_clay;
};

struct depth_field {
  field depth;  // meters
  double d_min = 0.0, d_max = 1.0;

  double normalize(double d) const { return (d - d_min) / (d_max - d_min); }
  field normalized() const {
    field out(depth.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = normalize(depth[k]);
    return out;
  }
};

// ---- latent <-> reservoir transforms ----

struct saturations {
  double gas, oil, brine;
};

// Softmax with brine as the reference class; the max shift keeps exp() in
// range for any finite logits.
inline saturations to_saturations(double x_gas, double x_oil) {
  double m = std::max({0.0, x_gas, x_oil});
  double eg = std::exp(x_gas - m);
  double eo = std::exp(x_oil - m);
  double eb = std::exp(-m);
  double denom = eb + eg + eo;
  return {eg / denom, eo / denom, eb / denom};
}

inline double to_clay_fraction(double x_clay) {
  if (x_clay >= 0.0) return 1.0 / (1.0 + std::exp(-x_clay));
  double e = std::exp(x_clay);
  return e / (1.0 + e);
}

inline reservoir_state to_reservoir(const latent_state& x) {
  const std::size_t n = x.cells();
  require(x.oil.size() == n && x.clay.size() == n, "model: latent fields must share one grid");
  reservoir_state r;
  r.s_gas.resize(n);
  r.s_oil.resize(n);
  r.s_brine.resize(n);
  r.v_clay.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    saturations s = to_saturations(x.gas[k], x.oil[k]);
    r.s_gas[k] = s.gas;
    r.s_oil[k] = s.oil;
    r.s_brine[k] = s.brine;
    r.v_clay[k] = to_clay_fraction(x.clay[k]);
  }
  return r;
}

inline latent_state to_latent(const reservoir_state& r) {
  const std::size_t n = r.s_gas.size();
  latent_state x;
  x.gas.resize(n);
  x.oil.resize(n);
  x.clay.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sg = r.s_gas[k], so = r.s_oil[k], sb = r.s_brine[k], v = r.v_clay[k];
    require(sg > 0.0 && sg < 1.0 && so > 0.0 && so < 1.0 && sb > 0.0 && sb < 1.0,
            "model: saturations must lie strictly inside (0,1)");
    require(v > 0.0 && v < 1.0, "model: clay fraction must lie strictly inside (0,1)");
    require(std::abs(sg + so + sb - 1.0) <= 1e-12, "model: saturations must sum to one");
    x.gas[k] = std::log(sg / sb);
    x.oil[k] = std::log(so / sb);
    x.clay[k] = std::log(v / (1.0 - v));
  }
  return x;
}

// ---- forward models ----

struct forward_coeffs {
  std::array<double, 6> a{0.02, -0.12, -0.06, 0.08, 0.05, 0.03};
  std::array<double, 6> b{-0.05, 0.20, 0.10, -0.12, -0.08, -0.10};
};

// The documented synthetic stand-in: smooth, nonlinear and with
// interactions, so surrogates have something real to learn.
inline std::array<double, 2> synthetic_forward(const forward_coeffs& c, double x_gas,
                                               double x_oil, double x_clay,
                                               double depth_norm) {
  saturations s = to_saturations(x_gas, x_oil);
  double v = to_clay_fraction(x_clay);
  double d = depth_norm;
  double r0 = c.a[0] + c.a[1] * s.gas + c.a[2] * s.oil + c.a[3] * v * (1.0 - d) +
              c.a[4] * s.gas * v + c.a[5] * std::tanh(2.0 * d - 1.0);
  double g = c.b[0] + c.b[1] * s.gas + c.b[2] * s.oil + c.b[3] * v +
             c.b[4] * s.oil * d + c.b[5] * s.gas * s.gas;
  return {r0, g};
}

// Deterministic per-cell map (x_gas, x_oil, x_clay, depth_norm) -> (R0, G).
class forward_model {
public:
  virtual ~forward_model() = default;
  virtual std::array<double, 2> at(double x_gas, double x_oil, double x_clay,
                                   double depth_norm) const = 0;

  virtual void evaluate(const latent_state& x, const field& depth_norm,
                        avo_observation& out) const {
    const std::size_t n = x.cells();
    out.r0.resize(n);
    out.grad.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      auto y = at(x.gas[k], x.oil[k], x.clay[k], depth_norm[k]);
      out.r0[k] = y[0];
      out.grad[k] = y[1];
    }
  }
};

class synthetic_forward_model final : public forward_model {
public:
  explicit synthetic_forward_model(forward_coeffs c = {}) : coeffs_(c) {}

  std::array<double, 2> at(double x_gas, double x_oil, double x_clay,
                           double depth_norm) const override {
    return synthetic_forward(coeffs_, x_gas, x_oil, x_clay, depth_norm);
  }

  const forward_coeffs& coeffs() const { return coeffs_; }

private:
  forward_coeffs coeffs_;
};

// ---- likelihood ----

// Full Gaussian log likelihood, normalization constants included (the
// Omega vs adjusted-Omega comparison needs the determinant term). The
// block-diagonal structure reduces everything to per-cell 2x2 algebra.
inline double log_likelihood(const avo_observation& y, const avo_observation& pred,
                             const noise_spec& noise) {
  const std::size_t n = y.r0.size();
  require(pred.r0.size() == n && y.grad.size() == n && pred.grad.size() == n,
          "model: observation grids must match");
  require(noise.positive_definite(), "model: noise block is not positive definite");
  const double rho = noise.corr;
  const double one_m_r2 = 1.0 - rho * rho;
  const double inv_vr = 1.0 / noise.var_r0;
  const double inv_vg = 1.0 / noise.var_g;
  const double cross = rho / std::sqrt(noise.var_r0 * noise.var_g);
  const double cell_const =
      -std::log(2.0 * M_PI) - 0.5 * std::log(noise.det());
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double dr = y.r0[k] - pred.r0[k];
    double dg = y.grad[k] - pred.grad[k];
    double quad = (dr * dr * inv_vr - 2.0 * cross * dr * dg + dg * dg * inv_vg) / one_m_r2;
    total += cell_const - 0.5 * quad;
  }
  return total;
}

// Inflate the noise block by the empirical second moments of surrogate
// residuals (prediction minus truth on held-out data).
inline noise_spec adjusted_noise(const noise_spec& noise,
                                 const std::vector<double>& resid_r0,
                                 const std::vector<double>& resid_g) {
  const std::size_t n = resid_r0.size();
  require(n >= 2 && resid_g.size() == n,
          "model: residual sequences must have equal length >= 2");
  double add_vr = 0.0, add_vg = 0.0, add_cov = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    add_vr += resid_r0[k] * resid_r0[k];
    add_vg += resid_g[k] * resid_g[k];
    add_cov += resid_r0[k] * resid_g[k];
  }
  add_vr /= static_cast<double>(n);
  add_vg /= static_cast<double>(n);
  add_cov /= static_cast<double>(n);

  noise_spec out;
  out.var_r0 = noise.var_r0 + add_vr;
  out.var_g = noise.var_g + add_vg;
  double cov = noise.corr * std::sqrt(noise.var_r0 * noise.var_g) + add_cov;
  out.corr = cov / std::sqrt(out.var_r0 * out.var_g);
  if (!out.positive_definite())
    throw error("model: adjusted noise block is not positive definite");
  return out;
}

// ---- prior ----

struct prior_bases {
  circulant_base gas, oil, clay;
};

inline prior_bases build_prior_bases(const grid_spec& g, const prior_spec& prior) {
  return {build_base(g, prior.corr_gas), build_base(g, prior.corr_oil),
          build_base(g, prior.corr_clay)};
}

// Sum of the three per-field quadratic forms; unnormalized like
// log_density_quadform.
inline double prior_log_density(const latent_state& x, const prior_spec& prior,
                                const prior_bases& bases) {
  return log_density_quadform(bases.gas, prior.mu_gas, x.gas) +
         log_density_quadform(bases.oil, prior.mu_oil, x.oil) +
         log_density_quadform(bases.clay, prior.mu_clay, x.clay);
}

// Draws the three independent fields; consumes noise in gas, oil, clay order.
inline latent_state sample_prior(const prior_spec& prior, const prior_bases& bases,
                                 rng& r) {
  const std::size_t n = prior.mu_gas.size();
  latent_state x;
  x.gas = sample_field(bases.gas, prior.mu_gas, r.normals(n));
  x.oil = sample_field(bases.oil, prior.mu_oil, r.normals(n));
  x.clay = sample_field(bases.clay, prior.mu_clay, r.normals(n));
  return x;
}

// ---- synthetic problem generation ----

struct depth_config {
  double d_min = 2000.0;
  double d_max = 2200.0;
  double perturb_amp = 0.0;    // meters; 0 disables the field perturbation
  double perturb_range = 3.0;  // grid cells
};

struct prior_config {
  depth_trend mu_gas{{{0.0, 1.0}, {1.0, -3.0}}};
  depth_trend mu_oil{{{0.0, 0.5}, {1.0, -2.5}}};
  depth_trend mu_clay{{{0.0, -1.0}, {1.0, -1.0}}};
  double sigma_gas = 1.0, sigma_oil = 1.0, sigma_clay = 0.8;
  double range_gas = 3.0, range_oil = 3.0, range_clay = 3.0;
};

// Smooth diagonal ramp from d_min to d_max, optionally perturbed by a
// Gaussian field, always clamped back into [d_min, d_max].
inline depth_field make_depth_field(const grid_spec& g, const depth_config& cfg, rng& r) {
  check_grid(g);
  require(cfg.d_min < cfg.d_max, "model: depth range must satisfy d_min < d_max");
  depth_field out;
  out.d_min = cfg.d_min;
  out.d_max = cfg.d_max;
  out.depth.resize(g.size());
  const double denom = static_cast<double>((g.nx - 1) + (g.ny - 1));
  for (std::uint32_t i = 0; i < g.nx; ++i)
    for (std::uint32_t j = 0; j < g.ny; ++j) {
      double t = denom > 0.0 ? static_cast<double>(i + j) / denom : 0.0;
      out.depth[g.index(i, j)] = cfg.d_min + (cfg.d_max - cfg.d_min) * t;
    }
  if (cfg.perturb_amp > 0.0) {
    auto base = build_base(g, {1.0, cfg.perturb_range});
    field bump = sample_field(base, constant_field(g, 0.0), r.normals(g.size()));
    for (std::size_t k = 0; k < out.depth.size(); ++k) {
      out.depth[k] += cfg.perturb_amp * bump[k];
      out.depth[k] = std::clamp(out.depth[k], cfg.d_min, cfg.d_max);
    }
  }
  return out;
}

inline prior_spec make_prior(const prior_config& cfg, const field& depth_norm) {
  prior_spec p;
  const std::size_t n = depth_norm.size();
  p.mu_gas.resize(n);
  p.mu_oil.resize(n);
  p.mu_clay.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    p.mu_gas[k] = cfg.mu_gas.at(depth_norm[k]);
    p.mu_oil[k] = cfg.mu_oil.at(depth_norm[k]);
    p.mu_clay[k] = cfg.mu_clay.at(depth_norm[k]);
  }
  p.corr_gas = {cfg.sigma_gas, cfg.range_gas};
  p.corr_oil = {cfg.sigma_oil, cfg.range_oil};
  p.corr_clay = {cfg.sigma_clay, cfg.range_clay};
  return p;
}

// Correlated 2x2 Gaussian draw via the Cholesky factor; degenerate (zero)
// variances shut the corresponding component off.
inline std::array<double, 2> draw_noise_pair(const noise_spec& noise, rng& r) {
  double z1 = r.normal();
  double z2 = r.normal();
  double er = std::sqrt(std::max(noise.var_r0, 0.0)) * z1;
  double eg = noise.corr * std::sqrt(std::max(noise.var_g, 0.0)) * z1 +
              std::sqrt(std::max(noise.var_g * (1.0 - noise.corr * noise.corr), 0.0)) * z2;
  return {er, eg};
}

struct synthetic_problem {
  grid_spec grid;
  prior_spec prior;
  depth_field depth;
  latent_state truth;
  avo_observation data;
};

// Prior spec + depth + ground truth + noisy data, all from one rng stream.
// Draw order: depth perturbation, truth (gas, oil, clay), then per-cell
// noise pairs.
inline synthetic_problem make_synthetic_problem(const grid_spec& g,
                                                const depth_config& depth_cfg,
                                                const prior_config& prior_cfg,
                                                const noise_spec& noise,
                                                const forward_model& forward, rng& r) {
  synthetic_problem p;
  p.grid = g;
  p.depth = make_depth_field(g, depth_cfg, r);
  field depth_norm = p.depth.normalized();
  p.prior = make_prior(prior_cfg, depth_norm);
  prior_bases bases = build_prior_bases(g, p.prior);
  p.truth = sample_prior(p.prior, bases, r);
  forward.evaluate(p.truth, depth_norm, p.data);
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto e = draw_noise_pair(noise, r);
    p.data.r0[k] += e[0];
    p.data.grad[k] += e[1];
  }
  return p;
}

// Surrogate training/test tables, generated the way the field data would
// be: depth uniform over its range, latents from the depth-conditional
// prior marginals, responses from the exact forward model (no noise).
struct sample_table {
  std::size_t n = 0;
  std::vector<double> x;  // n x 4 row-major: x_gas, x_oil, x_clay, depth_norm
  std::vector<double> r0, grad;
};

inline sample_table make_training_table(std::size_t n, const prior_config& prior_cfg,
                                        const forward_model& forward, rng& r) {
  sample_table t;
  t.n = n;
  t.x.resize(n * 4);
  t.r0.resize(n);
  t.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = r.uniform();
    double xg = prior_cfg.mu_gas.at(d) + prior_cfg.sigma_gas * r.normal();
    double xo = prior_cfg.mu_oil.at(d) + prior_cfg.sigma_oil * r.normal();
    double xc = prior_cfg.mu_clay.at(d) + prior_cfg.sigma_clay * r.normal();
    t.x[i * 4 + 0] = xg;
    t.x[i * 4 + 1] = xo;
    t.x[i * 4 + 2] = xc;
    t.x[i * 4 + 3] = d;
    auto y = forward.at(xg, xo, xc, d);
    t.r0[i] = y[0];
    t.grad[i] = y[1];
  }
  return t;
}

}  // namespace avoinv
