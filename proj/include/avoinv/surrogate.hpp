#pragma once

#include <array>
#include <memory>

#include "avoinv/mars.hpp"
#include "avoinv/model.hpp"
#include "avoinv/npkr.hpp"

// Fitted-surrogate implementations of the forward-model contract, plus the
// forward-gradient providers MALA draws on.

namespace avoinv {

class mars_forward_model final : public forward_model {
public:
  mars_forward_model(mars_model r0, mars_model g)
      : r0_(std::move(r0)), g_(std::move(g)), fast_r0_(r0_), fast_g_(g_) {}

  std::array<double, 2> at(double x_gas, double x_oil, double x_clay,
                           double depth_norm) const override {
    const std::array<double, 4> x{x_gas, x_oil, x_clay, depth_norm};
    return {r0_.predict(x.data()), g_.predict(x.data())};
  }

  void evaluate(const latent_state& x, const field& depth_norm,
                avo_observation& out) const override {
    const std::size_t n = x.cells();
    std::vector<double> pts(n * 4);
    for (std::size_t k = 0; k < n; ++k) {
      pts[k * 4 + 0] = x.gas[k];
      pts[k * 4 + 1] = x.oil[k];
      pts[k * 4 + 2] = x.clay[k];
      pts[k * 4 + 3] = depth_norm[k];
    }
    out.r0.resize(n);
    out.grad.resize(n);
    fast_r0_.predict(pts.data(), n, out.r0.data());
    fast_g_.predict(pts.data(), n, out.grad.data());
  }

  const mars_model& r0_model() const { return r0_; }
  const mars_model& g_model() const { return g_; }

private:
  mars_model r0_, g_;
  compiled_predictor fast_r0_, fast_g_;
};

class npkr_forward_model final : public forward_model {
public:
  npkr_forward_model(npkr_model r0, npkr_model g)
      : r0_(std::move(r0)), g_(std::move(g)) {}

  std::array<double, 2> at(double x_gas, double x_oil, double x_clay,
                           double depth_norm) const override {
    const std::array<double, 4> x{x_gas, x_oil, x_clay, depth_norm};
    return {predict(r0_, x.data()), predict(g_, x.data())};
  }

  const npkr_model& r0_model() const { return r0_; }
  const npkr_model& g_model() const { return g_; }

private:
  npkr_model r0_, g_;
};

// d(r0, g)/d(x_gas, x_oil, x_clay) at one point; depth is a covariate but
// never a differentiation direction.
class forward_gradient {
public:
  virtual ~forward_gradient() = default;
  virtual void at(double x_gas, double x_oil, double x_clay, double depth_norm,
                  std::array<double, 3>& d_r0, std::array<double, 3>& d_g) const = 0;
};

// The six derivative-response models fitted by fit_gradient_models,
// ordered dR0/d{gas,oil,clay} then dG/d{gas,oil,clay}.
class mars_gradient_bundle final : public forward_gradient {
public:
  explicit mars_gradient_bundle(std::array<mars_model, 6> models)
      : models_(std::move(models)) {}

  void at(double x_gas, double x_oil, double x_clay, double depth_norm,
          std::array<double, 3>& d_r0, std::array<double, 3>& d_g) const override {
    const std::array<double, 4> x{x_gas, x_oil, x_clay, depth_norm};
    for (std::size_t j = 0; j < 3; ++j) {
      d_r0[j] = models_[j].predict(x.data());
      d_g[j] = models_[3 + j].predict(x.data());
    }
  }

  const std::array<mars_model, 6>& models() const { return models_; }

private:
  std::array<mars_model, 6> models_;
};

// Analytic gradient of a MARS surrogate pair.
class mars_analytic_gradient final : public forward_gradient {
public:
  explicit mars_analytic_gradient(const mars_forward_model& surrogate)
      : surrogate_(&surrogate) {}

  void at(double x_gas, double x_oil, double x_clay, double depth_norm,
          std::array<double, 3>& d_r0, std::array<double, 3>& d_g) const override {
    const std::array<double, 4> x{x_gas, x_oil, x_clay, depth_norm};
    std::array<double, 4> full{};
    surrogate_->r0_model().predict_gradient(x.data(), full.data());
    d_r0 = {full[0], full[1], full[2]};
    surrogate_->g_model().predict_gradient(x.data(), full.data());
    d_g = {full[0], full[1], full[2]};
  }

private:
  const mars_forward_model* surrogate_;
};

// One-sided finite differences of an arbitrary forward model; the reference
// the fitted gradient providers are judged against.
class finite_difference_gradient final : public forward_gradient {
public:
  explicit finite_difference_gradient(const forward_model& fm, double eps = 1e-4)
      : fm_(&fm), eps_(eps) {}

  void at(double x_gas, double x_oil, double x_clay, double depth_norm,
          std::array<double, 3>& d_r0, std::array<double, 3>& d_g) const override {
    const std::array<double, 2> base = fm_->at(x_gas, x_oil, x_clay, depth_norm);
    std::array<double, 4> x{x_gas, x_oil, x_clay, depth_norm};
    for (std::size_t j = 0; j < 3; ++j) {
      std::array<double, 4> xb = x;
      xb[j] += eps_;
      auto bumped = fm_->at(xb[0], xb[1], xb[2], xb[3]);
      d_r0[j] = (bumped[0] - base[0]) / eps_;
      d_g[j] = (bumped[1] - base[1]) / eps_;
    }
  }

private:
  const forward_model* fm_;
  double eps_;
};

}  // namespace avoinv
