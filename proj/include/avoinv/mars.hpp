#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/io.hpp"

// Multivariate adaptive regression splines, built from scratch: a greedy
// forward pass over reflected hinge pairs, backward pruning under
// generalized cross-validation, exact least-squares coefficients at every
// stage, and analytic gradients.

namespace avoinv {

struct training_set {
  std::size_t n = 0, p = 0;
  std::vector<double> x;  // n*p row-major
  std::vector<double> y;  // n

  double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
  void validate() const {
    require(n >= 2, "mars: need at least two observations");
    require(p >= 1 && x.size() == n * p && y.size() == n,
            "mars: inconsistent training dimensions");
    require(all_finite(x) && all_finite(y), "mars: non-finite training values");
  }
};

enum class hinge_side : std::uint8_t { plus, minus };

struct hinge_factor {
  std::uint32_t var = 0;
  double knot = 0.0;
  hinge_side side = hinge_side::plus;

  double value(double v) const {
    double t = side == hinge_side::plus ? v - knot : knot - v;
    return t > 0.0 ? t : 0.0;
  }
  // Indicator of the strictly active side; exactly at the knot the
  // derivative is taken as 0.
  double slope(double v) const {
    if (side == hinge_side::plus) return v > knot ? 1.0 : 0.0;
    return v < knot ? -1.0 : 0.0;
  }
};

struct mars_term {
  double coefficient = 0.0;
  std::vector<hinge_factor> factors;  // empty = intercept

  bool is_intercept() const { return factors.empty(); }
  bool uses_var(std::uint32_t v) const {
    for (const auto& f : factors)
      if (f.var == v) return true;
    return false;
  }
  double value(const double* x) const {
    double prod = 1.0;
    for (const auto& f : factors) prod *= f.value(x[f.var]);
    return prod;
  }
};

struct mars_model {
  std::uint32_t n_covariates = 0;
  std::vector<mars_term> terms;  // terms[0] is the intercept
  double gcv = 0.0;
  std::size_t n_train = 0;

  std::size_t term_count() const { return terms.size(); }
  std::size_t interaction_count() const {
    std::size_t c = 0;
    for (const auto& t : terms)
      if (t.factors.size() >= 2) ++c;
    return c;
  }

  double predict(const double* x) const {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.coefficient * t.value(x);
    return acc;
  }
  double predict(const std::vector<double>& x) const { return predict(x.data()); }

  // Exact piecewise derivative via the product rule.
  void predict_gradient(const double* x, double* out) const {
    for (std::uint32_t j = 0; j < n_covariates; ++j) out[j] = 0.0;
    for (const auto& t : terms) {
      if (t.is_intercept()) continue;
      for (std::size_t f = 0; f < t.factors.size(); ++f) {
        double d = t.factors[f].slope(x[t.factors[f].var]);
        if (d == 0.0) continue;
        double rest = 1.0;
        for (std::size_t g = 0; g < t.factors.size(); ++g)
          if (g != f) rest *= t.factors[g].value(x[t.factors[g].var]);
        out[t.factors[f].var] += t.coefficient * d * rest;
      }
    }
  }
  std::vector<double> predict_gradient(const std::vector<double>& x) const {
    std::vector<double> g(n_covariates);
    predict_gradient(x.data(), g.data());
    return g;
  }
};

struct mars_fit_config {
  std::size_t max_terms = 41;   // size before pruning, intercept included
  std::size_t max_degree = 2;   // factors per term
  double penalty = 3.0;         // per-knot charge in the effective dof
  std::size_t knot_subsample = 0;  // 0 = every observed value is a candidate
  std::size_t min_span = 0;        // stride between accepted candidate knots
  std::size_t end_span = 0;        // sorted extremes excluded per side
  double forward_rel_tol = 1e-10;  // stop when no pair improves RSS by this
};

// Effective number of parameters: terms plus a penalty per knot, with one
// knot per reflected pair.
inline double effective_dof(std::size_t n_terms, double penalty) {
  return static_cast<double>(n_terms) +
         penalty * static_cast<double>(n_terms - 1) / 2.0;
}

inline double gcv(double rss, std::size_t n, std::size_t n_terms, double penalty) {
  double dof = effective_dof(n_terms, penalty);
  require(dof < static_cast<double>(n), "mars: effective dof must stay below n");
  double denom = 1.0 - dof / static_cast<double>(n);
  return (rss / static_cast<double>(n)) / (denom * denom);
}

namespace mars_detail {

inline Eigen::MatrixXd basis_matrix(const training_set& data,
                                    const std::vector<mars_term>& terms) {
  Eigen::MatrixXd b(data.n, terms.size());
  for (std::size_t i = 0; i < data.n; ++i) {
    const double* row = data.x.data() + i * data.p;
    for (std::size_t t = 0; t < terms.size(); ++t)
      b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = terms[t].value(row);
  }
  return b;
}

// Minimum-norm least squares; rank deficiency never throws.
inline Eigen::VectorXd solve_ls(const Eigen::MatrixXd& b, const Eigen::VectorXd& y,
                                double* rss_out) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(b);
  Eigen::VectorXd beta = cod.solve(y);
  if (rss_out) *rss_out = (y - b * beta).squaredNorm();
  return beta;
}

inline void refit_coefficients(mars_model& model, const training_set& data,
                               double* rss_out) {
  Eigen::MatrixXd b = basis_matrix(data, model.terms);
  Eigen::Map<const Eigen::VectorXd> y(data.y.data(), static_cast<Eigen::Index>(data.n));
  Eigen::VectorXd beta = solve_ls(b, y, rss_out);
  for (std::size_t t = 0; t < model.terms.size(); ++t)
    model.terms[t].coefficient = beta(static_cast<Eigen::Index>(t));
}

struct pair_candidate {
  double rss = std::numeric_limits<double>::infinity();
  std::size_t parent = 0;
  std::uint32_t var = 0;
  double knot = 0.0;
  bool found = false;
};

// RSS improvement from appending columns u, w (already orthogonalized
// against the active basis) with Gram entries guu, gww, guw and residual
// products bu, bw. Degenerate directions drop out (minimum-norm choice).
inline double pair_improvement(double guu, double gww, double guw, double bu, double bw,
                               double scale) {
  const double tol = 1e-12 * scale;
  bool has_u = guu > tol;
  bool has_w = gww > tol;
  if (!has_u && !has_w) return 0.0;
  if (has_u && !has_w) return bu * bu / guu;
  if (!has_u && has_w) return bw * bw / gww;
  double det = guu * gww - guw * guw;
  if (det <= 1e-12 * guu * gww)
    return guu >= gww ? bu * bu / guu : bw * bw / gww;
  return (gww * bu * bu - 2.0 * guw * bu * bw + guu * bw * bw) / det;
}

// One (parent, covariate) sweep over every candidate knot, descending.
// Running sums make each knot O(rank) after the one-off sort.
inline void scan_knots(const training_set& data, const Eigen::MatrixXd& qt,
                       const Eigen::VectorXd& res, const Eigen::VectorXd& parent_col,
                       const std::vector<std::size_t>& order, std::size_t parent_idx,
                       std::uint32_t var, double rss0, const mars_fit_config& cfg,
                       pair_candidate& best) {
  const std::size_t n = data.n;
  const std::size_t rank = static_cast<std::size_t>(qt.rows());

  // Totals over all points.
  std::vector<double> total_sq(rank, 0.0), total_suq(rank, 0.0);
  double total_sr = 0.0, total_sur = 0.0;
  double total_sp2 = 0.0, total_spt = 0.0, total_spt2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pi = parent_col(static_cast<Eigen::Index>(i));
    if (pi == 0.0) continue;
    double ti = data.at(i, var);
    for (std::size_t j = 0; j < rank; ++j) {
      double pq = pi * qt(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      total_sq[j] += pq;
      total_suq[j] += pq * ti;
    }
    double pr = pi * res(static_cast<Eigen::Index>(i));
    total_sr += pr;
    total_sur += pr * ti;
    total_sp2 += pi * pi;
    total_spt += pi * pi * ti;
    total_spt2 += pi * pi * ti * ti;
  }
  const double scale = std::max(total_spt2, total_sp2);
  if (scale <= 0.0) return;  // parent vanishes everywhere

  // Active sums over {i : t_i > c}.
  std::vector<double> sq(rank, 0.0), suq(rank, 0.0);
  double sr = 0.0, sur = 0.0, sp2 = 0.0, spt = 0.0, spt2 = 0.0;

  std::size_t pos = 0;
  std::size_t distinct_index = 0;
  // Count distinct values once for the end-span bound.
  std::size_t n_distinct = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (k == 0 || data.at(order[k], var) != data.at(order[k - 1], var)) ++n_distinct;

  while (pos < n) {
    const double c = data.at(order[pos], var);
    // Absorb everything strictly above the knot (already passed).
    // pos currently points at the first element with value == c.
    const std::size_t idx = distinct_index++;
    // Evaluate improvement at knot c unless span rules exclude it.
    bool skip = false;
    if (cfg.end_span > 0 &&
        (idx < cfg.end_span || idx + cfg.end_span >= n_distinct))
      skip = true;
    if (!skip && cfg.min_span > 1 && idx % cfg.min_span != 0) skip = true;
    if (!skip && cfg.knot_subsample > 0 && n_distinct > cfg.knot_subsample) {
      std::size_t stride = (n_distinct + cfg.knot_subsample - 1) / cfg.knot_subsample;
      if (idx % stride != 0) skip = true;
    }
    if (!skip) {
      double bu = sur - c * sr;
      double guu = spt2 - 2.0 * c * spt + c * c * sp2;
      double bw = c * (total_sr - sr) - (total_sur - sur);
      double gww = c * c * (total_sp2 - sp2) - 2.0 * c * (total_spt - spt) +
                   (total_spt2 - spt2);
      double guw = 0.0;
      double sum_a2 = 0.0, sum_d2 = 0.0, sum_ad = 0.0;
      for (std::size_t j = 0; j < rank; ++j) {
        double aj = suq[j] - c * sq[j];
        double dj = c * (total_sq[j] - sq[j]) - (total_suq[j] - suq[j]);
        sum_a2 += aj * aj;
        sum_d2 += dj * dj;
        sum_ad += aj * dj;
      }
      double improvement = pair_improvement(guu - sum_a2, gww - sum_d2, guw - sum_ad,
                                            bu, bw, scale);
      double rss = rss0 - improvement;
      if (rss < best.rss * (1.0 - 1e-12)) {
        best.rss = rss;
        best.parent = parent_idx;
        best.var = var;
        best.knot = c;
        best.found = true;
      }
    }
    // Absorb all points sitting exactly at c before moving below it.
    while (pos < n && data.at(order[pos], var) == c) {
      std::size_t i = order[pos];
      double pi = parent_col(static_cast<Eigen::Index>(i));
      if (pi != 0.0) {
        double ti = c;
        for (std::size_t j = 0; j < rank; ++j) {
          double pq = pi * qt(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
          sq[j] += pq;
          suq[j] += pq * ti;
        }
        double pr = pi * res(static_cast<Eigen::Index>(i));
        sr += pr;
        sur += pr * ti;
        sp2 += pi * pi;
        spt += pi * pi * ti;
        spt2 += pi * pi * ti * ti;
      }
      ++pos;
    }
  }
}

}  // namespace mars_detail

// Greedy forward pass: every iteration appends the reflected hinge pair
// (over all parents, unused covariates and observed knots) that drops the
// exactly-refit RSS the most.
inline mars_model fit_forward(const training_set& data, const mars_fit_config& cfg) {
  data.validate();
  require(cfg.max_terms >= 1 && cfg.max_degree >= 1, "mars: invalid fit config");

  mars_model model;
  model.n_covariates = static_cast<std::uint32_t>(data.p);
  model.n_train = data.n;
  model.terms.push_back(mars_term{});  // intercept

  Eigen::Map<const Eigen::VectorXd> y(data.y.data(), static_cast<Eigen::Index>(data.n));

  // Sorted order per covariate, descending, computed once.
  std::vector<std::vector<std::size_t>> orders(data.p);
  for (std::size_t v = 0; v < data.p; ++v) {
    orders[v].resize(data.n);
    std::iota(orders[v].begin(), orders[v].end(), std::size_t{0});
    std::stable_sort(orders[v].begin(), orders[v].end(), [&](std::size_t a, std::size_t b) {
      return data.at(a, v) > data.at(b, v);
    });
  }

  double rss = 0.0;
  mars_detail::refit_coefficients(model, data, &rss);
  const double rss_floor = 1e-14 * y.squaredNorm() / static_cast<double>(data.n);

  while (model.terms.size() + 2 <= cfg.max_terms &&
         effective_dof(model.terms.size() + 2, cfg.penalty) <
             static_cast<double>(data.n) &&
         rss > rss_floor) {
    Eigen::MatrixXd b = mars_detail::basis_matrix(data, model.terms);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
    const auto rank = qr.rank();
    Eigen::MatrixXd thin_q =
        qr.householderQ().setLength(rank) *
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(data.n), rank);
    Eigen::MatrixXd qt = thin_q.transpose();
    Eigen::VectorXd res = y - thin_q * (qt * y);
    double rss0 = res.squaredNorm();

    mars_detail::pair_candidate best;
    best.rss = rss0;
    for (std::size_t parent = 0; parent < model.terms.size(); ++parent) {
      if (model.terms[parent].factors.size() >= cfg.max_degree) continue;
      Eigen::VectorXd parent_col = b.col(static_cast<Eigen::Index>(parent));
      for (std::uint32_t v = 0; v < data.p; ++v) {
        if (model.terms[parent].uses_var(v)) continue;
        mars_detail::scan_knots(data, qt, res, parent_col, orders[v], parent, v, rss0,
                                cfg, best);
      }
    }
    if (!best.found || rss0 - best.rss <= cfg.forward_rel_tol * rss0) break;

    mars_term plus = model.terms[best.parent];
    plus.factors.push_back({best.var, best.knot, hinge_side::plus});
    mars_term minus = model.terms[best.parent];
    minus.factors.push_back({best.var, best.knot, hinge_side::minus});
    model.terms.push_back(std::move(plus));
    model.terms.push_back(std::move(minus));
    mars_detail::refit_coefficients(model, data, &rss);
  }

  model.gcv = gcv(rss, data.n, model.terms.size(), cfg.penalty);
  return model;
}

// Backward pruning: repeatedly drop the non-intercept term whose removal
// raises RSS the least, track GCV at every size, return the GCV argmin
// (ties toward fewer terms).
inline mars_model prune_backward(const mars_model& forward_model, const training_set& data,
                                 const mars_fit_config& cfg) {
  data.validate();
  const std::size_t m = forward_model.terms.size();
  Eigen::MatrixXd b = mars_detail::basis_matrix(data, forward_model.terms);
  Eigen::Map<const Eigen::VectorXd> y(data.y.data(), static_cast<Eigen::Index>(data.n));
  Eigen::MatrixXd gram = b.transpose() * b;
  Eigen::VectorXd by = b.transpose() * y;
  const double yty = y.squaredNorm();

  auto subset_rss = [&](const std::vector<std::size_t>& active) {
    const Eigen::Index k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd g(k, k);
    Eigen::VectorXd v(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      v(a) = by(static_cast<Eigen::Index>(active[a]));
      for (Eigen::Index c = 0; c < k; ++c)
        g(a, c) = gram(static_cast<Eigen::Index>(active[a]),
                       static_cast<Eigen::Index>(active[c]));
    }
    Eigen::VectorXd beta = g.ldlt().solve(v);
    double rss = yty - 2.0 * beta.dot(v) + beta.dot(g * beta);
    return std::max(rss, 0.0);
  };

  std::vector<std::size_t> active(m);
  std::iota(active.begin(), active.end(), std::size_t{0});

  std::vector<std::vector<std::size_t>> stages;  // best subset at each size
  stages.push_back(active);
  while (active.size() > 1) {
    double best_rss = std::numeric_limits<double>::infinity();
    std::size_t best_pos = 1;
    for (std::size_t pos = 1; pos < active.size(); ++pos) {  // keep the intercept
      std::vector<std::size_t> trial = active;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(pos));
      double rss = subset_rss(trial);
      if (rss < best_rss * (1.0 - 1e-12)) {
        best_rss = rss;
        best_pos = pos;
      }
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pos));
    stages.push_back(active);
  }

  // Exact refit per stage; pick the GCV minimizer, preferring smaller models.
  double best_gcv = std::numeric_limits<double>::infinity();
  mars_model best;
  for (const auto& stage : stages) {
    mars_model candidate;
    candidate.n_covariates = forward_model.n_covariates;
    candidate.n_train = data.n;
    for (std::size_t idx : stage) candidate.terms.push_back(forward_model.terms[idx]);
    double rss = 0.0;
    mars_detail::refit_coefficients(candidate, data, &rss);
    candidate.gcv = gcv(rss, data.n, candidate.terms.size(), cfg.penalty);
    if (candidate.gcv <= best_gcv) {  // later stages are smaller
      best_gcv = candidate.gcv;
      best = std::move(candidate);
    }
  }
  return best;
}

inline mars_model fit(const training_set& data, const mars_fit_config& cfg) {
  return prune_backward(fit_forward(data, cfg), data, cfg);
}

// Six derivative-response fits: one-sided finite differences of each
// response in {r0, g} against each of the first three covariates, fitted
// as ordinary MARS models. Depth is a covariate of the fits but never a
// differentiation direction.
template <typename PointFn>
inline std::array<mars_model, 6> fit_gradient_models(PointFn&& forward_at,
                                                     const training_set& covariates,
                                                     double eps,
                                                     const mars_fit_config& cfg) {
  require(eps > 0.0, "mars: finite-difference eps must be positive");
  require(covariates.p == 4, "mars: gradient models expect 4 covariates");
  std::array<mars_model, 6> out;
  std::vector<std::array<double, 2>> base(covariates.n);
  for (std::size_t i = 0; i < covariates.n; ++i)
    base[i] = forward_at(covariates.at(i, 0), covariates.at(i, 1), covariates.at(i, 2),
                         covariates.at(i, 3));
  for (std::size_t v = 0; v < 3; ++v) {
    training_set d = covariates;
    training_set g = covariates;
    for (std::size_t i = 0; i < covariates.n; ++i) {
      std::array<double, 4> xp{covariates.at(i, 0), covariates.at(i, 1),
                               covariates.at(i, 2), covariates.at(i, 3)};
      xp[v] += eps;
      auto bumped = forward_at(xp[0], xp[1], xp[2], xp[3]);
      d.y[i] = (bumped[0] - base[i][0]) / eps;
      g.y[i] = (bumped[1] - base[i][1]) / eps;
    }
    out[v] = fit(d, cfg);
    out[3 + v] = fit(g, cfg);
  }
  return out;
}

// Flattened term layout for bulk prediction; the hot path of both the
// surrogate benchmark and the MCMC likelihood. Same term and factor order
// as mars_model::predict; results agree up to fp contraction.
class compiled_predictor {
public:
  explicit compiled_predictor(const mars_model& m)
      : p_(m.n_covariates), intercept_(0.0) {
    for (const auto& t : m.terms) {
      if (t.is_intercept()) {
        intercept_ += t.coefficient;
        continue;
      }
      coef_.push_back(t.coefficient);
      offset_.push_back(static_cast<std::uint32_t>(var_.size()));
      for (const auto& f : t.factors) {
        var_.push_back(f.var);
        knot_.push_back(f.knot);
        sign_.push_back(f.side == hinge_side::plus ? 1.0 : -1.0);
      }
    }
    offset_.push_back(static_cast<std::uint32_t>(var_.size()));
  }

  // x: n*p row-major points.
  void predict(const double* x, std::size_t n, double* out) const {
    constexpr std::size_t tile = 256;
    double prod[tile];
    for (std::size_t start = 0; start < n; start += tile) {
      const std::size_t len = std::min(tile, n - start);
      const double* block = x + start * p_;
      for (std::size_t i = 0; i < len; ++i) out[start + i] = intercept_;
      for (std::size_t t = 0; t < coef_.size(); ++t) {
        const double c = coef_[t];
        for (std::size_t i = 0; i < len; ++i) prod[i] = 1.0;
        for (std::uint32_t f = offset_[t]; f < offset_[t + 1]; ++f) {
          const std::uint32_t v = var_[f];
          const double k = knot_[f], s = sign_[f];
          for (std::size_t i = 0; i < len; ++i) {
            double h = s * (block[i * p_ + v] - k);
            prod[i] *= h > 0.0 ? h : 0.0;
          }
        }
        for (std::size_t i = 0; i < len; ++i) out[start + i] += c * prod[i];
      }
    }
  }

private:
  std::uint32_t p_;
  double intercept_;
  std::vector<double> coef_;
  std::vector<std::uint32_t> offset_;
  std::vector<std::uint32_t> var_;
  std::vector<double> knot_;
  std::vector<double> sign_;
};

// ---- structured-text serialization ----
// Doubles print with 17 significant digits, so predictions round-trip
// bit-exactly.

inline void write_model(std::ostream& os, const mars_model& m) {
  os << "MARS 1\n";
  os << "covariates " << m.n_covariates << '\n';
  os << "n_train " << m.n_train << '\n';
  os << "gcv " << io::format_double(m.gcv) << '\n';
  os << "terms " << m.terms.size() << '\n';
  for (const auto& t : m.terms) {
    os << io::format_double(t.coefficient) << ' ' << t.factors.size();
    for (const auto& f : t.factors)
      os << ' ' << f.var << ' ' << io::format_double(f.knot) << ' '
         << (f.side == hinge_side::plus ? 'p' : 'm');
    os << '\n';
  }
  if (!os) throw io_error("mars: model write failed");
}

inline mars_model read_model(std::istream& is) {
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "MARS" || version != 1) throw io_error("mars: bad model header");
  mars_model m;
  std::size_t n_terms = 0;
  std::string key;
  is >> key >> m.n_covariates;
  if (key != "covariates") throw io_error("mars: expected covariates");
  is >> key >> m.n_train;
  if (key != "n_train") throw io_error("mars: expected n_train");
  is >> key >> m.gcv;
  if (key != "gcv") throw io_error("mars: expected gcv");
  is >> key >> n_terms;
  if (key != "terms") throw io_error("mars: expected terms");
  m.terms.resize(n_terms);
  for (auto& t : m.terms) {
    std::size_t n_factors = 0;
    is >> t.coefficient >> n_factors;
    t.factors.resize(n_factors);
    for (auto& f : t.factors) {
      char side = 0;
      is >> f.var >> f.knot >> side;
      if (side != 'p' && side != 'm') throw io_error("mars: bad hinge side");
      f.side = side == 'p' ? hinge_side::plus : hinge_side::minus;
    }
  }
  if (!is) throw io_error("mars: truncated model");
  return m;
}

inline void save_model(const std::string& path, const mars_model& m) {
  auto os = io::open_out(path, false);
  write_model(os, m);
}

inline mars_model load_model(const std::string& path) {
  auto is = io::open_in(path, false);
  return read_model(is);
}

}  // namespace avoinv
