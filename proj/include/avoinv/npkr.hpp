#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/io.hpp"
#include "avoinv/rng.hpp"

// Nadaraya-Watson kernel regression with product Gaussian kernels and
// least-squares cross-validated bandwidths; the surrogate baseline MARS is
// benchmarked against.

namespace avoinv {

struct npkr_model {
  std::size_t n = 0, p = 0;
  std::vector<double> x;           // n*p row-major training covariates
  std::vector<double> y;           // n responses
  std::vector<double> bandwidths;  // p Gaussian-kernel standard deviations

  double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
  void validate() const {
    require(n >= 1 && p >= 1 && x.size() == n * p && y.size() == n &&
                bandwidths.size() == p,
            "npkr: inconsistent model dimensions");
    for (double b : bandwidths)
      require(b > 0.0, "npkr: bandwidths must be strictly positive");
  }
};

namespace npkr_detail {

// Log of the product Gaussian kernel up to the i-independent normalizer,
// which cancels inside the weights.
inline double log_kernel(const npkr_model& m, const double* query, std::size_t i) {
  double acc = 0.0;
  for (std::size_t j = 0; j < m.p; ++j) {
    double t = (query[j] - m.at(i, j)) / m.bandwidths[j];
    acc -= 0.5 * t * t;
  }
  return acc;
}

}  // namespace npkr_detail

// Normalized kernel weights at a query point; the max log-kernel is
// subtracted before exponentiation so distant queries still produce a
// proper probability vector.
inline std::vector<double> weights(const npkr_model& m, const double* query) {
  std::vector<double> w(m.n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.n; ++i) {
    w[i] = npkr_detail::log_kernel(m, query, i);
    best = std::max(best, w[i]);
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - best);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

inline std::vector<double> weights(const npkr_model& m, const std::vector<double>& q) {
  require(q.size() == m.p, "npkr: query dimension mismatch");
  return weights(m, q.data());
}

inline double predict(const npkr_model& m, const double* query) {
  std::vector<double> w = weights(m, query);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) acc += w[i] * m.y[i];
  return acc;
}

inline double predict(const npkr_model& m, const std::vector<double>& q) {
  require(q.size() == m.p, "npkr: query dimension mismatch");
  return predict(m, q.data());
}

// Leave-one-out squared prediction error, exact O(n^2 p). When query_subset
// is non-empty only those rows are used as held-out queries (every row still
// acts as a training point).
inline double loo_error(const npkr_model& m,
                        const std::vector<std::size_t>& query_subset = {}) {
  double total = 0.0;
  auto one = [&](std::size_t i) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> lk(m.n);
    const double* q = m.x.data() + i * m.p;
    for (std::size_t l = 0; l < m.n; ++l) {
      if (l == i) continue;
      lk[l] = npkr_detail::log_kernel(m, q, l);
      best = std::max(best, lk[l]);
    }
    double wsum = 0.0, acc = 0.0;
    for (std::size_t l = 0; l < m.n; ++l) {
      if (l == i) continue;
      double w = std::exp(lk[l] - best);
      wsum += w;
      acc += w * m.y[l];
    }
    double pred = acc / wsum;
    double d = m.y[i] - pred;
    return d * d;
  };
  if (query_subset.empty()) {
    for (std::size_t i = 0; i < m.n; ++i) total += one(i);
  } else {
    for (std::size_t i : query_subset) total += one(i);
  }
  return total;
}

// Silverman-style fallback per covariate.
inline double rule_of_thumb_bandwidth(double sd, std::size_t n) {
  double b = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  return b > 0.0 ? b : 1.0;
}

struct npkr_fit_config {
  std::size_t starts = 5;           // multi-start ladder around the rule of thumb
  std::size_t budget = 200;         // total objective evaluations
  std::size_t subset = 0;           // 0: exact for n <= 5000, else 2000 queries
  std::uint64_t seed = 0;           // subset selection only
};

struct npkr_fit_report {
  std::vector<double> bandwidths;
  double loo = 0.0;                 // objective value at the returned point
  bool used_fallback = false;       // degenerate covariate or flat response
  std::size_t evaluations = 0;
};

// Least-squares cross-validation: coordinate descent on log-bandwidths from
// a deterministic ladder of starting points. Only improvements are ever
// accepted, so the result is no worse than any start.
inline npkr_fit_report fit_bandwidths_lscv(const std::vector<double>& x,
                                           const std::vector<double>& y, std::size_t p,
                                           const npkr_fit_config& cfg = {}) {
  const std::size_t n = y.size();
  require(n >= 3, "npkr: need at least three observations for LSCV");
  require(p >= 1 && x.size() == n * p, "npkr: inconsistent covariate matrix");

  npkr_fit_report report;

  // Per-covariate spread; zero-variance columns force the fallback rule.
  std::vector<double> sd(p, 0.0), mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += x[i * p + j];
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double d = x[i * p + j] - mean[j];
      sd[j] += d * d;
    }
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(n));

  std::vector<double> rot(p);
  bool degenerate = false;
  for (std::size_t j = 0; j < p; ++j) {
    if (sd[j] <= 0.0) degenerate = true;
    rot[j] = rule_of_thumb_bandwidth(sd[j], n);
  }

  npkr_model work{n, p, x, y, rot};

  std::vector<std::size_t> subset;
  std::size_t subset_size = cfg.subset;
  if (subset_size == 0 && n > 5000) subset_size = 2000;
  if (subset_size > 0 && subset_size < n) {
    rng r(cfg.seed);
    subset.resize(subset_size);
    for (std::size_t k = 0; k < subset_size; ++k)
      subset[k] = static_cast<std::size_t>(r.raw() % n);
  }

  auto objective = [&](const std::vector<double>& b) {
    work.bandwidths = b;
    ++report.evaluations;
    return loo_error(work, subset);
  };

  auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const bool flat_response = *ymin == *ymax;

  double rot_score = objective(rot);
  if (degenerate || flat_response || rot_score == 0.0) {
    report.bandwidths = rot;
    report.loo = rot_score;
    report.used_fallback = true;
    return report;
  }

  double best_score = rot_score;
  std::vector<double> best = rot;

  const double ln2 = std::log(2.0);
  for (std::size_t s = 0; s < cfg.starts && report.evaluations < cfg.budget; ++s) {
    // ladder: 1x, 1/2x, 2x, 1/4x, 4x around the rule of thumb
    double offset = s == 0 ? 0.0 : (s % 2 == 1 ? -1.0 : 1.0) * ln2 * ((s + 1) / 2);
    std::vector<double> cur(p);
    for (std::size_t j = 0; j < p; ++j) cur[j] = rot[j] * std::exp(offset);
    double cur_score = s == 0 ? rot_score : objective(cur);
    if (cur_score < best_score) {
      best_score = cur_score;
      best = cur;
    }
    double step = ln2;
    while (step > 0.02 && report.evaluations < cfg.budget) {
      bool improved = false;
      for (std::size_t j = 0; j < p && report.evaluations < cfg.budget; ++j) {
        for (double dir : {1.0, -1.0}) {
          std::vector<double> trial = cur;
          trial[j] = cur[j] * std::exp(dir * step);
          double score = objective(trial);
          if (score < cur_score) {
            cur = trial;
            cur_score = score;
            improved = true;
            break;
          }
          if (report.evaluations >= cfg.budget) break;
        }
      }
      if (!improved) step *= 0.5;
      if (cur_score < best_score) {
        best_score = cur_score;
        best = cur;
      }
    }
  }

  report.bandwidths = best;
  report.loo = best_score;
  return report;
}

inline npkr_model fit_npkr(const std::vector<double>& x, const std::vector<double>& y,
                           std::size_t p, const npkr_fit_config& cfg = {},
                           npkr_fit_report* report_out = nullptr) {
  npkr_fit_report rep = fit_bandwidths_lscv(x, y, p, cfg);
  if (report_out) *report_out = rep;
  npkr_model m{y.size(), p, x, y, rep.bandwidths};
  m.validate();
  return m;
}

// ---- NPKR container ----
// "NPKR" | version u8 | n u32 | p u32 | x f64[n*p] | y f64[n] | b f64[p]

inline void write_npkr(std::ostream& os, const npkr_model& m) {
  m.validate();
  io::write_magic(os, "NPKR");
  io::write_u8(os, 1);
  io::write_u32(os, static_cast<std::uint32_t>(m.n));
  io::write_u32(os, static_cast<std::uint32_t>(m.p));
  for (double v : m.x) io::write_f64(os, v);
  for (double v : m.y) io::write_f64(os, v);
  for (double v : m.bandwidths) io::write_f64(os, v);
}

inline npkr_model read_npkr(std::istream& is) {
  io::expect_magic(is, "NPKR", "npkr model");
  if (io::read_u8(is) != 1) throw io_error("npkr: unsupported version");
  npkr_model m;
  m.n = io::read_u32(is);
  m.p = io::read_u32(is);
  m.x.resize(m.n * m.p);
  m.y.resize(m.n);
  m.bandwidths.resize(m.p);
  for (double& v : m.x) v = io::read_f64(is);
  for (double& v : m.y) v = io::read_f64(is);
  for (double& v : m.bandwidths) v = io::read_f64(is);
  m.validate();
  return m;
}

inline void save_npkr(const std::string& path, const npkr_model& m) {
  auto os = io::open_out(path);
  write_npkr(os, m);
}

inline npkr_model load_npkr(const std::string& path) {
  auto is = io::open_in(path);
  return read_npkr(is);
}

}  // namespace avoinv
