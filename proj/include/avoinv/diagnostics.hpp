#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/io.hpp"
#include "avoinv/mcmc.hpp"
#include "avoinv/model.hpp"

// Chain and surrogate quality metrics: correlation, MSE, autocorrelation,
// effective sample size, posterior mean/uncertainty maps and ternary
// composition extracts. Everything is a pure function of stored samples.

namespace avoinv {

inline double sample_correlation(const std::vector<double>& f,
                                 const std::vector<double>& fhat) {
  const std::size_t n = f.size();
  require(n >= 2 && fhat.size() == n, "diagnostics: need equal lengths >= 2");
  double mf = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mf += f[i];
    mh += fhat[i];
  }
  mf /= static_cast<double>(n);
  mh /= static_cast<double>(n);
  double sff = 0.0, shh = 0.0, sfh = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = f[i] - mf, b = fhat[i] - mh;
    sff += a * a;
    shh += b * b;
    sfh += a * b;
  }
  require(sff > 0.0 && shh > 0.0, "diagnostics: zero-variance input to correlation");
  return sfh / std::sqrt(sff * shh);
}

inline double mse(const std::vector<double>& f, const std::vector<double>& fhat) {
  require(f.size() == fhat.size() && !f.empty(), "diagnostics: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double d = f[i] - fhat[i];
    acc += d * d;
  }
  return acc / static_cast<double>(f.size());
}

// Biased autocorrelation estimator: every lag is normalized by the overall
// variance, which keeps high lags stable.
inline std::vector<double> acf(const std::vector<double>& series, std::size_t max_lag) {
  const std::size_t m = series.size();
  require(max_lag < m, "diagnostics: max_lag must be below the series length");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  require(var > 0.0, "diagnostics: constant series has no autocorrelation");
  std::vector<double> out(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t + k < m; ++t)
      acc += (series[t] - mean) * (series[t + k] - mean);
    out[k] = acc / var;
  }
  return out;
}

// Initial-positive-sequence truncation: sum lags until the estimate first
// dips below zero, then ESS = M / (1 + 2 * sum), clipped into (0, M].
inline double ess(const std::vector<double>& series) {
  const std::size_t m = series.size();
  require(m >= 10, "diagnostics: need at least 10 samples for ESS");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  require(var > 0.0, "diagnostics: constant series has no ESS");

  double sum = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t + k < m; ++t)
      acc += (series[t] - mean) * (series[t + k] - mean);
    double rho = acc / var;
    if (rho < 0.0) break;
    sum += rho;
  }
  double value = static_cast<double>(m) / (1.0 + 2.0 * sum);
  return std::clamp(value, 1e-300, static_cast<double>(m));
}

struct series_stats {
  std::vector<double> acf;
  double ess = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline series_stats summarize_series(const std::vector<double>& series,
                                     std::size_t max_lag) {
  series_stats s;
  s.acf = acf(series, max_lag);
  s.ess = ess(series);
  const std::size_t m = series.size();
  for (double v : series) s.mean += v;
  s.mean /= static_cast<double>(m);
  for (double v : series) s.variance += (v - s.mean) * (v - s.mean);
  s.variance /= static_cast<double>(m);
  return s;
}

struct mean_ess_result {
  double value = 0.0;           // arithmetic mean over the 3N coordinate series
  std::size_t excluded = 0;     // constant series skipped, with this counter as flag
};

inline mean_ess_result mean_ess(const chain_output& chain) {
  require(!chain.samples.empty(), "diagnostics: empty chain");
  const std::size_t n = chain.grid.size();
  const std::size_t m = chain.samples.size();
  mean_ess_result out;
  double acc = 0.0;
  std::size_t used = 0;
  std::vector<double> series(m);
  for (const field latent_state::* f :
       {&latent_state::gas, &latent_state::oil, &latent_state::clay}) {
    for (std::size_t cell = 0; cell < n; ++cell) {
      for (std::size_t t = 0; t < m; ++t) series[t] = (chain.samples[t].*f)[cell];
      try {
        acc += ess(series);
        ++used;
      } catch (const error&) {
        ++out.excluded;  // constant coordinate
      }
    }
  }
  require(used > 0, "diagnostics: every coordinate series is constant");
  out.value = acc / static_cast<double>(used);
  return out;
}

// Type-7 quantile (linear interpolation between order statistics) on an
// already sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), "diagnostics: empty sample for quantile");
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  double h = static_cast<double>(m - 1) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo >= m - 1) return sorted[m - 1];
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

enum class reservoir_quantity : std::uint8_t { s_gas, s_oil, s_brine, v_clay };

inline const char* quantity_name(reservoir_quantity q) {
  switch (q) {
    case reservoir_quantity::s_gas: return "s_gas";
    case reservoir_quantity::s_oil: return "s_oil";
    case reservoir_quantity::s_brine: return "s_brine";
    case reservoir_quantity::v_clay: return "v_clay";
  }
  return "?";
}

struct posterior_map_result {
  field mean_map;
  field uncertainty_map;  // q90 - q10 per cell
};

inline posterior_map_result posterior_maps(const chain_output& chain,
                                           reservoir_quantity quantity) {
  require(!chain.samples.empty(), "diagnostics: empty chain");
  const std::size_t n = chain.grid.size();
  const std::size_t m = chain.samples.size();

  std::vector<std::vector<double>> per_cell(n, std::vector<double>(m));
  for (std::size_t t = 0; t < m; ++t) {
    reservoir_state res = to_reservoir(chain.samples[t]);
    const field& src = quantity == reservoir_quantity::s_gas    ? res.s_gas
                       : quantity == reservoir_quantity::s_oil  ? res.s_oil
                       : quantity == reservoir_quantity::s_brine ? res.s_brine
                                                                 : res.v_clay;
    for (std::size_t cell = 0; cell < n; ++cell) per_cell[cell][t] = src[cell];
  }

  posterior_map_result out;
  out.mean_map.resize(n);
  out.uncertainty_map.resize(n);
  for (std::size_t cell = 0; cell < n; ++cell) {
    auto& vals = per_cell[cell];
    double mean = 0.0;
    for (double v : vals) mean += v;
    out.mean_map[cell] = mean / static_cast<double>(m);
    std::sort(vals.begin(), vals.end());
    out.uncertainty_map[cell] =
        quantile_sorted(vals, 0.9) - quantile_sorted(vals, 0.1);
  }
  return out;
}

// Per-sample saturation triples at one cell, for ternary plotting.
inline std::vector<std::array<double, 3>> ternary_extract(const chain_output& chain,
                                                          std::size_t cell) {
  require(cell < chain.grid.size(), "diagnostics: cell index out of range");
  std::vector<std::array<double, 3>> out;
  out.reserve(chain.samples.size());
  for (const auto& s : chain.samples) {
    saturations sat = to_saturations(s.gas[cell], s.oil[cell]);
    out.push_back({sat.gas, sat.oil, sat.brine});
  }
  return out;
}

inline void write_ternary_csv(std::ostream& os,
                              const std::vector<std::array<double, 3>>& triples) {
  os << "sample_index,S_g,S_o,S_b\n";
  for (std::size_t i = 0; i < triples.size(); ++i)
    os << i << ',' << io::format_double(triples[i][0]) << ','
       << io::format_double(triples[i][1]) << ','
       << io::format_double(triples[i][2]) << '\n';
  if (!os) throw io_error("ternary csv write failed");
}

}  // namespace avoinv
