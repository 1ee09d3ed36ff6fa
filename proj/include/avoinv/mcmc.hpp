#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/model.hpp"
#include "avoinv/rng.hpp"
#include "avoinv/surrogate.hpp"

// Metropolis-Hastings over the three latent fields with the four proposal
// kernels: componentwise random walk, prior-covariance random walk,
// preconditioned Crank-Nicolson, and MALA.

namespace avoinv {

enum class proposal_family : std::uint8_t { rw_identity, rw_prior, pcn, mala };

inline const char* proposal_name(proposal_family f) {
  switch (f) {
    case proposal_family::rw_identity: return "rw_identity";
    case proposal_family::rw_prior: return "rw_prior";
    case proposal_family::pcn: return "pcn";
    case proposal_family::mala: return "mala";
  }
  return "?";
}

inline proposal_family proposal_from_name(const std::string& s) {
  if (s == "rw_identity") return proposal_family::rw_identity;
  if (s == "rw_prior") return proposal_family::rw_prior;
  if (s == "pcn") return proposal_family::pcn;
  if (s == "mala") return proposal_family::mala;
  throw config_error("unknown proposal kernel: " + s);
}

struct proposal_kind {
  proposal_family family = proposal_family::pcn;
  double step = 0.1;

  void validate() const {
    require(step > 0.0, "mcmc: step size must be positive");
    if (family == proposal_family::pcn)
      require(step <= 1.0, "mcmc: pCN requires 0 < s <= 1");
  }
};

// Immutable problem bundle shared by chains: prior, data, noise, forward
// model, and the optional gradient provider MALA needs.
struct posterior_context {
  grid_spec grid;
  prior_spec prior;
  prior_bases bases;
  field depth_norm;
  avo_observation data;
  noise_spec noise;
  const forward_model* forward = nullptr;
  const forward_gradient* forward_grad = nullptr;

  double log_lik(const latent_state& x) const {
    avo_observation pred;
    forward->evaluate(x, depth_norm, pred);
    return log_likelihood(data, pred, noise);
  }

  double log_prior(const latent_state& x) const {
    return prior_log_density(x, prior, bases);
  }

  // Prior part via the FFT whitening applied twice; likelihood part via the
  // chain rule through the forward gradient.
  latent_state grad_log_posterior(const latent_state& x) const {
    require(forward_grad != nullptr, "mcmc: MALA needs a gradient provider");
    const std::size_t n = grid.size();
    latent_state g;

    auto prior_part = [](const circulant_base& b, const field& mu, const field& xf) {
      field v(xf.size());
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = xf[k] - mu[k];
      field u = whiten(b, whiten(b, v));
      for (double& t : u) t = -t;
      return u;
    };
    g.gas = prior_part(bases.gas, prior.mu_gas, x.gas);
    g.oil = prior_part(bases.oil, prior.mu_oil, x.oil);
    g.clay = prior_part(bases.clay, prior.mu_clay, x.clay);

    avo_observation pred;
    forward->evaluate(x, depth_norm, pred);
    const double det = noise.det();
    const double cov = noise.corr * std::sqrt(noise.var_r0 * noise.var_g);
    for (std::size_t k = 0; k < n; ++k) {
      double dr = data.r0[k] - pred.r0[k];
      double dg = data.grad[k] - pred.grad[k];
      // Omega0^{-1} (y - h)
      double ur = (noise.var_g * dr - cov * dg) / det;
      double ug = (noise.var_r0 * dg - cov * dr) / det;
      std::array<double, 3> d_r0{}, d_g{};
      forward_grad->at(x.gas[k], x.oil[k], x.clay[k], depth_norm[k], d_r0, d_g);
      g.gas[k] += d_r0[0] * ur + d_g[0] * ug;
      g.oil[k] += d_r0[1] * ur + d_g[1] * ug;
      g.clay[k] += d_r0[2] * ur + d_g[2] * ug;
    }
    return g;
  }
};

inline posterior_context make_context(const synthetic_problem& p, const noise_spec& noise,
                                      const forward_model& forward,
                                      const forward_gradient* grad = nullptr) {
  posterior_context ctx;
  ctx.grid = p.grid;
  ctx.prior = p.prior;
  ctx.bases = build_prior_bases(p.grid, p.prior);
  ctx.depth_norm = p.depth.normalized();
  ctx.data = p.data;
  ctx.noise = noise;
  ctx.forward = &forward;
  ctx.forward_grad = grad;
  return ctx;
}

// Current point with its cached densities. log_prior stays unset under pCN,
// whose acceptance never touches prior terms.
struct chain_state {
  latent_state x;
  double log_lik = 0.0;
  std::optional<double> log_prior;
  std::optional<latent_state> gradient;
};

inline chain_state make_chain_state(const latent_state& x, const posterior_context& ctx,
                                    const proposal_kind& kind) {
  chain_state s;
  s.x = x;
  s.log_lik = ctx.log_lik(x);
  if (kind.family != proposal_family::pcn) s.log_prior = ctx.log_prior(x);
  if (kind.family == proposal_family::mala) s.gradient = ctx.grad_log_posterior(x);
  return s;
}

struct proposal_result {
  chain_state candidate;
  double log_q_forward = 0.0;   // up to constants that cancel in the ratio
  double log_q_backward = 0.0;
  bool prior_reversible = false;  // pCN sentinel: prior terms skipped entirely
};

namespace mcmc_detail {

inline field correlated_draw(const circulant_base& b, std::size_t n, rng& r) {
  return sample_field(b, field(n, 0.0), r.normals(n));
}

inline double sq_norm_diff(const latent_state& a, const latent_state& b,
                           const latent_state& mean_shift, double half_s2) {
  // || a - (b + half_s2 * shift) ||^2 over all three fields
  double acc = 0.0;
  auto add = [&](const field& fa, const field& fb, const field& fs) {
    for (std::size_t k = 0; k < fa.size(); ++k) {
      double d = fa[k] - fb[k] - half_s2 * fs[k];
      acc += d * d;
    }
  };
  add(a.gas, b.gas, mean_shift.gas);
  add(a.oil, b.oil, mean_shift.oil);
  add(a.clay, b.clay, mean_shift.clay);
  return acc;
}

}  // namespace mcmc_detail

// Draw a candidate. Noise consumption order is fixed (gas, oil, clay;
// row-major within a field), so seeded runs reproduce exactly.
inline proposal_result propose(const proposal_kind& kind, const chain_state& current,
                               const posterior_context& ctx, rng& r) {
  kind.validate();
  const std::size_t n = ctx.grid.size();
  const double s = kind.step;
  proposal_result out;
  latent_state cand;

  switch (kind.family) {
    case proposal_family::rw_identity: {
      cand = current.x;
      for (field* f : {&cand.gas, &cand.oil, &cand.clay})
        for (double& v : *f) v += s * r.normal();
      break;
    }
    case proposal_family::rw_prior: {
      cand = current.x;
      field d1 = mcmc_detail::correlated_draw(ctx.bases.gas, n, r);
      field d2 = mcmc_detail::correlated_draw(ctx.bases.oil, n, r);
      field d3 = mcmc_detail::correlated_draw(ctx.bases.clay, n, r);
      for (std::size_t k = 0; k < n; ++k) {
        cand.gas[k] += s * d1[k];
        cand.oil[k] += s * d2[k];
        cand.clay[k] += s * d3[k];
      }
      break;
    }
    case proposal_family::pcn: {
      const double keep = std::sqrt(1.0 - s * s);
      field d1 = mcmc_detail::correlated_draw(ctx.bases.gas, n, r);
      field d2 = mcmc_detail::correlated_draw(ctx.bases.oil, n, r);
      field d3 = mcmc_detail::correlated_draw(ctx.bases.clay, n, r);
      cand.gas.resize(n);
      cand.oil.resize(n);
      cand.clay.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        cand.gas[k] = ctx.prior.mu_gas[k] + keep * (current.x.gas[k] - ctx.prior.mu_gas[k]) + s * d1[k];
        cand.oil[k] = ctx.prior.mu_oil[k] + keep * (current.x.oil[k] - ctx.prior.mu_oil[k]) + s * d2[k];
        cand.clay[k] = ctx.prior.mu_clay[k] + keep * (current.x.clay[k] - ctx.prior.mu_clay[k]) + s * d3[k];
      }
      out.prior_reversible = true;
      break;
    }
    case proposal_family::mala: {
      require(current.gradient.has_value(), "mcmc: MALA state is missing its gradient");
      const double half_s2 = 0.5 * s * s;
      const latent_state& grad = *current.gradient;
      cand.gas.resize(n);
      cand.oil.resize(n);
      cand.clay.resize(n);
      for (std::size_t k = 0; k < n; ++k) cand.gas[k] = current.x.gas[k] + half_s2 * grad.gas[k] + s * r.normal();
      for (std::size_t k = 0; k < n; ++k) cand.oil[k] = current.x.oil[k] + half_s2 * grad.oil[k] + s * r.normal();
      for (std::size_t k = 0; k < n; ++k) cand.clay[k] = current.x.clay[k] + half_s2 * grad.clay[k] + s * r.normal();
      break;
    }
  }

  out.candidate = make_chain_state(cand, ctx, kind);

  if (kind.family == proposal_family::mala) {
    const double half_s2 = 0.5 * s * s;
    const double inv_2s2 = 1.0 / (2.0 * s * s);
    out.log_q_forward =
        -mcmc_detail::sq_norm_diff(out.candidate.x, current.x, *current.gradient, half_s2) * inv_2s2;
    out.log_q_backward =
        -mcmc_detail::sq_norm_diff(current.x, out.candidate.x, *out.candidate.gradient, half_s2) * inv_2s2;
  }
  return out;
}

// pCN: likelihood ratio only. Symmetric walks: posterior ratio. MALA: full
// Metropolis-Hastings correction.
inline double acceptance_log_ratio(const proposal_kind& kind, const chain_state& current,
                                   const proposal_result& prop) {
  switch (kind.family) {
    case proposal_family::pcn:
      return prop.candidate.log_lik - current.log_lik;
    case proposal_family::rw_identity:
    case proposal_family::rw_prior:
      return (prop.candidate.log_lik + *prop.candidate.log_prior) -
             (current.log_lik + *current.log_prior);
    case proposal_family::mala:
      return (prop.candidate.log_lik + *prop.candidate.log_prior + prop.log_q_backward) -
             (current.log_lik + *current.log_prior + prop.log_q_forward);
  }
  return 0.0;
}

// One MH transition; the uniform draw is consumed whether or not the
// candidate wins, keeping seeded streams aligned.
inline bool step(chain_state& state, const proposal_kind& kind, const posterior_context& ctx,
                 rng& r) {
  proposal_result prop = propose(kind, state, ctx, r);
  double log_ratio = acceptance_log_ratio(kind, state, prop);
  double u = r.uniform();
  bool accept = std::log(u) < log_ratio;
  if (accept) state = std::move(prop.candidate);
  return accept;
}

enum class chain_start : std::uint8_t { prior_mean, prior_draw, given };

struct chain_config {
  std::uint64_t iterations = 10000;
  std::uint32_t thin = 10;
  std::uint64_t burn_in = 5000;  // default: first half
  std::uint64_t seed = 0;
  proposal_kind proposal{};
  chain_start start = chain_start::prior_mean;
  latent_state start_state;  // used when start == given

  void validate() const {
    require(thin >= 1, "mcmc: thin must be >= 1");
    require(burn_in < iterations, "mcmc: burn_in must be below iterations");
    proposal.validate();
  }
};

struct chain_output {
  grid_spec grid;
  std::uint32_t thin = 1;
  std::uint64_t burn_in = 0;
  std::vector<latent_state> samples;  // thinned, post burn-in
  std::uint64_t accept_count = 0, proposal_count = 0;           // sampling phase
  std::uint64_t tune_accept_count = 0, tune_proposal_count = 0; // tuning phase
  double wall_seconds = 0.0;
  double tuned_s = 0.0;
  bool tune_warning = false;
  std::vector<std::uint64_t> trace_iteration;  // rows at thinned indices
  std::vector<std::uint8_t> trace_accepted;
  std::vector<double> trace_log_lik;

  double acceptance_rate() const {
    return proposal_count ? static_cast<double>(accept_count) /
                                static_cast<double>(proposal_count)
                          : 0.0;
  }
};

inline latent_state start_point(const chain_config& cfg, const posterior_context& ctx,
                                rng& r) {
  switch (cfg.start) {
    case chain_start::prior_mean:
      return latent_state{ctx.prior.mu_gas, ctx.prior.mu_oil, ctx.prior.mu_clay};
    case chain_start::prior_draw:
      return sample_prior(ctx.prior, ctx.bases, r);
    case chain_start::given:
      return cfg.start_state;
  }
  throw error("mcmc: bad start mode");
}

// Deterministic given the seed; wall time covers the sampling loop only.
inline chain_output run_chain(const chain_config& cfg, const posterior_context& ctx) {
  cfg.validate();
  rng r(cfg.seed);
  chain_state state = make_chain_state(start_point(cfg, ctx, r), ctx, cfg.proposal);

  chain_output out;
  out.grid = ctx.grid;
  out.thin = cfg.thin;
  out.burn_in = cfg.burn_in;
  out.tuned_s = cfg.proposal.step;
  const std::uint64_t kept =
      (cfg.iterations - cfg.burn_in) / static_cast<std::uint64_t>(cfg.thin);
  out.samples.reserve(kept);

  auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t k = 1; k <= cfg.iterations; ++k) {
    bool accepted = step(state, cfg.proposal, ctx, r);
    ++out.proposal_count;
    if (accepted) ++out.accept_count;
    if (k > cfg.burn_in && (k - cfg.burn_in) % cfg.thin == 0) {
      out.samples.push_back(state.x);
      out.trace_iteration.push_back(k);
      out.trace_accepted.push_back(accepted ? 1 : 0);
      out.trace_log_lik.push_back(state.log_lik);
    }
  }
  auto t1 = std::chrono::steady_clock::now();
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  return out;
}

struct tune_config {
  std::uint32_t batches = 50;
  std::uint32_t batch_size = 200;
  std::uint32_t eval_batch = 4000;
  double tolerance = 0.025;  // rate band around the target
  double gain = 2.5;         // scales the 1/t Robbins-Monro steps
};

struct tune_result {
  double s = 0.0;
  double observed_rate = 0.0;
  bool warning = false;
  std::uint64_t accept_count = 0, proposal_count = 0;
};

// A geometric bracket hunt seeds the step size, then Robbins-Monro on
// log s with 1/t gains polishes it, then a fresh evaluation batch scores
// the result. Impossible targets (a flat likelihood under pCN accepts
// everything) set the warning flag rather than throwing.
inline tune_result tune_step_size(proposal_kind kind, double target_rate,
                                  const posterior_context& ctx, const chain_config& start_cfg,
                                  const tune_config& tcfg, rng& r) {
  require(target_rate > 0.0 && target_rate < 1.0, "mcmc: target rate must be in (0,1)");
  chain_state state = make_chain_state(start_point(start_cfg, ctx, r), ctx, kind);

  tune_result out;

  const double s_cap = kind.family == proposal_family::pcn ? 1.0 : 1e8;
  auto probe_rate = [&](double s, std::uint32_t steps) {
    proposal_kind probe = kind;
    probe.step = s;
    std::uint32_t acc = 0;
    for (std::uint32_t i = 0; i < steps; ++i)
      if (step(state, probe, ctx, r)) ++acc;
    out.proposal_count += steps;
    out.accept_count += acc;
    return static_cast<double>(acc) / static_cast<double>(steps);
  };

  // Bracket: the acceptance rate falls as s grows, so walk s by factors of
  // two until the target is straddled, then start from the midpoint.
  const std::uint32_t probe_steps = std::max<std::uint32_t>(tcfg.batch_size / 2, 20);
  double s_lo = std::min(kind.step, s_cap), s_hi = s_lo;
  double rate0 = probe_rate(s_lo, probe_steps);
  if (rate0 > target_rate) {
    for (int it = 0; it < 40 && s_hi < s_cap; ++it) {
      s_hi = std::min(s_hi * 2.0, s_cap);
      if (probe_rate(s_hi, probe_steps) <= target_rate) break;
      s_lo = s_hi;
    }
  } else {
    for (int it = 0; it < 40 && s_lo > 1e-8; ++it) {
      s_lo = std::max(s_lo * 0.5, 1e-8);
      if (probe_rate(s_lo, probe_steps) >= target_rate) break;
      s_hi = s_lo;
    }
  }

  double log_s = 0.5 * (std::log(s_lo) + std::log(s_hi));
  for (std::uint32_t t = 1; t <= tcfg.batches; ++t) {
    kind.step = std::exp(log_s);
    std::uint32_t accepted = 0;
    for (std::uint32_t i = 0; i < tcfg.batch_size; ++i)
      if (step(state, kind, ctx, r)) ++accepted;
    out.proposal_count += tcfg.batch_size;
    out.accept_count += accepted;
    double rate = static_cast<double>(accepted) / static_cast<double>(tcfg.batch_size);
    log_s += tcfg.gain * (rate - target_rate) / static_cast<double>(t);
    log_s = std::min(log_s, std::log(s_cap));
    log_s = std::max(log_s, std::log(1e-8));
  }
  kind.step = std::exp(log_s);

  std::uint32_t accepted = 0;
  for (std::uint32_t i = 0; i < tcfg.eval_batch; ++i)
    if (step(state, kind, ctx, r)) ++accepted;
  out.proposal_count += tcfg.eval_batch;
  out.accept_count += accepted;
  out.s = kind.step;
  out.observed_rate = static_cast<double>(accepted) / static_cast<double>(tcfg.eval_batch);
  out.warning = std::abs(out.observed_rate - target_rate) > tcfg.tolerance;
  return out;
}

// ---- CHNS container ----
// "CHNS" | version u8 | nx u32 | ny u32 | fields u32 (3) | samples u32 |
// thin u32 | burn_in u32 | samples as f64[] (gas, oil, clay per sample,
// row-major fields)

inline void write_chain(std::ostream& os, const chain_output& chain) {
  io::write_magic(os, "CHNS");
  io::write_u8(os, 1);
  io::write_u32(os, chain.grid.nx);
  io::write_u32(os, chain.grid.ny);
  io::write_u32(os, 3);
  io::write_u32(os, static_cast<std::uint32_t>(chain.samples.size()));
  io::write_u32(os, chain.thin);
  io::write_u32(os, static_cast<std::uint32_t>(chain.burn_in));
  for (const auto& s : chain.samples) {
    for (double v : s.gas) io::write_f64(os, v);
    for (double v : s.oil) io::write_f64(os, v);
    for (double v : s.clay) io::write_f64(os, v);
  }
}

inline chain_output read_chain(std::istream& is) {
  io::expect_magic(is, "CHNS", "chain");
  if (io::read_u8(is) != 1) throw io_error("chain: unsupported version");
  chain_output chain;
  chain.grid.nx = io::read_u32(is);
  chain.grid.ny = io::read_u32(is);
  check_grid(chain.grid);
  if (io::read_u32(is) != 3) throw io_error("chain: expected three fields");
  std::uint32_t count = io::read_u32(is);
  chain.thin = io::read_u32(is);
  chain.burn_in = io::read_u32(is);
  const std::size_t n = chain.grid.size();
  chain.samples.resize(count);
  for (auto& s : chain.samples) {
    s.gas.resize(n);
    s.oil.resize(n);
    s.clay.resize(n);
    for (double& v : s.gas) v = io::read_f64(is);
    for (double& v : s.oil) v = io::read_f64(is);
    for (double& v : s.clay) v = io::read_f64(is);
  }
  return chain;
}

inline void save_chain(const std::string& path, const chain_output& chain) {
  auto os = io::open_out(path);
  write_chain(os, chain);
}

inline chain_output load_chain(const std::string& path) {
  auto is = io::open_in(path);
  return read_chain(is);
}

// CSV sidecar: one row per stored sample.
inline void write_chain_stats_csv(std::ostream& os, const chain_output& chain) {
  os << "iteration,accepted,log_likelihood\n";
  for (std::size_t k = 0; k < chain.trace_iteration.size(); ++k)
    os << chain.trace_iteration[k] << ',' << static_cast<int>(chain.trace_accepted[k])
       << ',' << io::format_double(chain.trace_log_lik[k]) << '\n';
}

}  // namespace avoinv
