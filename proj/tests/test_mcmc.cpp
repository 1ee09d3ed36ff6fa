#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "avoinv/mcmc.hpp"
#include "oracles.hpp"

using namespace avoinv;

namespace {

// Small synthetic problem + context bundle for chain tests.
struct test_problem {
  synthetic_problem problem;
  synthetic_forward_model forward;
  posterior_context ctx;
};

test_problem make_test_problem(grid_spec g, double range, std::uint64_t seed,
                               noise_spec noise = {}) {
  test_problem tp;
  prior_config pc;
  pc.range_gas = pc.range_oil = pc.range_clay = range;
  rng r(seed);
  tp.problem = make_synthetic_problem(g, depth_config{}, pc, noise, tp.forward, r);
  tp.ctx = make_context(tp.problem, noise, tp.forward);
  return tp;
}

// Constant forward: the likelihood ignores the state entirely.
class constant_forward final : public forward_model {
public:
  std::array<double, 2> at(double, double, double, double) const override {
    return {0.01, -0.02};
  }
};

double max_abs(const field& a, const field& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("pCN proposal at s = 1 is a fresh prior draw") {
  auto tp = make_test_problem({4, 4}, 1.2, 1);
  proposal_kind kind{proposal_family::pcn, 1.0};
  chain_state cur = make_chain_state(tp.problem.truth, tp.ctx, kind);

  rng r1(33);
  auto prop = propose(kind, cur, tp.ctx, r1);
  CHECK(prop.prior_reversible);

  // replay the same stream: candidate must be mu + xi, no dependence on cur
  rng r2(33);
  const std::size_t n = tp.ctx.grid.size();
  field xi_gas = sample_field(tp.ctx.bases.gas, field(n, 0.0), r2.normals(n));
  for (std::size_t k = 0; k < n; ++k)
    CHECK(prop.candidate.x.gas[k] ==
          Catch::Approx(tp.ctx.prior.mu_gas[k] + xi_gas[k]).margin(1e-12));
}

TEST_CASE("pCN proposal collapses onto the current state as s vanishes") {
  auto tp = make_test_problem({4, 4}, 1.2, 2);
  proposal_kind kind{proposal_family::pcn, 1e-8};
  chain_state cur = make_chain_state(tp.problem.truth, tp.ctx, kind);
  rng r(34);
  auto prop = propose(kind, cur, tp.ctx, r);

  double dist = 0.0, dev = 0.0;
  for (std::size_t k = 0; k < tp.ctx.grid.size(); ++k) {
    double d = prop.candidate.x.gas[k] - cur.x.gas[k];
    dist += d * d;
    double m = cur.x.gas[k] - tp.ctx.prior.mu_gas[k];
    dev += m * m;
  }
  CHECK(std::sqrt(dist) < 1e-6 * std::sqrt(dev) + 1e-6);
}

TEST_CASE("MALA proposal mean on a standard-normal target") {
  // 1x1 grid, unit white prior, flat likelihood: grad log pi = -x.
  grid_spec g{1, 1};
  prior_config pc;
  pc.sigma_gas = pc.sigma_oil = pc.sigma_clay = 1.0;
  pc.range_gas = pc.range_oil = pc.range_clay = 1e-9;
  pc.mu_gas = pc.mu_oil = pc.mu_clay = depth_trend{{{0.0, 0.0}, {1.0, 0.0}}};
  constant_forward flat;
  rng rp(3);
  auto problem = make_synthetic_problem(g, depth_config{}, pc, noise_spec{}, flat, rp);
  finite_difference_gradient zero_grad(flat);
  posterior_context ctx = make_context(problem, noise_spec{}, flat, &zero_grad);

  const double s = 0.4;
  proposal_kind kind{proposal_family::mala, s};
  latent_state x0{{1.7}, {-0.6}, {0.9}};
  chain_state cur = make_chain_state(x0, ctx, kind);
  REQUIRE(cur.gradient.has_value());
  CHECK(cur.gradient->gas[0] == Catch::Approx(-1.7).margin(1e-10));

  rng r1(35);
  auto prop = propose(kind, cur, ctx, r1);
  rng r2(35);
  double z_gas = r2.normal();
  CHECK(prop.candidate.x.gas[0] ==
        Catch::Approx(1.7 * (1.0 - s * s / 2.0) + s * z_gas).margin(1e-12));
}

TEST_CASE("acceptance ratio basics") {
  auto tp = make_test_problem({3, 3}, 1.2, 4);

  SECTION("identical candidate gives ratio zero") {
    proposal_kind kind{proposal_family::rw_prior, 0.3};
    chain_state cur = make_chain_state(tp.problem.truth, tp.ctx, kind);
    proposal_result prop;
    prop.candidate = cur;
    CHECK(acceptance_log_ratio(kind, cur, prop) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("flat likelihood under pCN accepts everything") {
    constant_forward flat;
    posterior_context ctx = tp.ctx;
    ctx.forward = &flat;
    proposal_kind kind{proposal_family::pcn, 0.5};
    chain_state cur = make_chain_state(tp.problem.truth, ctx, kind);
    rng r(36);
    for (int k = 0; k < 20; ++k) {
      auto prop = propose(kind, cur, ctx, r);
      CHECK(acceptance_log_ratio(kind, cur, prop) == Catch::Approx(0.0).margin(1e-9));
    }
  }
}

TEST_CASE("random-walk ratio matches a direct dense computation on one cell") {
  grid_spec g{1, 1};
  auto tp = make_test_problem(g, 1.0, 5);
  proposal_kind kind{proposal_family::rw_prior, 0.4};
  chain_state cur = make_chain_state(tp.problem.truth, tp.ctx, kind);

  rng r(37);
  auto prop = propose(kind, cur, tp.ctx, r);
  double got = acceptance_log_ratio(kind, cur, prop);

  auto direct_log_post = [&](const latent_state& x) {
    double lp = 0.0;
    auto add = [&](double v, double mu, double sigma) {
      lp += -0.5 * (v - mu) * (v - mu) / (sigma * sigma);
    };
    add(x.gas[0], tp.ctx.prior.mu_gas[0], tp.ctx.prior.corr_gas.sigma);
    add(x.oil[0], tp.ctx.prior.mu_oil[0], tp.ctx.prior.corr_oil.sigma);
    add(x.clay[0], tp.ctx.prior.mu_clay[0], tp.ctx.prior.corr_clay.sigma);
    avo_observation pred;
    tp.forward.evaluate(x, tp.ctx.depth_norm, pred);
    return lp + log_likelihood(tp.ctx.data, pred, tp.ctx.noise);
  };
  double expected = direct_log_post(prop.candidate.x) - direct_log_post(cur.x);
  CHECK(got == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("step keeps the state bitwise on rejection") {
  auto tp = make_test_problem({4, 4}, 1.2, 6);
  proposal_kind kind{proposal_family::rw_identity, 25.0};  // huge steps, mostly rejected
  chain_state state = make_chain_state(tp.problem.truth, tp.ctx, kind);
  rng r(38);
  int rejected = 0;
  for (int k = 0; k < 40; ++k) {
    latent_state before = state.x;
    bool accepted = step(state, kind, tp.ctx, r);
    if (!accepted) {
      ++rejected;
      CHECK(state.x.gas == before.gas);
      CHECK(state.x.oil == before.oil);
      CHECK(state.x.clay == before.clay);
    }
  }
  CHECK(rejected > 0);
}

TEST_CASE("chain caches stay coherent with fresh recomputation") {
  auto tp = make_test_problem({4, 4}, 1.2, 7);
  proposal_kind kind{proposal_family::rw_prior, 0.15};
  chain_state state = make_chain_state(tp.problem.truth, tp.ctx, kind);
  rng r(39);
  for (int k = 0; k < 60; ++k) {
    step(state, kind, tp.ctx, r);
    if (k % 15 == 0) {
      CHECK(state.log_lik == Catch::Approx(tp.ctx.log_lik(state.x)).margin(1e-9));
      REQUIRE(state.log_prior.has_value());
      CHECK(*state.log_prior == Catch::Approx(tp.ctx.log_prior(state.x)).margin(1e-9));
    }
  }
}

TEST_CASE("run_chain bookkeeping") {
  auto tp = make_test_problem({3, 3}, 1.2, 8);
  chain_config cfg;
  cfg.iterations = 100;
  cfg.thin = 10;
  cfg.burn_in = 0;
  cfg.seed = 9;
  cfg.proposal = {proposal_family::pcn, 0.5};

  SECTION("stored sample count follows the formula") {
    auto out = run_chain(cfg, tp.ctx);
    CHECK(out.samples.size() == 10);
    CHECK(out.proposal_count == 100);
    CHECK(out.trace_iteration.front() == 10);
    CHECK(out.trace_iteration.back() == 100);
  }

  SECTION("same seed gives a bit-identical chain") {
    auto a = run_chain(cfg, tp.ctx);
    auto b = run_chain(cfg, tp.ctx);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
      CHECK(a.samples[k].gas == b.samples[k].gas);
      CHECK(a.samples[k].oil == b.samples[k].oil);
      CHECK(a.samples[k].clay == b.samples[k].clay);
    }
    CHECK(a.accept_count == b.accept_count);
    CHECK(a.trace_log_lik == b.trace_log_lik);
  }

  SECTION("burn-in and thin interact correctly") {
    cfg.iterations = 250;
    cfg.burn_in = 50;
    cfg.thin = 20;
    auto out = run_chain(cfg, tp.ctx);
    CHECK(out.samples.size() == 10);
    CHECK(out.trace_iteration.front() == 70);
  }
}

TEST_CASE("flat likelihood pCN chain recovers the prior") {
  grid_spec g{6, 6};
  prior_config pc;
  pc.range_gas = pc.range_oil = pc.range_clay = 1.5;
  constant_forward flat;
  rng rp(11);
  auto problem = make_synthetic_problem(g, depth_config{}, pc, noise_spec{}, flat, rp);
  posterior_context ctx = make_context(problem, noise_spec{}, flat);

  chain_config cfg;
  cfg.iterations = 6000;
  cfg.thin = 1;
  cfg.burn_in = 1000;
  cfg.seed = 12;
  cfg.proposal = {proposal_family::pcn, 0.8};
  auto out = run_chain(cfg, ctx);
  const double m = static_cast<double>(out.samples.size());

  // AR(1) with phi = sqrt(1 - s^2) = 0.6: integrated autocorrelation 4.
  const double iact = (1.0 + 0.6) / (1.0 - 0.6);
  for (std::size_t cell : {std::size_t{0}, std::size_t{17}, std::size_t{35}}) {
    double acc = 0.0, acc2 = 0.0;
    for (const auto& s : out.samples) {
      acc += s.gas[cell];
      acc2 += s.gas[cell] * s.gas[cell];
    }
    double mean = acc / m;
    double var = acc2 / m - mean * mean;
    double sigma = pc.sigma_gas;
    double se = sigma * std::sqrt(iact / m);
    CHECK(std::abs(mean - ctx.prior.mu_gas[cell]) < 4.0 * se);
    CHECK(var == Catch::Approx(sigma * sigma).epsilon(0.15));
  }
}

TEST_CASE("two seeds agree on posterior moments under a flat likelihood") {
  grid_spec g{4, 4};
  prior_config pc;
  pc.range_gas = pc.range_oil = pc.range_clay = 1.2;
  constant_forward flat;
  rng rp(13);
  auto problem = make_synthetic_problem(g, depth_config{}, pc, noise_spec{}, flat, rp);
  posterior_context ctx = make_context(problem, noise_spec{}, flat);

  chain_config cfg;
  cfg.iterations = 8000;
  cfg.thin = 2;
  cfg.burn_in = 1000;
  cfg.proposal = {proposal_family::pcn, 0.9};
  cfg.start = chain_start::prior_draw;

  cfg.seed = 100;
  auto a = run_chain(cfg, ctx);
  cfg.seed = 200;
  auto b = run_chain(cfg, ctx);

  auto mean_of = [](const chain_output& c, std::size_t cell) {
    double acc = 0.0;
    for (const auto& s : c.samples) acc += s.gas[cell];
    return acc / static_cast<double>(c.samples.size());
  };
  double se = pc.sigma_gas * std::sqrt(2.0 / static_cast<double>(a.samples.size()));
  for (std::size_t cell : {std::size_t{0}, std::size_t{9}})
    CHECK(std::abs(mean_of(a, cell) - mean_of(b, cell)) < 5.0 * se);
}

TEST_CASE("acceptance rate decreases with pCN step size") {
  auto tp = make_test_problem({6, 6}, 2.0, 14);
  chain_config cfg;
  cfg.iterations = 3000;
  cfg.thin = 3000;
  cfg.burn_in = 0;
  cfg.seed = 15;
  double prev_rate = 1.1;
  for (double s : {0.05, 0.3, 0.9}) {
    cfg.proposal = {proposal_family::pcn, s};
    auto out = run_chain(cfg, tp.ctx);
    CHECK(out.acceptance_rate() < prev_rate);
    prev_rate = out.acceptance_rate();
  }
}

TEST_CASE("tuning a flat-likelihood pCN chain reports the impossible target") {
  grid_spec g{4, 4};
  prior_config pc;
  pc.range_gas = pc.range_oil = pc.range_clay = 1.2;
  constant_forward flat;
  rng rp(16);
  auto problem = make_synthetic_problem(g, depth_config{}, pc, noise_spec{}, flat, rp);
  posterior_context ctx = make_context(problem, noise_spec{}, flat);

  chain_config start_cfg;
  rng r(17);
  tune_config tcfg;
  tcfg.batches = 10;
  tcfg.batch_size = 50;
  tcfg.eval_batch = 200;
  auto res = tune_step_size({proposal_family::pcn, 0.5}, 0.234, ctx, start_cfg, tcfg, r);
  CHECK(res.warning);
  CHECK(res.observed_rate == Catch::Approx(1.0));
}

TEST_CASE("gradient provider matches finite differences of the log posterior") {
  // Linear-in-latents surrogate: every derivative response is a constant,
  // so the fitted gradient bundle can be pointwise exact and the check
  // isolates the assembly (prior whitening + likelihood chain rule).
  grid_spec g{2, 2};
  prior_config pc;
  pc.range_gas = pc.range_oil = pc.range_clay = 1.0;
  rng r(18);

  training_set tr0, trg;
  tr0.n = trg.n = 400;
  tr0.p = trg.p = 4;
  tr0.x.resize(1600);
  for (double& v : tr0.x) v = r.normal();
  trg.x = tr0.x;
  tr0.y.resize(400);
  trg.y.resize(400);
  for (std::size_t i = 0; i < 400; ++i) {
    const double* x = tr0.x.data() + i * 4;
    tr0.y[i] = 0.01 + 0.030 * x[0] - 0.020 * x[1] + 0.010 * x[2] + 0.005 * x[3];
    trg.y[i] = -0.02 + 0.015 * x[0] + 0.025 * x[1] - 0.030 * x[2] + 0.010 * x[3];
  }
  mars_fit_config fit_cfg;
  fit_cfg.max_terms = 11;
  mars_forward_model surrogate(fit(tr0, fit_cfg), fit(trg, fit_cfg));

  auto problem = make_synthetic_problem(g, depth_config{}, pc, noise_spec{}, surrogate, r);
  posterior_context ctx = make_context(problem, noise_spec{}, surrogate);

  latent_state x = problem.truth;
  auto log_post = [&](const latent_state& s) { return ctx.log_lik(s) + ctx.log_prior(s); };

  auto check_provider = [&](const forward_gradient& fg, double tol) {
    posterior_context local = ctx;
    local.forward_grad = &fg;
    latent_state grad = local.grad_log_posterior(x);
    const double h = 1e-5;
    double err2 = 0.0, norm2 = 0.0;
    auto probe = [&](field latent_state::* f, std::size_t k, double analytic) {
      latent_state xp = x, xm = x;
      (xp.*f)[k] += h;
      (xm.*f)[k] -= h;
      double fd = (log_post(xp) - log_post(xm)) / (2.0 * h);
      err2 += (fd - analytic) * (fd - analytic);
      norm2 += fd * fd;
    };
    for (std::size_t k = 0; k < g.size(); ++k) {
      probe(&latent_state::gas, k, grad.gas[k]);
      probe(&latent_state::oil, k, grad.oil[k]);
      probe(&latent_state::clay, k, grad.clay[k]);
    }
    CHECK(std::sqrt(err2 / norm2) < tol);
  };

  SECTION("analytic surrogate gradient") {
    mars_analytic_gradient analytic(surrogate);
    check_provider(analytic, 1e-6);
  }
  SECTION("fitted derivative-response bundle") {
    training_set cov = tr0;
    auto at = [&](double a, double b, double c, double d) {
      return surrogate.at(a, b, c, d);
    };
    mars_gradient_bundle bundle(fit_gradient_models(at, cov, 1e-4, fit_cfg));
    check_provider(bundle, 1e-4);
  }
}

TEST_CASE("symmetric-kernel detailed balance on a one-cell toy") {
  grid_spec g{1, 1};
  auto tp = make_test_problem(g, 1.0, 19);
  proposal_kind kind{proposal_family::rw_identity, 1.0};
  chain_state state = make_chain_state(tp.problem.truth, tp.ctx, kind);
  rng r(20);

  // warm up, then record binned transitions of the gas coordinate
  for (int k = 0; k < 2000; ++k) step(state, kind, tp.ctx, r);
  const int bins = 5;
  const double lo = -3.0, hi = 3.0;
  auto bin_of = [&](double v) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
  };
  std::vector<std::vector<double>> counts(bins, std::vector<double>(bins, 0.0));
  int prev = bin_of(state.x.gas[0]);
  const int steps = 200000;
  for (int k = 0; k < steps; ++k) {
    step(state, kind, tp.ctx, r);
    int cur = bin_of(state.x.gas[0]);
    counts[prev][cur] += 1.0;
    prev = cur;
  }
  // At stationarity of a reversible chain the joint (x_t, x_{t+1}) is
  // exchangeable, so the count matrix is symmetric up to sampling noise.
  for (int i = 0; i < bins; ++i)
    for (int j = i + 1; j < bins; ++j) {
      double a = counts[i][j], b = counts[j][i];
      if (a + b < 25.0) continue;
      CHECK(std::abs(a - b) < 5.0 * std::sqrt(a + b));
    }
}

TEST_CASE("chain container and sidecar round trip") {
  auto tp = make_test_problem({3, 4}, 1.2, 21);
  chain_config cfg;
  cfg.iterations = 60;
  cfg.thin = 5;
  cfg.burn_in = 10;
  cfg.seed = 22;
  cfg.proposal = {proposal_family::pcn, 0.4};
  auto out = run_chain(cfg, tp.ctx);

  auto path = std::filesystem::temp_directory_path() / "avoinv_test.chns";
  save_chain(path.string(), out);
  auto back = load_chain(path.string());
  REQUIRE(back.samples.size() == out.samples.size());
  CHECK(back.grid == out.grid);
  CHECK(back.thin == out.thin);
  CHECK(back.burn_in == out.burn_in);
  for (std::size_t k = 0; k < out.samples.size(); ++k)
    CHECK(back.samples[k].clay == out.samples[k].clay);
  std::filesystem::remove(path);

  std::ostringstream csv;
  write_chain_stats_csv(csv, out);
  const std::string text = csv.str();
  CHECK(text.starts_with("iteration,accepted,log_likelihood\n"));
  CHECK(std::count(text.begin(), text.end(), '\n') ==
        static_cast<long>(out.samples.size() + 1));
}
