// Command-line front end: synthetic problem generation, surrogate fitting
// and evaluation, chain execution, proposal comparison, and diagnostics.
// Exit codes: 0 ok, 2 config, 3 fitting, 4 sampling/numerics, 5 I/O.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "avoinv/config.hpp"
#include "avoinv/diagnostics.hpp"
#include "avoinv/io.hpp"
#include "avoinv/mcmc.hpp"
#include "avoinv/surrogate.hpp"

namespace fs = std::filesystem;
using namespace avoinv;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Seed derivation: chains use master + chain_index; fixed offsets keep the
// auxiliary streams apart.
constexpr std::uint64_t kSeedTrain = 101;
constexpr std::uint64_t kSeedTest = 102;
constexpr std::uint64_t kSeedNpkrSubset = 201;
constexpr std::uint64_t kSeedTune = 11;

struct global_options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void say(const global_options& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << '\n';
}

experiment_config load_experiment(const global_options& g,
                                  const std::string& base_config = "") {
  experiment_config exp;
  if (!base_config.empty()) exp.apply(raw_config::parse_file(base_config));
  if (!g.config_path.empty()) exp.apply(raw_config::parse_file(g.config_path));
  raw_config extra;
  for (const auto& s : g.overrides) extra.set_dotted(s);
  exp.apply(extra);
  if (g.seed) exp.master_seed = *g.seed;
  return exp;
}

// Collects produced files and writes the manifest: deterministic artifacts
// get content hashes; timing-bearing files are listed but not hashed.
class output_dir {
public:
  explicit output_dir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create output directory " + dir);
  }

  const fs::path& path() const { return dir_; }
  fs::path file(const std::string& name) const { return dir_ / name; }

  void note(const std::string& name, bool is_volatile = false) {
    entries_.emplace_back(name, is_volatile);
  }

  void write_manifest() const {
    auto os = io::open_out((dir_ / "manifest.txt").string(), false);
    os << "# fnv1a-64 content hashes of deterministic artifacts\n";
    for (const auto& [name, vol] : entries_) {
      if (vol) continue;
      std::uint64_t h = io::fnv1a(io::read_file_bytes((dir_ / name).string()));
      char buf[17];
      std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
      os << buf << "  " << name << '\n';
    }
    os << "# volatile (wall-clock timing content; excluded from determinism)\n";
    for (const auto& [name, vol] : entries_)
      if (vol) os << name << '\n';
  }

private:
  fs::path dir_;
  std::vector<std::pair<std::string, bool>> entries_;
};

void save_field_pair(output_dir& out, const std::string& stem, const grid_spec& g,
                     const field& f) {
  io::save_field(out.file(stem + ".fldv").string(), g, f);
  io::save_field_csv(out.file(stem + ".csv").string(), g, f);
  out.note(stem + ".fldv");
  out.note(stem + ".csv");
}

void write_table_csv(const std::string& path, const sample_table& t) {
  auto os = io::open_out(path, false);
  os << "x_gas,x_oil,x_clay,depth_norm,r0,g\n";
  for (std::size_t i = 0; i < t.n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) os << io::format_double(t.x[i * 4 + j]) << ',';
    os << io::format_double(t.r0[i]) << ',' << io::format_double(t.grad[i]) << '\n';
  }
  if (!os) throw io_error("table write failed: " + path);
}

sample_table read_table_csv(const std::string& path) {
  auto is = io::open_in(path, false);
  std::string line;
  if (!std::getline(is, line) || line != "x_gas,x_oil,x_clay,depth_norm,r0,g")
    throw io_error("bad table header in " + path);
  sample_table t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 6) throw io_error("bad table row in " + path);
    for (int j = 0; j < 4; ++j) t.x.push_back(row[j]);
    t.r0.push_back(row[4]);
    t.grad.push_back(row[5]);
    ++t.n;
  }
  if (t.n == 0) throw io_error("empty table: " + path);
  return t;
}

// ---- make-synthetic ----

int cmd_make_synthetic(const global_options& g) {
  experiment_config exp = load_experiment(g);
  output_dir out(g.out_dir);

  synthetic_forward_model fm(exp.forward);
  rng problem_rng(exp.master_seed);
  auto problem = make_synthetic_problem(exp.grid, exp.depth, exp.prior, exp.noise, fm,
                                        problem_rng);

  save_field_pair(out, "truth_gas", exp.grid, problem.truth.gas);
  save_field_pair(out, "truth_oil", exp.grid, problem.truth.oil);
  save_field_pair(out, "truth_clay", exp.grid, problem.truth.clay);
  save_field_pair(out, "depth", exp.grid, problem.depth.depth);
  save_field_pair(out, "data_r0", exp.grid, problem.data.r0);
  save_field_pair(out, "data_g", exp.grid, problem.data.grad);

  rng train_rng(derive_seed(exp.master_seed, kSeedTrain));
  rng test_rng(derive_seed(exp.master_seed, kSeedTest));
  auto train = make_training_table(exp.n_train, exp.prior, fm, train_rng);
  auto test = make_training_table(exp.n_test, exp.prior, fm, test_rng);
  write_table_csv(out.file("train.csv").string(), train);
  write_table_csv(out.file("test.csv").string(), test);
  out.note("train.csv");
  out.note("test.csv");

  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  say(g, "synthetic problem written to " + g.out_dir);
  return 0;
}

// ---- surrogate fitting / evaluation ----

struct metric_row {
  std::string response;
  double correlation = 0.0;
  double mse_value = 0.0;
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
};

metric_row evaluate_response(const std::string& name, const forward_model& fm,
                             int response_index, const sample_table& test) {
  metric_row row;
  row.response = name;
  std::vector<double> pred(test.n), truth(test.n);
  auto t0 = clock_type::now();
  latent_state xs;
  field depth(test.n);
  xs.gas.resize(test.n);
  xs.oil.resize(test.n);
  xs.clay.resize(test.n);
  for (std::size_t i = 0; i < test.n; ++i) {
    xs.gas[i] = test.x[i * 4];
    xs.oil[i] = test.x[i * 4 + 1];
    xs.clay[i] = test.x[i * 4 + 2];
    depth[i] = test.x[i * 4 + 3];
  }
  avo_observation both;
  fm.evaluate(xs, depth, both);
  row.predict_seconds = seconds_since(t0);
  pred = response_index == 0 ? both.r0 : both.grad;
  truth = response_index == 0 ? test.r0 : test.grad;
  row.correlation = sample_correlation(truth, pred);
  row.mse_value = mse(truth, pred);
  return row;
}

void write_metrics(output_dir& out, const std::vector<metric_row>& rows) {
  {
    auto os = io::open_out(out.file("quality.csv").string(), false);
    os << "response,correlation,mse\n";
    for (const auto& r : rows)
      os << r.response << ',' << io::format_double(r.correlation) << ','
         << io::format_double(r.mse_value) << '\n';
    out.note("quality.csv");
  }
  {
    auto os = io::open_out(out.file("metrics.csv").string(), false);
    os << "response,correlation,mse,fit_seconds,predict_seconds\n";
    for (const auto& r : rows)
      os << r.response << ',' << io::format_double(r.correlation) << ','
         << io::format_double(r.mse_value) << ',' << io::format_double(r.fit_seconds)
         << ',' << io::format_double(r.predict_seconds) << '\n';
    out.note("metrics.csv", true);
  }
}

training_set to_training_set(const sample_table& t, bool use_r0) {
  return training_set{t.n, 4, t.x, use_r0 ? t.r0 : t.grad};
}

int cmd_fit_surrogate(const global_options& g, const std::string& kind,
                      const std::string& train_path, const std::string& test_path) {
  experiment_config exp = load_experiment(g);
  output_dir out(g.out_dir);
  sample_table train = read_table_csv(train_path);
  sample_table test = read_table_csv(test_path);
  std::vector<metric_row> rows;

  try {
    if (kind == "mars") {
      auto t0 = clock_type::now();
      mars_model r0 = fit(to_training_set(train, true), exp.mars);
      double fit_r0 = seconds_since(t0);
      t0 = clock_type::now();
      mars_model gm = fit(to_training_set(train, false), exp.mars);
      double fit_g = seconds_since(t0);
      save_model(out.file("mars_r0.txt").string(), r0);
      save_model(out.file("mars_g.txt").string(), gm);
      out.note("mars_r0.txt");
      out.note("mars_g.txt");

      mars_forward_model fm(r0, gm);
      rows.push_back(evaluate_response("r0", fm, 0, test));
      rows.back().fit_seconds = fit_r0;
      rows.push_back(evaluate_response("g", fm, 1, test));
      rows.back().fit_seconds = fit_g;

      if (exp.fit_gradients) {
        synthetic_forward_model truth_fm(exp.forward);
        training_set cov{train.n, 4, train.x, std::vector<double>(train.n, 0.0)};
        auto at = [&](double a, double b, double c, double d) {
          return truth_fm.at(a, b, c, d);
        };
        auto bundle = fit_gradient_models(at, cov, exp.grad_eps, exp.mars);
        auto os = io::open_out(out.file("mars_nabla.txt").string(), false);
        for (const auto& m : bundle) write_model(os, m);
        out.note("mars_nabla.txt");
      }
    } else if (kind == "npkr") {
      // the paper trains NPKR on random subsets for tractability
      std::size_t subset_n = std::min(exp.npkr_subset, train.n);
      std::vector<std::size_t> pick(train.n);
      std::iota(pick.begin(), pick.end(), std::size_t{0});
      if (subset_n < train.n) {
        rng r(derive_seed(exp.master_seed, kSeedNpkrSubset));
        for (std::size_t i = 0; i < subset_n; ++i) {
          std::size_t j = i + static_cast<std::size_t>(r.raw() % (train.n - i));
          std::swap(pick[i], pick[j]);
        }
        pick.resize(subset_n);
        std::sort(pick.begin(), pick.end());
      }
      std::vector<double> xs, yr, yg;
      for (std::size_t i : pick) {
        for (int j = 0; j < 4; ++j) xs.push_back(train.x[i * 4 + j]);
        yr.push_back(train.r0[i]);
        yg.push_back(train.grad[i]);
      }
      npkr_fit_config ncfg = exp.npkr;
      ncfg.seed = derive_seed(exp.master_seed, kSeedNpkrSubset + 1);
      auto t0 = clock_type::now();
      npkr_model r0 = fit_npkr(xs, yr, 4, ncfg);
      double fit_r0 = seconds_since(t0);
      t0 = clock_type::now();
      npkr_model gm = fit_npkr(xs, yg, 4, ncfg);
      double fit_g = seconds_since(t0);
      save_npkr(out.file("npkr_r0.bin").string(), r0);
      save_npkr(out.file("npkr_g.bin").string(), gm);
      out.note("npkr_r0.bin");
      out.note("npkr_g.bin");

      npkr_forward_model fm(r0, gm);
      rows.push_back(evaluate_response("r0", fm, 0, test));
      rows.back().fit_seconds = fit_r0;
      rows.push_back(evaluate_response("g", fm, 1, test));
      rows.back().fit_seconds = fit_g;
    } else {
      throw config_error("surrogate kind must be mars or npkr");
    }
  } catch (const config_error&) {
    throw;
  } catch (const io_error&) {
    throw;
  } catch (const error& e) {
    throw fit_error(e.what());
  }

  write_metrics(out, rows);
  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  for (const auto& r : rows)
    say(g, r.response + ": corr=" + io::format_double(r.correlation) +
               " mse=" + io::format_double(r.mse_value));
  return 0;
}

std::unique_ptr<forward_model> load_forward(const std::string& kind,
                                            const experiment_config& exp) {
  if (kind == "synthetic")
    return std::make_unique<synthetic_forward_model>(exp.forward);
  if (kind.rfind("mars:", 0) == 0) {
    fs::path dir = kind.substr(5);
    return std::make_unique<mars_forward_model>(load_model((dir / "mars_r0.txt").string()),
                                                load_model((dir / "mars_g.txt").string()));
  }
  if (kind.rfind("npkr:", 0) == 0) {
    fs::path dir = kind.substr(5);
    return std::make_unique<npkr_forward_model>(load_npkr((dir / "npkr_r0.bin").string()),
                                                load_npkr((dir / "npkr_g.bin").string()));
  }
  throw config_error("chain.forward must be synthetic, mars:<dir>, or npkr:<dir>");
}

std::unique_ptr<forward_gradient> load_gradient(const std::string& kind,
                                                const experiment_config& exp,
                                                const forward_model& fm) {
  if (kind == "fd")
    return std::make_unique<finite_difference_gradient>(fm, exp.grad_eps);
  if (kind == "analytic") {
    auto* mars_fm = dynamic_cast<const mars_forward_model*>(&fm);
    if (!mars_fm)
      throw config_error("chain.gradient=analytic needs chain.forward=mars:<dir>");
    return std::make_unique<mars_analytic_gradient>(*mars_fm);
  }
  if (kind.rfind("nabla:", 0) == 0) {
    auto is = io::open_in(kind.substr(6), false);
    std::array<mars_model, 6> models;
    for (auto& m : models) m = read_model(is);
    return std::make_unique<mars_gradient_bundle>(std::move(models));
  }
  throw config_error("chain.gradient must be fd, analytic, or nabla:<file>");
}

// Problem directory -> posterior context pieces (prior rebuilt from the
// resolved config and the stored depth field).
struct loaded_problem {
  experiment_config exp;
  synthetic_problem problem;  // truth left empty
};

loaded_problem load_problem(const global_options& g, const std::string& problem_dir) {
  fs::path dir = problem_dir;
  global_options merged = g;
  loaded_problem lp;
  lp.exp = load_experiment(merged, (dir / "resolved.ini").string());

  lp.problem.grid = lp.exp.grid;
  grid_spec check;
  lp.problem.depth.depth = io::load_field((dir / "depth.fldv").string(), check);
  if (!(check == lp.exp.grid)) throw io_error("depth grid does not match the config");
  lp.problem.depth.d_min = lp.exp.depth.d_min;
  lp.problem.depth.d_max = lp.exp.depth.d_max;
  lp.problem.data.r0 = io::load_field((dir / "data_r0.fldv").string(), check);
  lp.problem.data.grad = io::load_field((dir / "data_g.fldv").string(), check);
  lp.problem.prior = make_prior(lp.exp.prior, lp.problem.depth.normalized());
  return lp;
}

void emit_chain_outputs(output_dir& out, const experiment_config& exp,
                        const chain_output& chain) {
  save_chain(out.file("chain.chns").string(), chain);
  out.note("chain.chns");
  {
    auto os = io::open_out(out.file("chain_stats.csv").string(), false);
    write_chain_stats_csv(os, chain);
    out.note("chain_stats.csv");
  }
  for (auto q : {reservoir_quantity::s_gas, reservoir_quantity::s_oil,
                 reservoir_quantity::s_brine, reservoir_quantity::v_clay}) {
    auto maps = posterior_maps(chain, q);
    std::string mean_stem = std::string("map_mean_") + quantity_name(q);
    std::string unc_stem = std::string("map_uncertainty_") + quantity_name(q);
    io::save_field_csv(out.file(mean_stem + ".csv").string(), chain.grid, maps.mean_map);
    io::save_field_pgm(out.file(mean_stem + ".pgm").string(), chain.grid, maps.mean_map);
    io::save_field_csv(out.file(unc_stem + ".csv").string(), chain.grid,
                       maps.uncertainty_map);
    io::save_field_pgm(out.file(unc_stem + ".pgm").string(), chain.grid,
                       maps.uncertainty_map);
    out.note(mean_stem + ".csv");
    out.note(mean_stem + ".pgm");
    out.note(unc_stem + ".csv");
    out.note(unc_stem + ".pgm");
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells = exp.ternary_cells;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  for (auto [ci, cj] : cells) {
    if (ci >= chain.grid.nx || cj >= chain.grid.ny)
      throw config_error("ternary cell out of range: " + std::to_string(ci) + ":" +
                         std::to_string(cj));
    auto triples = ternary_extract(chain, chain.grid.index(ci, cj));
    std::string name =
        "ternary_" + std::to_string(ci) + "_" + std::to_string(cj) + ".csv";
    auto os = io::open_out(out.file(name).string(), false);
    write_ternary_csv(os, triples);
    out.note(name);
  }
  {
    // short or frozen chains have no usable ESS; report nan instead of failing
    std::string ess_text = "nan";
    std::size_t excluded = 3 * chain.grid.size();
    try {
      auto me = mean_ess(chain);
      ess_text = io::format_double(me.value);
      excluded = me.excluded;
    } catch (const error&) {
    }
    auto os = io::open_out(out.file("ess.csv").string(), false);
    os << "mean_ess,excluded_series,acceptance_rate,tuned_s,tune_warning\n";
    os << ess_text << ',' << excluded << ','
       << io::format_double(chain.acceptance_rate()) << ','
       << io::format_double(chain.tuned_s) << ',' << (chain.tune_warning ? 1 : 0)
       << '\n';
    out.note("ess.csv");
  }
}

int cmd_run_chain(const global_options& g, const std::string& problem_dir) {
  loaded_problem lp = load_problem(g, problem_dir);
  experiment_config& exp = lp.exp;
  output_dir out(g.out_dir);

  std::unique_ptr<forward_model> fm = load_forward(exp.forward_kind, exp);
  std::unique_ptr<forward_gradient> grad;
  if (exp.chain.proposal.family == proposal_family::mala)
    grad = load_gradient(exp.gradient_kind, exp, *fm);

  posterior_context ctx;
  try {
    ctx = make_context(lp.problem, exp.noise, *fm, grad.get());
  } catch (const error& e) {
    throw sampling_error(std::string("grf_fft: ") + e.what());
  }

  chain_config ccfg = exp.chain;
  ccfg.seed = derive_seed(exp.master_seed, 0);
  bool tune_warning = false;
  std::uint64_t tune_accepts = 0, tune_proposals = 0;
  if (exp.auto_tune) {
    rng tune_rng(derive_seed(exp.master_seed, kSeedTune));
    double target = exp.chain.proposal.family == proposal_family::mala
                        ? std::max(exp.target_rate, 0.574)
                        : exp.target_rate;
    auto tuned =
        tune_step_size(exp.chain.proposal, target, ctx, exp.chain, exp.tune, tune_rng);
    ccfg.proposal.step = tuned.s;
    tune_warning = tuned.warning;
    tune_accepts = tuned.accept_count;
    tune_proposals = tuned.proposal_count;
    say(g, "tuned s=" + io::format_double(tuned.s) +
               " rate=" + io::format_double(tuned.observed_rate) +
               (tuned.warning ? " (warning: target missed)" : ""));
  }

  chain_output chain;
  try {
    chain = run_chain(ccfg, ctx);
  } catch (const error& e) {
    throw sampling_error(std::string("mcmc: ") + e.what());
  }
  chain.tuned_s = ccfg.proposal.step;
  chain.tune_warning = tune_warning;
  chain.tune_accept_count = tune_accepts;
  chain.tune_proposal_count = tune_proposals;

  emit_chain_outputs(out, exp, chain);
  {
    auto os = io::open_out(out.file("summary.txt").string(), false);
    os << "iterations " << ccfg.iterations << '\n'
       << "stored_samples " << chain.samples.size() << '\n'
       << "acceptance_rate " << io::format_double(chain.acceptance_rate()) << '\n'
       << "tuned_s " << io::format_double(chain.tuned_s) << '\n'
       << "wall_seconds " << io::format_double(chain.wall_seconds) << '\n';
    out.note("summary.txt", true);
  }
  exp.chain = ccfg;
  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  say(g, "chain written to " + g.out_dir + " (acceptance " +
             io::format_double(chain.acceptance_rate()) + ")");
  return 0;
}

int cmd_compare_proposals(const global_options& g, const std::string& problem_dir,
                          std::vector<std::string> kernels) {
  loaded_problem lp = load_problem(g, problem_dir);
  experiment_config& exp = lp.exp;
  output_dir out(g.out_dir);

  if (kernels.empty()) kernels = {"rw_identity", "rw_prior", "pcn", "mala"};

  std::unique_ptr<forward_model> fm = load_forward(exp.forward_kind, exp);
  std::unique_ptr<forward_gradient> grad = load_gradient(exp.gradient_kind, exp, *fm);
  posterior_context ctx;
  try {
    ctx = make_context(lp.problem, exp.noise, *fm, grad.get());
  } catch (const error& e) {
    throw sampling_error(std::string("grf_fft: ") + e.what());
  }

  auto os = io::open_out(out.file("compare_proposals.csv").string(), false);
  os << "proposal,s,acceptance_rate,computation_time,ess,ess_per_time\n";

  std::uint64_t chain_index = 0;
  for (const auto& name : kernels) {
    proposal_family family = proposal_from_name(name);
    double target = family == proposal_family::mala ? 0.574 : exp.target_rate;
    proposal_kind kind{family, family == proposal_family::pcn ? 0.1 : exp.chain.proposal.step};

    rng tune_rng(derive_seed(exp.master_seed, kSeedTune + chain_index));
    tune_result tuned;
    chain_output chain;
    try {
      tuned = tune_step_size(kind, target, ctx, exp.chain, exp.tune, tune_rng);
      chain_config ccfg = exp.chain;
      ccfg.proposal = {family, tuned.s};
      ccfg.seed = derive_seed(exp.master_seed, chain_index);
      chain = run_chain(ccfg, ctx);
    } catch (const error& e) {
      throw sampling_error(std::string("mcmc(") + name + "): " + e.what());
    }
    chain.tune_accept_count = tuned.accept_count;
    chain.tune_proposal_count = tuned.proposal_count;
    double me = mean_ess(chain).value;
    os << name << ',' << io::format_double(tuned.s) << ','
       << io::format_double(chain.acceptance_rate()) << ','
       << io::format_double(chain.wall_seconds) << ',' << io::format_double(me) << ','
       << io::format_double(me / chain.wall_seconds) << '\n';
    say(g, name + ": s=" + io::format_double(tuned.s) +
               " rate=" + io::format_double(chain.acceptance_rate()) +
               " ess=" + io::format_double(me));
    ++chain_index;
  }
  os.close();
  out.note("compare_proposals.csv", true);  // carries wall-clock columns

  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  return 0;
}

int cmd_diagnose(const global_options& g, const std::string& chain_path,
                 const std::string& cells_spec) {
  experiment_config exp = load_experiment(g);
  output_dir out(g.out_dir);
  chain_output chain = load_chain(chain_path);
  if (!cells_spec.empty())
    exp.ternary_cells = config_detail::to_cells(cells_spec, "cells");
  else if (!exp.ternary_cells_explicit)
    exp.ternary_cells = {{chain.grid.nx / 4, chain.grid.ny / 4},
                         {3 * chain.grid.nx / 4, 3 * chain.grid.ny / 4}};
  emit_chain_outputs(out, exp, chain);
  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  say(g, "diagnostics written to " + g.out_dir);
  return 0;
}

int cmd_eval_surrogate(const global_options& g, const std::string& model_dir,
                       const std::string& test_path) {
  experiment_config exp = load_experiment(g);
  output_dir out(g.out_dir);
  sample_table test = read_table_csv(test_path);

  std::unique_ptr<forward_model> fm;
  if (fs::exists(fs::path(model_dir) / "mars_r0.txt"))
    fm = load_forward("mars:" + model_dir, exp);
  else if (fs::exists(fs::path(model_dir) / "npkr_r0.bin"))
    fm = load_forward("npkr:" + model_dir, exp);
  else
    throw io_error("no surrogate model files under " + model_dir);

  std::vector<metric_row> rows;
  rows.push_back(evaluate_response("r0", *fm, 0, test));
  rows.push_back(evaluate_response("g", *fm, 1, test));
  write_metrics(out, rows);

  {
    auto os = io::open_out(out.file("predictions.csv").string(), false);
    os << "r0_pred,g_pred\n";
    latent_state xs;
    field depth(test.n);
    xs.gas.resize(test.n);
    xs.oil.resize(test.n);
    xs.clay.resize(test.n);
    for (std::size_t i = 0; i < test.n; ++i) {
      xs.gas[i] = test.x[i * 4];
      xs.oil[i] = test.x[i * 4 + 1];
      xs.clay[i] = test.x[i * 4 + 2];
      depth[i] = test.x[i * 4 + 3];
    }
    avo_observation pred;
    fm->evaluate(xs, depth, pred);
    for (std::size_t i = 0; i < test.n; ++i)
      os << io::format_double(pred.r0[i]) << ',' << io::format_double(pred.grad[i])
         << '\n';
    out.note("predictions.csv");
  }
  save_config(out.file("resolved.ini").string(), exp.resolve());
  out.note("resolved.ini");
  out.write_manifest();
  for (const auto& r : rows)
    say(g, r.response + ": corr=" + io::format_double(r.correlation) +
               " mse=" + io::format_double(r.mse_value));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian AVO inversion toolkit: FFT Gaussian fields, MARS/NPKR "
               "surrogates, and Metropolis-Hastings samplers"};
  app.require_subcommand(1);
  app.fallthrough(true);

  global_options g;
  app.add_option("--config", g.config_path, "configuration file");
  app.add_option("--out", g.out_dir, "output directory");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");
  app.add_option("--set", g.overrides, "section.key=value overrides")
      ->take_all()
      ->allow_extra_args(false);
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  auto* make_cmd = app.add_subcommand("make-synthetic", "generate a synthetic problem");

  std::string kind = "mars", train_path, test_path;
  auto* fit_cmd = app.add_subcommand("fit-surrogate", "fit and evaluate a surrogate");
  fit_cmd->add_option("--kind", kind, "mars or npkr");
  fit_cmd->add_option("--train", train_path, "training table csv")->required();
  fit_cmd->add_option("--test", test_path, "held-out table csv")->required();

  std::string model_dir;
  auto* eval_cmd = app.add_subcommand("eval-surrogate", "evaluate a saved surrogate");
  eval_cmd->add_option("--model-dir", model_dir, "directory with model files")->required();
  eval_cmd->add_option("--test", test_path, "held-out table csv")->required();

  std::string problem_dir;
  auto* run_cmd = app.add_subcommand("run-chain", "run one MCMC chain");
  run_cmd->add_option("--problem", problem_dir, "make-synthetic output directory")
      ->required();

  std::vector<std::string> kernels;
  auto* cmp_cmd = app.add_subcommand("compare-proposals", "tune and benchmark kernels");
  cmp_cmd->add_option("--problem", problem_dir, "make-synthetic output directory")
      ->required();
  cmp_cmd->add_option("--kernels", kernels, "subset of rw_identity rw_prior pcn mala");

  std::string chain_path, cells_spec;
  auto* diag_cmd = app.add_subcommand("diagnose", "recompute diagnostics from a chain");
  diag_cmd->add_option("--chain", chain_path, "chain .chns file")->required();
  diag_cmd->add_option("--cells", cells_spec, "ternary cells, e.g. 4:7;1:2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (g.out_dir.empty()) throw config_error("--out is required");
    if (*make_cmd) return cmd_make_synthetic(g);
    if (*fit_cmd) return cmd_fit_surrogate(g, kind, train_path, test_path);
    if (*eval_cmd) return cmd_eval_surrogate(g, model_dir, test_path);
    if (*run_cmd) return cmd_run_chain(g, problem_dir);
    if (*cmp_cmd) return cmd_compare_proposals(g, problem_dir, kernels);
    if (*diag_cmd) return cmd_diagnose(g, chain_path, cells_spec);
    throw config_error("no subcommand selected");
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fit_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const sampling_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
