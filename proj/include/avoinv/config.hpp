#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "avoinv/common.hpp"
#include "avoinv/io.hpp"
#include "avoinv/mcmc.hpp"
#include "avoinv/model.hpp"

// Flat sectioned key-value configuration. Every run resolves its full
// configuration (defaults expanded, overrides applied) and writes it next
// to the outputs, so any artifact can be regenerated from one file.

namespace avoinv {

struct raw_config {
  // section -> key -> value; std::map keeps writes deterministic
  std::map<std::string, std::map<std::string, std::string>> sections;

  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
  }

  static raw_config parse(std::istream& is) {
    raw_config cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw config_error("line " + std::to_string(lineno) + ": unterminated section");
        section = trim(t.substr(1, t.size() - 2));
        cfg.sections[section];
        continue;
      }
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error("line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw config_error("line " + std::to_string(lineno) + ": empty key");
      cfg.sections[section][key] = value;
    }
    return cfg;
  }

  static raw_config parse_file(const std::string& path) {
    auto is = io::open_in(path, false);
    return parse(is);
  }

  // "section.key=value" overrides from the command line.
  void set_dotted(const std::string& spec) {
    std::size_t eq = spec.find('=');
    std::size_t dot = spec.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw config_error("override must look like section.key=value: " + spec);
    sections[trim(spec.substr(0, dot))][trim(spec.substr(dot + 1, eq - dot - 1))] =
        trim(spec.substr(eq + 1));
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end() || !s->second.count(key))
      throw config_error("missing required key " + section + "." + key);
    return s->second.at(key);
  }
};

namespace config_detail {

inline double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad number for " + where + ": '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad integer for " + where + ": '" + v + "'");
  }
}

inline bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("bad boolean for " + where + ": '" + v + "'");
}

// "0:1, 1:-3" -> piecewise-linear trend points
inline depth_trend to_trend(const std::string& v, const std::string& where) {
  depth_trend t;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = raw_config::trim(item);
    if (item.empty()) continue;
    std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw config_error("bad trend point for " + where + ": '" + item + "'");
    t.points.emplace_back(to_double(item.substr(0, colon), where),
                          to_double(item.substr(colon + 1), where));
  }
  if (t.points.empty()) throw config_error("empty trend for " + where);
  return t;
}

inline std::string trend_to_string(const depth_trend& t) {
  std::string out;
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    if (i) out += ",";
    out += io::format_double(t.points[i].first) + ":" +
           io::format_double(t.points[i].second);
  }
  return out;
}

// "4:7; 1:2" -> cell coordinate list
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> to_cells(
    const std::string& v, const std::string& where) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = raw_config::trim(item);
    if (item.empty()) continue;
    std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw config_error("bad cell for " + where + ": '" + item + "'");
    cells.emplace_back(
        static_cast<std::uint32_t>(to_u64(item.substr(0, colon), where)),
        static_cast<std::uint32_t>(to_u64(item.substr(colon + 1), where)));
  }
  return cells;
}

}  // namespace config_detail

// The fully typed experiment configuration; every field has a default and
// the resolved state round-trips through the text form.
struct experiment_config {
  // [run]
  std::uint64_t master_seed = 20240901;

  // [grid]
  grid_spec grid{10, 10};

  // [depth]
  depth_config depth;

  // [prior]
  prior_config prior;

  // [noise]
  noise_spec noise;

  // [forward]
  forward_coeffs forward;

  // [surrogate]
  std::size_t n_train = 20000;
  std::size_t n_test = 10000;
  mars_fit_config mars;
  double grad_eps = 1e-4;
  bool fit_gradients = false;
  std::size_t npkr_subset = 1000;   // training rows used by the NPKR fit
  npkr_fit_config npkr;

  // [chain]
  chain_config chain;
  bool auto_tune = true;
  double target_rate = 0.234;
  tune_config tune;
  std::string forward_kind = "synthetic";  // synthetic | mars:<dir> | npkr:<dir>
  std::string gradient_kind = "fd";        // fd | analytic | nabla:<path>

  // [diagnostics]
  // defaults to one shallow and one deep cell derived from the grid
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ternary_cells;
  bool ternary_cells_explicit = false;
  std::size_t max_lag = 50;

  void apply(const raw_config& cfg);
  raw_config resolve() const;
};

inline void experiment_config::apply(const raw_config& cfg) {
  using namespace config_detail;
  auto num = [&](const char* sec, const char* key, double& out) {
    if (cfg.has(sec, key)) out = to_double(cfg.get(sec, key), std::string(sec) + "." + key);
  };
  auto uint = [&](const char* sec, const char* key, auto& out) {
    if (cfg.has(sec, key))
      out = static_cast<std::decay_t<decltype(out)>>(
          to_u64(cfg.get(sec, key), std::string(sec) + "." + key));
  };

  uint("run", "master_seed", master_seed);
  uint("grid", "nx", grid.nx);
  uint("grid", "ny", grid.ny);
  num("depth", "d_min", depth.d_min);
  num("depth", "d_max", depth.d_max);
  num("depth", "perturb_amp", depth.perturb_amp);
  num("depth", "perturb_range", depth.perturb_range);

  if (cfg.has("prior", "mu_gas")) prior.mu_gas = to_trend(cfg.get("prior", "mu_gas"), "prior.mu_gas");
  if (cfg.has("prior", "mu_oil")) prior.mu_oil = to_trend(cfg.get("prior", "mu_oil"), "prior.mu_oil");
  if (cfg.has("prior", "mu_clay")) prior.mu_clay = to_trend(cfg.get("prior", "mu_clay"), "prior.mu_clay");
  num("prior", "sigma_gas", prior.sigma_gas);
  num("prior", "sigma_oil", prior.sigma_oil);
  num("prior", "sigma_clay", prior.sigma_clay);
  num("prior", "range_gas", prior.range_gas);
  num("prior", "range_oil", prior.range_oil);
  num("prior", "range_clay", prior.range_clay);

  num("noise", "var_r0", noise.var_r0);
  num("noise", "var_g", noise.var_g);
  num("noise", "corr", noise.corr);

  for (int i = 0; i < 6; ++i) {
    num("forward", ("a" + std::to_string(i)).c_str(), forward.a[i]);
    num("forward", ("b" + std::to_string(i)).c_str(), forward.b[i]);
  }

  uint("surrogate", "n_train", n_train);
  uint("surrogate", "n_test", n_test);
  uint("surrogate", "max_terms", mars.max_terms);
  uint("surrogate", "max_degree", mars.max_degree);
  num("surrogate", "penalty", mars.penalty);
  uint("surrogate", "knot_subsample", mars.knot_subsample);
  uint("surrogate", "min_span", mars.min_span);
  uint("surrogate", "end_span", mars.end_span);
  num("surrogate", "grad_eps", grad_eps);
  if (cfg.has("surrogate", "fit_gradients"))
    fit_gradients = to_bool(cfg.get("surrogate", "fit_gradients"), "surrogate.fit_gradients");
  uint("surrogate", "npkr_subset", npkr_subset);
  uint("surrogate", "npkr_starts", npkr.starts);
  uint("surrogate", "npkr_budget", npkr.budget);
  uint("surrogate", "npkr_cv_subset", npkr.subset);

  uint("chain", "iterations", chain.iterations);
  uint("chain", "thin", chain.thin);
  if (cfg.has("chain", "burn_in"))
    chain.burn_in = to_u64(cfg.get("chain", "burn_in"), "chain.burn_in");
  else
    chain.burn_in = chain.iterations / 2;
  if (cfg.has("chain", "proposal"))
    chain.proposal.family = proposal_from_name(cfg.get("chain", "proposal"));
  num("chain", "s", chain.proposal.step);
  if (cfg.has("chain", "auto_tune"))
    auto_tune = to_bool(cfg.get("chain", "auto_tune"), "chain.auto_tune");
  num("chain", "target_rate", target_rate);
  uint("chain", "tune_batches", tune.batches);
  uint("chain", "tune_batch_size", tune.batch_size);
  uint("chain", "tune_eval_batch", tune.eval_batch);
  num("chain", "tune_gain", tune.gain);
  if (cfg.has("chain", "start")) {
    std::string s = cfg.get("chain", "start");
    if (s == "prior_mean") chain.start = chain_start::prior_mean;
    else if (s == "prior_draw") chain.start = chain_start::prior_draw;
    else throw config_error("chain.start must be prior_mean or prior_draw");
  }
  if (cfg.has("chain", "forward")) forward_kind = cfg.get("chain", "forward");
  if (cfg.has("chain", "gradient")) gradient_kind = cfg.get("chain", "gradient");

  if (cfg.has("diagnostics", "ternary_cells")) {
    ternary_cells = to_cells(cfg.get("diagnostics", "ternary_cells"), "diagnostics.ternary_cells");
    ternary_cells_explicit = true;
  }
  if (!ternary_cells_explicit)
    ternary_cells = {{grid.nx / 4, grid.ny / 4},
                     {3 * grid.nx / 4, 3 * grid.ny / 4}};
  uint("diagnostics", "max_lag", max_lag);
}

inline raw_config experiment_config::resolve() const {
  using config_detail::trend_to_string;
  raw_config out;
  auto& run = out.sections["run"];
  run["master_seed"] = std::to_string(master_seed);

  auto& g = out.sections["grid"];
  g["nx"] = std::to_string(grid.nx);
  g["ny"] = std::to_string(grid.ny);

  auto& d = out.sections["depth"];
  d["d_min"] = io::format_double(depth.d_min);
  d["d_max"] = io::format_double(depth.d_max);
  d["perturb_amp"] = io::format_double(depth.perturb_amp);
  d["perturb_range"] = io::format_double(depth.perturb_range);

  auto& p = out.sections["prior"];
  p["mu_gas"] = trend_to_string(prior.mu_gas);
  p["mu_oil"] = trend_to_string(prior.mu_oil);
  p["mu_clay"] = trend_to_string(prior.mu_clay);
  p["sigma_gas"] = io::format_double(prior.sigma_gas);
  p["sigma_oil"] = io::format_double(prior.sigma_oil);
  p["sigma_clay"] = io::format_double(prior.sigma_clay);
  p["range_gas"] = io::format_double(prior.range_gas);
  p["range_oil"] = io::format_double(prior.range_oil);
  p["range_clay"] = io::format_double(prior.range_clay);

  auto& n = out.sections["noise"];
  n["var_r0"] = io::format_double(noise.var_r0);
  n["var_g"] = io::format_double(noise.var_g);
  n["corr"] = io::format_double(noise.corr);

  auto& f = out.sections["forward"];
  for (int i = 0; i < 6; ++i) {
    f["a" + std::to_string(i)] = io::format_double(forward.a[i]);
    f["b" + std::to_string(i)] = io::format_double(forward.b[i]);
  }

  auto& s = out.sections["surrogate"];
  s["n_train"] = std::to_string(n_train);
  s["n_test"] = std::to_string(n_test);
  s["max_terms"] = std::to_string(mars.max_terms);
  s["max_degree"] = std::to_string(mars.max_degree);
  s["penalty"] = io::format_double(mars.penalty);
  s["knot_subsample"] = std::to_string(mars.knot_subsample);
  s["min_span"] = std::to_string(mars.min_span);
  s["end_span"] = std::to_string(mars.end_span);
  s["grad_eps"] = io::format_double(grad_eps);
  s["fit_gradients"] = fit_gradients ? "true" : "false";
  s["npkr_subset"] = std::to_string(npkr_subset);
  s["npkr_starts"] = std::to_string(npkr.starts);
  s["npkr_budget"] = std::to_string(npkr.budget);
  s["npkr_cv_subset"] = std::to_string(npkr.subset);

  auto& c = out.sections["chain"];
  c["iterations"] = std::to_string(chain.iterations);
  c["thin"] = std::to_string(chain.thin);
  c["burn_in"] = std::to_string(chain.burn_in);
  c["proposal"] = proposal_name(chain.proposal.family);
  c["s"] = io::format_double(chain.proposal.step);
  c["auto_tune"] = auto_tune ? "true" : "false";
  c["target_rate"] = io::format_double(target_rate);
  c["tune_batches"] = std::to_string(tune.batches);
  c["tune_batch_size"] = std::to_string(tune.batch_size);
  c["tune_eval_batch"] = std::to_string(tune.eval_batch);
  c["tune_gain"] = io::format_double(tune.gain);
  c["start"] = chain.start == chain_start::prior_draw ? "prior_draw" : "prior_mean";
  c["forward"] = forward_kind;
  c["gradient"] = gradient_kind;

  auto& di = out.sections["diagnostics"];
  std::string cells;
  for (std::size_t i = 0; i < ternary_cells.size(); ++i) {
    if (i) cells += ";";
    cells += std::to_string(ternary_cells[i].first) + ":" +
             std::to_string(ternary_cells[i].second);
  }
  di["ternary_cells"] = cells;
  di["max_lag"] = std::to_string(max_lag);
  return out;
}

inline void write_config(std::ostream& os, const raw_config& cfg) {
  for (const auto& [section, kv] : cfg.sections) {
    os << '[' << section << "]\n";
    for (const auto& [key, value] : kv) os << key << " = " << value << '\n';
    os << '\n';
  }
  if (!os) throw io_error("config write failed");
}

inline void save_config(const std::string& path, const raw_config& cfg) {
  auto os = io::open_out(path, false);
  write_config(os, cfg);
}

}  // namespace avoinv
