#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "avoinv/config.hpp"

using namespace avoinv;

TEST_CASE("raw config parsing") {
  std::istringstream is(
      "# comment\n"
      "[grid]\n"
      "nx = 12\n"
      "ny=7\n"
      "\n"
      "[prior]\n"
      "mu_gas = 0:1, 1:-3\n");
  auto cfg = raw_config::parse(is);
  CHECK(cfg.get("grid", "nx") == "12");
  CHECK(cfg.get("grid", "ny") == "7");
  CHECK(cfg.get("prior", "mu_gas") == "0:1, 1:-3");
  CHECK(cfg.has("grid", "nx"));
  CHECK_FALSE(cfg.has("grid", "nz"));
  CHECK_THROWS_AS(cfg.get("grid", "nz"), config_error);
}

TEST_CASE("missing keys name themselves in the error") {
  raw_config cfg;
  try {
    cfg.get("noise", "var_r0");
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("noise.var_r0") != std::string::npos);
  }
}

TEST_CASE("malformed lines are rejected") {
  std::istringstream broken("[grid\nnx = 3\n");
  CHECK_THROWS_AS(raw_config::parse(broken), config_error);
  std::istringstream nokey("[grid]\n= 3\n");
  CHECK_THROWS_AS(raw_config::parse(nokey), config_error);
  std::istringstream noeq("[grid]\nnx 3\n");
  CHECK_THROWS_AS(raw_config::parse(noeq), config_error);
}

TEST_CASE("dotted overrides") {
  raw_config cfg;
  cfg.set_dotted("chain.s=0.25");
  CHECK(cfg.get("chain", "s") == "0.25");
  CHECK_THROWS_AS(cfg.set_dotted("nodot=1"), config_error);
  CHECK_THROWS_AS(cfg.set_dotted("a.b"), config_error);
}

TEST_CASE("experiment config applies overrides and round-trips") {
  experiment_config exp;
  raw_config cfg;
  cfg.set_dotted("grid.nx=6");
  cfg.set_dotted("grid.ny=9");
  cfg.set_dotted("prior.mu_gas=0:2,0.5:0,1:-4");
  cfg.set_dotted("chain.proposal=mala");
  cfg.set_dotted("chain.iterations=500");
  cfg.set_dotted("surrogate.max_terms=21");
  exp.apply(cfg);

  CHECK(exp.grid.nx == 6);
  CHECK(exp.grid.ny == 9);
  CHECK(exp.prior.mu_gas.points.size() == 3);
  CHECK(exp.prior.mu_gas.at(0.5) == Catch::Approx(0.0));
  CHECK(exp.chain.proposal.family == proposal_family::mala);
  CHECK(exp.chain.iterations == 500);
  CHECK(exp.chain.burn_in == 250);  // defaults to half when unset
  CHECK(exp.mars.max_terms == 21);

  // resolve -> parse -> apply reproduces the same typed state
  std::ostringstream os;
  write_config(os, exp.resolve());
  std::istringstream back(os.str());
  experiment_config exp2;
  exp2.apply(raw_config::parse(back));
  CHECK(exp2.grid.nx == exp.grid.nx);
  CHECK(exp2.chain.iterations == exp.chain.iterations);
  CHECK(exp2.chain.burn_in == exp.chain.burn_in);
  CHECK(exp2.prior.mu_gas.points == exp.prior.mu_gas.points);
  CHECK(exp2.noise.var_r0 == exp.noise.var_r0);

  // resolved text is stable under a second round trip
  std::ostringstream os2;
  write_config(os2, exp2.resolve());
  CHECK(os2.str() == os.str());
}

TEST_CASE("bad values carry their location") {
  experiment_config exp;
  raw_config cfg;
  cfg.set_dotted("noise.var_r0=abc");
  CHECK_THROWS_AS(exp.apply(cfg), config_error);
  raw_config cfg2;
  cfg2.set_dotted("chain.start=middle");
  CHECK_THROWS_AS(exp.apply(cfg2), config_error);
  raw_config cfg3;
  cfg3.set_dotted("chain.proposal=hamiltonian");
  CHECK_THROWS_AS(exp.apply(cfg3), config_error);
}

TEST_CASE("paper noise defaults are preserved") {
  experiment_config exp;
  CHECK(exp.noise.var_r0 == 0.003);
  CHECK(exp.noise.var_g == 0.03);
  CHECK(exp.noise.corr == -0.6);
}
