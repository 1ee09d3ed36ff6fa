// End-to-end tests of the command-line tool, run as a subprocess. The
// binary path arrives as a command-line argument from ctest.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "avoinv/io.hpp"
#include "avoinv/mcmc.hpp"

namespace fs = std::filesystem;

namespace {

const std::string g_cli = AVOINV_CLI_PATH;

int run_cli(const std::string& args) {
  std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string capture_cli(const std::string& args) {
  std::string out_file = (fs::temp_directory_path() / "avoinv_cli_capture.txt").string();
  std::string cmd = g_cli + " " + args + " >" + out_file + " 2>&1";
  std::system(cmd.c_str());
  return avoinv::io::read_file_bytes(out_file);
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

// Deterministic-artifact names from a manifest (the hashed section).
std::vector<std::string> manifest_files(const fs::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  REQUIRE(is.good());
  std::vector<std::string> files;
  std::string line;
  bool in_hashed = false;
  while (std::getline(is, line)) {
    if (line.rfind("# fnv1a", 0) == 0) {
      in_hashed = true;
      continue;
    }
    if (line.rfind("# volatile", 0) == 0) break;
    if (in_hashed && line.size() > 18) files.push_back(line.substr(18));
  }
  return files;
}

const std::string kSmallProblem =
    " --set grid.nx=6 --set grid.ny=6 --set surrogate.n_train=300"
    " --set surrogate.n_test=120";

}  // namespace

TEST_CASE("make-synthetic is byte-deterministic given config and seed") {
  auto d1 = fresh_dir("avoinv_cli_det1");
  auto d2 = fresh_dir("avoinv_cli_det2");
  std::string args = "make-synthetic --quiet --seed 99" + kSmallProblem;
  REQUIRE(run_cli(args + " --out " + d1.string()) == 0);
  REQUIRE(run_cli(args + " --out " + d2.string()) == 0);

  auto files = manifest_files(d1);
  REQUIRE(!files.empty());
  for (const auto& f : files) {
    INFO(f);
    CHECK(avoinv::io::read_file_bytes((d1 / f).string()) ==
          avoinv::io::read_file_bytes((d2 / f).string()));
  }
  CHECK(avoinv::io::read_file_bytes((d1 / "manifest.txt").string()) ==
        avoinv::io::read_file_bytes((d2 / "manifest.txt").string()));
}

TEST_CASE("training table has the configured number of rows") {
  auto d = fresh_dir("avoinv_cli_rows");
  REQUIRE(run_cli("make-synthetic --quiet --seed 5 --out " + d.string() +
                  " --set grid.nx=6 --set grid.ny=6 --set surrogate.n_train=257"
                  " --set surrogate.n_test=31") == 0);
  std::string train = avoinv::io::read_file_bytes((d / "train.csv").string());
  CHECK(std::count(train.begin(), train.end(), '\n') == 258);  // header + rows
}

TEST_CASE("missing required config keys name themselves and exit 2") {
  auto d = fresh_dir("avoinv_cli_badcfg");
  fs::create_directories(d);
  {
    std::ofstream cfg(d / "bad.ini");
    cfg << "[grid]\nnx = oops\n";
  }
  std::string out = capture_cli("make-synthetic --quiet --config " +
                                (d / "bad.ini").string() + " --out " + d.string());
  CHECK(out.find("grid.nx") != std::string::npos);
  CHECK(run_cli("make-synthetic --quiet --config " + (d / "bad.ini").string() +
                " --out " + d.string()) == 2);
}

TEST_CASE("config errors and io errors map to their exit codes") {
  auto d = fresh_dir("avoinv_cli_codes");
  CHECK(run_cli("run-chain --quiet --problem /nonexistent --out " + d.string()) == 5);
  CHECK(run_cli("make-synthetic --quiet --seed 1") == 2);  // --out missing
  CHECK(run_cli("bogus-subcommand") == 2);
  CHECK(run_cli("make-synthetic --quiet --out " + d.string() +
                " --set chain.proposal=walk") == 2);
}

TEST_CASE("full pipeline: fit, chain, diagnose") {
  auto problem = fresh_dir("avoinv_cli_problem");
  auto model = fresh_dir("avoinv_cli_model");
  auto chain = fresh_dir("avoinv_cli_chain");
  auto diag = fresh_dir("avoinv_cli_diag");

  REQUIRE(run_cli("make-synthetic --quiet --seed 31 --out " + problem.string() +
                  kSmallProblem) == 0);
  REQUIRE(run_cli("fit-surrogate --quiet --seed 31 --kind mars --train " +
                  (problem / "train.csv").string() + " --test " +
                  (problem / "test.csv").string() + " --out " + model.string() +
                  " --set surrogate.max_terms=15") == 0);
  CHECK(fs::exists(model / "mars_r0.txt"));
  CHECK(fs::exists(model / "quality.csv"));

  REQUIRE(run_cli("run-chain --quiet --seed 31 --problem " + problem.string() +
                  " --out " + chain.string() + " --set chain.forward=mars:" +
                  model.string() +
                  " --set chain.iterations=800 --set chain.thin=8"
                  " --set chain.burn_in=400 --set chain.auto_tune=false"
                  " --set chain.s=0.5") == 0);
  CHECK(fs::exists(chain / "chain.chns"));
  CHECK(fs::exists(chain / "map_mean_s_gas.pgm"));
  CHECK(fs::exists(chain / "ternary_1_1.csv"));
  CHECK(fs::exists(chain / "ternary_4_4.csv"));

  auto stored = avoinv::load_chain((chain / "chain.chns").string());
  CHECK(stored.samples.size() == 50);  // (800 - 400) / 8

  REQUIRE(run_cli("diagnose --quiet --seed 31 --chain " +
                  (chain / "chain.chns").string() + " --out " + diag.string() +
                  " --cells 0:0 --set grid.nx=6 --set grid.ny=6") == 0);
  CHECK(fs::exists(diag / "ternary_0_0.csv"));

  // diagnostics recomputed from the stored chain are bit-identical
  CHECK(avoinv::io::read_file_bytes((chain / "map_mean_s_oil.csv").string()) ==
        avoinv::io::read_file_bytes((diag / "map_mean_s_oil.csv").string()));
}

TEST_CASE("run-chain reruns are byte-deterministic") {
  auto problem = fresh_dir("avoinv_cli_det_problem");
  REQUIRE(run_cli("make-synthetic --quiet --seed 77 --out " + problem.string() +
                  kSmallProblem) == 0);
  auto c1 = fresh_dir("avoinv_cli_det_c1");
  auto c2 = fresh_dir("avoinv_cli_det_c2");
  std::string args = "run-chain --quiet --seed 77 --problem " + problem.string() +
                     " --set chain.iterations=600 --set chain.thin=6"
                     " --set chain.burn_in=300 --set chain.auto_tune=false"
                     " --set chain.s=0.4 --out ";
  REQUIRE(run_cli(args + c1.string()) == 0);
  REQUIRE(run_cli(args + c2.string()) == 0);
  for (const auto& f : manifest_files(c1)) {
    INFO(f);
    CHECK(avoinv::io::read_file_bytes((c1 / f).string()) ==
          avoinv::io::read_file_bytes((c2 / f).string()));
  }
}

TEST_CASE("npkr surrogate fits through the cli") {
  auto problem = fresh_dir("avoinv_cli_np");
  auto model = fresh_dir("avoinv_cli_np_model");
  REQUIRE(run_cli("make-synthetic --quiet --seed 13 --out " + problem.string() +
                  kSmallProblem) == 0);
  REQUIRE(run_cli("fit-surrogate --quiet --seed 13 --kind npkr --train " +
                  (problem / "train.csv").string() + " --test " +
                  (problem / "test.csv").string() + " --out " + model.string() +
                  " --set surrogate.npkr_subset=120"
                  " --set surrogate.npkr_budget=60") == 0);
  CHECK(fs::exists(model / "npkr_r0.bin"));
  CHECK(fs::exists(model / "npkr_g.bin"));
  std::string quality = avoinv::io::read_file_bytes((model / "quality.csv").string());
  CHECK(quality.find("r0,") != std::string::npos);

  // refit must be byte-identical
  auto model2 = fresh_dir("avoinv_cli_np_model2");
  REQUIRE(run_cli("fit-surrogate --quiet --seed 13 --kind npkr --train " +
                  (problem / "train.csv").string() + " --test " +
                  (problem / "test.csv").string() + " --out " + model2.string() +
                  " --set surrogate.npkr_subset=120"
                  " --set surrogate.npkr_budget=60") == 0);
  CHECK(avoinv::io::read_file_bytes((model / "npkr_r0.bin").string()) ==
        avoinv::io::read_file_bytes((model2 / "npkr_r0.bin").string()));
}

TEST_CASE("smoke chain on the standard grid finishes well inside a minute") {
  auto problem = fresh_dir("avoinv_cli_smoke");
  REQUIRE(run_cli("make-synthetic --quiet --seed 21 --out " + problem.string() +
                  " --set surrogate.n_train=200 --set surrogate.n_test=50") == 0);
  auto chain = fresh_dir("avoinv_cli_smoke_chain");
  auto t0 = std::chrono::steady_clock::now();
  REQUIRE(run_cli("run-chain --quiet --seed 21 --problem " + problem.string() +
                  " --out " + chain.string() +
                  " --set chain.iterations=10000 --set chain.thin=10"
                  " --set chain.burn_in=5000") == 0);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(dt < 60.0);
}

TEST_CASE("compare-proposals emits the six-column table") {
  auto problem = fresh_dir("avoinv_cli_cmp_problem");
  REQUIRE(run_cli("make-synthetic --quiet --seed 55 --out " + problem.string() +
                  kSmallProblem) == 0);
  auto out = fresh_dir("avoinv_cli_cmp_out");
  REQUIRE(run_cli("compare-proposals --quiet --seed 55 --problem " + problem.string() +
                  " --out " + out.string() +
                  " --kernels rw_identity pcn"
                  " --set chain.iterations=1500 --set chain.thin=5"
                  " --set chain.burn_in=500 --set chain.tune_batches=8"
                  " --set chain.tune_batch_size=60 --set chain.tune_eval_batch=200") == 0);
  std::ifstream is(out / "compare_proposals.csv");
  std::string header, row1, row2;
  REQUIRE(std::getline(is, header));
  CHECK(header == "proposal,s,acceptance_rate,computation_time,ess,ess_per_time");
  REQUIRE(std::getline(is, row1));
  REQUIRE(std::getline(is, row2));
  CHECK(row1.rfind("rw_identity,", 0) == 0);
  CHECK(row2.rfind("pcn,", 0) == 0);
  CHECK(std::count(row1.begin(), row1.end(), ',') == 5);
}
