#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/analysis.hpp"
#include "test_configs.hpp"

using namespace bondflow;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string temp_dir(const std::string& tag) {
  std::string d = std::filesystem::temp_directory_path() / ("bondflow_test_" + tag);
  std::filesystem::remove_all(d);
  return d;
}

// swap the default Dirichlet-carrying past data for constant-in-x data
std::string sweep_config(const std::string& run_extra) {
  return base_config("", "", run_extra);
}

}  // namespace

TEST_CASE("empty table emits a header-only CSV") {
  Table t;
  t.columns = {"alpha", "beta"};
  CHECK(t.to_csv() == "alpha,beta\n");
}

TEST_CASE("emitted JSON reparses to the same table") {
  Table t;
  t.columns = {"p", "err"};
  t.rows = {{0.1, 1.0 / 3.0}, {0.05, std::nan("")}, {0.025, 1e-17}};
  nlohmann::json j = nlohmann::json::parse(t.to_json());
  CHECK(j["columns"].size() == 2);
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][0][1].get<double>() == 1.0 / 3.0);  // bit-exact round trip
  CHECK(j["rows"][1][1].is_null());                   // NaN marker
  CHECK(j["rows"][2][1].get<double>() == 1e-17);
}

TEST_CASE("csv uses 17 significant digits and LF endings") {
  Table t;
  t.columns = {"v"};
  t.rows = {{1.0 / 3.0}};
  std::string csv = t.to_csv();
  CHECK(csv == "v\n0.33333333333333331\n");
}

TEST_CASE("observed order bookkeeping") {
  CHECK(observed_order(0.2, 0.1, 1.0, 0.5) == doctest::Approx(1.0));
  CHECK(std::isnan(observed_order(0.2, 0.07, 1.0, 0.5)));   // not a halving
  CHECK(std::isnan(observed_order(0.2, 0.1, 1e-14, 1e-15)));  // below noise
}

TEST_CASE("delta_a refinement: steady init never drifts") {
  std::string cfg = sweep_config("da_sweep = 0.08,0.04\n");
  Problem p = load_problem(cfg);
  auto rows = delta_a_refinement(p, p.run.da_sweep, DensityInit::DiscreteSteady, 1);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) CHECK(r.err_yt <= 1e-12);
  Table t = da_sweep_table(rows);
  CHECK(std::isnan(t.rows[1][3]));  // order undefined at machine zero
  // CFL metadata: halving delta_a halves delta_t
  CHECK(rows[1].delta_t == doctest::Approx(0.5 * rows[0].delta_t).epsilon(1e-14));
}

TEST_CASE("delta_a refinement rejects non-constant rates") {
  std::string cfg = sweep_config("da_sweep = 0.08,0.04\n");
  size_t pos = cfg.find("beta = 1\n");
  cfg.replace(pos, 9, "beta = 1+0.1*sin(pi*t)\n");
  cfg.replace(cfg.find("beta_max = 1"), 12, "beta_max = 1.1");
  cfg.replace(cfg.find("M = 1.5"), 7, "M = 1.6");
  Problem p = load_problem(cfg);
  CHECK_THROWS_AS(delta_a_refinement(p, p.run.da_sweep, DensityInit::CellAverage, 1),
                  ConfigError);
}

TEST_CASE("kernel: psi == 0 gives zero integrals") {
  std::string cfg = sweep_config("eps_sweep = 0.1,0.05\npsi = 0*a\n");
  Problem p = load_problem(cfg);
  auto rows = kernel_sweep(p, p.run.eps_sweep, 1);
  for (const auto& r : rows) {
    CHECK(r.k_integral == 0.0);
    CHECK(r.limit_integral == 0.0);
  }
}

TEST_CASE("kernel: steady well-prepared problem has vanishing integrals") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("rho_I = 0.25*exp(-a)"), 20, "rho_I = 0.5*exp(-a)");
  cfg.replace(cfg.find("mu_I_min = 0.2"), 14, "mu_I_min = 0.4");
  cfg += "eps_sweep = 0.1,0.05\n";
  Problem p = load_problem(cfg);
  auto rows = kernel_sweep(p, p.run.eps_sweep, 1);
  for (const auto& r : rows) {
    CHECK(std::abs(r.k_integral) <= 1e-8);
    CHECK(std::abs(r.limit_integral) <= 1e-8);
  }
}

TEST_CASE("epsilon sweep is deterministic across thread counts") {
  std::string cfg = sweep_config("eps_sweep = 0.2,0.1\n");
  Problem p = load_problem(cfg);
  Table t1 = epsilon_sweep_table(epsilon_sweep(p, p.run.eps_sweep, 1));
  Table t2 = epsilon_sweep_table(epsilon_sweep(p, p.run.eps_sweep, 2));
  CHECK(t1.to_csv() == t2.to_csv());
  REQUIRE(t1.rows.size() == 2);
  // panel quantities populated
  CHECK(t1.rows[0][1] >= 0.0);
  CHECK(t1.rows[1][5] >= 0.0);
}

TEST_CASE("run_command density writes the documented headers") {
  std::string out = temp_dir("density");
  Problem p = load_problem(base_config());
  RunOptions opts = p.run;
  opts.out_dir = out;
  opts.stride = 40;
  CommandResult res = run_command(p, "density", opts);
  CHECK(res.passed);
  std::string traj = slurp(join_path(out, "density_trajectory.csv"));
  CHECK(traj.substr(0, traj.find('\n')) == "n,t,j,a,k,x,rho");
  std::string mom = slurp(join_path(out, "density_moments.csv"));
  CHECK(mom.substr(0, mom.find('\n')) == "n,t,k,x,s");
  std::string summary = slurp(join_path(out, "summary.json"));
  nlohmann::json j = nlohmann::json::parse(summary);
  CHECK(j["passed"].get<bool>());
  std::filesystem::remove_all(out);
}

TEST_CASE("run_command flow and energy headers") {
  std::string out = temp_dir("flow");
  Problem p = load_problem(base_config());
  RunOptions opts = p.run;
  opts.out_dir = out;
  opts.stride = 40;
  CommandResult res = run_command(p, "flow", opts);
  CHECK(res.passed);
  std::string traj = slurp(join_path(out, "flow_trajectory.csv"));
  CHECK(traj.substr(0, traj.find('\n')) == "n,t,k,x,z_1,z_2,lambda");
  std::string en = slurp(join_path(out, "flow_energy.csv"));
  CHECK(en.substr(0, en.find('\n')) == "n,t,E,D,lambda_l1,Ldotz_l1,dz_l2sq");
  std::filesystem::remove_all(out);
}

TEST_CASE("run_command limit, layer, and sweeps produce passing panels") {
  std::string out = temp_dir("cmds");
  std::string cfg = sweep_config("eps_sweep = 0.1,0.05\nda_sweep = 0.08,0.04\n");
  Problem p = load_problem(cfg);
  RunOptions opts = p.run;
  opts.out_dir = out;
  opts.stride = 20;
  for (const char* cmd : {"limit", "layer", "sweep-da", "kernel", "validate"}) {
    CommandResult res = run_command(p, cmd, opts);
    CHECK_MESSAGE(res.passed, cmd);
  }
  std::string layer = slurp(join_path(out, "layer_series.csv"));
  CHECK(layer.substr(0, layer.find('\n')) == "ttilde,mass");
  std::string kern = slurp(join_path(out, "kernel.csv"));
  CHECK(kern.substr(0, kern.find('\n')) ==
        "epsilon,kernel_integral,limit_integral,err_abs,decrease_factor");
  std::string da = slurp(join_path(out, "sweep_da.csv"));
  CHECK(da.substr(0, da.find('\n')) == "delta_a,delta_t,err_yt,order_yt");
  std::filesystem::remove_all(out);
}

TEST_CASE("identical configs give byte-identical outputs") {
  std::string out1 = temp_dir("repro1");
  std::string out2 = temp_dir("repro2");
  Problem p = load_problem(base_config());
  RunOptions opts = p.run;
  opts.stride = 20;
  opts.out_dir = out1;
  run_command(p, "flow", opts);
  Problem q = load_problem(base_config());
  opts.out_dir = out2;
  run_command(q, "flow", opts);
  CHECK(slurp(join_path(out1, "flow_trajectory.csv")) ==
        slurp(join_path(out2, "flow_trajectory.csv")));
  CHECK(slurp(join_path(out1, "flow_energy.csv")) == slurp(join_path(out2, "flow_energy.csv")));
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
}
