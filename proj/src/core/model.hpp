#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "expr.hpp"

namespace bondflow {

struct Bounds {
  double beta_min = 0, beta_max = 0;
  double zeta_min = 0, zeta_max = 0;
  double M = 0;
  double mu_I_min = 0;
  double mu0_min = 0;
};

// Continuous problem data. Immutable after load; shared freely by workers.
struct ModelProblem {
  RateExpr beta;    // (x,t)
  RateExpr zeta;    // (x,a,t)
  RateExpr beta0;   // limit on-rate (x,t)
  RateExpr zeta0;   // limit off-rate (x,a,t)
  RateExpr rho_I;   // (x,a), supported in [0, a_max]
  std::vector<RateExpr> z_p;  // d components, (x,t), t <= 0
  int d = 2;
  double epsilon = 0;
  double T = 0;
  Bounds bounds;

  bool rates_x_uniform() const;     // density decouples from x
  bool rates_constant() const;      // beta, zeta are numeric constants
};

struct NumericsParams {
  double delta_a = 0;
  int nx = 0;               // nodes on [0,1]; delta_x = 1/(nx-1)
  double a_max = 0;         // age truncation; derived from tol_age when absent
  double tol_age = 1e-12;
  double tol_grad = 1e-10;
  long max_inner = 10000;
  double limit_dt_safety = 0.4;
  double armijo_c = 1e-4;
  double armijo_backtrack = 0.5;
  bool precond_inner = true;  // inner_solver = newton_pg | pg

  long jmax() const;  // top age cell index; cells j = 0..jmax
};

struct RunOptions {
  std::string out_dir;          // empty => write nothing
  std::string format = "csv";   // csv | json
  int stride = 1;
  int threads = 1;
  std::vector<double> eps_sweep;
  std::vector<double> da_sweep;
  std::string psi = "exp(-a)";  // kernel test function
  double layer_tmax = 6.0;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0;      // measured quantity (worst sample)
  double threshold = 0;
  std::string detail;    // e.g. offending sample location
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool passed = false;
  // Recorded quantities (not pass/fail): Lipschitz samples of the past
  // data, the age-BV sum of rho_I, and its weighted moments.
  double mu_I_min_obs = 0, mu_I_max_obs = 0;
  double czp_l2 = 0, czp_max = 0;
  double rhoI_bv = 0;
  double rhoI_moment[3] = {0, 0, 0};

  std::string to_json() const;
  const CheckResult* first_failure() const;
};

struct Problem {
  ModelProblem model;
  NumericsParams num;
  RunOptions run;
  ValidationReport validation;
};

// Samples the hypotheses on a grid at least 4x finer than (delta_x,
// delta_a), capped at a fixed budget per sampled function for extreme
// grids. A failed check makes downstream solvers refuse to run.
ValidationReport validate_hypotheses(const ModelProblem& p, const NumericsParams& n);

// Parse + validate. Throws ConfigError on missing/duplicate/unknown keys,
// an explicit delta_t key, or any hypothesis failure.
Problem load_problem(const std::string& config_text);
Problem load_problem_file(const std::string& path);

}  // namespace bondflow
