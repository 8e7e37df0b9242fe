#pragma once

#include <string>
#include <vector>

#include "density.hpp"
#include "flow.hpp"
#include "harmonic.hpp"
#include "limit_density.hpp"
#include "model.hpp"
#include "table.hpp"

namespace bondflow {

// Outcome of one CLI-level command: the pass/fail panel, an optional
// result table, and the files written.
struct CommandResult {
  std::string command;
  bool passed = true;
  std::vector<CheckResult> checks;
  Table table;
  std::vector<std::string> outputs;

  void add_check(const std::string& name, bool pass, double value, double threshold,
                 const std::string& detail);
  std::string summary_json() const;
};

struct EpsSweepRow {
  double epsilon = 0;
  double err_z_c0 = 0;         // max over shared times and nodes
  double err_rho_weighted = 0; // ||(1+a)(rho_eps - rho_0)|| in the Y_T norm
  double lambda_l1_sup = 0;
  double ldotz_l1 = 0;
  double h1_time_sum = 0;
  FlowRunResult flow;
};

// Shared-age-grid epsilon sweep with the limit problem solved once; each
// member re-derives delta_t = eps*delta_a. eps_list strictly decreasing.
std::vector<EpsSweepRow> epsilon_sweep(const Problem& prob, const std::vector<double>& eps_list,
                                       int threads);
Table epsilon_sweep_table(const std::vector<EpsSweepRow>& rows);

struct DaSweepRow {
  double delta_a = 0;
  double delta_t = 0;
  double err_yt = 0;  // against the constant-rate characteristics solution
  DensityRunResult density;
};

std::vector<DaSweepRow> delta_a_refinement(const Problem& prob,
                                           const std::vector<double>& da_list, DensityInit mode,
                                           int threads);
Table da_sweep_table(const std::vector<DaSweepRow>& rows);

struct KernelRow {
  double epsilon = 0;
  double k_integral = 0;      // sum over the reachable region of psi * (rho(t+eps a)-rho(t))/eps
  double limit_integral = 0;  // sum of a psi dt(rho_0), centered differences
  double err_abs = 0;
};

std::vector<KernelRow> kernel_sweep(const Problem& prob, const std::vector<double>& eps_list,
                                    int threads);
Table kernel_table(const std::vector<KernelRow>& rows);

struct LimitOracleRow {
  int nx = 0;
  double dx = 0;
  double err_c0 = 0;
};

// Projection-scheme refinement against the circle-valued closed form,
// constant friction mu, dt = 0.2*mu*dx^2, errors sampled up to t_final.
std::vector<LimitOracleRow> limit_oracle_refinement(double theta0, double mu,
                                                    const std::vector<int>& nx_list,
                                                    double t_final);

// One of: validate, density, flow, limit, layer, sweep-eps, sweep-da,
// kernel. Writes artifacts under opts.out_dir when set.
CommandResult run_command(const Problem& prob, const std::string& command,
                          const RunOptions& opts);

// Deterministic worker pool: fn(i) for i in [0,count), results stored by
// index by the callers; aggregation order never depends on scheduling.
void run_indexed(int threads, int count, const std::function<void(int)>& fn);

}  // namespace bondflow
