#pragma once

#include <functional>
#include <vector>

#include "grids.hpp"
#include "model.hpp"

namespace bondflow {

// One time slab of the discrete bond density rho^n_j(x_k) and its zeroth
// moment s^n. When the problem data does not depend on x the columns are
// identical and a single representative column is stored (nx_eff = 1).
struct DensityState {
  long n = -1;
  int nx_eff = 1;
  long jmax = 0;
  std::vector<double> rho;  // (jmax+1) * nx_eff, row-major in j
  std::vector<double> s;    // nx_eff

  double rho_at(long j, int k) const {
    return rho[static_cast<size_t>(j) * nx_eff + (nx_eff == 1 ? 0 : k)];
  }
  double s_at(int k) const { return s[nx_eff == 1 ? 0 : static_cast<size_t>(k)]; }
};

enum class DensityInit { CellAverage, DiscreteSteady };

struct StepDiagnostics {
  double min_rho = 0;
  double min_s = 0, max_s = 0;
  double moment_residual = 0;  // max_k of the zeroth-moment recursion defect
  double discarded_top = 0;    // max_k rho^n_jmax leaving the grid
};

// Upwind-in-age transport with implicit off-rate and the saturating
// nonlocal boundary, advanced one slab at a time under delta_t =
// epsilon*delta_a. Off-rate factors are cached when zeta does not depend
// on t.
class DensityStepper {
 public:
  DensityStepper(const ModelProblem& p, const Grids& g);

  DensityState make_initial(DensityInit mode) const;
  StepDiagnostics advance(DensityState& state) const;

  int nx_eff() const { return nx_eff_; }
  // zeta^n_j * rho^n_j laid out like state.rho, with the same off-rate
  // values the scheme used at time t (the dissipation weight).
  void fill_zeta_rho(const DensityState& state, double t, std::vector<double>& out) const;

 private:
  const ModelProblem* p_;
  const Grids* g_;
  int nx_eff_;
  bool zeta_static_;
  std::vector<double> inv_decay_;  // 1/(1 + da*zeta_j(x_k)) when static

  double inv_decay(long j, int k, double t) const;
  double node_x(int k) const { return g_->x[static_cast<size_t>(nx_eff_ == 1 ? 0 : k)]; }
};

// Max-over-x residual of the inductive moment identity between two
// consecutive slabs; a structural self-check of the scheme.
double zeroth_moment_residual(const DensityState& prev, const DensityState& next,
                              const ModelProblem& p, const Grids& g);

// Characteristics solution for constant rates with rho_I(a) =
// c*exp(-zeta*a) truncated at a_trunc.
double analytic_constant_rate_density(double beta, double zeta, double c, double eps, double a,
                                      double t, double a_trunc);

struct DensityRunResult {
  double min_rho = 1e300;
  double min_s = 1e300, max_s = -1e300;
  double max_moment_residual = 0;
  double discarded_mass = 0;  // sum_n dt*da*max_k rho^n_jmax
  long steps = 0;
};

// Advances to n = N, aborting on invariant violations (negative density
// beyond -1e-14, moment outside [-1e-14, 1+1e-14]) with the offending
// step. The callback sees every slab including n = -1.
DensityRunResult run_density(const ModelProblem& p, const Grids& g, DensityInit mode,
                             const std::function<void(const DensityState&)>& on_slab);

}  // namespace bondflow
