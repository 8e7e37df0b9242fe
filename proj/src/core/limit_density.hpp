#pragma once

#include <vector>

#include "density.hpp"
#include "grids.hpp"
#include "model.hpp"

namespace bondflow {

// The eps=0 age profile: survival S(a) = exp(-int_0^a zeta0), the moment
// fixed point mu00 = beta0*I/(1+beta0*I) with I = int S da, and rho_0 =
// beta0*(1-mu00)*S. Quadrature is trapezoid on the run age grid,
// truncated at A_max; survival factors are hoisted when zeta0 does not
// depend on t.
class LimitDensity {
 public:
  LimitDensity(const ModelProblem& p, const Grids& g);

  struct Slice {
    double t = 0;
    int nx = 0;
    long jmax = 0;
    std::vector<double> rho;   // node values rho_0(x_k, j*da, t), row-major in j
    std::vector<double> mu00;  // per x
    std::vector<double> mu10;  // per x
  };
  Slice at_time(double t) const;

  void moments_at(double t, std::vector<double>& mu00, std::vector<double>& mu10) const;

  // rho_0(x_k, a, t) at arbitrary ages (for cell-centered comparisons).
  void rho0_column(int k, double t, const std::vector<double>& ages,
                   std::vector<double>& out) const;

  // Factored pieces: rho_0 = boundary_value(k,t) * survival(a).
  double boundary_value(int k, double t) const;
  void survival_at(int k, double t, const std::vector<double>& ages,
                   std::vector<double>& out) const;
  bool zeta_static() const { return zeta_static_; }

  // Fixed-point defect |mu - beta0 (1-mu) I| at one node, for self-checks.
  double fixed_point_residual(int k, double t) const;

 private:
  const ModelProblem* p_;
  const Grids* g_;
  bool zeta_static_;
  // static case: survival at age nodes and its quadratures, per x
  std::vector<double> surv_;  // (jmax+1) x nx
  std::vector<double> I_, K_;

  void column_survival(int k, double t, std::vector<double>& surv) const;
  static void quadratures(const std::vector<double>& surv, const Grids& g, double& I, double& K);
};

// Fast-time corrector reconciling rho_I with rho_0(.,.,0); rates frozen
// at t = 0, unit transport speed (dt~ = da).
class InitialLayer {
 public:
  InitialLayer(const ModelProblem& p, const Grids& g);

  long m() const { return m_; }
  double ttilde() const { return static_cast<double>(m_) * g_->delta_a; }
  double mass() const;  // da * sum_j max_k |cell|
  double initial_mass() const { return mass0_; }
  bool well_prepared() const { return well_prepared_; }
  const std::vector<double>& cells() const { return cells_; }
  std::vector<double>& mutable_cells() { return cells_; }
  int nx_eff() const { return nx_eff_; }

  void step();

 private:
  const ModelProblem* p_;
  const Grids* g_;
  int nx_eff_ = 1;
  long m_ = 0;
  std::vector<double> cells_;      // (jmax+1) * nx_eff
  std::vector<double> inv_decay_;  // frozen off-rate factors
  std::vector<double> beta0_;      // beta0(x,0) per column
  double mass0_ = 0;
  bool well_prepared_ = false;
};

struct LayerSeries {
  std::vector<double> ttilde;
  std::vector<double> mass;
  double mass0 = 0;
  bool well_prepared = false;
  // least-squares slope of log(mass) on ttilde in [1,5]; NaN when the
  // mass underflowed or the layer is identically zero
  double fitted_slope = 0;
  bool underflow = false;
};

LayerSeries layer_decay_series(const ModelProblem& p, const Grids& g, double tmax);

}  // namespace bondflow
