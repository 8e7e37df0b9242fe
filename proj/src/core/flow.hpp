#pragma once

#include <functional>
#include <vector>

#include "density.hpp"
#include "grids.hpp"
#include "model.hpp"

namespace bondflow {

// Ring of past sphere fields z^{n-j}. Entries with n-j < 0 hold the
// time-averaged past data z_p^i (4-point Gauss per step interval); those
// averages may leave the sphere but never exceed unit norm.
class HistoryBuffer {
 public:
  HistoryBuffer(const ModelProblem& p, const Grids& g);

  long size() const { return size_; }  // jmax + 2 entries
  // z^{n-j} for j = 1..size(); the buffer is "relative to n" after the
  // n-th push.
  const SphereField& past(long j) const { return ring_[slot(j)]; }
  const std::vector<double>& past_normsq(long j) const { return normsq_[slot(j)]; }
  void push(const SphereField& z);

 private:
  std::vector<SphereField> ring_;
  std::vector<std::vector<double>> normsq_;
  long size_ = 0;
  long head_ = 0;

  size_t slot(long j) const { return static_cast<size_t>((head_ + j - 1) % size_); }
};

// Quadratic form of the delayed energy at one time step:
//   E_delay(w) = (1/4eps) sum_k wt_k [ c2_k |w_k|^2 - 2 w_k.c1_k + c0_k ].
// Assembled once per step from the history ring and the density row; the
// minimizer, the delay operator and the reported energies all share it.
struct DelayCoeffs {
  int nx = 0, d = 0;
  double eps = 0;
  double delta_a = 0;
  std::vector<double> c2;    // nx
  std::vector<double> c1;    // nx*d
  std::vector<double> c0;    // nx
  std::vector<double> s;     // nx, zeroth moment of the density row
  std::vector<double> rho0;  // nx, age cell 0 of the density row
};

DelayCoeffs build_delay_coeffs(const HistoryBuffer& h, const DensityState& row,
                               const ModelProblem& p, const Grids& g);

// Full energy (Dirichlet + delay) at an arbitrary, possibly off-manifold
// field; the line search evaluates it away from the constraint set. The
// delay part expands the pair squares through the assembled coefficients,
// which leaves ~1e-15 cancellation noise near zero-energy configurations.
double flow_energy(const SphereField& w, const DelayCoeffs& c, const Grids& g);

// Same value in difference form (a weighted sum of squares): free of
// cancellation, exact zero at constant configurations. One full pass over
// the history ring; used for reported energies near zero.
double flow_energy_exact(const SphereField& w, const HistoryBuffer& h, const DensityState& row,
                         const Grids& g);

// Exact gradient of flow_energy (finite-difference verified):
// grad_k = wt_k [ (c2_k w_k - c1_k)/(2 eps) - (lap w)_k ].
void flow_gradient(const SphereField& w, const DelayCoeffs& c, const Grids& g,
                   std::vector<double>& out);

// Discrete elongation V^n_j = (z^n - (z^{n-j}+z^{n-j-1})/2)/eps, with the
// j = 0 entry collapsing to (z^n - z^{n-1})/(2 eps). The ring must be
// relative to the same step as z_n.
void elongation_V(const HistoryBuffer& h, const SphereField& z_n, long j, double eps,
                  std::vector<double>& out);

// L^n = da sum_j rho^n_j V^n_j, literal form (tests) and via coefficients.
void delay_operator_L(const HistoryBuffer& h, const SphereField& z_n, const DensityState& row,
                      const Grids& g, std::vector<double>& out);
void delay_operator_L_fast(const SphereField& z_n, const DelayCoeffs& c, std::vector<double>& out);

// lambda_k = (lap z)_k . z_k - L_k . z_k; nonpositive at the discrete
// level for unit fields with history norms <= 1.
std::vector<double> lagrange_multiplier(const SphereField& z, const std::vector<double>& L,
                                        const Grids& g);

// D = (da/2) sum_k wt_k sum_{j=0}^{jmax-1} |V_j|^2 zr_{j+1} where zr holds
// zeta^{n+1}_j rho^{n+1}_j in density-row layout.
double dissipation(const HistoryBuffer& h, const SphereField& z_n, const std::vector<double>& zr,
                   int nx_eff, const Grids& g);

struct InnerStats {
  long iters = 0;
  double grad_max = 0;  // max_k |P_w grad| at exit
  double energy = 0;    // E at the returned point
};

// Riemannian descent over the product of unit spheres: tangential descent
// direction (tridiagonal-preconditioned by default), Armijo backtracking
// on the energy, normalization retraction. Stops at
// max_k |P_w grad| <= tol_grad; exceeding max_inner throws.
InnerStats minimize_step(const DelayCoeffs& c, const Grids& g, const NumericsParams& num,
                         SphereField& w);

struct FlowStepRecord {
  long n = 0;
  double t = 0;
  double energy = 0;
  double dissipation_prev = 0;  // D_{n-1}; 0 at n = 0
  double lambda_l1 = 0;
  double lambda_max = 0;
  double ldotz_l1 = 0;   // int |L.z| dx
  double ldotz_min = 0;  // min_k L.z
  double dz_l2sq = 0;    // ||(z^n-z^{n-1})/dt||_{L2}^2; 0 at n = 0
  double unit_dev = 0;
  long inner_iters = 0;
};

struct FlowRunResult {
  double E0 = 0, EN = 0;
  double tol_energy = 0;            // 10 tol_grad (1+E_0)
  double max_energy_violation = 0;  // max_n E_n + dt D_{n-1} - E_{n-1}
  double max_unit_dev = 0;
  double max_lambda = -1e300;
  double min_ldotz = 1e300;
  double sup_lambda_l1 = 0;
  double ldotz_l1_xt = 0;   // dt sum_n int |L.z|
  double h1_time_sum = 0;   // sum_{n>=1} dt ||dz/dt||^2
  long total_inner = 0;
  DensityRunResult density;
};

// Full minimizing-movement loop in lockstep with the density scheme.
// The callback sees every step's record, the converged field and the
// nodewise multiplier; on_slab (when set) sees the density slab for the
// same n before the minimization.
using FlowStepCallback =
    std::function<void(const FlowStepRecord&, const SphereField&, const std::vector<double>&)>;
FlowRunResult run_flow(const ModelProblem& p, const NumericsParams& num, const Grids& g,
                       DensityInit mode, const FlowStepCallback& on_step,
                       const std::function<void(const DensityState&)>& on_slab = nullptr);

}  // namespace bondflow
