#pragma once

#include <vector>

#include "common.hpp"
#include "model.hpp"

namespace bondflow {

// Uniform node grid on [0,1], age cells [j*da,(j+1)*da) for j=0..jmax,
// time steps locked to the CFL rule delta_t = epsilon*delta_a.
struct Grids {
  int nx = 0;
  double dx = 0;
  std::vector<double> x;    // nodes, x[0]=0, x[nx-1]=1
  std::vector<double> wt;   // trapezoid node weights (dx/2 at the ends)

  double delta_a = 0;
  long jmax = 0;            // top age cell index
  double a_max = 0;

  double epsilon = 0;
  double delta_t = 0;       // epsilon*delta_a, bit-exact everywhere
  double T = 0;
  long n_steps = 0;         // N = floor(T/delta_t)

  static Grids make(const ModelProblem& m, const NumericsParams& n);
  // Same problem, different epsilon (sweeps re-derive delta_t per member).
  static Grids make_with_epsilon(const ModelProblem& m, const NumericsParams& n, double epsilon);

  double age_left(long j) const { return static_cast<double>(j) * delta_a; }
  double age_center(long j) const { return (static_cast<double>(j) + 0.5) * delta_a; }
  double time_at(long n) const { return static_cast<double>(n) * delta_t; }
};

// Node-wise vectors in R^d with the unit-norm constraint maintained by
// explicit normalization.
struct SphereField {
  int nx = 0;
  int d = 0;
  std::vector<double> v;  // node-major: v[k*d + c]

  SphereField() = default;
  SphereField(int nx_, int d_) : nx(nx_), d(d_), v(static_cast<size_t>(nx_) * d_, 0.0) {}

  double* at(int k) { return v.data() + static_cast<size_t>(k) * d; }
  const double* at(int k) const { return v.data() + static_cast<size_t>(k) * d; }

  void normalize_nodes();                 // v_k <- v_k/|v_k|
  double max_norm_deviation() const;      // max_k | |v_k| - 1 |
};

// Edge-based discrete Dirichlet energy, (1/2) sum |z_{k+1}-z_k|^2 / dx.
double dirichlet_energy(const SphereField& z, const Grids& g);

// Second difference with reflected-ghost Neumann rows. out has the field
// layout. For all u,v: sum_k wt_k u_k.(-lap v)_k == sum_edges (Du.Dv)/dx.
void discrete_laplacian(const SphereField& z, const Grids& g, std::vector<double>& out);

// Norms. Deterministic left-to-right summation.
double linf_x(const std::vector<double>& f);
double l1_x(const std::vector<double>& f, const Grids& g);   // trapezoid
double l2_x(const std::vector<double>& f, const Grids& g);
// max over nodes (euclidean per node) of the difference between two fields
double c0_node_error(const SphereField& a, const SphereField& b);

// sum_n dt sum_j da [w_j] max_k |f^n_j(x_k)| for a stored trajectory;
// slabs[n] holds j*nx_eff + k. Weight w_j = 1 or (1+a_j) with a_j the
// cell-center age.
double yt_norm(const std::vector<std::vector<double>>& slabs, int nx_eff, const Grids& g,
               bool weight_one_plus_a);

// Streaming version of the same sum for runs too large to store.
class YtAccumulator {
 public:
  YtAccumulator(const Grids& g, bool weight_one_plus_a)
      : da_(g.delta_a), dt_(g.delta_t), weight_(weight_one_plus_a), g_(&g) {}
  // maxk[j] = max_k |f^n_j(x_k)| for the current slab
  void add_slab(const std::vector<double>& maxk);
  double value() const { return sum_.value(); }

 private:
  double da_, dt_;
  bool weight_;
  const Grids* g_;
  KahanSum sum_;
};

}  // namespace bondflow
