#include "flow.hpp"

#include <cmath>

namespace bondflow {

HistoryBuffer::HistoryBuffer(const ModelProblem& p, const Grids& g) {
  size_ = g.jmax + 2;
  ring_.assign(static_cast<size_t>(size_), SphereField(g.nx, p.d));
  normsq_.assign(static_cast<size_t>(size_), std::vector<double>(static_cast<size_t>(g.nx), 0.0));
  head_ = 0;
  // past(j) = z_p^{-j}, the average of z_p over [-j dt, (-j+1) dt].
  for (long j = 1; j <= size_; ++j) {
    SphereField& f = ring_[slot(j)];
    std::vector<double>& nsq = normsq_[slot(j)];
    double t_left = -static_cast<double>(j) * g.delta_t;
    for (int k = 0; k < g.nx; ++k) {
      double* w = f.at(k);
      for (int c = 0; c < p.d; ++c) {
        double avg = 0;
        for (int q = 0; q < 4; ++q)
          avg += Gauss4::weight[q] *
                 p.z_p[static_cast<size_t>(c)].eval(g.x[static_cast<size_t>(k)], 0.0,
                                                    t_left + Gauss4::node[q] * g.delta_t);
        w[c] = avg;
      }
      double s = 0;
      for (int c = 0; c < p.d; ++c) s += w[c] * w[c];
      nsq[static_cast<size_t>(k)] = s;
      if (s > 1.0 + 2e-12)
        throw InvariantError(
            strfmt("past average |z_p^{-%ld}(x_%d)| = %.17g exceeds 1", j, k, std::sqrt(s)));
    }
  }
}

void HistoryBuffer::push(const SphereField& z) {
  head_ = (head_ - 1 + size_) % size_;
  ring_[static_cast<size_t>(head_)] = z;
  std::vector<double>& nsq = normsq_[static_cast<size_t>(head_)];
  for (int k = 0; k < z.nx; ++k) {
    const double* w = z.at(k);
    double s = 0;
    for (int c = 0; c < z.d; ++c) s += w[c] * w[c];
    nsq[static_cast<size_t>(k)] = s;
  }
}

DelayCoeffs build_delay_coeffs(const HistoryBuffer& h, const DensityState& row,
                               const ModelProblem& p, const Grids& g) {
  DelayCoeffs c;
  c.nx = g.nx;
  c.d = p.d;
  c.eps = g.epsilon;
  c.delta_a = g.delta_a;
  const long jmax = row.jmax;
  c.c2.assign(static_cast<size_t>(c.nx), 0.0);
  c.c1.assign(static_cast<size_t>(c.nx) * c.d, 0.0);
  c.c0.assign(static_cast<size_t>(c.nx), 0.0);
  c.s.resize(static_cast<size_t>(c.nx));
  c.rho0.resize(static_cast<size_t>(c.nx));
  for (int k = 0; k < c.nx; ++k) {
    c.s[static_cast<size_t>(k)] = row.s_at(k);
    c.rho0[static_cast<size_t>(k)] = row.rho_at(0, k);
    c.c2[static_cast<size_t>(k)] =
        g.delta_a * (2.0 * row.s_at(k) / g.delta_a - row.rho_at(0, k));  // da(rho_0+2 sum_{j>=1})
  }
  // z^{n-i} enters the pair sums with weight rho_{i-1} + rho_i (rho
  // beyond jmax truncated in lockstep with the density).
  if (row.nx_eff == 1) {
    for (long i = 1; i <= jmax + 1; ++i) {
      double coeff = row.rho_at(i - 1, 0) + (i <= jmax ? row.rho_at(i, 0) : 0.0);
      if (coeff == 0.0) continue;
      coeff *= g.delta_a;
      const SphereField& zi = h.past(i);
      const std::vector<double>& nsq = h.past_normsq(i);
      for (int k = 0; k < c.nx; ++k) {
        const double* w = zi.at(k);
        double* c1k = c.c1.data() + static_cast<size_t>(k) * c.d;
        for (int cc = 0; cc < c.d; ++cc) c1k[cc] += coeff * w[cc];
        c.c0[static_cast<size_t>(k)] += coeff * nsq[static_cast<size_t>(k)];
      }
    }
  } else {
    for (long i = 1; i <= jmax + 1; ++i) {
      const SphereField& zi = h.past(i);
      const std::vector<double>& nsq = h.past_normsq(i);
      for (int k = 0; k < c.nx; ++k) {
        double coeff = row.rho_at(i - 1, k) + (i <= jmax ? row.rho_at(i, k) : 0.0);
        coeff *= g.delta_a;
        const double* w = zi.at(k);
        double* c1k = c.c1.data() + static_cast<size_t>(k) * c.d;
        for (int cc = 0; cc < c.d; ++cc) c1k[cc] += coeff * w[cc];
        c.c0[static_cast<size_t>(k)] += coeff * nsq[static_cast<size_t>(k)];
      }
    }
  }
  return c;
}

double flow_energy(const SphereField& w, const DelayCoeffs& c, const Grids& g) {
  KahanSum delay;
  for (int k = 0; k < c.nx; ++k) {
    const double* wk = w.at(k);
    const double* c1k = c.c1.data() + static_cast<size_t>(k) * c.d;
    double wsq = 0, wc1 = 0;
    for (int cc = 0; cc < c.d; ++cc) {
      wsq += wk[cc] * wk[cc];
      wc1 += wk[cc] * c1k[cc];
    }
    delay.add(g.wt[static_cast<size_t>(k)] *
              (c.c2[static_cast<size_t>(k)] * wsq - 2.0 * wc1 + c.c0[static_cast<size_t>(k)]));
  }
  return dirichlet_energy(w, g) + delay.value() / (4.0 * c.eps);
}

double flow_energy_exact(const SphereField& w, const HistoryBuffer& h, const DensityState& row,
                         const Grids& g) {
  const int nx = w.nx, d = w.d;
  std::vector<KahanSum> col(static_cast<size_t>(nx));
  for (long i = 1; i <= row.jmax + 1; ++i) {
    const SphereField& zi = h.past(i);
    if (row.nx_eff == 1) {
      double coeff = row.rho_at(i - 1, 0) + (i <= row.jmax ? row.rho_at(i, 0) : 0.0);
      if (coeff == 0.0) continue;
      for (int k = 0; k < nx; ++k) {
        const double* a = w.at(k);
        const double* b = zi.at(k);
        double s = 0;
        for (int cc = 0; cc < d; ++cc) {
          double dv = a[cc] - b[cc];
          s += dv * dv;
        }
        col[static_cast<size_t>(k)].add(coeff * s);
      }
    } else {
      for (int k = 0; k < nx; ++k) {
        double coeff = row.rho_at(i - 1, k) + (i <= row.jmax ? row.rho_at(i, k) : 0.0);
        const double* a = w.at(k);
        const double* b = zi.at(k);
        double s = 0;
        for (int cc = 0; cc < d; ++cc) {
          double dv = a[cc] - b[cc];
          s += dv * dv;
        }
        col[static_cast<size_t>(k)].add(coeff * s);
      }
    }
  }
  KahanSum delay;
  for (int k = 0; k < nx; ++k)
    delay.add(g.wt[static_cast<size_t>(k)] * col[static_cast<size_t>(k)].value());
  return dirichlet_energy(w, g) + g.delta_a * delay.value() / (4.0 * g.epsilon);
}

void flow_gradient(const SphereField& w, const DelayCoeffs& c, const Grids& g,
                   std::vector<double>& out) {
  discrete_laplacian(w, g, out);
  const double half_inv_eps = 0.5 / c.eps;
  for (int k = 0; k < c.nx; ++k) {
    const double* wk = w.at(k);
    const double* c1k = c.c1.data() + static_cast<size_t>(k) * c.d;
    double* o = out.data() + static_cast<size_t>(k) * c.d;
    double wt = g.wt[static_cast<size_t>(k)];
    for (int cc = 0; cc < c.d; ++cc)
      o[cc] = wt * ((c.c2[static_cast<size_t>(k)] * wk[cc] - c1k[cc]) * half_inv_eps - o[cc]);
  }
}

void elongation_V(const HistoryBuffer& h, const SphereField& z_n, long j, double eps,
                  std::vector<double>& out) {
  const int nx = z_n.nx, d = z_n.d;
  out.resize(static_cast<size_t>(nx) * d);
  const SphereField& zj = (j == 0) ? z_n : h.past(j);
  const SphereField& zj1 = h.past(j + 1);
  for (int k = 0; k < nx; ++k) {
    const double* a = z_n.at(k);
    const double* b = zj.at(k);
    const double* c = zj1.at(k);
    double* o = out.data() + static_cast<size_t>(k) * d;
    for (int cc = 0; cc < d; ++cc) o[cc] = (a[cc] - 0.5 * (b[cc] + c[cc])) / eps;
  }
}

void delay_operator_L(const HistoryBuffer& h, const SphereField& z_n, const DensityState& row,
                      const Grids& g, std::vector<double>& out) {
  const int nx = z_n.nx, d = z_n.d;
  out.assign(static_cast<size_t>(nx) * d, 0.0);
  std::vector<double> v;
  for (long j = 0; j <= row.jmax; ++j) {
    elongation_V(h, z_n, j, g.epsilon, v);
    for (int k = 0; k < nx; ++k) {
      double r = g.delta_a * row.rho_at(j, k);
      double* o = out.data() + static_cast<size_t>(k) * d;
      const double* vk = v.data() + static_cast<size_t>(k) * d;
      for (int cc = 0; cc < d; ++cc) o[cc] += r * vk[cc];
    }
  }
}

void delay_operator_L_fast(const SphereField& z_n, const DelayCoeffs& c,
                           std::vector<double>& out) {
  out.resize(static_cast<size_t>(c.nx) * c.d);
  for (int k = 0; k < c.nx; ++k) {
    // da sum_j rho_j V_j = ( (s - da rho_0/2) z^n - c1/2 ) / eps
    double lead = c.s[static_cast<size_t>(k)] - 0.5 * c.delta_a * c.rho0[static_cast<size_t>(k)];
    const double* zk = z_n.at(k);
    const double* c1k = c.c1.data() + static_cast<size_t>(k) * c.d;
    double* o = out.data() + static_cast<size_t>(k) * c.d;
    for (int cc = 0; cc < c.d; ++cc) o[cc] = (lead * zk[cc] - 0.5 * c1k[cc]) / c.eps;
  }
}

std::vector<double> lagrange_multiplier(const SphereField& z, const std::vector<double>& L,
                                        const Grids& g) {
  std::vector<double> lap;
  discrete_laplacian(z, g, lap);
  std::vector<double> lambda(static_cast<size_t>(z.nx), 0.0);
  for (int k = 0; k < z.nx; ++k) {
    const double* zk = z.at(k);
    const double* lk = lap.data() + static_cast<size_t>(k) * z.d;
    const double* Lk = L.data() + static_cast<size_t>(k) * z.d;
    double lap_dot = 0, L_dot = 0;
    for (int cc = 0; cc < z.d; ++cc) {
      lap_dot += lk[cc] * zk[cc];
      L_dot += Lk[cc] * zk[cc];
    }
    lambda[static_cast<size_t>(k)] = lap_dot - L_dot;
  }
  return lambda;
}

double dissipation(const HistoryBuffer& h, const SphereField& z_n, const std::vector<double>& zr,
                   int nx_eff, const Grids& g) {
  const int nx = z_n.nx, d = z_n.d;
  KahanSum total;
  std::vector<KahanSum> col(static_cast<size_t>(nx));
  for (long j = 0; j + 1 <= g.jmax; ++j) {
    const SphereField& zj = (j == 0) ? z_n : h.past(j);
    const SphereField& zj1 = h.past(j + 1);
    const double* zrow = zr.data() + static_cast<size_t>(j + 1) * nx_eff;
    for (int k = 0; k < nx; ++k) {
      const double* a = z_n.at(k);
      const double* b = zj.at(k);
      const double* c = zj1.at(k);
      double s = 0;
      for (int cc = 0; cc < d; ++cc) {
        double v = (a[cc] - 0.5 * (b[cc] + c[cc])) / g.epsilon;
        s += v * v;
      }
      col[static_cast<size_t>(k)].add(s * zrow[nx_eff == 1 ? 0 : k]);
    }
  }
  for (int k = 0; k < nx; ++k) total.add(g.wt[static_cast<size_t>(k)] * col[static_cast<size_t>(k)].value());
  return 0.5 * g.delta_a * total.value();
}

namespace {

// Tridiagonal LDL-style factorization of the ambient quadratic Hessian,
// shared by every component and every inner iteration of one time step.
struct TriFactor {
  std::vector<double> diag, off;  // factored in place
  void build(const DelayCoeffs& c, const Grids& g) {
    const int nx = c.nx;
    diag.resize(static_cast<size_t>(nx));
    off.resize(static_cast<size_t>(nx > 0 ? nx - 1 : 0));
    double ridge = 0.0;
    double min_c2 = 1e300;
    for (int k = 0; k < nx; ++k) min_c2 = std::min(min_c2, c.c2[static_cast<size_t>(k)]);
    if (min_c2 <= 0) ridge = 1e-12;  // degenerate density rows (tests only)
    for (int k = 0; k < nx; ++k) {
      double deg = (k == 0 || k == nx - 1) ? 1.0 : 2.0;
      diag[static_cast<size_t>(k)] =
          g.wt[static_cast<size_t>(k)] * c.c2[static_cast<size_t>(k)] / (2.0 * c.eps) +
          deg / g.dx + ridge;
    }
    for (int k = 0; k + 1 < nx; ++k) off[static_cast<size_t>(k)] = -1.0 / g.dx;
    // Thomas forward elimination, stored for reuse.
    for (int k = 1; k < nx; ++k) {
      double m = off[static_cast<size_t>(k - 1)] / diag[static_cast<size_t>(k - 1)];
      diag[static_cast<size_t>(k)] -= m * off[static_cast<size_t>(k - 1)];
      mult.push_back(m);
    }
  }
  std::vector<double> mult;

  // Solve H y = r for each of the d interleaved components of r.
  void solve(std::vector<double>& r, int nx, int d) const {
    for (int c = 0; c < d; ++c) {
      for (int k = 1; k < nx; ++k)
        r[static_cast<size_t>(k) * d + c] -=
            mult[static_cast<size_t>(k - 1)] * r[static_cast<size_t>(k - 1) * d + c];
      r[static_cast<size_t>(nx - 1) * d + c] /= diag[static_cast<size_t>(nx - 1)];
      for (int k = nx - 2; k >= 0; --k)
        r[static_cast<size_t>(k) * d + c] =
            (r[static_cast<size_t>(k) * d + c] -
             off[static_cast<size_t>(k)] * r[static_cast<size_t>(k + 1) * d + c]) /
            diag[static_cast<size_t>(k)];
    }
  }
};

void project_tangent(const SphereField& w, std::vector<double>& v) {
  for (int k = 0; k < w.nx; ++k) {
    const double* wk = w.at(k);
    double* vk = v.data() + static_cast<size_t>(k) * w.d;
    double dot = 0;
    for (int c = 0; c < w.d; ++c) dot += vk[c] * wk[c];
    for (int c = 0; c < w.d; ++c) vk[c] -= dot * wk[c];
  }
}

double tangent_max_norm(const std::vector<double>& v, int nx, int d) {
  double worst = 0;
  for (int k = 0; k < nx; ++k) {
    double s = 0;
    for (int c = 0; c < d; ++c) {
      double u = v[static_cast<size_t>(k) * d + c];
      s += u * u;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

}  // namespace

InnerStats minimize_step(const DelayCoeffs& c, const Grids& g, const NumericsParams& num,
                         SphereField& w) {
  InnerStats stats;
  const int nx = c.nx, d = c.d;

  TriFactor H;
  if (num.precond_inner) H.build(c, g);
  double lip = 0;
  for (int k = 0; k < nx; ++k)
    lip = std::max(lip, g.wt[static_cast<size_t>(k)] * c.c2[static_cast<size_t>(k)]);
  lip = lip / (2.0 * c.eps) + 4.0 / g.dx;

  std::vector<double> grad, dir;
  SphereField trial(nx, d);
  double energy = flow_energy(w, c, g);

  // Both step families (unit Newton on the SPD model, 1/L projected
  // gradient) decrease the quadratic energy in exact arithmetic, so trial
  // comparisons only need to hold up to the evaluation noise of the
  // expanded form. The noise floor scales with the w-independent part.
  double const_scale = 0;
  for (int k = 0; k < nx; ++k)
    const_scale += g.wt[static_cast<size_t>(k)] * std::abs(c.c0[static_cast<size_t>(k)]);
  const double noise = 64.0 * 2.220446049250313e-16 *
                       (1.0 + std::abs(energy) + const_scale / (4.0 * c.eps));

  for (long it = 0; it <= num.max_inner; ++it) {
    flow_gradient(w, c, g, grad);
    std::vector<double> resid = grad;
    project_tangent(w, resid);
    double gmax = tangent_max_norm(resid, nx, d);
    if (gmax <= num.tol_grad) {
      stats.iters = it;
      stats.grad_max = gmax;
      stats.energy = energy;
      return stats;
    }
    if (it == num.max_inner) break;

    double alpha0;
    if (num.precond_inner) {
      dir = resid;
      H.solve(dir, nx, d);
      project_tangent(w, dir);
      alpha0 = 1.0;
    } else {
      dir = resid;
      alpha0 = 1.0 / lip;
    }
    for (double& v : dir) v = -v;
    double slope = 0;
    for (size_t i = 0; i < dir.size(); ++i) slope += grad[i] * dir[i];
    if (!(slope < 0)) {  // degenerate direction; steepest descent fallback
      dir = resid;
      slope = 0;
      for (double& v : dir) v = -v;
      for (size_t i = 0; i < dir.size(); ++i) slope += grad[i] * dir[i];
      alpha0 = 1.0 / lip;
      if (!(slope < 0)) break;  // gradient numerically zero
    }

    double alpha = alpha0;
    bool accepted = false;
    for (int bt = 0; bt < 200; ++bt) {
      for (size_t i = 0; i < trial.v.size(); ++i) trial.v[i] = w.v[i] + alpha * dir[i];
      trial.normalize_nodes();
      double e_trial = flow_energy(trial, c, g);
      if (std::isnan(e_trial)) throw NumericError("NaN in energy during line search");
      if (e_trial <= energy + num.armijo_c * alpha * slope + noise) {
        w.v.swap(trial.v);
        energy = e_trial;
        accepted = true;
        break;
      }
      alpha *= num.armijo_backtrack;
    }
    if (!accepted)
      throw NumericError(strfmt("line search stalled at inner iteration %ld (|grad|=%.3e)", it,
                                gmax));
  }
  throw NumericError(strfmt("inner minimizer did not reach tol_grad=%.3e within max_inner=%ld",
                            num.tol_grad, num.max_inner));
}

FlowRunResult run_flow(const ModelProblem& p, const NumericsParams& num, const Grids& g,
                       DensityInit mode, const FlowStepCallback& on_step,
                       const std::function<void(const DensityState&)>& on_slab) {
  FlowRunResult res;
  DensityStepper stepper(p, g);
  DensityState state = stepper.make_initial(mode);
  {
    // same initial-slab invariants as run_density
    double mn = 1e300, mns = 1e300, mxs = -1e300;
    for (double v : state.rho) mn = std::min(mn, v);
    for (double v : state.s) {
      mns = std::min(mns, v);
      mxs = std::max(mxs, v);
    }
    if (mn < -1e-14) throw InvariantError(strfmt("negative initial density %.3e", mn));
    if (mns < -1e-14 || mxs > 1.0 + 1e-14)
      throw InvariantError("initial moment out of [0,1]");
    res.density.min_rho = mn;
    res.density.min_s = mns;
    res.density.max_s = mxs;
  }

  HistoryBuffer ring(p, g);
  SphereField z_prev = ring.past(1);
  z_prev.normalize_nodes();  // warm start must sit on the manifold

  double E_prev = 0;
  double D_prev = 0;
  std::vector<double> zr_row, L;
  SphereField z = z_prev;

  for (long n = 0; n <= g.n_steps; ++n) {
    StepDiagnostics d = stepper.advance(state);
    res.density.min_rho = std::min(res.density.min_rho, d.min_rho);
    res.density.min_s = std::min(res.density.min_s, d.min_s);
    res.density.max_s = std::max(res.density.max_s, d.max_s);
    res.density.max_moment_residual = std::max(res.density.max_moment_residual, d.moment_residual);
    res.density.discarded_mass += g.delta_t * g.delta_a * d.discarded_top;
    res.density.steps += 1;
    if (d.min_rho < -1e-14)
      throw InvariantError(strfmt("negative density %.3e at n=%ld", d.min_rho, state.n));
    if (d.min_s < -1e-14 || d.max_s > 1.0 + 1e-14)
      throw InvariantError(strfmt("moment out of [0,1] at n=%ld", state.n));
    if (on_slab) on_slab(state);

    if (n >= 1) {
      stepper.fill_zeta_rho(state, g.time_at(n), zr_row);
      D_prev = dissipation(ring, z_prev, zr_row, state.nx_eff, g);
      ring.push(z_prev);
    }

    DelayCoeffs coeffs = build_delay_coeffs(ring, state, p, g);
    z = z_prev;
    InnerStats stats;
    try {
      stats = minimize_step(coeffs, g, num, z);
    } catch (const NumericError& e) {
      throw NumericError(strfmt("step n=%ld: %s", n, e.what()));
    }
    // Near zero the expanded energy is dominated by cancellation noise;
    // reported values switch to the difference form there.
    if (std::abs(stats.energy) < 1e-12) stats.energy = flow_energy_exact(z, ring, state, g);

    FlowStepRecord rec;
    rec.n = n;
    rec.t = g.time_at(n);
    rec.energy = stats.energy;
    rec.inner_iters = stats.iters;
    rec.unit_dev = z.max_norm_deviation();
    rec.dissipation_prev = (n >= 1) ? D_prev : 0.0;

    if (n == 0) {
      res.E0 = stats.energy;
      res.tol_energy = 10.0 * num.tol_grad * (1.0 + res.E0);
    } else {
      double violation = stats.energy + g.delta_t * D_prev - E_prev;
      res.max_energy_violation = std::max(res.max_energy_violation, violation);
      if (violation > res.tol_energy)
        throw InvariantError(strfmt(
            "energy chain violated at n=%ld: E_n + dt D_{n-1} - E_{n-1} = %.3e > tol %.3e", n,
            violation, res.tol_energy));
      // time-derivative diagnostics
      KahanSum dsq;
      for (int k = 0; k < g.nx; ++k) {
        const double* a = z.at(k);
        const double* b = z_prev.at(k);
        double s = 0;
        for (int cc = 0; cc < p.d; ++cc) {
          double v = (a[cc] - b[cc]) / g.delta_t;
          s += v * v;
        }
        dsq.add(g.wt[static_cast<size_t>(k)] * s);
      }
      rec.dz_l2sq = dsq.value();
      res.h1_time_sum += g.delta_t * rec.dz_l2sq;
    }

    delay_operator_L_fast(z, coeffs, L);
    std::vector<double> lambda = lagrange_multiplier(z, L, g);
    KahanSum lam_l1, ldz_l1;
    double lam_max = -1e300, ldz_min = 1e300;
    for (int k = 0; k < g.nx; ++k) {
      lam_l1.add(g.wt[static_cast<size_t>(k)] * std::abs(lambda[static_cast<size_t>(k)]));
      lam_max = std::max(lam_max, lambda[static_cast<size_t>(k)]);
      const double* zk = z.at(k);
      const double* Lk = L.data() + static_cast<size_t>(k) * p.d;
      double dot = 0;
      for (int cc = 0; cc < p.d; ++cc) dot += zk[cc] * Lk[cc];
      ldz_min = std::min(ldz_min, dot);
      ldz_l1.add(g.wt[static_cast<size_t>(k)] * std::abs(dot));
    }
    rec.lambda_l1 = lam_l1.value();
    rec.lambda_max = lam_max;
    rec.ldotz_l1 = ldz_l1.value();
    rec.ldotz_min = ldz_min;

    res.max_unit_dev = std::max(res.max_unit_dev, rec.unit_dev);
    res.max_lambda = std::max(res.max_lambda, lam_max);
    res.min_ldotz = std::min(res.min_ldotz, ldz_min);
    res.sup_lambda_l1 = std::max(res.sup_lambda_l1, rec.lambda_l1);
    res.ldotz_l1_xt += g.delta_t * rec.ldotz_l1;
    res.total_inner += stats.iters;
    res.EN = stats.energy;
    E_prev = stats.energy;

    if (on_step) on_step(rec, z, lambda);
    z_prev = z;
  }
  return res;
}

}  // namespace bondflow
