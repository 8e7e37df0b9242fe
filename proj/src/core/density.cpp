#include "density.hpp"

#include <cmath>

namespace bondflow {

DensityStepper::DensityStepper(const ModelProblem& p, const Grids& g) : p_(&p), g_(&g) {
  nx_eff_ = p.rates_x_uniform() ? 1 : g.nx;
  zeta_static_ = !p.zeta.uses(RateExpr::Var::T);
  if (zeta_static_) {
    inv_decay_.resize(static_cast<size_t>(g.jmax + 1) * nx_eff_);
    for (long j = 0; j <= g.jmax; ++j)
      for (int k = 0; k < nx_eff_; ++k)
        inv_decay_[static_cast<size_t>(j) * nx_eff_ + k] =
            1.0 / (1.0 + g.delta_a * p.zeta.eval(node_x(k), g.age_left(j), 0.0));
  }
}

double DensityStepper::inv_decay(long j, int k, double t) const {
  if (zeta_static_) return inv_decay_[static_cast<size_t>(j) * nx_eff_ + k];
  return 1.0 / (1.0 + g_->delta_a * p_->zeta.eval(node_x(k), g_->age_left(j), t));
}

DensityState DensityStepper::make_initial(DensityInit mode) const {
  DensityState st;
  st.n = -1;
  st.jmax = g_->jmax;
  const double da = g_->delta_a;

  if (mode == DensityInit::DiscreteSteady) {
    if (!p_->rates_constant())
      throw ConfigError("discrete_steady initialization requires constant rates");
    st.nx_eff = 1;
    st.rho.resize(static_cast<size_t>(st.jmax + 1));
    double beta = p_->beta.eval(0, 0, 0);
    double zeta = p_->zeta.eval(0, 0, 0);
    double alpha = 1.0 / (1.0 + da * zeta);
    // Fixed point of the truncated scheme: rho_j = rho_0 alpha^j with the
    // saturation closed over the retained cells; s matches beta/(beta+zeta)
    // up to the age-truncation tail.
    double alpha_pow = 1.0;
    for (long j = 0; j < st.jmax + 1; ++j) alpha_pow *= alpha;
    double gfac = 1.0 - alpha_pow;
    double s = beta * gfac / (zeta + beta * gfac);
    double rho0 = alpha * beta * (1.0 - s);
    double v = rho0;
    for (long j = 0; j <= st.jmax; ++j) {
      st.rho[static_cast<size_t>(j)] = v;
      v *= alpha;
    }
  } else {
    st.nx_eff = nx_eff_;
    st.rho.resize(static_cast<size_t>(st.jmax + 1) * st.nx_eff);
    for (long j = 0; j <= st.jmax; ++j) {
      double aj = g_->age_left(j);
      for (int k = 0; k < st.nx_eff; ++k) {
        double avg = 0;
        for (int q = 0; q < 4; ++q)
          avg += Gauss4::weight[q] * p_->rho_I.eval(node_x(k), aj + Gauss4::node[q] * da, 0.0);
        st.rho[static_cast<size_t>(j) * st.nx_eff + k] = avg;
      }
    }
  }

  st.s.resize(static_cast<size_t>(st.nx_eff));
  for (int k = 0; k < st.nx_eff; ++k) {
    KahanSum sum;
    for (long j = 0; j <= st.jmax; ++j) sum.add(st.rho[static_cast<size_t>(j) * st.nx_eff + k]);
    st.s[static_cast<size_t>(k)] = da * sum.value();
  }
  return st;
}

StepDiagnostics DensityStepper::advance(DensityState& st) const {
  const long jmax = st.jmax;
  const int ne = st.nx_eff;
  const double da = g_->delta_a;
  const double t1 = g_->time_at(st.n + 1);

  StepDiagnostics diag;
  diag.min_rho = 1e300;

  // Top cell leaves the grid (age truncation).
  double top = 0;
  for (int k = 0; k < ne; ++k)
    top = std::max(top, st.rho[static_cast<size_t>(jmax) * ne + k]);
  diag.discarded_top = top;

  // Interior transport, in place from the oldest age down. Track the
  // implicit-decay mass for the moment-identity residual as we go.
  std::vector<double> decay_mass(static_cast<size_t>(ne), 0.0);
  std::vector<KahanSum> interior(static_cast<size_t>(ne));
  for (long j = jmax; j >= 1; --j) {
    double* row = st.rho.data() + static_cast<size_t>(j) * ne;
    const double* below = st.rho.data() + static_cast<size_t>(j - 1) * ne;
    for (int k = 0; k < ne; ++k) {
      double invd = inv_decay(j, k, t1);
      double v = below[k] * invd;
      row[k] = v;
      interior[static_cast<size_t>(k)].add(v);
      decay_mass[static_cast<size_t>(k)] += (1.0 / invd - 1.0) * v;  // da*zeta_j*rho_j
      diag.min_rho = std::min(diag.min_rho, v);
    }
  }

  // Saturating boundary: rho_0 = beta (1 - s) closed implicitly.
  diag.min_s = 1e300;
  diag.max_s = -1e300;
  diag.moment_residual = 0;
  for (int k = 0; k < ne; ++k) {
    double x = node_x(k);
    double beta = p_->beta.eval(x, 0.0, t1);
    double zeta0 = p_->zeta.eval(x, 0.0, t1);
    double s1 = da * interior[static_cast<size_t>(k)].value();
    double rho0 = beta / (1.0 + da * (beta + zeta0)) * (1.0 - s1);
    st.rho[static_cast<size_t>(k)] = rho0;
    diag.min_rho = std::min(diag.min_rho, rho0);
    double s_new = s1 + da * rho0;
    double s_old = st.s[static_cast<size_t>(k)];
    st.s[static_cast<size_t>(k)] = s_new;
    diag.min_s = std::min(diag.min_s, s_new);
    diag.max_s = std::max(diag.max_s, s_new);
    // eq-of-moments defect: s^{n+1} + da^2 sum zeta rho - s^n - da beta (1-s^{n+1})
    double dm = da * (decay_mass[static_cast<size_t>(k)] + da * zeta0 * rho0);
    double resid = std::abs(s_new + dm - s_old - da * beta * (1.0 - s_new));
    diag.moment_residual = std::max(diag.moment_residual, resid);
  }

  st.n += 1;
  return diag;
}

void DensityStepper::fill_zeta_rho(const DensityState& st, double t,
                                   std::vector<double>& out) const {
  const int ne = st.nx_eff;
  out.resize(static_cast<size_t>(st.jmax + 1) * ne);
  for (long j = 0; j <= st.jmax; ++j)
    for (int k = 0; k < ne; ++k) {
      double invd = inv_decay(j, k, t);
      double zeta = (1.0 / invd - 1.0) / g_->delta_a;
      out[static_cast<size_t>(j) * ne + k] = zeta * st.rho[static_cast<size_t>(j) * ne + k];
    }
}

double zeroth_moment_residual(const DensityState& prev, const DensityState& next,
                              const ModelProblem& p, const Grids& g) {
  if (next.n != prev.n + 1) throw NumericError("zeroth_moment_residual: slabs not consecutive");
  const double da = g.delta_a;
  const double t1 = g.time_at(next.n);
  double worst = 0;
  for (int k = 0; k < next.nx_eff; ++k) {
    double x = g.x[static_cast<size_t>(next.nx_eff == 1 ? 0 : k)];
    KahanSum zr;
    for (long j = 0; j <= next.jmax; ++j)
      zr.add(p.zeta.eval(x, g.age_left(j), t1) * next.rho_at(j, k));
    double beta = p.beta.eval(x, 0.0, t1);
    double resid = std::abs(next.s_at(k) + da * da * zr.value() - prev.s_at(k) -
                            da * beta * (1.0 - next.s_at(k)));
    worst = std::max(worst, resid);
  }
  return worst;
}

double analytic_constant_rate_density(double beta, double zeta, double c, double eps, double a,
                                      double t, double a_trunc) {
  double mu_star = beta / (beta + zeta);
  if (t > eps * a) {
    double mu_I = c / zeta;
    double tau = t - eps * a;
    double mu = mu_star + (mu_I - mu_star) * std::exp(-(beta + zeta) * tau / eps);
    return beta * (1.0 - mu) * std::exp(-zeta * a);
  }
  double amt = a - t / eps;
  if (amt > a_trunc) return 0.0;
  return c * std::exp(-zeta * a);
}

DensityRunResult run_density(const ModelProblem& p, const Grids& g, DensityInit mode,
                             const std::function<void(const DensityState&)>& on_slab) {
  DensityStepper stepper(p, g);
  DensityState st = stepper.make_initial(mode);
  DensityRunResult res;
  auto track_state = [&](const DensityState& s) {
    for (double v : s.rho) res.min_rho = std::min(res.min_rho, v);
    for (double v : s.s) {
      res.min_s = std::min(res.min_s, v);
      res.max_s = std::max(res.max_s, v);
    }
  };
  track_state(st);
  if (res.min_rho < -1e-14)
    throw InvariantError(strfmt("negative initial density %.3e", res.min_rho));
  if (res.min_s < -1e-14 || res.max_s > 1.0 + 1e-14)
    throw InvariantError(strfmt("initial moment out of [0,1]: s in [%.17g, %.17g]", res.min_s,
                                res.max_s));
  if (on_slab) on_slab(st);
  for (long n = 0; n <= g.n_steps; ++n) {
    StepDiagnostics d = stepper.advance(st);
    res.min_rho = std::min(res.min_rho, d.min_rho);
    res.min_s = std::min(res.min_s, d.min_s);
    res.max_s = std::max(res.max_s, d.max_s);
    res.max_moment_residual = std::max(res.max_moment_residual, d.moment_residual);
    res.discarded_mass += g.delta_t * g.delta_a * d.discarded_top;
    res.steps += 1;
    if (d.min_rho < -1e-14) {
      long bad_j = 0;
      int bad_k = 0;
      for (long j = 0; j <= st.jmax; ++j)
        for (int k = 0; k < st.nx_eff; ++k)
          if (st.rho_at(j, k) == d.min_rho) {
            bad_j = j;
            bad_k = k;
          }
      throw InvariantError(strfmt("negative density %.3e at (n=%ld, j=%ld, k=%d)", d.min_rho,
                                  st.n, bad_j, bad_k));
    }
    if (d.min_s < -1e-14 || d.max_s > 1.0 + 1e-14)
      throw InvariantError(strfmt("moment out of [0,1] at n=%ld: s in [%.17g, %.17g]", st.n,
                                  d.min_s, d.max_s));
    if (on_slab) on_slab(st);
  }
  return res;
}

}  // namespace bondflow
