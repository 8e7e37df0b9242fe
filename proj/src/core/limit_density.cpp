#include "limit_density.hpp"

#include <cmath>

namespace bondflow {

LimitDensity::LimitDensity(const ModelProblem& p, const Grids& g) : p_(&p), g_(&g) {
  zeta_static_ = !p.zeta0.uses(RateExpr::Var::T);
  if (zeta_static_) {
    surv_.resize(static_cast<size_t>(g.jmax + 1) * g.nx);
    I_.resize(static_cast<size_t>(g.nx));
    K_.resize(static_cast<size_t>(g.nx));
    std::vector<double> col;
    for (int k = 0; k < g.nx; ++k) {
      column_survival(k, 0.0, col);
      for (long j = 0; j <= g.jmax; ++j)
        surv_[static_cast<size_t>(j) * g.nx + k] = col[static_cast<size_t>(j)];
      quadratures(col, g, I_[static_cast<size_t>(k)], K_[static_cast<size_t>(k)]);
    }
  }
}

void LimitDensity::column_survival(int k, double t, std::vector<double>& surv) const {
  const Grids& g = *g_;
  surv.resize(static_cast<size_t>(g.jmax + 1));
  double x = g.x[static_cast<size_t>(k)];
  double lambda = 0;
  double zeta_prev = p_->zeta0.eval(x, 0.0, t);
  surv[0] = 1.0;
  for (long j = 1; j <= g.jmax; ++j) {
    double zeta = p_->zeta0.eval(x, g.age_left(j), t);
    lambda += 0.5 * (zeta_prev + zeta) * g.delta_a;
    surv[static_cast<size_t>(j)] = std::exp(-lambda);
    zeta_prev = zeta;
  }
}

void LimitDensity::quadratures(const std::vector<double>& surv, const Grids& g, double& I,
                               double& K) {
  KahanSum si, sk;
  for (long j = 0; j <= g.jmax; ++j) {
    double w = (j == 0 || j == g.jmax) ? 0.5 * g.delta_a : g.delta_a;
    double s = surv[static_cast<size_t>(j)];
    si.add(w * s);
    sk.add(w * g.age_left(j) * s);
  }
  I = si.value();
  K = sk.value();
}

void LimitDensity::moments_at(double t, std::vector<double>& mu00,
                              std::vector<double>& mu10) const {
  const Grids& g = *g_;
  mu00.resize(static_cast<size_t>(g.nx));
  mu10.resize(static_cast<size_t>(g.nx));
  std::vector<double> col;
  for (int k = 0; k < g.nx; ++k) {
    double I, K;
    if (zeta_static_) {
      I = I_[static_cast<size_t>(k)];
      K = K_[static_cast<size_t>(k)];
    } else {
      column_survival(k, t, col);
      quadratures(col, g, I, K);
    }
    double beta0 = p_->beta0.eval(g.x[static_cast<size_t>(k)], 0.0, t);
    double mu = beta0 * I / (1.0 + beta0 * I);
    mu00[static_cast<size_t>(k)] = mu;
    mu10[static_cast<size_t>(k)] = beta0 * (1.0 - mu) * K;
  }
}

LimitDensity::Slice LimitDensity::at_time(double t) const {
  const Grids& g = *g_;
  Slice s;
  s.t = t;
  s.nx = g.nx;
  s.jmax = g.jmax;
  s.rho.resize(static_cast<size_t>(g.jmax + 1) * g.nx);
  moments_at(t, s.mu00, s.mu10);
  std::vector<double> col;
  for (int k = 0; k < g.nx; ++k) {
    double beta0 = p_->beta0.eval(g.x[static_cast<size_t>(k)], 0.0, t);
    double bdry = beta0 * (1.0 - s.mu00[static_cast<size_t>(k)]);
    if (zeta_static_) {
      for (long j = 0; j <= g.jmax; ++j)
        s.rho[static_cast<size_t>(j) * g.nx + k] = bdry * surv_[static_cast<size_t>(j) * g.nx + k];
    } else {
      column_survival(k, t, col);
      for (long j = 0; j <= g.jmax; ++j)
        s.rho[static_cast<size_t>(j) * g.nx + k] = bdry * col[static_cast<size_t>(j)];
    }
  }
  return s;
}

double LimitDensity::boundary_value(int k, double t) const {
  const Grids& g = *g_;
  double I, K;
  std::vector<double> col;
  if (zeta_static_) {
    I = I_[static_cast<size_t>(k)];
  } else {
    column_survival(k, t, col);
    quadratures(col, g, I, K);
  }
  double beta0 = p_->beta0.eval(g.x[static_cast<size_t>(k)], 0.0, t);
  double mu = beta0 * I / (1.0 + beta0 * I);
  return beta0 * (1.0 - mu);
}

void LimitDensity::survival_at(int k, double t, const std::vector<double>& ages,
                               std::vector<double>& out) const {
  const Grids& g = *g_;
  double x = g.x[static_cast<size_t>(k)];
  std::vector<double> col;
  const double* surv;
  if (zeta_static_) {
    surv = surv_.data();
  } else {
    column_survival(k, t, col);
    surv = col.data();
  }
  // Node value times a partial trapezoid tail inside the cell.
  out.resize(ages.size());
  for (size_t i = 0; i < ages.size(); ++i) {
    double a = ages[i];
    long j = std::min<long>(g.jmax, static_cast<long>(a / g.delta_a));
    double aj = g.age_left(j);
    double sj = zeta_static_ ? surv[static_cast<size_t>(j) * g.nx + k] : surv[static_cast<size_t>(j)];
    double zeta_l = p_->zeta0.eval(x, aj, t);
    double zeta_r = p_->zeta0.eval(x, a, t);
    double tail = 0.5 * (zeta_l + zeta_r) * (a - aj);
    out[i] = sj * std::exp(-tail);
  }
}

void LimitDensity::rho0_column(int k, double t, const std::vector<double>& ages,
                               std::vector<double>& out) const {
  survival_at(k, t, ages, out);
  double bdry = boundary_value(k, t);
  for (double& v : out) v *= bdry;
}

double LimitDensity::fixed_point_residual(int k, double t) const {
  const Grids& g = *g_;
  double I, K;
  std::vector<double> col;
  if (zeta_static_) {
    I = I_[static_cast<size_t>(k)];
  } else {
    column_survival(k, t, col);
    quadratures(col, g, I, K);
  }
  double beta0 = p_->beta0.eval(g.x[static_cast<size_t>(k)], 0.0, t);
  double mu = beta0 * I / (1.0 + beta0 * I);
  return std::abs(mu - beta0 * (1.0 - mu) * I);
}

InitialLayer::InitialLayer(const ModelProblem& p, const Grids& g) : p_(&p), g_(&g) {
  bool uniform = !p.beta0.uses(RateExpr::Var::X) && !p.zeta0.uses(RateExpr::Var::X) &&
                 !p.rho_I.uses(RateExpr::Var::X);
  nx_eff_ = uniform ? 1 : g.nx;
  const double da = g.delta_a;
  cells_.resize(static_cast<size_t>(g.jmax + 1) * nx_eff_);
  inv_decay_.resize(static_cast<size_t>(g.jmax + 1) * nx_eff_);
  beta0_.resize(static_cast<size_t>(nx_eff_));

  LimitDensity limit(p, g);
  std::vector<double> gauss_ages(4), rho0_vals(4);
  for (int k = 0; k < nx_eff_; ++k) {
    double x = g.x[static_cast<size_t>(k)];
    beta0_[static_cast<size_t>(k)] = p.beta0.eval(x, 0.0, 0.0);
    for (long j = 0; j <= g.jmax; ++j) {
      inv_decay_[static_cast<size_t>(j) * nx_eff_ + k] =
          1.0 / (1.0 + da * p.zeta0.eval(x, g.age_left(j), 0.0));
      for (int q = 0; q < 4; ++q) gauss_ages[static_cast<size_t>(q)] = g.age_left(j) + Gauss4::node[q] * da;
      limit.rho0_column(k, 0.0, gauss_ages, rho0_vals);
      double avg = 0;
      for (int q = 0; q < 4; ++q)
        avg += Gauss4::weight[q] *
               (p.rho_I.eval(x, gauss_ages[static_cast<size_t>(q)], 0.0) - rho0_vals[static_cast<size_t>(q)]);
      cells_[static_cast<size_t>(j) * nx_eff_ + k] = avg;
    }
  }
  mass0_ = mass();
  well_prepared_ = mass0_ <= std::max(1e-12, da * da * (1.0 + p.bounds.M));
}

double InitialLayer::mass() const {
  KahanSum sum;
  for (long j = 0; j <= g_->jmax; ++j) {
    double m = 0;
    for (int k = 0; k < nx_eff_; ++k)
      m = std::max(m, std::abs(cells_[static_cast<size_t>(j) * nx_eff_ + k]));
    sum.add(m);
  }
  return g_->delta_a * sum.value();
}

void InitialLayer::step() {
  const long jmax = g_->jmax;
  const int ne = nx_eff_;
  const double da = g_->delta_a;
  std::vector<KahanSum> interior(static_cast<size_t>(ne));
  for (long j = jmax; j >= 1; --j) {
    double* row = cells_.data() + static_cast<size_t>(j) * ne;
    const double* below = cells_.data() + static_cast<size_t>(j - 1) * ne;
    for (int k = 0; k < ne; ++k) {
      row[k] = below[k] * inv_decay_[static_cast<size_t>(j) * ne + k];
      interior[static_cast<size_t>(k)].add(row[k]);
    }
  }
  for (int k = 0; k < ne; ++k) {
    double beta0 = beta0_[static_cast<size_t>(k)];
    double zeta00 = 1.0 / inv_decay_[static_cast<size_t>(k)] - 1.0;  // da*zeta0(x,0,0)
    cells_[static_cast<size_t>(k)] =
        -beta0 * da * interior[static_cast<size_t>(k)].value() / (1.0 + zeta00 + da * beta0);
  }
  m_ += 1;
}

LayerSeries layer_decay_series(const ModelProblem& p, const Grids& g, double tmax) {
  InitialLayer layer(p, g);
  LayerSeries out;
  out.mass0 = layer.initial_mass();
  out.well_prepared = layer.well_prepared();
  out.ttilde.push_back(0.0);
  out.mass.push_back(layer.initial_mass());
  long steps = static_cast<long>(std::ceil(tmax / g.delta_a - 1e-9));
  for (long m = 0; m < steps; ++m) {
    layer.step();
    out.ttilde.push_back(layer.ttilde());
    out.mass.push_back(layer.mass());
  }

  // log-linear fit on ttilde in [1,5]
  KahanSum sx, sy, sxx, sxy;
  long cnt = 0;
  bool underflow = false;
  for (size_t i = 0; i < out.ttilde.size(); ++i) {
    double t = out.ttilde[i];
    if (t < 1.0 || t > 5.0) continue;
    double m = out.mass[i];
    if (m < 1e-300) {
      underflow = true;
      continue;
    }
    double y = std::log(m);
    sx.add(t);
    sy.add(y);
    sxx.add(t * t);
    sxy.add(t * y);
    ++cnt;
  }
  out.underflow = underflow;
  if (cnt >= 2) {
    double n = static_cast<double>(cnt);
    double denom = n * sxx.value() - sx.value() * sx.value();
    out.fitted_slope = (n * sxy.value() - sx.value() * sy.value()) / denom;
  } else {
    out.fitted_slope = std::nan("");
  }
  return out;
}

}  // namespace bondflow
