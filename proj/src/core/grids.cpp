#include "grids.hpp"

#include <cmath>

namespace bondflow {

Grids Grids::make(const ModelProblem& m, const NumericsParams& n) {
  return make_with_epsilon(m, n, m.epsilon);
}

Grids Grids::make_with_epsilon(const ModelProblem& m, const NumericsParams& n, double epsilon) {
  if (epsilon <= 0) throw ConfigError("epsilon must be positive");
  Grids g;
  g.nx = n.nx;
  g.dx = 1.0 / static_cast<double>(n.nx - 1);
  g.x.resize(static_cast<size_t>(g.nx));
  g.wt.resize(static_cast<size_t>(g.nx));
  for (int k = 0; k < g.nx; ++k) {
    g.x[static_cast<size_t>(k)] = static_cast<double>(k) * g.dx;
    g.wt[static_cast<size_t>(k)] = (k == 0 || k == g.nx - 1) ? 0.5 * g.dx : g.dx;
  }
  g.x.back() = 1.0;
  g.delta_a = n.delta_a;
  g.jmax = n.jmax();
  g.a_max = n.a_max;
  g.epsilon = epsilon;
  g.delta_t = epsilon * n.delta_a;
  g.T = m.T;
  g.n_steps = static_cast<long>(std::floor(m.T / g.delta_t + 1e-9));
  if (g.n_steps < 1) throw ConfigError("time horizon shorter than one CFL step");
  return g;
}

void SphereField::normalize_nodes() {
  for (int k = 0; k < nx; ++k) {
    double* w = at(k);
    double s = 0;
    for (int c = 0; c < d; ++c) s += w[c] * w[c];
    s = std::sqrt(s);
    if (s < 1e-14) throw NumericError(strfmt("cannot normalize near-zero vector at node %d", k));
    for (int c = 0; c < d; ++c) w[c] /= s;
  }
}

double SphereField::max_norm_deviation() const {
  double worst = 0;
  for (int k = 0; k < nx; ++k) {
    const double* w = at(k);
    double s = 0;
    for (int c = 0; c < d; ++c) s += w[c] * w[c];
    worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
  }
  return worst;
}

double dirichlet_energy(const SphereField& z, const Grids& g) {
  KahanSum sum;
  for (int k = 0; k + 1 < z.nx; ++k) {
    const double* a = z.at(k);
    const double* b = z.at(k + 1);
    double e = 0;
    for (int c = 0; c < z.d; ++c) {
      double dv = b[c] - a[c];
      e += dv * dv;
    }
    sum.add(e);
  }
  return 0.5 * sum.value() / g.dx;
}

void discrete_laplacian(const SphereField& z, const Grids& g, std::vector<double>& out) {
  const int nx = z.nx, d = z.d;
  out.assign(static_cast<size_t>(nx) * d, 0.0);
  const double inv2 = 1.0 / (g.dx * g.dx);
  for (int k = 0; k < nx; ++k) {
    const double* c0 = z.at(k);
    double* o = out.data() + static_cast<size_t>(k) * d;
    if (k == 0) {
      const double* r = z.at(1);
      for (int c = 0; c < d; ++c) o[c] = 2.0 * (r[c] - c0[c]) * inv2;
    } else if (k == nx - 1) {
      const double* l = z.at(nx - 2);
      for (int c = 0; c < d; ++c) o[c] = 2.0 * (l[c] - c0[c]) * inv2;
    } else {
      const double* l = z.at(k - 1);
      const double* r = z.at(k + 1);
      for (int c = 0; c < d; ++c) o[c] = (r[c] - 2.0 * c0[c] + l[c]) * inv2;
    }
  }
}

double linf_x(const std::vector<double>& f) {
  double m = 0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

double l1_x(const std::vector<double>& f, const Grids& g) {
  KahanSum s;
  for (int k = 0; k < g.nx; ++k) s.add(g.wt[static_cast<size_t>(k)] * std::abs(f[static_cast<size_t>(k)]));
  return s.value();
}

double l2_x(const std::vector<double>& f, const Grids& g) {
  KahanSum s;
  for (int k = 0; k < g.nx; ++k) {
    double v = f[static_cast<size_t>(k)];
    s.add(g.wt[static_cast<size_t>(k)] * v * v);
  }
  return std::sqrt(std::max(0.0, s.value()));
}

void YtAccumulator::add_slab(const std::vector<double>& maxk) {
  KahanSum slab;
  for (size_t j = 0; j < maxk.size(); ++j) {
    double w = weight_ ? (1.0 + g_->age_center(static_cast<long>(j))) : 1.0;
    slab.add(w * maxk[j]);
  }
  sum_.add(dt_ * da_ * slab.value());
}

double yt_norm(const std::vector<std::vector<double>>& slabs, int nx_eff, const Grids& g,
               bool weight_one_plus_a) {
  YtAccumulator acc(g, weight_one_plus_a);
  std::vector<double> maxk;
  for (const auto& slab : slabs) {
    size_t nj = slab.size() / static_cast<size_t>(nx_eff);
    maxk.assign(nj, 0.0);
    for (size_t j = 0; j < nj; ++j) {
      double m = 0;
      for (int k = 0; k < nx_eff; ++k)
        m = std::max(m, std::abs(slab[j * static_cast<size_t>(nx_eff) + static_cast<size_t>(k)]));
      maxk[j] = m;
    }
    acc.add_slab(maxk);
  }
  return acc.value();
}

double c0_node_error(const SphereField& a, const SphereField& b) {
  if (a.nx != b.nx || a.d != b.d) throw NumericError("c0_node_error: grid mismatch");
  double worst = 0;
  for (int k = 0; k < a.nx; ++k) {
    const double* u = a.at(k);
    const double* v = b.at(k);
    double s = 0;
    for (int c = 0; c < a.d; ++c) {
      double dv = u[c] - v[c];
      s += dv * dv;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

}  // namespace bondflow
