#include "harmonic.hpp"

#include <cmath>

namespace bondflow {

void step_limit(SphereField& z, const std::vector<double>& mu, double dt_lim, const Grids& g) {
  std::vector<double> lap;
  discrete_laplacian(z, g, lap);
  for (int k = 0; k < z.nx; ++k) {
    double* w = z.at(k);
    const double* l = lap.data() + static_cast<size_t>(k) * z.d;
    double c = dt_lim / mu[static_cast<size_t>(k)];
    double s = 0;
    for (int cc = 0; cc < z.d; ++cc) {
      w[cc] += c * l[cc];
      s += w[cc] * w[cc];
    }
    if (s < 0.25)
      throw NumericError(strfmt("projection step collapsed at node %d (|z*|=%.3g); "
                                "dt_lim too large",
                                k, std::sqrt(s)));
    s = std::sqrt(s);
    for (int cc = 0; cc < z.d; ++cc) w[cc] /= s;
  }
}

void exact_circle_solution(double theta0, double mu, double x, double t, double out[2]) {
  double theta = theta0 * std::exp(-kPi * kPi * t / mu) * std::cos(kPi * x);
  out[0] = std::cos(theta);
  out[1] = std::sin(theta);
}

SphereField limit_initial_field(const ModelProblem& p, const Grids& g) {
  SphereField z(g.nx, p.d);
  for (int k = 0; k < g.nx; ++k) {
    double* w = z.at(k);
    for (int c = 0; c < p.d; ++c)
      w[c] = p.z_p[static_cast<size_t>(c)].eval(g.x[static_cast<size_t>(k)], 0.0, 0.0);
  }
  z.normalize_nodes();
  return z;
}

LimitRunResult run_limit(const SphereField& z0, const Grids& g, double safety,
                         const MuProfileFn& mu_fn, const std::vector<double>& sample_times) {
  LimitRunResult res;
  SphereField z = z0;
  SphereField z_before = z0;
  std::vector<double> mu;
  double t = 0;
  double energy = dirichlet_energy(z, g);

  for (size_t i = 0; i < sample_times.size(); ++i) {
    double target = sample_times[i];
    if (target < t - 1e-15) throw NumericError("run_limit: sample times must be nondecreasing");
    if (target <= t + 1e-18) {
      res.samples.push_back(z);
      continue;
    }
    mu_fn(t, mu);
    double mu_min = mu[0];
    for (double v : mu) mu_min = std::min(mu_min, v);
    if (!(mu_min > 0))
      throw NumericError(strfmt("limit solver needs min mu_10 > 0, got %.3g", mu_min));
    double dt_lim = safety * mu_min * g.dx * g.dx / 2.0;
    res.dt_internal = dt_lim;
    while (t < target) {
      z_before = z;
      double e_before = energy;
      step_limit(z, mu, dt_lim, g);
      energy = dirichlet_energy(z, g);
      res.max_energy_increase = std::max(res.max_energy_increase, energy - e_before);
      res.steps += 1;
      t += dt_lim;
    }
    // Linear interpolation between the bracketing internal steps.
    double frac = (target - (t - dt_lim)) / dt_lim;
    SphereField out(z.nx, z.d);
    for (size_t q = 0; q < out.v.size(); ++q)
      out.v[q] = (1.0 - frac) * z_before.v[q] + frac * z.v[q];
    res.samples.push_back(out);
  }
  return res;
}

}  // namespace bondflow
