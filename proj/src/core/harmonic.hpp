#pragma once

#include <functional>
#include <vector>

#include "grids.hpp"
#include "model.hpp"

namespace bondflow {

// Friction-limit flow mu10 dz/dt = dxx z + |dx z|^2 z on the product of
// unit spheres, Neumann ends, by explicit step + nodewise projection.

// mu(t, out): the mu_{1,0} profile at refresh time t, one value per node.
using MuProfileFn = std::function<void(double, std::vector<double>&)>;

// Predictor z* = z + (dt/mu_k) (lap z)_k, then z <- z*/|z*|. The curvature
// term is absorbed by the projection. Throws when |z*| < 0.5 somewhere
// (step too large for the data).
void step_limit(SphereField& z, const std::vector<double>& mu, double dt_lim, const Grids& g);

// Circle-valued closed form for constant mu and Neumann data:
// phase theta(x,t) = theta0 exp(-pi^2 t/mu) cos(pi x).
void exact_circle_solution(double theta0, double mu, double x, double t, double out[2]);

// z_p(.,0) sampled at the nodes and normalized.
SphereField limit_initial_field(const ModelProblem& p, const Grids& g);

struct LimitRunResult {
  std::vector<SphereField> samples;  // at the requested times, in order
  double dt_internal = 0;            // last segment's internal step
  long steps = 0;
  double max_energy_increase = 0;    // Dirichlet energy defect per step
};

// Marches with the stable internal step dt = safety*min(mu)*dx^2/2,
// refreshing mu at every requested sample time and interpolating outputs
// linearly in time. sample_times must be nondecreasing, starting >= 0.
LimitRunResult run_limit(const SphereField& z0, const Grids& g, double safety,
                         const MuProfileFn& mu_fn, const std::vector<double>& sample_times);

}  // namespace bondflow
