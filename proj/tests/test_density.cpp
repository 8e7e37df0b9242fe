#include <doctest.h>

#include <cmath>

#include "core/density.hpp"
#include "test_configs.hpp"

using namespace bondflow;

namespace {

Problem standard() { return load_problem(base_config()); }

}  // namespace

TEST_CASE("cell averages of an indicator initial profile") {
  // rho_I = c on [0,1): every full cell averages to c, later cells to 0.
  std::string cfg = base_config();
  cfg.replace(cfg.find("rho_I = 0.25*exp(-a)"), 20, "rho_I = 0.25*max(0,min(1,(1-a)*1e8))");
  Problem p = load_problem(cfg);
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::CellAverage);
  long cells_inside = static_cast<long>(1.0 / g.delta_a + 0.5);
  for (long j = 0; j + 1 < cells_inside; ++j)
    CHECK(st.rho_at(j, 0) == doctest::Approx(0.25).epsilon(1e-12));
  for (long j = cells_inside + 1; j <= g.jmax; ++j) CHECK(st.rho_at(j, 0) == 0.0);
}

TEST_CASE("exponential initial profile: first cell average is analytic") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::CellAverage);
  double want = 0.25 * (1.0 - std::exp(-g.delta_a)) / g.delta_a;
  CHECK(st.rho_at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("discrete steady state has s = beta/(beta+zeta)") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::DiscreteSteady);
  CHECK(st.nx_eff == 1);
  CHECK(st.s_at(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("discrete steady state is a fixed point of the step") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::DiscreteSteady);
  DensityState before = st;
  stepper.advance(st);
  double worst = 0;
  for (size_t i = 0; i < st.rho.size(); ++i)
    worst = std::max(worst, std::abs(st.rho[i] - before.rho[i]));
  CHECK(worst <= 1e-15);
  CHECK(st.s_at(0) == doctest::Approx(before.s_at(0)).epsilon(1e-14));
}

TEST_CASE("boundary update from an empty interior") {
  // one step from rho == 0 with beta = zeta = 1, da = 0.1:
  // rho_0 = 1/(1+0.1*(1+1)) = 1/1.2
  std::string cfg = base_config();
  cfg.replace(cfg.find("delta_a = 0.05"), 14, "delta_a = 0.1");
  Problem p = load_problem(cfg);
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::CellAverage);
  for (double& v : st.rho) v = 0.0;
  for (double& v : st.s) v = 0.0;
  stepper.advance(st);
  CHECK(st.rho_at(0, 0) == doctest::Approx(1.0 / 1.2).epsilon(1e-14));
  for (long j = 1; j <= g.jmax; ++j) CHECK(st.rho_at(j, 0) == 0.0);
}

TEST_CASE("moment recursion residual is tiny along a run") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::CellAverage);
  DensityState prev = st;
  for (int n = 0; n < 20; ++n) {
    prev = st;
    StepDiagnostics d = stepper.advance(st);
    CHECK(d.moment_residual <= 1e-13);
    CHECK(zeroth_moment_residual(prev, st, p.model, g) <= 1e-13);
  }
}

TEST_CASE("steady state: residual at machine precision") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityStepper stepper(p.model, g);
  DensityState st = stepper.make_initial(DensityInit::DiscreteSteady);
  StepDiagnostics d = stepper.advance(st);
  CHECK(d.moment_residual <= 1e-15);
}

TEST_CASE("constant-rate oracle") {
  double beta = 1, zeta = 1, c = 0.25, eps = 0.05;
  // long-time boundary value: beta*zeta/(beta+zeta)
  CHECK(analytic_constant_rate_density(beta, zeta, c, eps, 0.0, 50.0, 32.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // t = 0 reproduces the initial profile
  for (double a : {0.0, 0.3, 1.7})
    CHECK(analytic_constant_rate_density(beta, zeta, c, eps, a, 0.0, 32.0) ==
          doctest::Approx(c * std::exp(-zeta * a)).epsilon(1e-14));
  // stationary moment: mu_I = mu_* keeps the boundary at beta(1-mu_*)
  double c_star = beta / (beta + zeta) * zeta;  // gives mu_I = beta/(beta+zeta)
  double v1 = analytic_constant_rate_density(beta, zeta, c_star, eps, 0.4, 0.1, 32.0);
  double v2 = analytic_constant_rate_density(beta, zeta, c_star, eps, 0.4, 3.0, 32.0);
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-13));
}

TEST_CASE("run_density: steady init stays steady and s above mu0_min") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  double worst = 0;
  DensityRunResult res = run_density(p.model, g, DensityInit::DiscreteSteady,
                                     [&](const DensityState& slab) {
                                       worst = std::max(worst, std::abs(slab.s_at(0) - 0.5));
                                     });
  CHECK(worst <= 1e-13);
  CHECK(res.min_rho >= 0.0);
  CHECK(res.min_s > p.model.bounds.mu0_min);
  CHECK(res.max_moment_residual <= 1e-13);
}

TEST_CASE("run_density: positivity and moment window on the standard run") {
  Problem p = standard();
  Grids g = Grids::make(p.model, p.num);
  DensityRunResult res = run_density(p.model, g, DensityInit::CellAverage, nullptr);
  CHECK(res.min_rho >= -1e-14);
  CHECK(res.min_s >= -1e-14);
  CHECK(res.max_s <= 1.0 + 1e-14);
  CHECK(res.min_s > p.model.bounds.mu0_min);
  CHECK(res.discarded_mass <= 10.0 * p.num.tol_age * p.model.T);
}

TEST_CASE("upwind order against the oracle (coarse probe)") {
  // a fast two-level order check; the production study lives in acceptance
  std::string cfg = base_config();
  cfg.replace(cfg.find("epsilon = 0.05"), 14, "epsilon = 0.1");
  cfg.replace(cfg.find("T = 0.2"), 7, "T = 0.5");
  Problem p = load_problem(cfg);

  auto err_for = [&](double da) {
    NumericsParams num = p.num;
    num.delta_a = da;
    Grids g = Grids::make(p.model, num);
    YtAccumulator yt(g, false);
    std::vector<double> maxk(static_cast<size_t>(g.jmax + 1));
    run_density(p.model, g, DensityInit::CellAverage, [&](const DensityState& slab) {
      if (slab.n < 0 || slab.n >= g.n_steps) return;
      double t_mid = g.time_at(slab.n) + 0.5 * g.delta_t;
      for (long j = 0; j <= slab.jmax; ++j) {
        double oracle = analytic_constant_rate_density(1.0, 1.0, 0.25, g.epsilon,
                                                       g.age_center(j), t_mid, g.a_max);
        maxk[static_cast<size_t>(j)] = std::abs(slab.rho_at(j, 0) - oracle);
      }
      yt.add_slab(maxk);
    });
    return yt.value();
  };
  double e1 = err_for(0.08);
  double e2 = err_for(0.04);
  double order = std::log2(e1 / e2);
  CHECK(order >= 0.8);  // first-order scheme
  CHECK(order <= 1.6);
}
