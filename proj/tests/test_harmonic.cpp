#include <doctest.h>

#include <cmath>

#include "core/analysis.hpp"
#include "core/harmonic.hpp"
#include "test_configs.hpp"

using namespace bondflow;

namespace {

Grids space_grid(int nx) {
  Grids g;
  g.nx = nx;
  g.dx = 1.0 / (nx - 1);
  g.x.resize(static_cast<size_t>(nx));
  g.wt.resize(static_cast<size_t>(nx));
  for (int k = 0; k < nx; ++k) {
    g.x[static_cast<size_t>(k)] = k * g.dx;
    g.wt[static_cast<size_t>(k)] = (k == 0 || k == nx - 1) ? 0.5 * g.dx : g.dx;
  }
  g.x.back() = 1.0;
  return g;
}

SphereField cosine_phase(const Grids& g, double theta0) {
  SphereField z(g.nx, 2);
  for (int k = 0; k < g.nx; ++k) {
    double th = theta0 * std::cos(kPi * g.x[static_cast<size_t>(k)]);
    z.at(k)[0] = std::cos(th);
    z.at(k)[1] = std::sin(th);
  }
  return z;
}

}  // namespace

TEST_CASE("constant fields are fixed points of the projection step") {
  Grids g = space_grid(33);
  SphereField z(g.nx, 3);
  for (int k = 0; k < g.nx; ++k) z.at(k)[2] = 1.0;
  std::vector<double> mu(static_cast<size_t>(g.nx), 0.5);
  SphereField before = z;
  step_limit(z, mu, 1e-4, g);
  CHECK(c0_node_error(z, before) == 0.0);
}

TEST_CASE("one step damps the cosine amplitude like the heat kernel") {
  Grids g = space_grid(129);
  double mu = 0.5, theta0 = 0.05;  // small phase: the flow is nearly linear
  SphereField z = cosine_phase(g, theta0);
  double dt = 0.2 * mu * g.dx * g.dx;
  std::vector<double> muv(static_cast<size_t>(g.nx), mu);
  step_limit(z, muv, dt, g);
  double phase0 = std::atan2(z.at(0)[1], z.at(0)[0]);
  double want = theta0 * (1.0 - dt * kPi * kPi / mu);
  CHECK(phase0 == doctest::Approx(want).epsilon(5e-4));
}

TEST_CASE("oversized steps are refused") {
  Grids g = space_grid(9);
  SphereField z(g.nx, 2);
  for (int k = 0; k < g.nx; ++k) {
    z.at(k)[0] = (k % 2 == 0) ? 1.0 : -1.0;  // antipodal neighbors
  }
  std::vector<double> mu(static_cast<size_t>(g.nx), 0.5);
  CHECK_THROWS_AS(step_limit(z, mu, 10.0, g), NumericError);
}

TEST_CASE("circle oracle values") {
  double out[2];
  exact_circle_solution(1.0, 0.5, 0.0, 0.0, out);
  CHECK(out[0] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  // amplitude decay e^{-pi^2 t/mu}
  exact_circle_solution(1.0, 0.5, 0.0, 0.1, out);
  double amp = std::exp(-kPi * kPi * 0.1 / 0.5);
  CHECK(amp == doctest::Approx(0.13887).epsilon(1e-4));
  CHECK(std::atan2(out[1], out[0]) == doctest::Approx(amp).epsilon(1e-12));
  // cosine node: phase 0 at x = 1/2 for all t
  exact_circle_solution(1.0, 0.5, 0.5, 0.37, out);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(out[1]) <= 1e-15);
}

TEST_CASE("run_limit: constant initial data yields a constant trajectory") {
  Grids g = space_grid(17);
  SphereField z0(g.nx, 2);
  for (int k = 0; k < g.nx; ++k) z0.at(k)[0] = 1.0;
  auto mu_fn = [&](double, std::vector<double>& mu) {
    mu.assign(static_cast<size_t>(g.nx), 0.5);
  };
  LimitRunResult res = run_limit(z0, g, 0.4, mu_fn, {0.0, 0.05, 0.1});
  REQUIRE(res.samples.size() == 3);
  for (const auto& s : res.samples) CHECK(c0_node_error(s, z0) <= 1e-14);
}

TEST_CASE("run_limit: Dirichlet energy never increases") {
  Grids g = space_grid(65);
  SphereField z0 = cosine_phase(g, 1.0);
  auto mu_fn = [&](double, std::vector<double>& mu) {
    mu.assign(static_cast<size_t>(g.nx), 0.5);
  };
  LimitRunResult res = run_limit(z0, g, 0.4, mu_fn, {0.1});
  CHECK(res.max_energy_increase <= 1e-10);
  CHECK(res.steps > 0);
}

TEST_CASE("two-level refinement shows second order (coarse probe)") {
  std::vector<LimitOracleRow> rows = limit_oracle_refinement(1.0, 0.5, {17, 33}, 0.1);
  REQUIRE(rows.size() == 2);
  double order = std::log2(rows[0].err_c0 / rows[1].err_c0);
  CHECK(order >= 1.6);
  CHECK(order <= 2.6);
}
