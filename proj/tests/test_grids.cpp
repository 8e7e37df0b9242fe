#include <doctest.h>

#include <cmath>
#include <random>

#include "core/grids.hpp"
#include "test_configs.hpp"

using namespace bondflow;

namespace {

Grids small_grids(int nx = 17) {
  Problem p = load_problem(base_config());
  NumericsParams num = p.num;
  num.nx = nx;
  return Grids::make(p.model, num);
}

SphereField random_field(int nx, int d, unsigned seed, bool unit) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SphereField z(nx, d);
  for (double& v : z.v) v = gauss(rng);
  if (unit)
    z.normalize_nodes();
  else
    for (double& v : z.v) v *= 0.4;
  return z;
}

}  // namespace

TEST_CASE("grid construction invariants") {
  Grids g = small_grids();
  CHECK(g.x.front() == 0.0);
  CHECK(g.x.back() == 1.0);
  for (size_t k = 1; k < g.x.size(); ++k) CHECK(g.x[k] > g.x[k - 1]);
  CHECK(g.n_steps * g.delta_t <= g.T + 1e-12);
  CHECK(g.T < (g.n_steps + 1) * g.delta_t + 1e-12);
}

TEST_CASE("dirichlet energy of a constant field vanishes") {
  Grids g = small_grids();
  SphereField z(g.nx, 3);
  for (int k = 0; k < g.nx; ++k) {
    z.at(k)[0] = 1.0;
    z.at(k)[1] = 0.0;
    z.at(k)[2] = 0.0;
  }
  CHECK(dirichlet_energy(z, g) == 0.0);
}

TEST_CASE("dirichlet energy of the half-turn phase field") {
  Grids g = small_grids(101);
  SphereField z(g.nx, 2);
  for (int k = 0; k < g.nx; ++k) {
    double theta = kPi * g.x[static_cast<size_t>(k)];
    z.at(k)[0] = std::cos(theta);
    z.at(k)[1] = std::sin(theta);
  }
  CHECK(dirichlet_energy(z, g) == doctest::Approx(kPi * kPi / 2.0).epsilon(1e-3));
}

TEST_CASE("two-node field energy") {
  Grids g = small_grids(2);
  SphereField z(2, 2);
  z.at(0)[0] = 1.0;
  z.at(0)[1] = 0.0;
  z.at(1)[0] = 0.0;
  z.at(1)[1] = 1.0;
  CHECK(g.dx == 1.0);
  CHECK(dirichlet_energy(z, g) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("laplacian of constants and quadratics") {
  Grids g = small_grids();
  SphereField z(g.nx, 2);
  for (int k = 0; k < g.nx; ++k) {
    z.at(k)[0] = 0.7;
    z.at(k)[1] = -0.2;
  }
  std::vector<double> lap;
  discrete_laplacian(z, g, lap);
  for (double v : lap) CHECK(v == 0.0);

  // f(x) = x^2 as one component: second difference is exactly 2 inside.
  SphereField q(g.nx, 1);
  for (int k = 0; k < g.nx; ++k) q.at(k)[0] = g.x[static_cast<size_t>(k)] * g.x[static_cast<size_t>(k)];
  discrete_laplacian(q, g, lap);
  for (int k = 1; k + 1 < g.nx; ++k)
    CHECK(lap[static_cast<size_t>(k)] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("laplacian is the negative weighted gradient of the energy") {
  Grids g = small_grids(9);
  const int d = 2;
  SphereField u = random_field(g.nx, d, 11, false);
  // central finite differences of the Dirichlet energy
  std::vector<double> lap;
  discrete_laplacian(u, g, lap);
  double h = 1e-6;
  for (int k = 0; k < g.nx; ++k)
    for (int c = 0; c < d; ++c) {
      SphereField up = u, dn = u;
      up.at(k)[c] += h;
      dn.at(k)[c] -= h;
      double fd = (dirichlet_energy(up, g) - dirichlet_energy(dn, g)) / (2 * h);
      double an = -g.wt[static_cast<size_t>(k)] * lap[static_cast<size_t>(k) * d + c];
      CHECK(fd == doctest::Approx(an).epsilon(1e-6));
    }
}

TEST_CASE("bilinear identity: weighted laplacian matches edge sums") {
  Grids g = small_grids(13);
  const int d = 3;
  for (unsigned seed : {1u, 2u, 3u}) {
    SphereField u = random_field(g.nx, d, seed, false);
    SphereField v = random_field(g.nx, d, seed + 100, false);
    std::vector<double> lap;
    discrete_laplacian(v, g, lap);
    double lhs = 0;
    for (int k = 0; k < g.nx; ++k)
      for (int c = 0; c < d; ++c)
        lhs += g.wt[static_cast<size_t>(k)] * u.at(k)[c] * (-lap[static_cast<size_t>(k) * d + c]);
    double rhs = 0;
    for (int k = 0; k + 1 < g.nx; ++k)
      for (int c = 0; c < d; ++c)
        rhs += (u.at(k + 1)[c] - u.at(k)[c]) * (v.at(k + 1)[c] - v.at(k)[c]) / g.dx;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("norms: constants and box trajectories") {
  Grids g = small_grids();
  std::vector<double> ones(static_cast<size_t>(g.nx), 1.0);
  CHECK(l1_x(ones, g) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(linf_x(ones) == 1.0);
  CHECK(l2_x(ones, g) == doctest::Approx(1.0).epsilon(1e-14));

  // f == 1 on the whole age x time box
  long slabs = g.n_steps;
  std::vector<std::vector<double>> traj(static_cast<size_t>(slabs),
                                        std::vector<double>(static_cast<size_t>(g.jmax + 1), 1.0));
  double v = yt_norm(traj, 1, g, false);
  double want = static_cast<double>(slabs) * g.delta_t * (g.a_max + g.delta_a);
  CHECK(v == doctest::Approx(want).epsilon(1e-2));
}

TEST_CASE("c0 error of identical fields is zero") {
  Grids g = small_grids();
  SphereField z = random_field(g.nx, 2, 5, true);
  CHECK(c0_node_error(z, z) == 0.0);
}

TEST_CASE("norm properties on random fields") {
  Grids g = small_grids();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_real_distribution<double> scale(-3.0, 3.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> f(static_cast<size_t>(g.nx)), h(static_cast<size_t>(g.nx));
    for (int k = 0; k < g.nx; ++k) {
      f[static_cast<size_t>(k)] = gauss(rng);
      h[static_cast<size_t>(k)] = gauss(rng);
    }
    double c = scale(rng);
    std::vector<double> cf = f, fh(static_cast<size_t>(g.nx));
    for (int k = 0; k < g.nx; ++k) {
      cf[static_cast<size_t>(k)] *= c;
      fh[static_cast<size_t>(k)] = f[static_cast<size_t>(k)] + h[static_cast<size_t>(k)];
    }
    for (auto norm : {l1_x, l2_x}) {
      CHECK(norm(cf, g) == doctest::Approx(std::abs(c) * norm(f, g)).epsilon(1e-12));
      CHECK(norm(fh, g) <= norm(f, g) + norm(h, g) + 1e-12);
    }
    CHECK(linf_x(cf) == doctest::Approx(std::abs(c) * linf_x(f)).epsilon(1e-12));
    CHECK(linf_x(fh) <= linf_x(f) + linf_x(h) + 1e-12);
  }
}
