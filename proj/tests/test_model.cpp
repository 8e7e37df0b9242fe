#include <doctest.h>

#include <cmath>

#include "core/grids.hpp"
#include "core/model.hpp"
#include "test_configs.hpp"

using namespace bondflow;

TEST_CASE("minimal config round trip") {
  Problem p = load_problem(base_config());
  CHECK(p.model.d == 2);
  CHECK(p.model.epsilon == 0.05);
  CHECK(p.model.T == 0.2);
  CHECK(p.num.delta_a == 0.05);
  CHECK(p.num.nx == 17);
  CHECK(p.num.a_max == 32.0);
  CHECK(p.validation.passed);
  // mu_I of 0.25 e^{-a} truncated at A_max
  double want = 0.25 * (1.0 - std::exp(-32.0));
  CHECK(p.validation.mu_I_min_obs == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("delta_t is derived, never read") {
  std::string cfg = base_config("", "delta_t = 0.001\n");
  try {
    load_problem(cfg);
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("derived by CFL") != std::string::npos);
  }
}

TEST_CASE("delta_t equals epsilon*delta_a bit-exactly") {
  Problem p = load_problem(base_config());
  Grids g = Grids::make(p.model, p.num);
  CHECK(g.delta_t == p.model.epsilon * p.num.delta_a);
  // the spec example pair
  std::string cfg = base_config();
  cfg.replace(cfg.find("delta_a = 0.05"), 14, "delta_a = 0.02");
  Problem p2 = load_problem(cfg);
  Grids g2 = Grids::make(p2.model, p2.num);
  CHECK(g2.delta_t == 0.05 * 0.02);
}

TEST_CASE("beta_min > 0 is enforced") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("beta = 1\n"), 9, "beta = 0\n");
  cfg.replace(cfg.find("beta_min = 1"), 12, "beta_min = 0");
  try {
    load_problem(cfg);
    FAIL("expected hypothesis failure");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("bounds_order") != std::string::npos);
  }
}

TEST_CASE("literal beta = 0 violates the declared lower bound") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("beta = 1\n"), 9, "beta = 0\n");
  CHECK_THROWS_AS(load_problem(cfg), ConfigError);
}

TEST_CASE("past positions must be unit vectors") {
  std::string cfg = constant_past_config();
  cfg.replace(cfg.find("zp_2 = 0"), 8, "zp_2 = 1");  // |(1,1)| = sqrt(2)
  try {
    load_problem(cfg);
    FAIL("expected unit-norm failure");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("zp_unit_norm") != std::string::npos);
  }
}

TEST_CASE("missing, duplicate and unknown keys") {
  std::string missing = base_config();
  missing.erase(missing.find("zeta = 1\n"), 9);
  CHECK_THROWS_AS(load_problem(missing), ConfigError);

  CHECK_THROWS_AS(load_problem(base_config("beta = 2\n")), ConfigError);  // duplicate
  CHECK_THROWS_AS(load_problem(base_config("mystery_key = 3\n")), ConfigError);
}

TEST_CASE("rho_I support must sit inside [0, A_max]") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("rho_I = 0.25*exp(-a)"), 20, "rho_I = 0.25*exp(-a/99)");
  try {
    load_problem(cfg);
    FAIL("expected support failure");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    bool support_or_trunc = msg.find("rhoI_support") != std::string::npos ||
                            msg.find("age_truncation_rule") != std::string::npos;
    CHECK(support_or_trunc);
  }
}

TEST_CASE("A_max derived from tol_age when absent") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("A_max = 32\n"), 11, "");
  Problem p = load_problem(cfg);
  // the smallest multiple of delta_a satisfying the tail rule
  double A = p.num.a_max;
  auto tail = [&](double a) {
    return p.model.bounds.beta_max * (1.0 + a) * std::exp(-p.model.bounds.zeta_min * a) /
           p.model.bounds.zeta_min;
  };
  CHECK(tail(A) < p.num.tol_age);
  CHECK(tail(A - p.num.delta_a) >= p.num.tol_age);
}

TEST_CASE("hypothesis on mu0_min") {
  std::string cfg = base_config();
  cfg.replace(cfg.find("mu0_min = 0.1"), 13, "mu0_min = 0.6");  // above beta/(beta+zeta)
  CHECK_THROWS_AS(load_problem(cfg), ConfigError);
}

TEST_CASE("validation report serializes") {
  Problem p = load_problem(base_config());
  std::string json = p.validation.to_json();
  CHECK(json.find("\"passed\":true") != std::string::npos);
  CHECK(json.find("zp_unit_norm") != std::string::npos);
}
