#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "jsonout.hpp"

namespace bondflow {

namespace {

constexpr long kSampleBudget = 1L << 22;  // per sampled function
constexpr int kTimeSamples = 65;

std::vector<double> linspace(double a, double b, long n) {
  std::vector<double> v(static_cast<size_t>(n));
  if (n == 1) {
    v[0] = a;
    return v;
  }
  double h = (b - a) / static_cast<double>(n - 1);
  for (long i = 0; i < n; ++i) v[static_cast<size_t>(i)] = a + h * static_cast<double>(i);
  v.back() = b;
  return v;
}

// Shrink axis counts until the tensor product fits the budget.
void apply_budget(std::vector<long*> axes) {
  auto product = [&]() {
    long p = 1;
    for (long* a : axes) {
      p *= *a;
      if (p > kSampleBudget) return kSampleBudget + 1;
    }
    return p;
  };
  while (product() > kSampleBudget) {
    long* largest = axes[0];
    for (long* a : axes)
      if (*a > *largest) largest = a;
    if (*largest <= 33) break;
    *largest = (*largest - 1) / 2 + 1;
  }
}

struct Worst {
  double value = 0;
  std::string where;
  bool set = false;
  void consider(double v, bool bigger_is_worse, const std::string& w) {
    if (!set || (bigger_is_worse ? v > value : v < value)) {
      value = v;
      where = w;
      set = true;
    }
  }
};

}  // namespace

bool ModelProblem::rates_x_uniform() const {
  return !beta.uses(RateExpr::Var::X) && !zeta.uses(RateExpr::Var::X) &&
         !rho_I.uses(RateExpr::Var::X);
}

bool ModelProblem::rates_constant() const {
  return beta.is_constant() && zeta.is_constant();
}

long NumericsParams::jmax() const {
  long j = static_cast<long>(std::ceil(a_max / delta_a - 1e-9));
  return j;
}

const CheckResult* ValidationReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.pass) return &c;
  return nullptr;
}

std::string ValidationReport::to_json() const {
  JsonWriter w;
  w.begin_object();
  w.key("passed");
  w.value(passed);
  w.key("checks");
  w.begin_array();
  for (const auto& c : checks) {
    w.begin_object();
    w.key("name"); w.value(c.name);
    w.key("pass"); w.value(c.pass);
    w.key("value"); w.value(c.value);
    w.key("threshold"); w.value(c.threshold);
    w.key("detail"); w.value(c.detail);
    w.end();
  }
  w.end();
  w.key("mu_I_min"); w.value(mu_I_min_obs);
  w.key("mu_I_max"); w.value(mu_I_max_obs);
  w.key("czp_l2"); w.value(czp_l2);
  w.key("czp_max"); w.value(czp_max);
  w.key("rhoI_age_bv"); w.value(rhoI_bv);
  w.key("rhoI_moments");
  w.begin_array();
  for (double m : rhoI_moment) w.value(m);
  w.end();
  w.end();
  return w.str();
}

ValidationReport validate_hypotheses(const ModelProblem& p, const NumericsParams& n) {
  ValidationReport rep;
  auto add = [&](const std::string& name, bool pass, double value, double threshold,
                 const std::string& detail) {
    rep.checks.push_back({name, pass, value, threshold, detail});
  };

  long nx4 = 4 * (n.nx - 1) + 1;
  long na4 = 4 * n.jmax() + 1;
  long nt = kTimeSamples;

  // Declared bound sanity first; sampling checks compare against these.
  const Bounds& b = p.bounds;
  add("bounds_order",
      b.beta_min > 0 && b.beta_min <= b.beta_max && b.zeta_min > 0 && b.zeta_min <= b.zeta_max,
      b.beta_min, 0.0, "requires 0 < beta_min <= beta_max and 0 < zeta_min <= zeta_max");
  add("M_gt_beta_max", b.M > b.beta_max, b.M, b.beta_max, "requires M > beta_max");
  double mu0_cap = std::min(b.mu_I_min, b.beta_min / (b.beta_min + b.zeta_max));
  add("mu0_min_hypothesis", b.mu0_min > 0 && b.mu0_min < mu0_cap, b.mu0_min, mu0_cap,
      "requires 0 < mu0_min < min(mu_I_min, beta_min/(beta_min+zeta_max))");
  add("jmax_ge_2", n.jmax() >= 2, static_cast<double>(n.jmax()), 2.0, "age grid too coarse");

  double trunc = b.beta_max * (1.0 + n.a_max) * std::exp(-b.zeta_min * n.a_max) / b.zeta_min;
  add("age_truncation_rule", trunc < n.tol_age, trunc, n.tol_age,
      "beta_max*(1+A_max)*exp(-zeta_min*A_max)/zeta_min must stay below tol_age");

  // On-rates on (x,t), for the epsilon family and its limit.
  const std::pair<const RateExpr*, const char*> on_rates[] = {{&p.beta, "beta_bounds"},
                                                              {&p.beta0, "beta0_bounds"}};
  for (const auto& [expr, name] : on_rates) {
    long ax = nx4, at = nt;
    apply_budget({&ax, &at});
    auto xs = linspace(0, 1, ax);
    auto ts = linspace(0, p.T, at);
    Worst lo, hi;
    try {
      for (double t : ts)
        for (double x : xs) {
          double v = expr->eval(x, 0, t);
          std::string where = strfmt("x=%.6g,t=%.6g", x, t);
          lo.consider(v, false, where);
          hi.consider(v, true, where);
        }
      bool pass = lo.value >= b.beta_min && hi.value <= b.beta_max;
      add(name, pass, pass ? lo.value : (lo.value < b.beta_min ? lo.value : hi.value),
          b.beta_min, strfmt("range [%.6g, %.6g], worst at %s", lo.value, hi.value,
                             (lo.value < b.beta_min ? lo.where : hi.where).c_str()));
    } catch (const NumericError& e) {
      add(name, false, 0, 0, e.what());
    }
  }

  // Off-rates on (x,a,t).
  const std::pair<const RateExpr*, const char*> off_rates[] = {{&p.zeta, "zeta_bounds"},
                                                               {&p.zeta0, "zeta0_bounds"}};
  for (const auto& [expr, name] : off_rates) {
    long ax = nx4, aa = na4, at = 17;
    apply_budget({&ax, &aa, &at});
    auto xs = linspace(0, 1, ax);
    auto as = linspace(0, n.a_max, aa);
    auto ts = linspace(0, p.T, at);
    Worst lo, hi;
    try {
      for (double t : ts)
        for (double a : as)
          for (double x : xs) {
            double v = expr->eval(x, a, t);
            std::string where = strfmt("x=%.6g,a=%.6g,t=%.6g", x, a, t);
            lo.consider(v, false, where);
            hi.consider(v, true, where);
          }
      bool pass = lo.value >= b.zeta_min && hi.value <= b.zeta_max;
      add(name, pass, lo.value < b.zeta_min ? lo.value : hi.value, b.zeta_min,
          strfmt("range [%.6g, %.6g]", lo.value, hi.value));
    } catch (const NumericError& e) {
      add(name, false, 0, 0, e.what());
    }
  }

  // Initial density: range, moments, BV sum, support, mu_I per x.
  {
    long ax = nx4, aa = na4;
    apply_budget({&ax, &aa});
    auto xs = linspace(0, 1, ax);
    auto as = linspace(0, n.a_max, aa);
    double da_s = as.size() > 1 ? as[1] - as[0] : n.delta_a;
    Worst lo, hi;
    try {
      std::vector<double> sup_a(as.size(), 0.0);       // sup_x rho_I per age sample
      std::vector<double> prev_col, col(as.size());
      KahanSum bv;
      double mu_min = 1e300, mu_max = -1e300;
      std::string mu_where_min;
      for (size_t ix = 0; ix < xs.size(); ++ix) {
        double x = xs[ix];
        KahanSum mu;
        for (size_t ia = 0; ia < as.size(); ++ia) {
          double v = p.rho_I.eval(x, as[ia], 0);
          col[ia] = v;
          std::string where = strfmt("x=%.6g,a=%.6g", x, as[ia]);
          lo.consider(v, false, where);
          hi.consider(v, true, where);
          sup_a[ia] = std::max(sup_a[ia], v);
          double w = (ia == 0 || ia + 1 == as.size()) ? 0.5 * da_s : da_s;
          mu.add(w * v);
        }
        double mu_x = mu.value();
        if (mu_x < mu_min) {
          mu_min = mu_x;
          mu_where_min = strfmt("x=%.6g", x);
        }
        mu_max = std::max(mu_max, mu_x);
      }
      // Age BV: sum over age increments of sup_x |difference| on columns.
      // (One more pass; the x-sup sits inside the age integral.)
      std::vector<double> sup_diff(as.size() > 0 ? as.size() - 1 : 0, 0.0);
      for (size_t ix = 0; ix < xs.size(); ++ix) {
        double x = xs[ix];
        double prev = p.rho_I.eval(x, as[0], 0);
        for (size_t ia = 1; ia < as.size(); ++ia) {
          double cur = p.rho_I.eval(x, as[ia], 0);
          sup_diff[ia - 1] = std::max(sup_diff[ia - 1], std::abs(cur - prev));
          prev = cur;
        }
      }
      for (double v : sup_diff) bv.add(v);
      rep.rhoI_bv = bv.value();
      for (int pw = 0; pw < 3; ++pw) {
        KahanSum m;
        for (size_t ia = 0; ia < as.size(); ++ia) {
          double w = (ia == 0 || ia + 1 == as.size()) ? 0.5 * da_s : da_s;
          m.add(w * sup_a[ia] * std::pow(as[ia], pw));
        }
        rep.rhoI_moment[pw] = m.value();
      }
      rep.mu_I_min_obs = mu_min;
      rep.mu_I_max_obs = mu_max;

      add("rhoI_range", lo.value >= 0.0 && hi.value <= b.M,
          lo.value < 0 ? lo.value : hi.value, b.M,
          strfmt("range [%.6g, %.6g]", lo.value, hi.value));
      add("muI_range", mu_min > 0.0 && mu_max < 1.0, mu_min, 1.0,
          strfmt("mu_I in [%.6g, %.6g], min at %s", mu_min, mu_max, mu_where_min.c_str()));
      add("muI_min_declared", mu_min >= b.mu_I_min, mu_min, b.mu_I_min,
          "sampled mu_I dropped below the declared mu_I_min");
      add("rhoI_moments_finite",
          std::isfinite(rep.rhoI_moment[0]) && std::isfinite(rep.rhoI_moment[1]) &&
              std::isfinite(rep.rhoI_moment[2]) && std::isfinite(rep.rhoI_bv),
          rep.rhoI_moment[2], 0.0, "age moments p=0,1,2 and the BV sum must be finite");

      // Support confined to [0, a_max]: probe the band above the cutoff.
      Worst tail;
      auto as_tail = linspace(n.a_max + da_s, 2.0 * n.a_max, std::min<long>(aa, 2049));
      for (double a : as_tail)
        for (size_t ix = 0; ix < xs.size(); ix += 4)
          tail.consider(p.rho_I.eval(xs[ix], a, 0), true, strfmt("a=%.6g", a));
      add("rhoI_support", tail.value <= n.tol_age, tail.value, n.tol_age,
          "rho_I must vanish (below tol_age) beyond A_max; truncation is not silent");
    } catch (const NumericError& e) {
      add("rhoI_range", false, 0, 0, e.what());
    }
  }

  // Past positions: unit norm and Lipschitz samples on t <= 0.
  {
    double eps_hist = p.epsilon;
    long ax = nx4, at = nt;
    apply_budget({&ax, &at});
    auto xs = linspace(0, 1, ax);
    double t_hist = (static_cast<double>(n.jmax()) + 2.0) * eps_hist * n.delta_a + 1e-12;
    auto ts = linspace(-t_hist, 0.0, at);
    Worst dev;
    try {
      double czp_max = 0;
      KahanSum czp_sq;
      for (size_t ix = 0; ix < xs.size(); ++ix) {
        double x = xs[ix];
        double cx = 0;
        std::vector<double> prev(p.z_p.size());
        for (size_t it = 0; it < ts.size(); ++it) {
          double norm2 = 0;
          for (size_t c = 0; c < p.z_p.size(); ++c) {
            double v = p.z_p[c].eval(x, 0, ts[it]);
            norm2 += v * v;
            if (it > 0) {
              double rate = std::abs(v - prev[c]) / (ts[it] - ts[it - 1]);
              cx = std::max(cx, rate);
            }
            prev[c] = v;
          }
          dev.consider(std::abs(std::sqrt(norm2) - 1.0), true,
                       strfmt("x=%.6g,t=%.6g", x, ts[it]));
        }
        czp_max = std::max(czp_max, cx);
        double w = (ix == 0 || ix + 1 == xs.size()) ? 0.5 : 1.0;
        czp_sq.add(w * cx * cx / static_cast<double>(xs.size() - 1));
      }
      rep.czp_max = czp_max;
      rep.czp_l2 = std::sqrt(std::max(0.0, czp_sq.value()));
      add("zp_unit_norm", dev.value <= 1e-9, dev.value, 1e-9,
          strfmt("worst | |z_p|-1 | at %s", dev.where.c_str()));
      add("zp_lipschitz_finite", std::isfinite(rep.czp_l2), rep.czp_l2, 0.0,
          "divided-difference Lipschitz samples of z_p");
    } catch (const NumericError& e) {
      add("zp_unit_norm", false, 0, 0, e.what());
    }
  }

  add("delta_t_cfl", true, p.epsilon * n.delta_a, 0.0, "delta_t = epsilon*delta_a, derived");

  rep.passed = true;
  for (const auto& c : rep.checks) rep.passed = rep.passed && c.pass;
  return rep;
}

namespace {

RateExpr parse_named(ConfigFile& cfg, const std::string& key, bool allow_x, bool allow_a,
                     bool allow_t) {
  std::string src = cfg.get_string("model", key);
  RateExpr e = [&] {
    try {
      return RateExpr::parse(src);
    } catch (const ConfigError& err) {
      throw ConfigError("in expression '" + key + "': " + err.what());
    }
  }();
  if (!allow_x && e.uses(RateExpr::Var::X))
    throw ConfigError("expression '" + key + "' may not depend on x");
  if (!allow_a && e.uses(RateExpr::Var::A))
    throw ConfigError("expression '" + key + "' may not depend on a");
  if (!allow_t && e.uses(RateExpr::Var::T))
    throw ConfigError("expression '" + key + "' may not depend on t");
  return e;
}

double derive_a_max(const Bounds& b, double delta_a, double tol_age) {
  for (long k = 2; k <= 100000000L; ++k) {
    double A = static_cast<double>(k) * delta_a;
    if (b.beta_max * (1.0 + A) * std::exp(-b.zeta_min * A) / b.zeta_min < tol_age) return A;
  }
  throw ConfigError("cannot derive A_max from tol_age; rates decay too slowly");
}

}  // namespace

Problem load_problem(const std::string& config_text) {
  ConfigFile cfg = ConfigFile::parse(config_text);

  if (cfg.has("numerics", "delta_t") || cfg.has("model", "delta_t") || cfg.has("run", "delta_t"))
    throw ConfigError("delta_t is derived by CFL (delta_t = epsilon*delta_a); do not set it");

  Problem prob;
  ModelProblem& m = prob.model;

  long d = cfg.get_int("model", "d");
  if (d < 2) throw ConfigError("d must be an integer >= 2");
  m.d = static_cast<int>(d);

  m.beta = parse_named(cfg, "beta", true, false, true);
  m.zeta = parse_named(cfg, "zeta", true, true, true);
  m.beta0 = parse_named(cfg, "beta0", true, false, true);
  m.zeta0 = parse_named(cfg, "zeta0", true, true, true);
  m.rho_I = parse_named(cfg, "rho_I", true, true, false);
  for (int c = 1; c <= m.d; ++c)
    m.z_p.push_back(parse_named(cfg, strfmt("zp_%d", c), true, false, true));

  m.epsilon = cfg.get_real("model", "epsilon");
  if (m.epsilon <= 0) throw ConfigError("epsilon must be positive");
  m.T = cfg.get_real("model", "T");
  if (m.T <= 0) throw ConfigError("T must be positive");

  m.bounds.beta_min = cfg.get_real("model", "beta_min");
  m.bounds.beta_max = cfg.get_real("model", "beta_max");
  m.bounds.zeta_min = cfg.get_real("model", "zeta_min");
  m.bounds.zeta_max = cfg.get_real("model", "zeta_max");
  m.bounds.M = cfg.get_real("model", "M");
  m.bounds.mu_I_min = cfg.get_real("model", "mu_I_min");
  m.bounds.mu0_min = cfg.get_real("model", "mu0_min");

  NumericsParams& num = prob.num;
  num.delta_a = cfg.get_real("numerics", "delta_a");
  if (num.delta_a <= 0) throw ConfigError("delta_a must be positive");
  long nx = cfg.get_int("numerics", "Nx");
  if (nx < 2) throw ConfigError("Nx must be >= 2");
  num.nx = static_cast<int>(nx);
  num.tol_age = cfg.get_real("numerics", "tol_age", 1e-12);
  if (cfg.has("numerics", "A_max")) {
    num.a_max = cfg.get_real("numerics", "A_max");
    if (num.a_max <= 0) throw ConfigError("A_max must be positive");
  } else {
    num.a_max = derive_a_max(m.bounds, num.delta_a, num.tol_age);
  }
  num.tol_grad = cfg.get_real("numerics", "tol_grad", 1e-10);
  num.max_inner = cfg.get_int("numerics", "max_inner", 10000);
  num.limit_dt_safety = cfg.get_real("numerics", "limit_dt_safety", 0.4);
  num.armijo_c = cfg.get_real("numerics", "armijo_c", 1e-4);
  num.armijo_backtrack = cfg.get_real("numerics", "armijo_backtrack", 0.5);
  std::string solver = cfg.get_string("numerics", "inner_solver", "newton_pg");
  if (solver == "newton_pg")
    num.precond_inner = true;
  else if (solver == "pg")
    num.precond_inner = false;
  else
    throw ConfigError("inner_solver must be 'newton_pg' or 'pg'");

  RunOptions& run = prob.run;
  run.out_dir = cfg.get_string("run", "out", "");
  run.format = cfg.get_string("run", "format", "csv");
  if (run.format != "csv" && run.format != "json")
    throw ConfigError("format must be 'csv' or 'json'");
  run.stride = static_cast<int>(cfg.get_int("run", "stride", 1));
  if (run.stride < 1) throw ConfigError("stride must be >= 1");
  run.threads = static_cast<int>(cfg.get_int("run", "threads", 1));
  if (run.threads < 1) throw ConfigError("threads must be >= 1");
  if (cfg.has("run", "eps_sweep")) run.eps_sweep = cfg.get_real_list("run", "eps_sweep");
  if (cfg.has("run", "da_sweep")) run.da_sweep = cfg.get_real_list("run", "da_sweep");
  run.psi = cfg.get_string("run", "psi", "exp(-a)");
  RateExpr::parse(run.psi);  // fail early on bad test functions
  run.layer_tmax = cfg.get_real("run", "layer_tmax", 6.0);

  cfg.reject_unknown_keys();

  prob.validation = validate_hypotheses(prob.model, prob.num);
  if (!prob.validation.passed) {
    const CheckResult* f = prob.validation.first_failure();
    throw ConfigError(strfmt("hypothesis check '%s' failed: %s (value %.6g, threshold %.6g)",
                             f->name.c_str(), f->detail.c_str(), f->value, f->threshold));
  }
  return prob;
}

Problem load_problem_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_problem(ss.str());
}

}  // namespace bondflow
