// Acceptance run: one [PASS]/[FAIL] line per criterion, with the measured
// quantities that decided it. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lowrank_sdp/lowrank_sdp.hpp"
#include "support/checks.hpp"
#include "support/oracle.hpp"

using namespace lowrank_sdp;
using lowrank_sdp::testing::convex_oracle;
using lowrank_sdp::testing::random_matrix;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED{" << what << "}";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SolverConfig pgd_config(double eps, double gamma, Index k, std::uint64_t seed, long max_iters = 100000) {
  SolverConfig cfg;
  cfg.eps = eps;
  cfg.gamma = gamma;
  cfg.k = k;
  cfg.seed = seed;
  cfg.max_iters = max_iters;
  cfg.pgd = PgdConfig{};
  return cfg;
}

// An eps-FOSP collected for the residue-bound criterion.
struct Fosp {
  std::string label;
  PenaltyProblem problem;
  Matrix u;
  double eps;
  BoundMode mode;
};

std::vector<Fosp> g_fosps;

void record_fosp(const std::string& label, const PenaltyProblem& pp, const Matrix& u, double eps, BoundMode mode) {
  if (gradient(pp, u).norm() <= eps) g_fosps.push_back({label, pp, u, eps, mode});
}

// Compact-style instances shared by criteria 4 and 5: Gaussian cost, m = 5
// normalized constraints consistent with a trace-n PSD matrix, plus the trace
// compactifier.
PenaltyProblem compact_instance(std::uint64_t s, Index n) {
  return lowrank_sdp::testing::random_compact_problem(n, 5, 2.0, 4000 + s);
}

void bad_sdp_reproduction(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  for (Index n : {4, 8, 16}) {
    const auto bad = build_bad_sdp(n);
    const Matrix& ub = bad.u_bar.matrix();
    const double g = gradient(bad.problem, ub).norm();
    const double h = min_hessian_eig(bad.problem, ub).lambda_min;
    const double eps2 = 6.0 / static_cast<double>(n - 1);
    const double expect = (5.0 / 18.0) * static_cast<double>((n - 1) * (n - 1)) * eps2;
    const double l = objective(bad.problem, ub);
    const double lopt = objective(bad.problem, bad.u_opt.matrix());
    const double dual = certify(bad.problem, bad.u_bar, 1e-8, 1.0).dual_min_eig;
    o.detail << " n=" << n << ":grad=" << g << ",hmin=" << h << ",L=" << l << ",Lopt=" << lopt << ",dual=" << dual;
    o.require(g <= 1e-10, "grad n=" + std::to_string(n));
    o.require(h >= -1e-8, "hessian n=" + std::to_string(n));
    o.require(std::abs(l - expect) <= 1e-9 * expect, "L(Ubar) n=" + std::to_string(n));
    o.require(std::abs(lopt) <= 1e-12, "L(Uopt) n=" + std::to_string(n));
    o.require(std::abs(dual + 2.0) <= 1e-9, "dual n=" + std::to_string(n));
  }
  const double t = seconds_since(t0);
  o.detail << " time=" << t << "s";
  o.require(t < 5.0, "runtime");
}

void constrained_counterexample(Outcome& o) {
  for (Index n : {4, 6, 10}) {
    const auto ce = build_constrained_ce(n);
    const CeReport rep = verify_constrained_ce(ce, 1e-10, 100, static_cast<std::uint64_t>(n));
    const double nn = static_cast<double>(n);
    const std::string tag = " n=" + std::to_string(n);
    o.detail << tag << ":<C,UU'>=" << rep.objective_u << ",<C,X0>=" << rep.objective_x0
             << ",min_tangent_ratio=" << rep.min_tangent_ratio;
    o.require(std::abs(rep.objective_u - (nn - 2.0)) <= 1e-10, "<C,UU'> = n-2" + tag);
    // Stated target; the construction gives -(n-2)^2/n, see README.
    o.require(std::abs(rep.objective_x0 - (nn - 2.0) * (nn - 2.0) / nn) <= 1e-10, "<C,X0> = (n-2)^2/n" + tag);
    for (const auto& c : rep.checks) {
      if (c.name.rfind("feasibility", 0) == 0 || c.name == "X0 positive semidefinite" ||
          c.name == "tangent increase positive" || c.name.rfind("[1, -1]", 0) == 0) {
        o.require(c.passed, c.name + tag);
      }
    }
    o.require(rep.min_tangent_increase > 0.0, "tangent positive" + tag);
    o.require(std::abs(rep.min_tangent_ratio - nn) <= 1e-8, "tangent ratio = n" + tag);
  }
}

void derivative_correctness(Outcome& o) {
  double g = 0.0, h = 0.0, s = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto e = lowrank_sdp::testing::derivative_errors(seed);
    g = std::max(g, e.gradient);
    h = std::max(h, e.hessian);
    s = std::max(s, e.symmetry);
  }
  o.detail << " max_grad_rel=" << g << " max_hess_rel=" << h << " max_asym=" << s;
  o.require(g <= 1e-6, "gradient");
  o.require(h <= 1e-5, "hessian-vector");
  o.require(s <= 1e-10, "symmetry");
}

void rank_deficiency(Outcome& o) {
  int converged = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Index n = 6 + static_cast<Index>(s % 3);
    const auto pp = compact_instance(s, n);
    const double eps = 1e-9;
    const auto res = pgd(pp, initial_point(pp, 4, s), pgd_config(eps, 1.0, 4, s));
    record_fosp("rank seed " + std::to_string(s), pp, res.point.matrix(), eps, BoundMode::compact);
    if (res.trace.status != SolveStatus::sosp_reached) {
      o.detail << " seed" << s << ":" << to_string(res.trace.status);
      continue;
    }
    ++converged;
    const double r = rank_deficiency_report(res.point).sigma_k_over_sigma_1;
    worst = std::max(worst, r);
    o.require(r <= 1e-4, "sigma_k/sigma_1 seed " + std::to_string(s) + " = " + std::to_string(r));
  }
  o.detail << " converged=" << converged << "/20 worst_ratio=" << worst;
  o.require(converged > 0, "no converged SOSP");
}

void global_optimality(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0, worst_map = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Index n = 4 + static_cast<Index>(s % 5);
    const auto pp = compact_instance(s, n);
    const double eps = 1e-9;
    const auto res = pgd(pp, initial_point(pp, 4, 100 + s), pgd_config(eps, 1.0, 4, 100 + s));
    record_fosp("oracle seed " + std::to_string(s), pp, res.point.matrix(), eps, BoundMode::compact);
    const Matrix& u = res.point.matrix();
    const double f = convex_objective_and_grad(pp, u * u.transpose()).value;
    const auto oracle = convex_oracle(pp, 100000, 1e-9);
    const double gap = std::abs(f - oracle.value) / (1.0 + std::abs(f));
    worst = std::max(worst, gap);
    worst_map = std::max(worst_map, oracle.gradient_mapping);
    o.require(res.trace.status == SolveStatus::sosp_reached, "solver status seed " + std::to_string(s));
    o.require(gap <= 1e-5, "gap seed " + std::to_string(s) + " = " + std::to_string(gap));
  }
  const double t = seconds_since(t0);
  o.detail << " worst_scaled_gap=" << worst << " oracle_max_grad_map=" << worst_map << " time=" << t << "s";
  o.require(t < 120.0, "runtime");
}

void maxcut_end_to_end(Outcome& o) {
  const double mu = 50.0, sigma = 1e-3, eps = 1e-5, gamma = 1.0;
  const std::vector<std::pair<std::string, Graph>> graphs = {{"C4", Graph::cycle(4)},
                                                             {"K33", Graph::complete_bipartite(3, 3)}};
  for (const auto& [name, g] : graphs) {
    const auto pp = build_maxcut(g, mu, sigma, 17);
    PlannerConfig pc;
    pc.gamma = gamma;
    const PlannerOutput plan = plan_parameters(pp, pc);
    const Index k = std::min<Index>(plan.k_used, g.n + 1);
    const auto res = pgd(pp, initial_point(pp, k, 17), pgd_config(eps, gamma, k, 17));
    const Matrix& u = res.point.matrix();
    record_fosp("maxcut " + name, pp, u, eps, BoundMode::compact);
    const Certificate c = certify(pp, res.point, eps, gamma);
    const Vector diag = (u * u.transpose()).diagonal();
    const double dev = (diag.array() - 1.0).abs().maxCoeff();
    o.detail << " " << name << ":k=" << k << "(planner " << plan.k_used << "),status=" << to_string(res.trace.status)
             << ",grad=" << c.grad_norm << ",hmin=" << c.hess_min_eig << ",max|Xii-1|=" << dev
             << ",dual=" << c.dual_min_eig;
    o.require(c.is_eps_gamma_sosp, name + " SOSP");
    o.require(dev <= 5.0 / mu, name + " diagonal");
    o.require(c.dual_min_eig >= -gamma * std::sqrt(eps), name + " dual certificate");
  }
}

void residue_bounds(Outcome& o) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto obs = lowrank_sdp::testing::random_observations(8, 8, 2, 0.6, 5000 + s);
    const auto pp = build_matcomp(obs, 10.0, 0.0, s);
    const double eps = 1e-6;
    const auto res = pgd(pp, initial_point(pp, 4, s), pgd_config(eps, 1.0, 4, s));
    record_fosp("matcomp seed " + std::to_string(s), pp, res.point.matrix(), eps, BoundMode::pd_cost);
  }
  int violations = 0;
  double worst = 0.0;
  for (const auto& f : g_fosps) {
    const double r = penalty_residue(f.problem, f.u).norm();
    const double b = residue_bound_B(f.problem, f.eps, f.mode);
    worst = std::max(worst, r / b);
    if (r > b) {
      ++violations;
      o.detail << " violation[" << f.label << ": r=" << r << " B=" << b << "]";
    }
  }
  o.detail << " fosps=" << g_fosps.size() << " violations=" << violations << " max_r_over_B=" << worst;
  o.require(g_fosps.size() >= 40, "too few eps-FOSPs collected");
  o.require(violations == 0, "residue bound");
}

void lipschitz(Outcome& o) {
  int violations = 0;
  double gmax = 0.0, hmax = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Index n = 3 + static_cast<Index>(s % 4), k = 1 + static_cast<Index>(s % 3);
    const auto pp = lowrank_sdp::testing::random_problem(n, 2 + static_cast<Index>(s % 4), 6000 + s, s % 2 == 0, s % 3 == 0);
    const double tau = 0.5 + 0.5 * static_cast<double>(s % 4);
    const auto bounds = lipschitz_bounds(pp, tau);
    const auto smp = lowrank_sdp::testing::sample_lipschitz(pp, k, tau, 100, 7000 + s);
    gmax = std::max(gmax, smp.grad_ratio / bounds.l);
    hmax = std::max(hmax, smp.hess_ratio / bounds.rho);
    if (smp.grad_ratio > bounds.l) ++violations;
    if (smp.hess_ratio > bounds.rho) ++violations;
  }
  o.detail << " violations=" << violations << " max_grad_ratio/l=" << gmax << " max_hess_ratio/rho=" << hmax;
  o.require(violations == 0, "Lipschitz");
}

void goe_calibration(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = calibrate_c0(50, 10, 1.0, 200, 9000);
  const auto at_hat = calibrate_c0(50, 10, 1.0, 200, 9000, base.c0_hat);
  double lo = base.c0_hat, hi = base.c0_hat;
  for (std::uint64_t b = 1; b <= 4; ++b) {
    const double c = calibrate_c0(50, 10, 1.0, 200, 9000 + 97 * b).c0_hat;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  const double t = seconds_since(t0);
  o.detail << " c0_hat=" << base.c0_hat << " violation_rate_at_c0_hat=" << at_hat.violation_rate << " batch_range=[" << lo
           << "," << hi << "] time=" << t << "s";
  o.require(at_hat.violation_rate == 0.0, "violations at c0_hat");
  o.require(hi <= 2.0 * lo, "batch stability");
  o.require(t < 60.0, "runtime");
}

void escape_vs_trap(Outcome& o) {
  const Index n = 5;
  const auto bad = build_bad_sdp(n);
  int reached = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto res = pgd(bad.problem, initial_point(bad.problem, n + 1, s), pgd_config(1e-5, 1.0, n + 1, s));
    const double l = objective(bad.problem, res.point.matrix());
    worst = std::max(worst, l);
    if (l <= 1e-6 && res.trace.status != SolveStatus::diverged) ++reached;
  }
  CounterRng rng(derive_seed(10, "trap-noise"));
  Matrix noise = random_matrix(n, n - 1, rng);
  noise *= 1e-6 / noise.norm();
  const auto trap = pgd(bad.problem, Matrix(bad.u_bar.matrix() + noise), pgd_config(1e-5, 1.0, n - 1, 10));
  const double lt = objective(bad.problem, trap.point.matrix());
  const double lb = objective(bad.problem, bad.u_bar.matrix());
  o.detail << " full_rank_reached=" << reached << "/10 worst_L=" << worst << " trap_status=" << to_string(trap.trace.status)
           << " trap_L=" << lt << " L(Ubar)=" << lb;
  o.require(reached == 10, "full-rank escape");
  o.require(trap.trace.status == SolveStatus::sosp_reached, "trap declares SOSP");
  o.require(std::abs(lt - lb) <= 1e-3, "trap objective");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"1 bad-SDP reproduction", bad_sdp_reproduction},
      {"2 constrained counterexample", constrained_counterexample},
      {"3 derivative correctness", derivative_correctness},
      {"4 rank deficiency of SOSPs", rank_deficiency},
      {"5 global-optimality agreement", global_optimality},
      {"6 Max-Cut end-to-end", maxcut_end_to_end},
      {"7 residue bounds", residue_bounds},
      {"8 Lipschitz bounds", lipschitz},
      {"9 GOE calibration", goe_calibration},
      {"10 PGD escape vs trap", escape_vs_trap},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    o.detail.precision(6);
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %s:%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
