// Command-line front end: solve, certify, plan, generate, calibrate.
//
// Exit codes: 0 success (SOSP reached / certificate holds), 1 SOSP not
// reached or certificate fails, 2 input error, 3 divergence.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lowrank_sdp/lowrank_sdp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lowrank_sdp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotReached = 1;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every knob of every command. Zero-valued n, k, sigma_g and trace_bound
// select the command's default.
struct RunConfig {
  std::string problem;
  std::string gen;
  std::string graph;
  std::string obs;
  long n = 0;
  long k = 0;
  double mu = 10.0;
  double sigma_g = 0.0;
  double eps = 1e-6;
  double gamma = 1.0;
  double delta = 0.1;
  double c0 = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "compact";
  std::string init = "random";
  long max_iters = 100000;
  std::string out = "out";
  std::string point;
  long trials = 200;
  std::string step = "backtracking";
  std::string solver = "pgd";
  double trace_bound = 0.0;
};

json to_json(const RunConfig& c) {
  return json{{"problem", c.problem}, {"gen", c.gen},         {"graph", c.graph},       {"obs", c.obs},
              {"n", c.n},             {"k", c.k},             {"mu", c.mu},             {"sigma_g", c.sigma_g},
              {"eps", c.eps},         {"gamma", c.gamma},     {"delta", c.delta},       {"c0", c.c0},
              {"seed", c.seed},       {"mode", c.mode},       {"init", c.init},         {"max_iters", c.max_iters},
              {"out", c.out},         {"point", c.point},     {"trials", c.trials},     {"step", c.step},
              {"solver", c.solver},   {"trace_bound", c.trace_bound}};
}

template <class T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw InputError("config: top level must be a JSON object");
  const json known = to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw InputError("config: unknown key '" + key + "'");
  }
  try {
    take(j, "problem", c.problem);
    take(j, "gen", c.gen);
    take(j, "graph", c.graph);
    take(j, "obs", c.obs);
    take(j, "n", c.n);
    take(j, "k", c.k);
    take(j, "mu", c.mu);
    take(j, "sigma_g", c.sigma_g);
    take(j, "eps", c.eps);
    take(j, "gamma", c.gamma);
    take(j, "delta", c.delta);
    take(j, "c0", c.c0);
    take(j, "seed", c.seed);
    take(j, "mode", c.mode);
    take(j, "init", c.init);
    take(j, "max_iters", c.max_iters);
    take(j, "out", c.out);
    take(j, "point", c.point);
    take(j, "trials", c.trials);
    take(j, "step", c.step);
    take(j, "solver", c.solver);
    take(j, "trace_bound", c.trace_bound);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path + "': " + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  // Input paths in a config file are relative to the file itself.
  const fs::path base = fs::path(path).parent_path();
  for (std::string* p : {&c.problem, &c.graph, &c.obs, &c.point}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).string();
  }
  return c;
}

unsigned thread_cap() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("LOWRANK_SDP_THREADS");
  if (!env || !*env) return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw InputError(std::string("LOWRANK_SDP_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<unsigned>(v);
}

// A loaded or generated problem plus generator witnesses.
struct Instance {
  std::optional<PenaltyProblem> problem;
  std::optional<BadSdp> bad;
  std::optional<ConstrainedCe> ce;
  std::optional<Graph> graph;
};

Instance make_instance(const RunConfig& c) {
  if (c.problem.empty() == c.gen.empty()) throw UsageError("exactly one of --problem and --gen is required");
  Instance inst;
  if (!c.problem.empty()) {
    inst.problem = read_file<PenaltyProblem>(c.problem, [](std::istream& in) { return read_problem(in); });
    return inst;
  }
  if (c.n < 0) throw UsageError("--n must be positive");
  if (c.gen == "maxcut") {
    Graph g = c.graph.empty() ? Graph::cycle(c.n ? c.n : 8)
                              : read_file<Graph>(c.graph, [](std::istream& in) { return read_graph(in); });
    inst.problem = build_maxcut(g, c.mu, c.sigma_g, c.seed);
    inst.graph = std::move(g);
  } else if (c.gen == "matcomp") {
    const Index side = c.n ? c.n : 8;
    const ObservationSet obs = c.obs.empty()
                                   ? [&] {
                                       // Rank-2 side x side matrix, about 60% of entries observed.
                                       CounterRng rng(derive_seed(c.seed, "matcomp"));
                                       Matrix l(side, 2), r(2, side);
                                       for (Index i = 0; i < l.size(); ++i) l(i) = rng.normal();
                                       for (Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
                                       const Matrix m = l * r / std::sqrt(2.0);
                                       std::vector<Observation> e;
                                       for (Index i = 0; i < side; ++i)
                                         for (Index j = 0; j < side; ++j)
                                           if (rng.uniform() < 0.6) e.push_back({i, j, m(i, j)});
                                       if (e.empty()) e.push_back({0, 0, m(0, 0)});
                                       return ObservationSet(side, side, std::move(e));
                                     }()
                                   : read_file<ObservationSet>(c.obs, [](std::istream& in) { return read_observations(in); });
    inst.problem = build_matcomp(obs, c.mu, c.sigma_g, c.seed);
  } else if (c.gen == "bad-sdp") {
    inst.bad = build_bad_sdp(c.n ? c.n : 5);
    inst.problem = inst.bad->problem;
  } else if (c.gen == "constrained-ce") {
    inst.ce = build_constrained_ce(c.n ? c.n : 4);
    inst.problem = PenaltyProblem(inst.ce->cost, inst.ce->constraints, c.mu);
  } else {
    throw UsageError("unknown generator '" + c.gen + "' (maxcut, matcomp, bad-sdp, constrained-ce)");
  }
  return inst;
}

// Smallest k with k(k+1)/2 > m.
Index default_rank(Index m) {
  Index k = 1;
  while (k * (k + 1) / 2 <= m) ++k;
  return k;
}

Matrix initial_factor(const RunConfig& c, const Instance& inst, Index k) {
  const PenaltyProblem& pp = *inst.problem;
  if (c.init == "random") return initial_point(pp, k, c.seed);
  if (c.init == "ubar") {
    if (!inst.bad) throw UsageError("--init ubar requires --gen bad-sdp");
    if (k != pp.dim() - 1) throw UsageError("--init ubar requires k = n - 1 = " + std::to_string(pp.dim() - 1));
    return inst.bad->u_bar.matrix();
  }
  if (c.init.rfind("file:", 0) == 0) {
    Matrix u = read_file<Matrix>(c.init.substr(5), [](std::istream& in) { return read_matrix(in); });
    if (u.rows() != pp.dim() || u.cols() != k) {
      throw InputError("initial point is " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()) + ", expected " +
                       std::to_string(pp.dim()) + "x" + std::to_string(k));
    }
    return u;
  }
  throw UsageError("--init must be random, ubar or file:PATH");
}

std::optional<double> trace_bound_of(const RunConfig& c) {
  return c.trace_bound > 0.0 ? std::optional<double>(c.trace_bound) : std::nullopt;
}

BoundMode parse_mode(const std::string& m) {
  if (m == "compact") return BoundMode::compact;
  if (m == "pd-cost" || m == "pd_cost") return BoundMode::pd_cost;
  throw UsageError("--mode must be compact or pd-cost");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << text;
}

std::string matrix_text(const Matrix& m) {
  std::ostringstream os;
  write_matrix(os, m);
  return os.str();
}

int cmd_solve(const RunConfig& c) {
  const Instance inst = make_instance(c);
  const PenaltyProblem& pp = *inst.problem;
  if (c.k < 0) throw UsageError("--k must be positive");
  const Index k = c.k ? c.k : default_rank(pp.active_operator().size());
  const Matrix u0 = initial_factor(c, inst, k);

  SolverConfig cfg;
  cfg.eps = c.eps;
  cfg.gamma = c.gamma;
  cfg.max_iters = c.max_iters;
  cfg.seed = c.seed;
  cfg.k = k;
  if (c.step == "backtracking") {
    cfg.step_mode = StepMode::backtracking;
  } else if (c.step == "fixed") {
    cfg.step_mode = StepMode::fixed_1_over_l;
  } else {
    throw UsageError("--step must be backtracking or fixed");
  }
  if (c.solver == "pgd") {
    cfg.pgd = PgdConfig{};
    cfg.pgd->delta = c.delta;
  } else if (c.solver != "gd") {
    throw UsageError("--solver must be pgd or gd");
  }

  const SolveResult res = cfg.pgd ? pgd(pp, u0, cfg) : gd(pp, u0, cfg);
  CertifyOptions copts;
  copts.seed = c.seed;
  const Certificate cert = certify(pp, res.point, c.eps, c.gamma, trace_bound_of(c), copts);

  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_text(dir / "solution.txt", matrix_text(res.point.matrix()));
  write_text(dir / "certificate.json", to_json(cert).dump(2) + "\n");
  std::ostringstream trace;
  res.trace.write_csv(trace);
  write_text(dir / "trace.csv", trace.str());
  write_text(dir / "config.json", to_json(c).dump(2) + "\n");

  const auto& last = res.trace.records.back();
  json summary{{"status", to_string(res.trace.status)},
               {"iterations", res.trace.iterations},
               {"perturbations", res.trace.perturbations},
               {"escape_failed", res.trace.escape_failed},
               {"k", k},
               {"objective", last.objective},
               {"residue_norm", last.residue_norm},
               {"certificate", to_json(cert)}};
  std::cout << summary.dump(2) << '\n';

  if (res.trace.status == SolveStatus::diverged) return kExitDiverged;
  return cert.is_eps_gamma_sosp ? kExitOk : kExitNotReached;
}

int cmd_certify(const RunConfig& c) {
  const Instance inst = make_instance(c);
  const PenaltyProblem& pp = *inst.problem;
  Matrix u;
  if (!c.point.empty()) {
    u = read_file<Matrix>(c.point, [](std::istream& in) { return read_matrix(in); });
  } else if (c.init == "ubar" && inst.bad) {
    u = inst.bad->u_bar.matrix();
  } else {
    throw UsageError("certify requires --point FILE");
  }
  if (u.rows() != pp.dim()) {
    throw InputError("point has " + std::to_string(u.rows()) + " rows, problem side is " + std::to_string(pp.dim()));
  }
  CertifyOptions copts;
  copts.seed = c.seed;
  const Certificate cert = certify(pp, u, c.eps, c.gamma, trace_bound_of(c), copts);
  std::cout << to_json(cert).dump(2) << '\n';
  return cert.certificate_holds ? kExitOk : kExitNotReached;
}

int cmd_plan(const RunConfig& c) {
  const Instance inst = make_instance(c);
  PlannerConfig cfg;
  cfg.gamma = c.gamma;
  cfg.delta = c.delta;
  cfg.c0 = c.c0;
  cfg.mode = parse_mode(c.mode);
  if (c.sigma_g > 0.0) cfg.sigma_G = c.sigma_g;
  if (c.k > 0) cfg.k = c.k;
  const PlannerOutput out = plan_parameters(*inst.problem, cfg);
  std::cout << to_json(out).dump(2) << '\n';
  return kExitOk;
}

int cmd_generate(const RunConfig& c) {
  const Instance inst = make_instance(c);
  if (!c.problem.empty()) throw UsageError("generate takes --gen, not --problem");
  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_text(dir / "problem.txt", problem_to_string(*inst.problem));
  json summary{{"generator", c.gen},
               {"n", inst.problem->dim()},
               {"m", inst.problem->op().size()},
               {"has_compactifier", inst.problem->op().compactifier().has_value()},
               {"problem", (dir / "problem.txt").string()}};
  int code = kExitOk;
  if (inst.bad) {
    write_text(dir / "ubar.txt", matrix_text(inst.bad->u_bar.matrix()));
    write_text(dir / "uopt.txt", matrix_text(inst.bad->u_opt.matrix()));
    summary["eps_bad"] = inst.bad->eps_bad;
  }
  if (inst.ce) {
    write_text(dir / "u.txt", matrix_text(inst.ce->u.matrix()));
    write_text(dir / "w.txt", matrix_text(Matrix(inst.ce->w)));
    write_text(dir / "x0.txt", matrix_text(inst.ce->x0));
    write_text(dir / "d.txt", matrix_text(inst.ce->d));
    const CeReport rep = verify_constrained_ce(*inst.ce, 1e-10, 100, c.seed);
    json checks = json::array();
    for (const auto& ch : rep.checks) checks.push_back({{"name", ch.name}, {"residual", ch.residual}, {"passed", ch.passed}});
    summary["verification"] = {{"passed", rep.passed()},
                               {"objective_u", rep.objective_u},
                               {"objective_x0", rep.objective_x0},
                               {"min_tangent_ratio", rep.min_tangent_ratio},
                               {"checks", checks}};
    if (!rep.passed()) code = kExitNotReached;
  }
  std::cout << summary.dump(2) << '\n';
  return code;
}

int cmd_calibrate(const RunConfig& c) {
  const Index n = c.n ? c.n : 50;
  const Index k = c.k ? c.k : std::min<Index>(10, n);
  const double sigma = c.sigma_g > 0.0 ? c.sigma_g : 1.0;
  if (c.trials < 1 || c.trials > std::numeric_limits<int>::max()) throw UsageError("--trials must be positive");
  const CalibrationResult r = calibrate_c0(n, k, sigma, static_cast<int>(c.trials), c.seed, c.c0, thread_cap());
  json j = to_json(r);
  j["n"] = n;
  j["k"] = k;
  j["sigma_G"] = sigma;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

// Binds a flag to a field of the command-line RunConfig and remembers how to
// copy it onto the resolved config when the flag was given.
struct Bindings {
  RunConfig cli;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> list;

  template <class T>
  void add(CLI::App& app, const std::string& flag, T RunConfig::*field, const std::string& help) {
    CLI::Option* o = app.add_option(flag, cli.*field, help);
    list.emplace_back(o, [this, field](RunConfig& dst) { dst.*field = cli.*field; });
  }

  void apply(RunConfig& dst) const {
    for (const auto& [opt, copy] : list)
      if (opt->count() > 0) copy(dst);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank penalized SDP solver and certificate tools"};
  app.require_subcommand(1);
  app.fallthrough();
  auto* solve = app.add_subcommand("solve", "run GD/PGD and certify the result");
  auto* certify_cmd = app.add_subcommand("certify", "certify a given factor");
  auto* plan = app.add_subcommand("plan", "choose B, k and eps");
  auto* generate = app.add_subcommand("generate", "write a generated problem and its witnesses");
  auto* calibrate = app.add_subcommand("calibrate", "estimate c0 from GOE draws");

  Bindings b;
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration; flags override it");
  b.add(app, "--problem", &RunConfig::problem, "problem file");
  b.add(app, "--gen", &RunConfig::gen, "generator: maxcut, matcomp, bad-sdp, constrained-ce");
  b.add(app, "--graph", &RunConfig::graph, "edge list for maxcut");
  b.add(app, "--obs", &RunConfig::obs, "observation file for matcomp");
  b.add(app, "--n", &RunConfig::n, "generator size");
  b.add(app, "--k", &RunConfig::k, "factor rank");
  b.add(app, "--mu", &RunConfig::mu, "penalty weight");
  b.add(app, "--sigma-g", &RunConfig::sigma_g, "GOE perturbation scale");
  b.add(app, "--eps", &RunConfig::eps, "gradient tolerance");
  b.add(app, "--gamma", &RunConfig::gamma, "curvature parameter");
  b.add(app, "--delta", &RunConfig::delta, "failure probability");
  b.add(app, "--c0", &RunConfig::c0, "least-singular-value constant");
  b.add(app, "--seed", &RunConfig::seed, "root seed");
  b.add(app, "--mode", &RunConfig::mode, "planner mode: compact or pd-cost");
  b.add(app, "--init", &RunConfig::init, "random, ubar or file:PATH");
  b.add(app, "--max-iters", &RunConfig::max_iters, "iteration cap");
  b.add(app, "--out", &RunConfig::out, "output directory");
  b.add(app, "--point", &RunConfig::point, "factor to certify");
  b.add(app, "--trials", &RunConfig::trials, "calibration trials");
  b.add(app, "--step", &RunConfig::step, "backtracking or fixed");
  b.add(app, "--solver", &RunConfig::solver, "pgd or gd");
  b.add(app, "--trace-bound", &RunConfig::trace_bound, "trace bound for the gap estimate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    b.apply(cfg);
    if (*solve) return cmd_solve(cfg);
    if (*certify_cmd) return cmd_certify(cfg);
    if (*plan) return cmd_plan(cfg);
    if (*generate) return cmd_generate(cfg);
    if (*calibrate) return cmd_calibrate(cfg);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitInput;
  } catch (const PlannerError& e) {
    std::cerr << "planner error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
