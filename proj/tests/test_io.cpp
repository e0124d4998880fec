#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lowrank_sdp/lowrank_sdp.hpp"
#include "support/oracle.hpp"

using namespace lowrank_sdp;
using lowrank_sdp::testing::random_matrix;

namespace {

SparseSymmetric random_sparse(Index n, double density, CounterRng& rng) {
  std::vector<SparseEntry> e;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i <= j; ++i)
      if (rng.uniform() < density) e.push_back({i, j, rng.normal() * std::pow(10.0, 6.0 * rng.uniform() - 3.0)});
  return SparseSymmetric(n, std::move(e));
}

// Mixes every header variant: no compactifier, penalized compactifier,
// carried-only compactifier, GOE perturbation and explicit perturbation.
PenaltyProblem random_instance(std::uint64_t seed) {
  CounterRng rng(seed);
  const Index n = 1 + static_cast<Index>(rng.next_u64() % 7);
  const Index m = static_cast<Index>(rng.next_u64() % 6);
  std::vector<SparseSymmetric> mats;
  Vector b(m);
  for (Index i = 0; i < m; ++i) {
    mats.push_back(random_sparse(n, 0.5, rng));
    b[i] = rng.normal() / 3.0;
  }
  const int variant = static_cast<int>(seed % 5);
  std::optional<Compactifier> comp;
  if (variant == 1 || variant == 2 || variant == 3) {
    comp = Compactifier{SparseSymmetric::identity(n).scaled(0.5 + rng.uniform()), static_cast<double>(n) * rng.uniform()};
  }
  ConstraintOperator op(n, std::move(mats), std::move(b), comp);
  const SparseSymmetric cost = random_sparse(n, 0.6, rng);
  const double mu = rng.uniform() * 100.0;
  switch (variant) {
    case 3: return PenaltyProblem::with_goe(cost, std::move(op), mu, GoeSpec{n, 0.1 * rng.uniform() + 1e-3, rng.next_u64()}, true);
    case 4: return PenaltyProblem(cost, std::move(op), mu, random_sparse(n, 0.7, rng), false);
    default: return PenaltyProblem(cost, std::move(op), mu, std::nullopt, variant == 1);
  }
}

template <class F>
InputError capture(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e;
  }
  ADD_FAILURE() << "no InputError thrown";
  return InputError("none");
}

}  // namespace

TEST(ProblemFormat, RoundTripRandomInstances) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PenaltyProblem pp = random_instance(s);
    const std::string text = problem_to_string(pp);
    const PenaltyProblem back = problem_from_string(text);
    EXPECT_TRUE(back == pp) << "seed " << s << "\n" << text;
    EXPECT_EQ(problem_to_string(back), text) << "seed " << s;
  }
}

TEST(ProblemFormat, RoundTripGenerators) {
  const auto bad = build_bad_sdp(4);
  EXPECT_TRUE(problem_from_string(problem_to_string(bad.problem)) == bad.problem);
  const auto mc = build_maxcut(Graph::cycle(5), 3.0, 0.01, 8);
  const auto mc_back = problem_from_string(problem_to_string(mc));
  EXPECT_TRUE(mc_back == mc);
  EXPECT_TRUE(*mc_back.perturbation() == *mc.perturbation());
}

TEST(ProblemFormat, HeaderLayout) {
  const auto mc = build_maxcut(Graph(2, {{0, 1, 1.0}}), 2.5, 0.0, 0);
  const std::string text = problem_to_string(mc);
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "2 2 2.5 0 0 1");
  std::getline(is, line);
  EXPECT_EQ(line, "MAT cost");
  EXPECT_NE(text.find("MAT A0\n"), std::string::npos);
  EXPECT_NE(text.find("MAT 2\n1 1 1\nEND\n"), std::string::npos);
  EXPECT_NE(text.find("RHS 1 1\n"), std::string::npos);
  EXPECT_NE(text.find("RHS0 2\n"), std::string::npos);
}

TEST(ProblemFormat, CommentsAndLayoutFreedom) {
  const std::string text =
      "# a 2x2 problem\n"
      "2 1 1 0 0 0   # header\n"
      "MAT cost\n0 0 1\n1 1 1\nEND\n"
      "MAT 1\n  0 1 0.5\nEND\n"
      "RHS\n 3\n";
  const PenaltyProblem pp = problem_from_string(text);
  EXPECT_EQ(pp.dim(), 2);
  EXPECT_EQ(pp.op().size(), 1);
  EXPECT_EQ(pp.op().rhs()[0], 3.0);
  EXPECT_EQ(pp.op().mats()[0].to_dense()(1, 0), 0.5);
}

TEST(ProblemFormat, ErrorsCarryPosition) {
  const InputError bad_number = capture([] { problem_from_string("2 1 1 0 0 0\nMAT cost\n0 0 x\nEND\n"); });
  EXPECT_EQ(bad_number.line(), 3);
  EXPECT_EQ(bad_number.column(), 5);

  const InputError out_of_range = capture([] { problem_from_string("2 0 1 0 0 0\nMAT cost\n0 2 1\nEND\nRHS\n"); });
  EXPECT_EQ(out_of_range.line(), 3);
  EXPECT_EQ(out_of_range.column(), 1);

  const InputError wrong_block = capture([] { problem_from_string("2 1 1 0 0 0\nMAT cost\nEND\nMAT 2\nEND\nRHS 1\n"); });
  EXPECT_EQ(wrong_block.line(), 4);
  EXPECT_EQ(wrong_block.column(), 5);

  const InputError truncated = capture([] { problem_from_string("2 1 1 0 0 0\nMAT cost\nEND\nMAT 1\nEND\nRHS\n"); });
  EXPECT_EQ(truncated.line(), 7);

  const InputError trailing = capture([] { problem_from_string("1 0 1 0 0 0\nMAT cost\nEND\nRHS\nextra\n"); });
  EXPECT_EQ(trailing.line(), 5);

  const InputError dup = capture([] { problem_from_string("2 0 1 0 0 0\nMAT cost\n0 1 1\n1 0 2\nEND\nRHS\n"); });
  EXPECT_EQ(dup.line(), 2);

  const InputError comp = capture([] { problem_from_string("1 0 1 0 0 7\nMAT cost\nEND\nRHS\n"); });
  EXPECT_EQ(comp.line(), 1);
  EXPECT_EQ(comp.column(), 11);

  const InputError not_pd = capture([] {
    problem_from_string("2 0 1 0 0 1\nMAT cost\nEND\nMAT A0\n0 0 1\nEND\nRHS\nRHS0 1\n");
  });
  EXPECT_NE(std::string(not_pd.what()).find("line"), std::string::npos);
}

TEST(GraphFormat, ReadWriteRoundTrip) {
  std::istringstream is("4 3\n0 1\n1 2 2.5\n# comment\n3 2\n");
  const Graph g = read_graph(is);
  EXPECT_EQ(g.n, 4);
  ASSERT_EQ(g.edges.size(), 3u);
  EXPECT_EQ(g.edges[1].weight, 2.5);
  EXPECT_EQ(g.edges[2].u, 2);
  std::ostringstream os;
  write_graph(os, g);
  std::istringstream again(os.str());
  const Graph h = read_graph(again);
  ASSERT_EQ(h.edges.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(h.edges[i].u, g.edges[i].u);
    EXPECT_EQ(h.edges[i].v, g.edges[i].v);
    EXPECT_EQ(h.edges[i].weight, g.edges[i].weight);
  }
}

TEST(GraphFormat, Errors) {
  std::istringstream count("3 2\n0 1\n");
  EXPECT_EQ(capture([&] { read_graph(count); }).line(), 1);
  std::istringstream loop("3 1\n1 1\n");
  EXPECT_THROW(read_graph(loop), InputError);
  std::istringstream word("3 1\n0 z\n");
  const InputError e = capture([&] { read_graph(word); });
  EXPECT_EQ(e.line(), 2);
  EXPECT_EQ(e.column(), 3);
}

TEST(ObservationFormat, ReadWriteRoundTrip) {
  const auto obs = lowrank_sdp::testing::random_observations(3, 4, 1, 0.5, 6);
  std::ostringstream os;
  write_observations(os, obs);
  std::istringstream is(os.str());
  const ObservationSet back = read_observations(is);
  EXPECT_EQ(back.rows, 3);
  EXPECT_EQ(back.cols, 4);
  ASSERT_EQ(back.entries.size(), obs.entries.size());
  for (std::size_t t = 0; t < obs.entries.size(); ++t) EXPECT_EQ(back.entries[t].value, obs.entries[t].value);
  std::istringstream dup("2 2 2\n0 0 1\n0 0 2\n");
  EXPECT_THROW(read_observations(dup), InputError);
}

TEST(MatrixFormat, BitExactRoundTrip) {
  CounterRng rng(2);
  Matrix m = random_matrix(4, 3, rng);
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = -1e-300;
  m(2, 2) = 6.02214076e23;
  std::ostringstream os;
  write_matrix(os, m);
  std::istringstream is(os.str());
  const Matrix back = read_matrix(is);
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  std::istringstream short_input("2 2\n1 2 3\n");
  EXPECT_THROW(read_matrix(short_input), InputError);
}

TEST(Json, CertificateFieldNames) {
  Certificate c;
  c.grad_norm = 1e-9;
  c.trace_bound = 4.0;
  c.gap_bound = 0.5;
  c.certificate_holds = true;
  const auto j = to_json(c);
  for (const char* key : {"grad_norm", "hess_min_eig", "sigma_k", "dual_min_eig", "gap_bound", "trace_bound",
                          "is_eps_fosp", "is_eps_gamma_sosp", "is_rank_deficient", "certificate_holds"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.size(), 10u);
  EXPECT_EQ(j["gap_bound"].get<double>(), 0.5);
  EXPECT_TRUE(j["certificate_holds"].get<bool>());
  Certificate none;
  EXPECT_TRUE(to_json(none)["gap_bound"].is_null());
}

TEST(Json, PlannerAndCalibration) {
  PlannerOutput p;
  p.B = 2.0;
  p.k_min = 7;
  p.mode = BoundMode::pd_cost;
  p.sigma_G_max = 0.1;
  const auto j = to_json(p);
  EXPECT_EQ(j["k_min"].get<long>(), 7);
  EXPECT_EQ(j["mode"].get<std::string>(), "pd_cost");
  EXPECT_EQ(j["sigma_G_max"].get<double>(), 0.1);
  EXPECT_TRUE(j["sigma_G_max_theorem"].is_null());
  CalibrationResult c;
  c.c0_hat = 0.3;
  c.trials = 5;
  const auto k = to_json(c);
  EXPECT_EQ(k["c0_hat"].get<double>(), 0.3);
  EXPECT_EQ(k["violation_rate"].get<double>(), 0.0);
}
