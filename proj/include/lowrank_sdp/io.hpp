#pragma once

// Text formats: problem files, edge lists, observation lists, dense matrices,
// and JSON views of certificates, planner output and calibration results.
//
// Problem file:
//   n m mu sigma_G seed has_compactifier
//   MAT cost            entries "row col value", 0-based, closed by END
//   MAT A0              only when has_compactifier != 0
//   MAT 1 ... MAT m
//   RHS b_1 ... b_m
//   RHS0 b0             only when has_compactifier != 0
//   MAT perturbation    optional explicit G (only when sigma_G = 0)
// has_compactifier: 0 none, 1 present and penalized, 2 present only.
// When sigma_G > 0, G is regenerated from GoeSpec{n, sigma_G, seed}.
// '#' starts a comment.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lowrank_sdp/certify.hpp"
#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/penalty.hpp"
#include "lowrank_sdp/perturb.hpp"
#include "lowrank_sdp/problems.hpp"

namespace lowrank_sdp {

/// Parse failure with a 1-based source position (0 when unknown).
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& msg, long line = 0, long column = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg
                                    : msg),
        line_(line),
        column_(column) {}
  long line() const noexcept { return line_; }
  long column() const noexcept { return column_; }

 private:
  long line_;
  long column_;
};

/// Shortest decimal that round-trips to the same double, at most 17 digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

struct Token {
  std::string text;
  long line = 0;
  long column = 0;
};

// Whitespace tokenizer that drops '#' comments and remembers positions.
class TokenStream {
 public:
  explicit TokenStream(std::istream& in) {
    std::string line;
    long ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        tokens_.push_back({line.substr(start, i - start), ln, static_cast<long>(start + 1)});
      }
    }
    end_line_ = ln + 1;
  }

  bool done() const noexcept { return pos_ >= tokens_.size(); }
  const Token& peek() const {
    if (done()) throw InputError("unexpected end of input", end_line_, 1);
    return tokens_[pos_];
  }
  const Token& next() {
    const Token& t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view word) {
    const Token& t = next();
    if (t.text != word) throw InputError("expected '" + std::string(word) + "', found '" + t.text + "'", t.line, t.column);
  }
  double number() {
    const Token& t = next();
    double v = 0.0;
    const auto* b = t.text.data();
    const auto* e = b + t.text.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw InputError("expected a number, found '" + t.text + "'", t.line, t.column);
    return v;
  }
  long long integer() {
    const Token& t = next();
    long long v = 0;
    const auto* b = t.text.data();
    const auto* e = b + t.text.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw InputError("expected an integer, found '" + t.text + "'", t.line, t.column);
    return v;
  }
  std::uint64_t unsigned_integer() {
    const Token& t = next();
    std::uint64_t v = 0;
    const auto* b = t.text.data();
    const auto* e = b + t.text.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) {
      throw InputError("expected a nonnegative integer, found '" + t.text + "'", t.line, t.column);
    }
    return v;
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  long end_line_ = 1;
};

inline void write_block(std::ostream& os, const std::string& name, const SparseSymmetric& s) {
  os << "MAT " << name << '\n';
  for (const auto& e : s.entries()) os << e.row << ' ' << e.col << ' ' << format_double(e.value) << '\n';
  os << "END\n";
}

inline SparseSymmetric read_block(TokenStream& ts, Index n, const std::string& name) {
  const Token head = ts.peek();
  ts.expect("MAT");
  const Token& label = ts.next();
  if (label.text != name) {
    throw InputError("expected block 'MAT " + name + "', found 'MAT " + label.text + "'", label.line, label.column);
  }
  std::vector<SparseEntry> entries;
  while (ts.peek().text != "END") {
    const Token& at = ts.peek();
    const long long r = ts.integer();
    const long long c = ts.integer();
    const double v = ts.number();
    if (r < 0 || r >= n || c < 0 || c >= n) {
      throw InputError("entry (" + std::to_string(r) + ", " + std::to_string(c) + ") outside [0, " + std::to_string(n) + ")",
                       at.line, at.column);
    }
    entries.push_back({static_cast<Index>(r), static_cast<Index>(c), v});
  }
  ts.next();
  try {
    return SparseSymmetric(n, std::move(entries));
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("block ") + name + ": " + e.what(), head.line, head.column);
  }
}

}  // namespace detail

inline void write_problem(std::ostream& os, const PenaltyProblem& pp) {
  const ConstraintOperator& op = pp.op();
  const int comp = op.compactifier() ? (pp.use_compactifier() ? 1 : 2) : 0;
  const double sigma = pp.goe() ? pp.goe()->sigma_G : 0.0;
  const std::uint64_t seed = pp.goe() ? pp.goe()->seed : 0;
  os << pp.dim() << ' ' << op.size() << ' ' << format_double(pp.mu()) << ' ' << format_double(sigma) << ' ' << seed
     << ' ' << comp << '\n';
  detail::write_block(os, "cost", pp.cost());
  if (op.compactifier()) detail::write_block(os, "A0", op.compactifier()->matrix);
  for (Index i = 0; i < op.size(); ++i) detail::write_block(os, std::to_string(i + 1), op.mats()[static_cast<std::size_t>(i)]);
  os << "RHS";
  for (Index i = 0; i < op.size(); ++i) os << ' ' << format_double(op.rhs()[i]);
  os << '\n';
  if (op.compactifier()) os << "RHS0 " << format_double(op.compactifier()->rhs) << '\n';
  if (pp.perturbation() && !pp.goe()) detail::write_block(os, "perturbation", *pp.perturbation());
}

inline PenaltyProblem read_problem(std::istream& in) {
  detail::TokenStream ts(in);
  const detail::Token head = ts.peek();
  const long long n = ts.integer();
  const detail::Token m_tok = ts.peek();
  const long long m = ts.integer();
  const detail::Token mu_tok = ts.peek();
  const double mu = ts.number();
  const detail::Token sigma_tok = ts.peek();
  const double sigma = ts.number();
  const std::uint64_t seed = ts.unsigned_integer();
  const detail::Token comp_tok = ts.peek();
  const long long comp = ts.integer();
  if (n < 1) throw InputError("n must be >= 1", head.line, head.column);
  if (m < 0) throw InputError("m must be >= 0", m_tok.line, m_tok.column);
  if (!(mu >= 0.0)) throw InputError("mu must be >= 0", mu_tok.line, mu_tok.column);
  if (!(sigma >= 0.0)) throw InputError("sigma_G must be >= 0", sigma_tok.line, sigma_tok.column);
  if (comp < 0 || comp > 2) throw InputError("has_compactifier must be 0, 1 or 2", comp_tok.line, comp_tok.column);

  const Index nn = static_cast<Index>(n);
  SparseSymmetric cost = detail::read_block(ts, nn, "cost");
  std::optional<SparseSymmetric> a0;
  if (comp != 0) a0 = detail::read_block(ts, nn, "A0");
  std::vector<SparseSymmetric> mats;
  mats.reserve(static_cast<std::size_t>(m));
  for (long long i = 1; i <= m; ++i) mats.push_back(detail::read_block(ts, nn, std::to_string(i)));
  const detail::Token rhs_tok = ts.peek();
  ts.expect("RHS");
  Vector b(m);
  for (long long i = 0; i < m; ++i) b[i] = ts.number();
  std::optional<Compactifier> compactifier;
  if (a0) {
    ts.expect("RHS0");
    compactifier = Compactifier{*a0, ts.number()};
  }
  std::optional<SparseSymmetric> g;
  if (!ts.done()) {
    const detail::Token t = ts.peek();
    if (sigma > 0.0) throw InputError("explicit perturbation block conflicts with sigma_G > 0", t.line, t.column);
    g = detail::read_block(ts, nn, "perturbation");
  }
  if (!ts.done()) {
    const detail::Token& t = ts.peek();
    throw InputError("unexpected trailing token '" + t.text + "'", t.line, t.column);
  }
  try {
    ConstraintOperator op(nn, std::move(mats), std::move(b), std::move(compactifier));
    if (sigma > 0.0) return PenaltyProblem::with_goe(std::move(cost), std::move(op), mu, GoeSpec{nn, sigma, seed}, comp == 1);
    return PenaltyProblem(std::move(cost), std::move(op), mu, std::move(g), comp == 1);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what(), rhs_tok.line, rhs_tok.column);
  }
}

inline std::string problem_to_string(const PenaltyProblem& pp) {
  std::ostringstream os;
  write_problem(os, pp);
  return os.str();
}

inline PenaltyProblem problem_from_string(const std::string& s) {
  std::istringstream is(s);
  return read_problem(is);
}

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open '" + path + "'");
  return f;
}

inline std::vector<std::pair<long, std::vector<Token>>> split_lines(std::istream& in) {
  std::vector<std::pair<long, std::vector<Token>>> out;
  std::string line;
  long ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    std::istringstream ls(line);
    TokenStream ts(ls);
    std::vector<Token> toks;
    while (!ts.done()) {
      Token t = ts.next();
      t.line = ln;
      toks.push_back(std::move(t));
    }
    if (!toks.empty()) out.emplace_back(ln, std::move(toks));
  }
  return out;
}

inline long long token_int(const Token& t) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size()) {
    throw InputError("expected an integer, found '" + t.text + "'", t.line, t.column);
  }
  return v;
}

inline double token_double(const Token& t) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size()) {
    throw InputError("expected a number, found '" + t.text + "'", t.line, t.column);
  }
  return v;
}

}  // namespace detail

/// Edge list: header "n m", then m lines "u v [weight]" with 0-based vertices.
inline Graph read_graph(std::istream& in) {
  const auto lines = detail::split_lines(in);
  if (lines.empty()) throw InputError("empty graph file");
  const auto& head = lines[0].second;
  if (head.size() != 2) throw InputError("graph header must be 'n m'", lines[0].first, 1);
  const long long n = detail::token_int(head[0]);
  const long long m = detail::token_int(head[1]);
  if (n < 1) throw InputError("n must be >= 1", head[0].line, head[0].column);
  if (m < 0 || static_cast<std::size_t>(m) != lines.size() - 1) {
    throw InputError("header declares " + std::to_string(m) + " edges, file has " + std::to_string(lines.size() - 1),
                     head[1].line, head[1].column);
  }
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& t = lines[k].second;
    if (t.size() < 2 || t.size() > 3) throw InputError("edge line must be 'u v [weight]'", lines[k].first, t[0].column);
    Edge e{detail::token_int(t[0]), detail::token_int(t[1]), t.size() == 3 ? detail::token_double(t[2]) : 1.0};
    edges.push_back(e);
  }
  try {
    return Graph(static_cast<Index>(n), std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

/// Observations: header "n1 n2 count", then lines "i j value".
inline ObservationSet read_observations(std::istream& in) {
  const auto lines = detail::split_lines(in);
  if (lines.empty()) throw InputError("empty observation file");
  const auto& head = lines[0].second;
  if (head.size() != 3) throw InputError("observation header must be 'n1 n2 count'", lines[0].first, 1);
  const long long r = detail::token_int(head[0]);
  const long long c = detail::token_int(head[1]);
  const long long cnt = detail::token_int(head[2]);
  if (cnt < 0 || static_cast<std::size_t>(cnt) != lines.size() - 1) {
    throw InputError("header declares " + std::to_string(cnt) + " observations, file has " +
                         std::to_string(lines.size() - 1),
                     head[2].line, head[2].column);
  }
  std::vector<Observation> obs;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& t = lines[k].second;
    if (t.size() != 3) throw InputError("observation line must be 'i j value'", lines[k].first, t[0].column);
    obs.push_back({detail::token_int(t[0]), detail::token_int(t[1]), detail::token_double(t[2])});
  }
  try {
    return ObservationSet(static_cast<Index>(r), static_cast<Index>(c), std::move(obs));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

inline void write_graph(std::ostream& os, const Graph& g) {
  os << g.n << ' ' << g.edges.size() << '\n';
  for (const auto& e : g.edges) os << e.u << ' ' << e.v << ' ' << format_double(e.weight) << '\n';
}

inline void write_observations(std::ostream& os, const ObservationSet& obs) {
  os << obs.rows << ' ' << obs.cols << ' ' << obs.entries.size() << '\n';
  for (const auto& o : obs.entries) os << o.i << ' ' << o.j << ' ' << format_double(o.value) << '\n';
}

/// Dense matrix: header "rows cols", then one row per line.
inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << format_double(m(i, j));
    os << '\n';
  }
}

inline Matrix read_matrix(std::istream& in) {
  detail::TokenStream ts(in);
  const detail::Token head = ts.peek();
  const long long r = ts.integer();
  const long long c = ts.integer();
  if (r < 1 || c < 1) throw InputError("matrix dimensions must be >= 1", head.line, head.column);
  Matrix m(r, c);
  for (long long i = 0; i < r; ++i)
    for (long long j = 0; j < c; ++j) m(i, j) = ts.number();
  if (!ts.done()) {
    const auto& t = ts.peek();
    throw InputError("unexpected trailing token '" + t.text + "'", t.line, t.column);
  }
  return m;
}

template <class T, class Reader>
T read_file(const std::string& path, Reader reader) {
  auto f = detail::open_input(path);
  return reader(f);
}

inline nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["grad_norm"] = c.grad_norm;
  j["hess_min_eig"] = c.hess_min_eig;
  j["sigma_k"] = c.sigma_k;
  j["dual_min_eig"] = c.dual_min_eig;
  j["gap_bound"] = c.gap_bound ? nlohmann::json(*c.gap_bound) : nlohmann::json(nullptr);
  j["trace_bound"] = c.trace_bound ? nlohmann::json(*c.trace_bound) : nlohmann::json(nullptr);
  j["is_eps_fosp"] = c.is_eps_fosp;
  j["is_eps_gamma_sosp"] = c.is_eps_gamma_sosp;
  j["is_rank_deficient"] = c.is_rank_deficient;
  j["certificate_holds"] = c.certificate_holds;
  return j;
}

inline nlohmann::json to_json(const PlannerOutput& p) {
  nlohmann::json j;
  j["B"] = p.B;
  j["k_min"] = p.k_min;
  j["k_used"] = p.k_used;
  j["eps_max"] = p.eps_max;
  j["sigma_G_max"] = p.sigma_G_max ? nlohmann::json(*p.sigma_G_max) : nlohmann::json(nullptr);
  j["sigma_G_max_theorem"] = p.sigma_G_max_theorem ? nlohmann::json(*p.sigma_G_max_theorem) : nlohmann::json(nullptr);
  j["sigma_G"] = p.sigma_G;
  j["c0"] = p.c0;
  j["delta"] = p.delta;
  j["gamma"] = p.gamma;
  j["rank"] = p.rank;
  j["op_norm"] = p.op_norm;
  j["rounds"] = p.rounds;
  j["converged"] = p.converged;
  j["mode"] = to_string(p.mode);
  return j;
}

inline nlohmann::json to_json(const CalibrationResult& c) {
  nlohmann::json j;
  j["c0_hat"] = c.c0_hat;
  j["violation_rate"] = c.violation_rate;
  j["c0"] = c.c0;
  j["trials"] = c.trials;
  return j;
}

}  // namespace lowrank_sdp
