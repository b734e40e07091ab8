#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lesr/dsl.hpp"
#include "lesr/rng.hpp"

using namespace lesr;
using namespace lesr::dsl;

namespace {

// Independent reference evaluator.  This reimplements the documented
// semantics directly from the numeric policy (guarded sqrt/log/div, repeated
// multiplication for small integer powers, output clamp, NaN -> failure) so
// the production evaluator is checked against a second derivation, not
// against itself.
double naive_eval(const Expr& e, const std::vector<double>& s) {
  switch (e.kind) {
    case NodeKind::Constant:
      return e.value;
    case NodeKind::StateRef:
      return s.at(static_cast<std::size_t>(e.index));
    case NodeKind::Unary: {
      double v = naive_eval(e.children[0], s);
      switch (e.uop) {
        case UnaryOp::Neg: return -v;
        case UnaryOp::Sin: return std::sin(v);
        case UnaryOp::Cos: return std::cos(v);
        case UnaryOp::Tan: return std::tan(v);
        case UnaryOp::Tanh: return std::tanh(v);
        case UnaryOp::Abs: return std::fabs(v);
        case UnaryOp::Sqrt: return std::sqrt(std::max(v, 0.0));
        case UnaryOp::Exp: return std::exp(v);
        case UnaryOp::Log: return std::log(std::max(v, 1e-12));
      }
      return 0.0;
    }
    case NodeKind::Binary: {
      double a = naive_eval(e.children[0], s);
      double b = naive_eval(e.children[1], s);
      switch (e.bop) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: {
          double d = b;
          if (d >= 0.0 && d < 1e-12) d = 1e-12;
          if (d < 0.0 && d > -1e-12) d = -1e-12;
          return a / d;
        }
        case BinaryOp::Pow: {
          if (b == std::floor(b) && std::fabs(b) <= 64.0) {
            long n = static_cast<long>(std::fabs(b));
            double acc = 1.0;
            for (long i = 0; i < n; ++i) acc *= a;
            return b >= 0.0 ? acc : 1.0 / acc;
          }
          return std::pow(a, b);
        }
        case BinaryOp::Min: return a < b ? a : b;
        case BinaryOp::Max: return a > b ? a : b;
      }
      return 0.0;
    }
  }
  return 0.0;
}

std::vector<double> naive_eval_outputs(const ReprProgram& p,
                                       const std::vector<double>& s,
                                       bool* failed) {
  std::vector<double> out;
  *failed = false;
  for (const Expr& e : p.outputs) {
    double v = naive_eval(e, s);
    if (std::isnan(v)) {
      *failed = true;
      return {};
    }
    if (v > 1e6) v = 1e6;
    if (v < -1e6) v = -1e6;
    out.push_back(v);
  }
  return out;
}

// Random expression tree generator for round-trip / differential tests.
// Constants are kept non-negative: the parser always represents "-c" as a
// negation node, so a negative Constant would be unreachable from text.
Expr random_expr(Rng& rng, int depth, int input_dim) {
  Expr e;
  double leaf_p = depth <= 0 ? 1.0 : 0.3;
  if (rng.uniform() < leaf_p) {
    if (rng.uniform() < 0.5) {
      e.kind = NodeKind::Constant;
      double v = rng.uniform(0.0, 10.0);
      if (rng.uniform() < 0.3) v = std::floor(v);
      e.value = v;
    } else {
      e.kind = NodeKind::StateRef;
      e.index = static_cast<int>(rng.index(static_cast<std::size_t>(input_dim)));
    }
    return e;
  }
  if (rng.uniform() < 0.4) {
    e.kind = NodeKind::Unary;
    static const UnaryOp ops[] = {UnaryOp::Neg,  UnaryOp::Sin, UnaryOp::Cos,
                                  UnaryOp::Tan,  UnaryOp::Tanh, UnaryOp::Abs,
                                  UnaryOp::Sqrt, UnaryOp::Exp, UnaryOp::Log};
    e.uop = ops[rng.index(9)];
    e.children.push_back(random_expr(rng, depth - 1, input_dim));
  } else {
    e.kind = NodeKind::Binary;
    static const BinaryOp ops[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul,
                                   BinaryOp::Div, BinaryOp::Pow, BinaryOp::Min,
                                   BinaryOp::Max};
    e.bop = ops[rng.index(7)];
    e.children.push_back(random_expr(rng, depth - 1, input_dim));
    e.children.push_back(random_expr(rng, depth - 1, input_dim));
  }
  return e;
}

double eval_one(const std::string& text, const std::vector<double>& s) {
  ReprProgram p = parse_repr_program(text, static_cast<int>(s.size()));
  auto out = eval_repr(p, s);
  REQUIRE(out.has_value());
  REQUIRE(out->size() == 1);
  return (*out)[0];
}

}  // namespace

TEST_CASE("dsl: worked example") {
  // max(2, 6) * 0.5 = 3.0 on a 7-dim input with s[0]=2, s[4]=6.
  std::vector<double> s = {2, 0, 0, 0, 6, 0, 0};
  CHECK(eval_one("out: max(s[0], s[4]) * 0.5", s) == 3.0);
}

TEST_CASE("dsl: operator precedence and associativity") {
  std::vector<double> s = {0.0};
  CHECK(eval_one("out: -2^2", s) == -4.0);        // '^' binds above unary '-'
  CHECK(eval_one("out: 2^-3", s) == 0.125);       // unary '-' allowed in exponent
  CHECK(eval_one("out: 2^3^2", s) == 512.0);      // right associative
  CHECK(eval_one("out: 1 - 2 - 3", s) == -4.0);   // left associative
  CHECK(eval_one("out: 20 / 2 / 5", s) == 2.0);
  CHECK(eval_one("out: 2*3+4*5", s) == 26.0);
  CHECK(eval_one("out: 2+3*4", s) == 14.0);
  CHECK(eval_one("out: (2+3)*4", s) == 20.0);
  CHECK(eval_one("out: -3 * 2", s) == -6.0);
  CHECK(eval_one("out: 1e2 + 1e-2", s) == 100.01);
}

TEST_CASE("dsl: statements, comments and separators") {
  ReprProgram p = parse_repr_program(
      "# leading comment\n"
      "out: s[0] + 1   # trailing comment\n"
      "\n"
      "out: 2; out: 3\n",
      2);
  CHECK(p.outputs.size() == 3);
  auto out = eval_repr(p, std::vector<double>{4.0, 0.0});
  REQUIRE(out.has_value());
  CHECK((*out)[0] == 5.0);
  CHECK((*out)[1] == 2.0);
  CHECK((*out)[2] == 3.0);
}

TEST_CASE("dsl: numeric guards") {
  std::vector<double> s = {0.0};
  CHECK(eval_one("out: sqrt(0 - 4)", s) == 0.0);
  CHECK(eval_one("out: log(0)", s) == std::log(1e-12));
  CHECK(eval_one("out: log(0 - 5)", s) == std::log(1e-12));
  CHECK(eval_one("out: 1 / 0", s) == 1e6);             // 1e12 clamped
  CHECK(eval_one("out: 0 - 1 / 0", s) == -1e6);
  CHECK(eval_one("out: 1 / -(0)", s) == 1e6);          // -0 treated as +0
  CHECK(eval_one("out: exp(1000)", s) == 1e6);         // +inf clamped, not failed
  CHECK(eval_one("out: 0 - exp(1000)", s) == -1e6);
  CHECK(eval_one("out: 0 / 0", s) == 0.0);             // guarded denominator
}

TEST_CASE("dsl: negative-denominator guard keeps sign") {
  std::vector<double> s = {0.0};
  // 5 / (-1e-30) clamps the denominator to -1e-12: 5 / -1e-12 = -5e12 -> -1e6.
  CHECK(eval_one("out: 5 / (0 - 1e-30)", s) == -1e6);
  CHECK(eval_one("out: 1e-10 / (0 - 1e-30)", s) == 1e-10 / -1e-12);
}

TEST_CASE("dsl: NaN after guards disqualifies instead of crashing") {
  ReprProgram p = parse_repr_program("out: (0 - 100) ^ 0.5", 1);
  CHECK_FALSE(eval_repr(p, std::vector<double>{0.0}).has_value());
  ReprProgram q = parse_repr_program("out: 1\nout: (0-2)^0.5\nout: 3", 1);
  CHECK_FALSE(eval_repr(q, std::vector<double>{0.0}).has_value());
}

TEST_CASE("dsl: integer power fast path is bitwise repeated multiplication") {
  Rng rng(41);
  ReprProgram sq = parse_repr_program("out: (s[0] - s[2]) ^ 2", 4);
  ReprProgram cube = parse_repr_program("out: s[0] ^ 3", 4);
  ReprProgram quart = parse_repr_program("out: s[0] ^ 4", 4);
  ReprProgram neg2 = parse_repr_program("out: s[0] ^ -2", 4);
  ReprProgram frac = parse_repr_program("out: s[0] ^ 0.5", 4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s = {rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0),
                             rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0)};
    double dx = s[0] - s[2];
    CHECK((*eval_repr(sq, s))[0] == dx * dx);
    CHECK((*eval_repr(cube, s))[0] == s[0] * s[0] * s[0]);
    double q = s[0] * s[0] * s[0];  // sequential order: ((x*x)*x)*x
    q *= s[0];
    CHECK((*eval_repr(quart, s))[0] == q);
    CHECK((*eval_repr(neg2, s))[0] == 1.0 / (s[0] * s[0]));
    if (s[0] > 0) CHECK((*eval_repr(frac, s))[0] == std::pow(s[0], 0.5));
  }
}

TEST_CASE("dsl: parse errors carry position and a named cause") {
  CHECK_THROWS_AS(parse_repr_program("out: sqrt((s[0]", 4), ParseError);
  try {
    parse_repr_program("out: s[9]", 4);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("s[9]") != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
    CHECK(e.span.line == 1);
    CHECK(e.span.column == 6);
  }
  try {
    parse_repr_program("out: 1\nout: foo(1)", 4);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("foo") != std::string::npos);
    CHECK(e.span.line == 2);
  }
  CHECK_THROWS_AS(parse_repr_program("value: 1", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("# only a comment\n", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: min(1)", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: sin(1, 2)", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: s[1.5]", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: 1 +", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: 1 2", 4), ParseError);
  CHECK_THROWS_AS(parse_repr_program("out: 1 @ 2", 4), ParseError);
}

TEST_CASE("dsl: output count cap") {
  std::string many;
  for (int i = 0; i < 17; ++i) many += "out: 1\n";
  CHECK_THROWS_AS(parse_repr_program(many, 2), ParseError);
  std::string sixteen;
  for (int i = 0; i < 16; ++i) sixteen += "out: 1\n";
  CHECK(parse_repr_program(sixteen, 2).outputs.size() == 16);
  CHECK_THROWS_AS(parse_repr_program("out: 1\nout: 2", 2, 1), ParseError);
}

TEST_CASE("dsl: reward program validation") {
  CHECK_THROWS_AS(parse_reward_program("out: 1\nout: 2", 5, 4), ParseError);
  // Must reference a derived dimension (index >= base_dim).
  CHECK_THROWS_AS(parse_reward_program("out: -s[0]", 5, 4), ParseError);
  CHECK_THROWS_AS(parse_reward_program("out: 1.5", 5, 4), ParseError);
  RewardProgram ok = parse_reward_program("out: -s[4]", 5, 4);
  auto v = eval_reward(ok, std::vector<double>{0, 0, 0, 0, 2.5});
  REQUIRE(v.has_value());
  CHECK(*v == -2.5);
  CHECK_THROWS_AS(parse_reward_program("out: -s[4]", 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(parse_reward_program("out: -s[4]", 5, 5), std::invalid_argument);
}

TEST_CASE("dsl: evaluation dimension mismatch throws") {
  ReprProgram p = parse_repr_program("out: s[0]", 3);
  CHECK_THROWS_AS(eval_repr(p, std::vector<double>{1.0}), std::invalid_argument);
  RewardProgram g = parse_reward_program("out: s[2]", 3, 2);
  CHECK_THROWS_AS(eval_reward(g, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("dsl: format/parse round trip on random trees") {
  Rng rng(7);
  const int input_dim = 6;
  for (int trial = 0; trial < 500; ++trial) {
    ReprProgram p;
    p.input_dim = input_dim;
    int n_out = 1 + static_cast<int>(rng.index(3));
    for (int i = 0; i < n_out; ++i)
      p.outputs.push_back(random_expr(rng, 6, input_dim));
    std::string text = format_program(p);
    ReprProgram q = parse_repr_program(text, input_dim);
    REQUIRE(q.outputs.size() == p.outputs.size());
    for (std::size_t i = 0; i < p.outputs.size(); ++i)
      CHECK(structurally_equal(p.outputs[i], q.outputs[i]));
    // Formatting is a fixed point after one round.
    CHECK(format_program(q) == text);
  }
}

TEST_CASE("dsl: production evaluator matches the reference evaluator") {
  Rng rng(11);
  const int input_dim = 5;
  int failures_seen = 0;
  for (int trial = 0; trial < 800; ++trial) {
    ReprProgram p;
    p.input_dim = input_dim;
    p.outputs.push_back(random_expr(rng, 5, input_dim));
    std::vector<double> s(input_dim);
    for (double& v : s) v = rng.uniform(-10.0, 10.0);
    bool naive_failed = false;
    std::vector<double> expected = naive_eval_outputs(p, s, &naive_failed);
    auto got = eval_repr(p, s);
    if (naive_failed) {
      ++failures_seen;
      CHECK_FALSE(got.has_value());
    } else {
      REQUIRE(got.has_value());
      REQUIRE(got->size() == expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK((*got)[i] == expected[i]);  // bitwise equality
    }
  }
  // The random pool should exercise both paths.
  CHECK(failures_seen > 0);
  CHECK(failures_seen < 800);
}

TEST_CASE("dsl: grammar text names the full vocabulary") {
  const std::string& g = grammar_text();
  for (const char* name : {"sin", "cos", "tan", "tanh", "abs", "sqrt", "exp",
                           "log", "min", "max", "out:", "s[i]"})
    CHECK(g.find(name) != std::string::npos);
}
