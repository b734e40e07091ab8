#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Expression language for candidate state-representation and intrinsic-reward
// programs.  A program is a list of `out: <expr>` statements (newline or ';'
// separated, '#' comments).  Expressions are arithmetic over double inputs
// s[0..n) with a fixed function vocabulary and total (guarded) evaluation.
namespace lesr::dsl {

enum class NodeKind { Constant, StateRef, Unary, Binary };

enum class UnaryOp { Neg, Sin, Cos, Tan, Tanh, Abs, Sqrt, Exp, Log };
enum class BinaryOp { Add, Sub, Mul, Div, Pow, Min, Max };

struct SourceSpan {
  int line = 0;    // 1-based
  int column = 0;  // 1-based
};

struct Expr {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;              // Constant
  int index = -1;                  // StateRef
  UnaryOp uop = UnaryOp::Neg;      // Unary
  BinaryOp bop = BinaryOp::Add;    // Binary
  std::vector<Expr> children;      // 1 for Unary, 2 for Binary
  SourceSpan span;
};

// State-representation program: one or more outputs over an input_dim-vector.
struct ReprProgram {
  int input_dim = 0;
  std::vector<Expr> outputs;
  std::string source_text;
};

// Intrinsic-reward program: exactly one output over the augmented vector
// (base_dim source dims followed by derived dims); must reference at least
// one derived dim (index >= base_dim).
struct RewardProgram {
  int input_dim = 0;
  int base_dim = 0;
  Expr output;
  std::string source_text;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(SourceSpan span, const std::string& message)
      : std::runtime_error(std::to_string(span.line) + ":" +
                           std::to_string(span.column) + ": " + message),
        span(span) {}
  SourceSpan span;
};

// Hard cap on outputs a representation program may declare (guards against
// runaway generated programs); callers may pass a smaller limit.
inline constexpr int kDefaultMaxOutputs = 16;

// Numeric policy applied during evaluation:
//   sqrt(x)  -> sqrt(max(x, 0))
//   log(x)   -> log(max(x, 1e-12))
//   a / b    -> denominator clamped to magnitude >= 1e-12, sign kept
//   a ^ b    -> repeated multiplication when b is integral with |b| <= 64,
//               std::pow otherwise
//   outputs  -> clamped to [-1e6, 1e6]; NaN survivors mark the evaluation
//               failed (candidate disqualification, never a crash)
inline constexpr double kDivEpsilon = 1e-12;
inline constexpr double kLogEpsilon = 1e-12;
inline constexpr double kOutputClamp = 1e6;

ReprProgram parse_repr_program(std::string_view text, int input_dim,
                               int max_outputs = kDefaultMaxOutputs);
RewardProgram parse_reward_program(std::string_view text, int input_dim,
                                   int base_dim);

// Guarded evaluation; nullopt when any output is NaN after the guard policy.
std::optional<std::vector<double>> eval_repr(const ReprProgram& program,
                                             std::span<const double> s);
std::optional<double> eval_reward(const RewardProgram& program,
                                  std::span<const double> s_c);

// Canonical text form; parse(format(p)) is structurally identical to p.
std::string format_expr(const Expr& e);
std::string format_program(const ReprProgram& program);
std::string format_program(const RewardProgram& program);

// Structural identity ignoring source spans.
bool structurally_equal(const Expr& a, const Expr& b);

// Human-readable grammar summary (embedded in generation prompts and docs).
const std::string& grammar_text();

}  // namespace lesr::dsl
