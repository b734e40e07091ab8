#include "lesr/dsl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

namespace lesr::dsl {
namespace {

// ---------------------------------------------------------------- tokenizer

enum class TokKind { Number, Word, Punct, Newline, End };

struct Token {
  TokKind kind = TokKind::End;
  double number = 0.0;
  std::string word;
  char punct = 0;
  SourceSpan span;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      if (c == '\n') {
        out.push_back({TokKind::Newline, 0.0, "", 0, span()});
        advance();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
        continue;
      }
      if ((c >= '0' && c <= '9') || c == '.') {
        out.push_back(number());
        continue;
      }
      if (c >= 'a' && c <= 'z') {
        out.push_back(word());
        continue;
      }
      if (std::string_view("+-*/^(),;[]:").find(c) != std::string_view::npos) {
        out.push_back({TokKind::Punct, 0.0, "", c, span()});
        advance();
        continue;
      }
      throw ParseError(span(), std::string("unexpected character '") + c + "'");
    }
    out.push_back({TokKind::End, 0.0, "", 0, span()});
    return out;
  }

 private:
  SourceSpan span() const { return {line_, col_}; }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  Token number() {
    SourceSpan start = span();
    std::size_t begin = pos_;
    bool any_digit = false;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
      any_digit = true;
      advance();
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      advance();
      while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
        any_digit = true;
        advance();
      }
    }
    if (!any_digit) throw ParseError(start, "malformed number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_;
      int mark_line = line_, mark_col = col_;
      advance();
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) advance();
      if (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') advance();
      } else {
        // Not an exponent after all (e.g. "2e" before a word); rewind.
        pos_ = mark;
        line_ = mark_line;
        col_ = mark_col;
      }
    }
    std::string_view body = text_.substr(begin, pos_ - begin);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    if (ec != std::errc() || ptr != body.data() + body.size())
      throw ParseError(start, "malformed number '" + std::string(body) + "'");
    return {TokKind::Number, value, "", 0, start};
  }

  Token word() {
    SourceSpan start = span();
    std::size_t begin = pos_;
    while (pos_ < text_.size() &&
           ((text_[pos_] >= 'a' && text_[pos_] <= 'z') ||
            (text_[pos_] >= '0' && text_[pos_] <= '9') || text_[pos_] == '_')) {
      advance();
    }
    return {TokKind::Word, 0.0, std::string(text_.substr(begin, pos_ - begin)), 0, start};
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// ------------------------------------------------------------------ parser

const std::map<std::string, UnaryOp, std::less<>>& unary_functions() {
  static const std::map<std::string, UnaryOp, std::less<>> table = {
      {"sin", UnaryOp::Sin},   {"cos", UnaryOp::Cos}, {"tan", UnaryOp::Tan},
      {"tanh", UnaryOp::Tanh}, {"abs", UnaryOp::Abs}, {"sqrt", UnaryOp::Sqrt},
      {"exp", UnaryOp::Exp},   {"log", UnaryOp::Log}};
  return table;
}

const std::map<std::string, BinaryOp, std::less<>>& binary_functions() {
  static const std::map<std::string, BinaryOp, std::less<>> table = {
      {"min", BinaryOp::Min}, {"max", BinaryOp::Max}};
  return table;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, int input_dim)
      : tokens_(std::move(tokens)), input_dim_(input_dim) {}

  // program := { 'out' ':' expr  (';' | newline | end) }
  std::vector<Expr> parse_program() {
    std::vector<Expr> outputs;
    for (;;) {
      while (at(TokKind::Newline) || is_punct(';')) next();
      if (at(TokKind::End)) break;
      const Token& t = peek();
      if (t.kind != TokKind::Word || t.word != "out")
        throw ParseError(t.span, "expected 'out:' statement");
      next();
      expect_punct(':', "':' after 'out'");
      outputs.push_back(parse_expr());
      if (!(at(TokKind::Newline) || is_punct(';') || at(TokKind::End)))
        throw ParseError(peek().span, "expected end of statement");
    }
    return outputs;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }
  bool at(TokKind k) const { return peek().kind == k; }
  bool is_punct(char c) const {
    return peek().kind == TokKind::Punct && peek().punct == c;
  }

  void expect_punct(char c, const std::string& what) {
    if (!is_punct(c))
      throw ParseError(peek().span, "expected " + what);
    next();
  }

  // expr := term (('+'|'-') term)*
  Expr parse_expr() {
    Expr lhs = parse_term();
    while (is_punct('+') || is_punct('-')) {
      BinaryOp op = peek().punct == '+' ? BinaryOp::Add : BinaryOp::Sub;
      SourceSpan sp = next().span;
      Expr rhs = parse_term();
      lhs = make_binary(op, std::move(lhs), std::move(rhs), sp);
    }
    return lhs;
  }

  // term := unary (('*'|'/') unary)*
  Expr parse_term() {
    Expr lhs = parse_unary();
    while (is_punct('*') || is_punct('/')) {
      BinaryOp op = peek().punct == '*' ? BinaryOp::Mul : BinaryOp::Div;
      SourceSpan sp = next().span;
      Expr rhs = parse_unary();
      lhs = make_binary(op, std::move(lhs), std::move(rhs), sp);
    }
    return lhs;
  }

  // unary := '-' unary | power
  Expr parse_unary() {
    if (is_punct('-')) {
      SourceSpan sp = next().span;
      Expr child = parse_unary();
      Expr e;
      e.kind = NodeKind::Unary;
      e.uop = UnaryOp::Neg;
      e.children.push_back(std::move(child));
      e.span = sp;
      return e;
    }
    return parse_power();
  }

  // power := atom ('^' unary)?      (right associative, binds above unary '-')
  Expr parse_power() {
    Expr base = parse_atom();
    if (is_punct('^')) {
      SourceSpan sp = next().span;
      Expr exponent = parse_unary();
      return make_binary(BinaryOp::Pow, std::move(base), std::move(exponent), sp);
    }
    return base;
  }

  Expr parse_atom() {
    const Token& t = peek();
    if (t.kind == TokKind::Number) {
      next();
      Expr e;
      e.kind = NodeKind::Constant;
      e.value = t.number;
      e.span = t.span;
      return e;
    }
    if (t.kind == TokKind::Word) {
      if (t.word == "s") return parse_state_ref();
      if (auto it = unary_functions().find(t.word); it != unary_functions().end()) {
        next();
        expect_punct('(', "'(' after function name");
        Expr arg = parse_expr();
        expect_punct(')', "')'");
        Expr e;
        e.kind = NodeKind::Unary;
        e.uop = it->second;
        e.children.push_back(std::move(arg));
        e.span = t.span;
        return e;
      }
      if (auto it = binary_functions().find(t.word); it != binary_functions().end()) {
        next();
        expect_punct('(', "'(' after function name");
        Expr a = parse_expr();
        expect_punct(',', "',' between arguments");
        Expr b = parse_expr();
        expect_punct(')', "')'");
        return make_binary(it->second, std::move(a), std::move(b), t.span);
      }
      throw ParseError(t.span, "unknown identifier '" + t.word + "'");
    }
    if (t.kind == TokKind::Punct && t.punct == '(') {
      next();
      Expr inner = parse_expr();
      expect_punct(')', "')'");
      return inner;
    }
    throw ParseError(t.span, "expected expression");
  }

  Expr parse_state_ref() {
    const Token& s_tok = next();  // 's'
    expect_punct('[', "'[' after 's'");
    const Token& idx = peek();
    if (idx.kind != TokKind::Number)
      throw ParseError(idx.span, "expected state index");
    double v = idx.number;
    if (v != std::floor(v) || v < 0)
      throw ParseError(idx.span, "state index must be a non-negative integer");
    next();
    expect_punct(']', "']'");
    int i = static_cast<int>(v);
    if (i >= input_dim_)
      throw ParseError(s_tok.span,
                       "state index s[" + std::to_string(i) +
                           "] out of range for input dimension " +
                           std::to_string(input_dim_));
    Expr e;
    e.kind = NodeKind::StateRef;
    e.index = i;
    e.span = s_tok.span;
    return e;
  }

  static Expr make_binary(BinaryOp op, Expr lhs, Expr rhs, SourceSpan sp) {
    Expr e;
    e.kind = NodeKind::Binary;
    e.bop = op;
    e.children.push_back(std::move(lhs));
    e.children.push_back(std::move(rhs));
    e.span = sp;
    return e;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int input_dim_;
};

std::vector<Expr> parse_outputs(std::string_view text, int input_dim) {
  if (input_dim <= 0)
    throw std::invalid_argument("input dimension must be positive");
  Lexer lexer(text);
  Parser parser(lexer.run(), input_dim);
  return parser.parse_program();
}

// --------------------------------------------------------------- evaluator

double ipow(double base, long n) {  // n >= 0; repeated multiplication
  double acc = 1.0;
  for (long i = 0; i < n; ++i) acc *= base;
  return acc;
}

double eval_node(const Expr& e, std::span<const double> s) {
  switch (e.kind) {
    case NodeKind::Constant:
      return e.value;
    case NodeKind::StateRef:
      return s[static_cast<std::size_t>(e.index)];
    case NodeKind::Unary: {
      double v = eval_node(e.children[0], s);
      switch (e.uop) {
        case UnaryOp::Neg: return -v;
        case UnaryOp::Sin: return std::sin(v);
        case UnaryOp::Cos: return std::cos(v);
        case UnaryOp::Tan: return std::tan(v);
        case UnaryOp::Tanh: return std::tanh(v);
        case UnaryOp::Abs: return std::fabs(v);
        case UnaryOp::Sqrt: return std::sqrt(v < 0.0 ? 0.0 : v);
        case UnaryOp::Exp: return std::exp(v);
        case UnaryOp::Log: return std::log(v < kLogEpsilon ? kLogEpsilon : v);
      }
      break;
    }
    case NodeKind::Binary: {
      double a = eval_node(e.children[0], s);
      double b = eval_node(e.children[1], s);
      switch (e.bop) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: {
          double d = b;
          if (d >= 0.0) {
            if (d < kDivEpsilon) d = kDivEpsilon;
          } else if (d > -kDivEpsilon) {
            d = -kDivEpsilon;
          }
          return a / d;
        }
        case BinaryOp::Pow: {
          if (std::floor(b) == b && std::fabs(b) <= 64.0) {
            long n = static_cast<long>(b);
            return n >= 0 ? ipow(a, n) : 1.0 / ipow(a, -n);
          }
          return std::pow(a, b);
        }
        case BinaryOp::Min: return a < b ? a : b;
        case BinaryOp::Max: return a > b ? a : b;
      }
      break;
    }
  }
  return 0.0;  // unreachable
}

// Output policy: clamp to [-kOutputClamp, kOutputClamp]; NaN -> failure.
std::optional<double> finish_output(double v) {
  if (std::isnan(v)) return std::nullopt;
  if (v > kOutputClamp) return kOutputClamp;
  if (v < -kOutputClamp) return -kOutputClamp;
  return v;
}

// --------------------------------------------------------------- formatter

// Printing precedence levels; parentheses are emitted whenever omitting them
// would change the shape of the reparsed tree.
int level_of(const Expr& e) {
  switch (e.kind) {
    case NodeKind::Constant:
    case NodeKind::StateRef:
      return 5;
    case NodeKind::Unary:
      return e.uop == UnaryOp::Neg ? 3 : 5;  // named functions self-delimit
    case NodeKind::Binary:
      switch (e.bop) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
        case BinaryOp::Min:
        case BinaryOp::Max: return 5;
      }
  }
  return 5;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void format_node(const Expr& e, std::string& out);

void format_child(const Expr& child, int min_level, std::string& out) {
  if (level_of(child) < min_level) {
    out += '(';
    format_node(child, out);
    out += ')';
  } else {
    format_node(child, out);
  }
}

void format_node(const Expr& e, std::string& out) {
  switch (e.kind) {
    case NodeKind::Constant:
      out += format_number(e.value);
      return;
    case NodeKind::StateRef:
      out += "s[" + std::to_string(e.index) + "]";
      return;
    case NodeKind::Unary: {
      static const char* names[] = {"",    "sin", "cos",  "tan", "tanh",
                                    "abs", "sqrt", "exp", "log"};
      if (e.uop == UnaryOp::Neg) {
        out += '-';
        // Parenthesize a nested negation for readability ("-(-x)", not "--x").
        const Expr& c = e.children[0];
        bool child_neg = c.kind == NodeKind::Unary && c.uop == UnaryOp::Neg;
        format_child(c, child_neg ? 5 : 3, out);
        return;
      }
      out += names[static_cast<int>(e.uop)];
      out += '(';
      format_node(e.children[0], out);
      out += ')';
      return;
    }
    case NodeKind::Binary: {
      if (e.bop == BinaryOp::Min || e.bop == BinaryOp::Max) {
        out += e.bop == BinaryOp::Min ? "min(" : "max(";
        format_node(e.children[0], out);
        out += ", ";
        format_node(e.children[1], out);
        out += ')';
        return;
      }
      const char* symbol = nullptr;
      int lhs_min = 0, rhs_min = 0;
      switch (e.bop) {
        case BinaryOp::Add: symbol = " + "; lhs_min = 1; rhs_min = 2; break;
        case BinaryOp::Sub: symbol = " - "; lhs_min = 1; rhs_min = 2; break;
        case BinaryOp::Mul: symbol = " * "; lhs_min = 2; rhs_min = 3; break;
        case BinaryOp::Div: symbol = " / "; lhs_min = 2; rhs_min = 3; break;
        // '^' binds above unary '-'; its exponent slot reparses at the unary
        // level, so Neg and Pow children stay bare there.
        case BinaryOp::Pow: symbol = " ^ "; lhs_min = 5; rhs_min = 3; break;
        default: break;
      }
      format_child(e.children[0], lhs_min, out);
      out += symbol;
      format_child(e.children[1], rhs_min, out);
      return;
    }
  }
}

void collect_state_refs(const Expr& e, std::vector<int>& out) {
  if (e.kind == NodeKind::StateRef) out.push_back(e.index);
  for (const Expr& c : e.children) collect_state_refs(c, out);
}

}  // namespace

ReprProgram parse_repr_program(std::string_view text, int input_dim,
                               int max_outputs) {
  std::vector<Expr> outputs = parse_outputs(text, input_dim);
  if (outputs.empty())
    throw ParseError({1, 1}, "program has no 'out:' statements");
  if (static_cast<int>(outputs.size()) > max_outputs)
    throw ParseError(outputs[static_cast<std::size_t>(max_outputs)].span,
                     "program declares " + std::to_string(outputs.size()) +
                         " outputs; at most " + std::to_string(max_outputs) +
                         " are allowed");
  ReprProgram p;
  p.input_dim = input_dim;
  p.outputs = std::move(outputs);
  p.source_text = std::string(text);
  return p;
}

RewardProgram parse_reward_program(std::string_view text, int input_dim,
                                   int base_dim) {
  if (base_dim <= 0 || base_dim >= input_dim)
    throw std::invalid_argument(
        "base dimension must be positive and below the input dimension");
  std::vector<Expr> outputs = parse_outputs(text, input_dim);
  if (outputs.size() != 1)
    throw ParseError(outputs.empty() ? SourceSpan{1, 1} : outputs[1].span,
                     "reward program must have exactly one output, got " +
                         std::to_string(outputs.size()));
  std::vector<int> refs;
  collect_state_refs(outputs[0], refs);
  if (std::none_of(refs.begin(), refs.end(),
                   [&](int i) { return i >= base_dim; }))
    throw ParseError(outputs[0].span,
                     "reward program must reference at least one derived "
                     "dimension (s[i] with i >= " +
                         std::to_string(base_dim) + ")");
  RewardProgram p;
  p.input_dim = input_dim;
  p.base_dim = base_dim;
  p.output = std::move(outputs[0]);
  p.source_text = std::string(text);
  return p;
}

std::optional<std::vector<double>> eval_repr(const ReprProgram& program,
                                             std::span<const double> s) {
  if (static_cast<int>(s.size()) != program.input_dim)
    throw std::invalid_argument("input size does not match program dimension");
  std::vector<double> out;
  out.reserve(program.outputs.size());
  for (const Expr& e : program.outputs) {
    std::optional<double> v = finish_output(eval_node(e, s));
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

std::optional<double> eval_reward(const RewardProgram& program,
                                  std::span<const double> s_c) {
  if (static_cast<int>(s_c.size()) != program.input_dim)
    throw std::invalid_argument("input size does not match program dimension");
  return finish_output(eval_node(program.output, s_c));
}

std::string format_expr(const Expr& e) {
  std::string out;
  format_node(e, out);
  return out;
}

std::string format_program(const ReprProgram& program) {
  std::string out;
  for (const Expr& e : program.outputs) {
    out += "out: ";
    format_node(e, out);
    out += '\n';
  }
  return out;
}

std::string format_program(const RewardProgram& program) {
  std::string out = "out: ";
  format_node(program.output, out);
  out += '\n';
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Constant:
      if (a.value != b.value) return false;
      break;
    case NodeKind::StateRef:
      if (a.index != b.index) return false;
      break;
    case NodeKind::Unary:
      if (a.uop != b.uop) return false;
      break;
    case NodeKind::Binary:
      if (a.bop != b.bop) return false;
      break;
  }
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!structurally_equal(a.children[i], b.children[i])) return false;
  return true;
}

const std::string& grammar_text() {
  static const std::string text = R"(A program is one or more statements of the form

    out: <expr>

Each `out:` statement produces one output value. Statements are separated by
newlines or `;`. Text after `#` is a comment.

<expr> is infix arithmetic over real numbers:
  - operators + - * / ^  (`^` is real power; precedence: ^ above unary -
    above * / above + -)
  - parentheses for grouping
  - functions sin(x) cos(x) tan(x) tanh(x) abs(x) sqrt(x) exp(x) log(x)
    min(a,b) max(a,b)
  - state references s[i] for the i-th input dimension (0-based)
  - decimal literals such as 2, 0.5, 1e-3

Evaluation is total: sqrt clamps negative arguments to 0, log clamps
arguments below 1e-12, division clamps denominator magnitude to at least
1e-12 (sign kept), `a ^ b` uses repeated multiplication for integer b with
|b| <= 64, and every output is clamped to [-1e6, 1e6].
)";
  return text;
}

}  // namespace lesr::dsl
