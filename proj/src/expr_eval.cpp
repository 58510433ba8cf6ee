#include <cmath>
#include <cstring>
#include <tuple>
#include <unordered_map>

#include "expr_node.hpp"
#include "hmlab/error.hpp"
#include "hmlab/expr.hpp"

namespace hmlab {

namespace {

[[noreturn]] void domain_fail(const Expression& at, const std::string& what) {
  std::string text = render(at);
  if (text.size() > 160) text = text.substr(0, 157) + "...";
  throw DomainError("expr", what + " in '" + text + "'");
}

// Applies one operation to already-evaluated operands. `node` is only used
// for error reporting.
double apply(Op op, double a, double b, const Rational& r, const Expression& node) {
  switch (op) {
    case Op::Negate: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Exp: return std::exp(a);
    case Op::Log:
      if (!(a > 0.0)) domain_fail(node, "log of non-positive value " + std::to_string(a));
      return std::log(a);
    case Op::Sqrt:
      if (!(a >= 0.0)) domain_fail(node, "sqrt of negative value " + std::to_string(a));
      return std::sqrt(a);
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0.0) domain_fail(node, "division by zero");
      return a / b;
    case Op::Pow: {
      double out = 0.0;
      if (!rational_pow(a, r, out))
        domain_fail(node, "power " + r.str() + " undefined at base " + std::to_string(a));
      return out;
    }
    default: break;
  }
  return 0.0;
}

double lookup_param(const std::string& name, const ParamEnv& env) {
  auto it = env.find(name);
  if (it == env.end()) throw DomainError("expr", "unbound parameter '" + name + "'");
  return it->second;
}

double eval_rec(const Expression& e, std::span<const double> point, const ParamEnv& env,
                std::unordered_map<const detail::Node*, double>& memo) {
  switch (e.op()) {
    case Op::Constant: return e.constant_value();
    case Op::Parameter: return lookup_param(e.name(), env);
    case Op::Variable:
      if (e.variable_index() < 0 || static_cast<std::size_t>(e.variable_index()) >= point.size())
        throw DomainError("expr", "variable '" + e.name() + "' outside the point's dimension");
      return point[static_cast<std::size_t>(e.variable_index())];
    default: break;
  }
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  const double a = eval_rec(e.operand(0), point, env, memo);
  const double b = e.arity() == 2 ? eval_rec(e.operand(1), point, env, memo) : 0.0;
  const double v = apply(e.op(), a, b, e.exponent(), e);
  memo.emplace(e.id(), v);
  return v;
}

}  // namespace

double evaluate(const Expression& e, std::span<const double> point, const ParamEnv& env) {
  std::unordered_map<const detail::Node*, double> memo;
  return eval_rec(e, point, env, memo);
}

// ---------------------------------------------------------------------------

namespace {

struct InstrKey {
  Op op;
  std::uint32_t a;
  std::uint32_t b;
  int index;
  std::uint64_t value_bits;
  std::int64_t num;
  std::int64_t den;
  std::string name;

  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const noexcept {
    std::size_t h = static_cast<std::size_t>(k.op);
    auto mix = [&](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
    mix(k.a);
    mix(k.b);
    mix(static_cast<std::size_t>(k.index));
    mix(k.value_bits);
    mix(static_cast<std::size_t>(k.num));
    mix(static_cast<std::size_t>(k.den));
    mix(std::hash<std::string>{}(k.name));
    return h;
  }
};

}  // namespace

Tape::Tape(std::span<const Expression> roots) {
  std::unordered_map<const detail::Node*, std::uint32_t> slot_of;
  std::unordered_map<InstrKey, std::uint32_t, InstrKeyHash> cse;

  // Iterative post-order walk; expressions can be deep.
  auto compile = [&](const Expression& root) -> std::uint32_t {
    std::vector<std::pair<Expression, bool>> stack;
    stack.emplace_back(root, false);
    while (!stack.empty()) {
      auto [e, expanded] = stack.back();
      stack.pop_back();
      if (slot_of.count(e.id())) continue;
      if (!expanded && e.arity() > 0) {
        stack.emplace_back(e, true);
        for (int i = e.arity() - 1; i >= 0; --i) {
          Expression child = e.operand(i);
          if (!slot_of.count(child.id())) stack.emplace_back(child, false);
        }
        continue;
      }
      InstrKey key{e.op(), 0, 0, -1, 0, 0, 1, {}};
      if (e.arity() > 0) key.a = slot_of.at(e.operand(0).id());
      if (e.arity() > 1) key.b = slot_of.at(e.operand(1).id());
      switch (e.op()) {
        case Op::Constant: {
          const double v = e.constant_value();
          std::memcpy(&key.value_bits, &v, sizeof v);
          break;
        }
        case Op::Variable:
          key.index = e.variable_index();
          key.name = e.name();
          break;
        case Op::Parameter: key.name = e.name(); break;
        case Op::Pow:
          key.num = e.exponent().num();
          key.den = e.exponent().den();
          break;
        default: break;
      }
      auto it = cse.find(key);
      if (it != cse.end()) {
        slot_of.emplace(e.id(), it->second);
        continue;
      }
      const auto slot = static_cast<std::uint32_t>(code_.size());
      Instr ins;
      ins.op = e.op();
      ins.a = key.a;
      ins.b = key.b;
      ins.index = e.variable_index();
      ins.value = e.constant_value();
      ins.exponent = e.exponent();
      ins.node = e.id();
      code_.push_back(ins);
      if (e.op() == Op::Parameter) params_.emplace_back(slot, e.name());
      keep_alive_.push_back(e);
      cse.emplace(std::move(key), slot);
      slot_of.emplace(e.id(), slot);
    }
    return slot_of.at(root.id());
  };

  outputs_.reserve(roots.size());
  for (const auto& r : roots) outputs_.push_back(compile(r));
}

std::vector<double> Tape::evaluate(std::span<const double> point, const ParamEnv& env) const {
  std::vector<double> scratch;
  std::vector<double> out(outputs_.size());
  evaluate(point, env, scratch, out);
  return out;
}

void Tape::evaluate(std::span<const double> point, const ParamEnv& env, std::vector<double>& scratch,
                    std::span<double> out) const {
  scratch.resize(code_.size());
  double* v = scratch.data();
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case Op::Constant: v[i] = ins.value; break;
      case Op::Parameter: break;
      case Op::Variable:
        if (ins.index < 0 || static_cast<std::size_t>(ins.index) >= point.size())
          throw DomainError("expr", "variable index outside the point's dimension");
        v[i] = point[static_cast<std::size_t>(ins.index)];
        break;
      case Op::Negate: v[i] = -v[ins.a]; break;
      case Op::Add: v[i] = v[ins.a] + v[ins.b]; break;
      case Op::Sub: v[i] = v[ins.a] - v[ins.b]; break;
      case Op::Mul: v[i] = v[ins.a] * v[ins.b]; break;
      case Op::Sin: v[i] = std::sin(v[ins.a]); break;
      case Op::Cos: v[i] = std::cos(v[ins.a]); break;
      case Op::Exp: v[i] = std::exp(v[ins.a]); break;
      default: {
        // Checked operations; the keep-alive list owns the node.
        const Expression& node = keep_alive_[i];
        v[i] = apply(ins.op, v[ins.a], ins.op == Op::Pow ? 0.0 : v[ins.b], ins.exponent, node);
        break;
      }
    }
    if (ins.op == Op::Parameter) {
      for (const auto& [slot, name] : params_) {
        if (slot == i) v[i] = lookup_param(name, env);
      }
    }
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[k] = v[outputs_[k]];
}

}  // namespace hmlab
