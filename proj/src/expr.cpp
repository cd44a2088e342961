#include "lamelab/expr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace lamelab {

enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Func };
enum class Fn { Sin, Cos, Tan, Exp, Log, Sqrt, Sinh, Cosh, Tanh, Abs, Sign };

struct Expr::Node {
    Op op = Op::Const;
    double value = 0.0;
    int axis = 0;
    Fn fn = Fn::Sin;
    std::shared_ptr<const Node> a, b;
};

struct ExprBuilder {
    using NodePtr = std::shared_ptr<const Expr::Node>;

    static Expr wrap(NodePtr n) { return Expr(std::move(n)); }
    static const NodePtr& node(const Expr& e) { return e.node_; }

    static NodePtr make_const(double v) {
        auto n = std::make_shared<Expr::Node>();
        n->op = Op::Const;
        n->value = v;
        return n;
    }

    static NodePtr make_var(int axis) {
        auto n = std::make_shared<Expr::Node>();
        n->op = Op::Var;
        n->axis = axis;
        return n;
    }

    static std::optional<double> cval(const NodePtr& n) {
        if (n->op == Op::Const) return n->value;
        return std::nullopt;
    }

    static double apply_fn(Fn fn, double v) {
        switch (fn) {
        case Fn::Sin: return std::sin(v);
        case Fn::Cos: return std::cos(v);
        case Fn::Tan: return std::tan(v);
        case Fn::Exp: return std::exp(v);
        case Fn::Log: return std::log(v);
        case Fn::Sqrt: return std::sqrt(v);
        case Fn::Sinh: return std::sinh(v);
        case Fn::Cosh: return std::cosh(v);
        case Fn::Tanh: return std::tanh(v);
        case Fn::Abs: return std::fabs(v);
        case Fn::Sign: return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        }
        return 0.0;
    }

    static double apply_bin(Op op, double x, double y) {
        switch (op) {
        case Op::Add: return x + y;
        case Op::Sub: return x - y;
        case Op::Mul: return x * y;
        case Op::Div: return x / y;
        case Op::Pow: return std::pow(x, y);
        default: return 0.0;
        }
    }

    static NodePtr make_bin(Op op, NodePtr a, NodePtr b) {
        auto ca = cval(a);
        auto cb = cval(b);
        if (ca && cb) return make_const(apply_bin(op, *ca, *cb));
        switch (op) {
        case Op::Add:
            if (ca && *ca == 0.0) return b;
            if (cb && *cb == 0.0) return a;
            break;
        case Op::Sub:
            if (cb && *cb == 0.0) return a;
            if (ca && *ca == 0.0) return make_neg(b);
            break;
        case Op::Mul:
            if ((ca && *ca == 0.0) || (cb && *cb == 0.0)) return make_const(0.0);
            if (ca && *ca == 1.0) return b;
            if (cb && *cb == 1.0) return a;
            break;
        case Op::Div:
            if (ca && *ca == 0.0) return make_const(0.0);
            if (cb && *cb == 1.0) return a;
            break;
        case Op::Pow:
            if (cb && *cb == 0.0) return make_const(1.0);
            if (cb && *cb == 1.0) return a;
            break;
        default: break;
        }
        auto n = std::make_shared<Expr::Node>();
        n->op = op;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    static NodePtr make_neg(NodePtr a) {
        if (auto c = cval(a)) return make_const(-*c);
        if (a->op == Op::Neg) return a->a;
        auto n = std::make_shared<Expr::Node>();
        n->op = Op::Neg;
        n->a = std::move(a);
        return n;
    }

    static NodePtr make_fn(Fn fn, NodePtr a) {
        if (auto c = cval(a)) return make_const(apply_fn(fn, *c));
        auto n = std::make_shared<Expr::Node>();
        n->op = Op::Func;
        n->fn = fn;
        n->a = std::move(a);
        return n;
    }

    static double eval(const Expr::Node& n, const Vec3& x) {
        switch (n.op) {
        case Op::Const: return n.value;
        case Op::Var: return x[n.axis];
        case Op::Neg: return -eval(*n.a, x);
        case Op::Func: return apply_fn(n.fn, eval(*n.a, x));
        default: return apply_bin(n.op, eval(*n.a, x), eval(*n.b, x));
        }
    }

    static NodePtr diff(const NodePtr& n, int axis) {
        switch (n->op) {
        case Op::Const: return make_const(0.0);
        case Op::Var: return make_const(n->axis == axis ? 1.0 : 0.0);
        case Op::Neg: return make_neg(diff(n->a, axis));
        case Op::Add: return make_bin(Op::Add, diff(n->a, axis), diff(n->b, axis));
        case Op::Sub: return make_bin(Op::Sub, diff(n->a, axis), diff(n->b, axis));
        case Op::Mul:
            return make_bin(Op::Add, make_bin(Op::Mul, diff(n->a, axis), n->b),
                            make_bin(Op::Mul, n->a, diff(n->b, axis)));
        case Op::Div: {
            // (a'b - ab') / b^2
            auto num = make_bin(Op::Sub, make_bin(Op::Mul, diff(n->a, axis), n->b),
                                make_bin(Op::Mul, n->a, diff(n->b, axis)));
            return make_bin(Op::Div, num, make_bin(Op::Mul, n->b, n->b));
        }
        case Op::Pow: {
            auto da = diff(n->a, axis);
            if (auto c = cval(n->b)) {
                return make_bin(Op::Mul,
                                make_bin(Op::Mul, make_const(*c),
                                         make_bin(Op::Pow, n->a, make_const(*c - 1.0))),
                                da);
            }
            // a^b (b' log a + b a'/a)
            auto db = diff(n->b, axis);
            auto t1 = make_bin(Op::Mul, db, make_fn(Fn::Log, n->a));
            auto t2 = make_bin(Op::Div, make_bin(Op::Mul, n->b, da), n->a);
            return make_bin(Op::Mul, n, make_bin(Op::Add, t1, t2));
        }
        case Op::Func: {
            auto da = diff(n->a, axis);
            if (auto c = cval(da); c && *c == 0.0) return make_const(0.0);
            NodePtr outer;
            const auto& a = n->a;
            switch (n->fn) {
            case Fn::Sin: outer = make_fn(Fn::Cos, a); break;
            case Fn::Cos: outer = make_neg(make_fn(Fn::Sin, a)); break;
            case Fn::Tan: {
                auto c = make_fn(Fn::Cos, a);
                outer = make_bin(Op::Div, make_const(1.0), make_bin(Op::Mul, c, c));
                break;
            }
            case Fn::Exp: outer = n; break;
            case Fn::Log: outer = make_bin(Op::Div, make_const(1.0), a); break;
            case Fn::Sqrt: outer = make_bin(Op::Div, make_const(0.5), n); break;
            case Fn::Sinh: outer = make_fn(Fn::Cosh, a); break;
            case Fn::Cosh: outer = make_fn(Fn::Sinh, a); break;
            case Fn::Tanh: {
                auto c = make_fn(Fn::Cosh, a);
                outer = make_bin(Op::Div, make_const(1.0), make_bin(Op::Mul, c, c));
                break;
            }
            case Fn::Abs: outer = make_fn(Fn::Sign, a); break;
            case Fn::Sign: return make_const(0.0);
            }
            return make_bin(Op::Mul, outer, da);
        }
        }
        return make_const(0.0);
    }

    static void print(const Expr::Node& n, std::ostream& os) {
        static const char* names[] = {"sin", "cos", "tan", "exp", "log", "sqrt",
                                      "sinh", "cosh", "tanh", "abs", "sign"};
        switch (n.op) {
        case Op::Const: {
            std::ostringstream s;
            s.precision(17);
            s << n.value;
            os << (n.value < 0 ? "(" + s.str() + ")" : s.str());
            return;
        }
        case Op::Var: os << "xyz"[n.axis]; return;
        case Op::Neg: os << "(-"; print(*n.a, os); os << ")"; return;
        case Op::Func:
            os << names[static_cast<int>(n.fn)] << "(";
            print(*n.a, os);
            os << ")";
            return;
        default: {
            const char sym = n.op == Op::Add ? '+' : n.op == Op::Sub ? '-' : n.op == Op::Mul ? '*'
                           : n.op == Op::Div ? '/' : '^';
            os << "(";
            print(*n.a, os);
            os << sym;
            print(*n.b, os);
            os << ")";
        }
        }
    }
};

namespace {

// Recursive-descent parser:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | '+' unary | power
//   power  := atom ('^' unary)?
class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    ExprBuilder::NodePtr parse() {
        auto n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return n;
    }

private:
    std::string_view s_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw InputError("expression '" + std::string(s_) + "': " + what + " at position " +
                         std::to_string(pos_));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    ExprBuilder::NodePtr expr() {
        auto n = term();
        for (;;) {
            if (accept('+')) n = ExprBuilder::make_bin(Op::Add, n, term());
            else if (accept('-')) n = ExprBuilder::make_bin(Op::Sub, n, term());
            else return n;
        }
    }

    ExprBuilder::NodePtr term() {
        auto n = unary();
        for (;;) {
            if (accept('*')) n = ExprBuilder::make_bin(Op::Mul, n, unary());
            else if (accept('/')) n = ExprBuilder::make_bin(Op::Div, n, unary());
            else return n;
        }
    }

    ExprBuilder::NodePtr unary() {
        if (accept('-')) return ExprBuilder::make_neg(unary());
        if (accept('+')) return unary();
        return power();
    }

    ExprBuilder::NodePtr power() {
        auto base = atom();
        if (accept('^')) return ExprBuilder::make_bin(Op::Pow, base, unary());
        return base;
    }

    ExprBuilder::NodePtr atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto n = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.data() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<size_t>(end - begin);
            return ExprBuilder::make_const(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            const std::string id(s_.substr(start, pos_ - start));
            if (id == "x" || id == "x1") return ExprBuilder::make_var(0);
            if (id == "y" || id == "x2") return ExprBuilder::make_var(1);
            if (id == "z" || id == "x3") return ExprBuilder::make_var(2);
            if (id == "pi") return ExprBuilder::make_const(std::numbers::pi);
            if (id == "e") return ExprBuilder::make_const(std::numbers::e);
            static const std::pair<const char*, Fn> fns[] = {
                {"sin", Fn::Sin},   {"cos", Fn::Cos},   {"tan", Fn::Tan},   {"exp", Fn::Exp},
                {"log", Fn::Log},   {"sqrt", Fn::Sqrt}, {"sinh", Fn::Sinh}, {"cosh", Fn::Cosh},
                {"tanh", Fn::Tanh}, {"abs", Fn::Abs},   {"sign", Fn::Sign}};
            for (const auto& [name, fn] : fns) {
                if (id == name) {
                    if (!accept('(')) fail("expected '(' after " + id);
                    auto arg = expr();
                    if (!accept(')')) fail("expected ')'");
                    return ExprBuilder::make_fn(fn, arg);
                }
            }
            fail("unknown identifier '" + id + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace

Expr::Expr() : node_(ExprBuilder::make_const(0.0)) {}

Expr Expr::parse(std::string_view text) { return Expr(Parser(text).parse()); }

Expr Expr::constant(double value) { return Expr(ExprBuilder::make_const(value)); }

Expr Expr::variable(int axis) {
    if (axis < 0 || axis > 2) throw InputError("variable axis must be 0, 1 or 2");
    return Expr(ExprBuilder::make_var(axis));
}

double Expr::operator()(const Vec3& x) const { return ExprBuilder::eval(*node_, x); }

Expr Expr::derivative(int axis) const { return Expr(ExprBuilder::diff(node_, axis)); }

bool Expr::is_constant() const { return node_->op == Op::Const; }

std::optional<double> Expr::constant_value() const { return ExprBuilder::cval(node_); }

std::string Expr::str() const {
    std::ostringstream os;
    ExprBuilder::print(*node_, os);
    return os.str();
}

Expr operator+(const Expr& a, const Expr& b) {
    return ExprBuilder::wrap(ExprBuilder::make_bin(Op::Add, ExprBuilder::node(a), ExprBuilder::node(b)));
}
Expr operator-(const Expr& a, const Expr& b) {
    return ExprBuilder::wrap(ExprBuilder::make_bin(Op::Sub, ExprBuilder::node(a), ExprBuilder::node(b)));
}
Expr operator*(const Expr& a, const Expr& b) {
    return ExprBuilder::wrap(ExprBuilder::make_bin(Op::Mul, ExprBuilder::node(a), ExprBuilder::node(b)));
}
Expr operator/(const Expr& a, const Expr& b) {
    return ExprBuilder::wrap(ExprBuilder::make_bin(Op::Div, ExprBuilder::node(a), ExprBuilder::node(b)));
}
Expr operator-(const Expr& a) { return ExprBuilder::wrap(ExprBuilder::make_neg(ExprBuilder::node(a))); }

}  // namespace lamelab
