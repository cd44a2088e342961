#pragma once

#include "lamelab/common.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace lamelab {

/// Closed-form scalar expression over (x, y, z), with exact symbolic
/// differentiation. Accepted syntax: numbers, `x y z` (or `x1 x2 x3`),
/// `pi`, `e`, binary `+ - * / ^`, unary minus, and the functions
/// sin cos tan exp log sqrt sinh cosh tanh abs sign.
class Expr {
public:
    Expr();  // the constant 0

    static Expr parse(std::string_view text);
    static Expr constant(double value);
    static Expr variable(int axis);

    double operator()(const Vec3& x) const;

    /// d/dx_axis, simplified by constant folding.
    Expr derivative(int axis) const;

    bool is_constant() const;
    std::optional<double> constant_value() const;

    std::string str() const;

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a);

    struct Node;

private:
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;

    friend struct ExprBuilder;
};

}  // namespace lamelab
