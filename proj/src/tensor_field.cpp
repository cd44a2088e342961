#include "lamelab/tensor_field.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace lamelab {

Mat3 IsotropicTensor::apply(const Mat3& A) const {
    return lambda * A.trace() * Mat3::Identity() + mu * (A + A.transpose());
}

double IsotropicTensor::component(int i, int j, int k, int l) const {
    auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    return lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
}

Mat3 apply_tensor(const IsotropicTensor& C, const Mat3& A) { return C.apply(A); }

ScalarField ScalarField::constant(double v) { return expression(Expr::constant(v)); }

ScalarField ScalarField::expression(const std::string& text) { return expression(Expr::parse(text)); }

ScalarField ScalarField::expression(Expr e) {
    ScalarField f;
    f.kind_ = Kind::Expression;
    f.expr_ = std::move(e);
    for (int k = 0; k < 3; ++k) f.grad_[k] = f.expr_.derivative(k);
    return f;
}

ScalarField ScalarField::piecewise(double fallback, std::vector<std::pair<Box, double>> pieces) {
    ScalarField f;
    f.kind_ = Kind::Piecewise;
    f.fallback_ = fallback;
    f.pieces_ = std::move(pieces);
    return f;
}

double ScalarField::operator()(const Vec3& x) const {
    if (kind_ == Kind::Expression) return expr_(x);
    for (const auto& [box, v] : pieces_)
        if (box.contains(x)) return v;
    return fallback_;
}

Vec3 ScalarField::gradient(const Vec3& x) const {
    if (kind_ == Kind::Piecewise) return Vec3::Zero();
    return Vec3(grad_[0](x), grad_[1](x), grad_[2](x));
}

bool ScalarField::is_constant() const {
    if (kind_ == Kind::Expression) return expr_.is_constant();
    for (const auto& piece : pieces_)
        if (piece.second != fallback_) return false;
    return true;
}

std::string ScalarField::describe() const {
    if (kind_ == Kind::Expression) return expr_.str();
    std::ostringstream os;
    os.precision(17);
    os << "piecewise(" << fallback_;
    for (const auto& [b, v] : pieces_)
        os << ";[" << b.lo.transpose() << "]-[" << b.hi.transpose() << "]=" << v;
    os << ")";
    return os.str();
}

LameField LameField::constant(double lambda, double mu) {
    LameField f;
    f.lambda = ScalarField::constant(lambda);
    f.mu = ScalarField::constant(mu);
    return f;
}

std::string LameField::describe() const {
    return "lambda=" + lambda.describe() + ",mu=" + mu.describe();
}

IsotropicTensor freeze_at(const LameField& field, const Vec3& x0) { return field.at(x0); }

bool MaterialReport::passed(const std::string& condition) const {
    for (const auto& v : violations)
        if (v.condition == condition) return false;
    return true;
}

MaterialReport validate_material(const LameField& field, const std::vector<Vec3>& samples,
                                 const MaterialBounds& b) {
    if (samples.empty()) throw InputError("validate_material: empty sample set");
    MaterialReport r;
    r.samples = samples.size();
    const double inf = std::numeric_limits<double>::infinity();
    r.min_margin_convexity_mu = r.min_margin_convexity_bulk = r.min_margin_mu_bar = r.min_margin_lambda_bar = inf;
    for (const Vec3& x : samples) {
        const double lam = field.lambda(x), mu = field.mu(x);
        const double m[4] = {mu - b.alpha0, 2 * mu + 3 * lam - b.gamma0, b.mu_bar - mu, b.lambda_bar - lam};
        static const char* names[4] = {"mu>=alpha0", "2mu+3lambda>=gamma0", "mu<=mu_bar", "lambda<=lambda_bar"};
        r.min_margin_convexity_mu = std::min(r.min_margin_convexity_mu, m[0]);
        r.min_margin_convexity_bulk = std::min(r.min_margin_convexity_bulk, m[1]);
        r.min_margin_mu_bar = std::min(r.min_margin_mu_bar, m[2]);
        r.min_margin_lambda_bar = std::min(r.min_margin_lambda_bar, m[3]);
        for (int k = 0; k < 4; ++k)
            if (!(m[k] >= 0.0)) r.violations.push_back({names[k], x, m[k]});
    }
    return r;
}

IsotropicTensor PiecewiseTensor::blend(const Vec3& x, double chi) const {
    const IsotropicTensor bg = background.at(x);
    if (!region || chi == 0.0) return bg;
    const IsotropicTensor in = inclusion.at(x);
    return {bg.lambda + chi * (in.lambda - bg.lambda), bg.mu + chi * (in.mu - bg.mu)};
}

bool PiecewiseTensor::is_homogeneous_constant() const {
    if (!background.is_constant()) return false;
    if (!region) return true;
    return inclusion.is_constant() && background.at(Vec3::Zero()) == inclusion.at(Vec3::Zero());
}

std::string PiecewiseTensor::fingerprint() const {
    std::string s = "bg{" + background.describe() + "}";
    if (region) s += " in{" + inclusion.describe() + "} D{" + region->describe() + "}";
    return s;
}

PiecewiseTensor PiecewiseTensor::homogeneous(const LameField& f) {
    PiecewiseTensor t;
    t.background = f;
    t.inclusion = f;
    return t;
}

PiecewiseTensor PiecewiseTensor::constant(const IsotropicTensor& bg, const IsotropicTensor& incl,
                                          std::shared_ptr<const InclusionGeometry> region) {
    PiecewiseTensor t;
    t.background = LameField::constant(bg.lambda, bg.mu);
    t.inclusion = LameField::constant(incl.lambda, incl.mu);
    t.region = std::move(region);
    return t;
}

double jump_magnitude(const PiecewiseTensor& c, const DomainSpec& omega, const Vec3& x) {
    if (!omega.box.contains(x, 1e-12)) throw DomainError("jump_magnitude: point outside the closed domain");
    const IsotropicTensor a = c.background.at(x), b = c.inclusion.at(x);
    return std::hypot(a.lambda - b.lambda, a.mu - b.mu);
}

namespace {

ScalarField field_from_json(const nlohmann::json& j, const char* what) {
    if (j.is_number()) return ScalarField::constant(j.get<double>());
    if (j.is_string()) return ScalarField::expression(j.get<std::string>());
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key() != "default" && it.key() != "boxes")
                throw ConfigError(std::string("unknown key '") + it.key() + "' in piecewise field " + what);
        std::vector<std::pair<Box, double>> pieces;
        for (const auto& p : j.value("boxes", nlohmann::json::array())) {
            Box b;
            for (int k = 0; k < 3; ++k) {
                b.lo[k] = p.at("lo").at(k).get<double>();
                b.hi[k] = p.at("hi").at(k).get<double>();
            }
            pieces.emplace_back(b, p.at("value").get<double>());
        }
        return ScalarField::piecewise(j.at("default").get<double>(), std::move(pieces));
    }
    throw ConfigError(std::string("field ") + what + " must be a number, expression string or piecewise object");
}

LameField lame_from_json(const nlohmann::json& j, const char* what) {
    LameField f;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "lambda" && k != "mu" && k != "regularity" && k != "tau" && k != "M")
            throw ConfigError("unknown key '" + k + "' in materials." + what);
    }
    f.lambda = field_from_json(j.at("lambda"), "lambda");
    f.mu = field_from_json(j.at("mu"), "mu");
    const std::string reg = j.value("regularity", std::string("C11"));
    if (reg == "C11") f.regularity = Regularity::C11;
    else if (reg == "Ctau") f.regularity = Regularity::Ctau;
    else throw ConfigError("regularity must be C11 or Ctau");
    f.tau = j.value("tau", 1.0);
    f.bound_M = j.value("M", 1.0);
    if (!(f.tau > 0 && f.tau <= 1)) throw ConfigError("tau must lie in (0, 1]");
    return f;
}

}  // namespace

MaterialPreset MaterialPreset::defaults() {
    MaterialPreset p;
    p.background = LameField::constant(1.0, 1.0);
    p.inclusion = LameField::constant(4.0, 4.0);
    p.bounds = MaterialBounds{0.5, 0.5, 10.0, 10.0};
    p.eta0 = std::sqrt(18.0);
    return p;
}

MaterialPreset MaterialPreset::from_json(const nlohmann::json& j) {
    static const char* keys[] = {"background", "inclusion", "alpha0", "gamma0", "mu_bar", "lambda_bar", "eta0"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok |= it.key() == k;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in materials");
    }
    MaterialPreset p = defaults();
    try {
        if (j.contains("background")) p.background = lame_from_json(j.at("background"), "background");
        if (j.contains("inclusion")) p.inclusion = lame_from_json(j.at("inclusion"), "inclusion");
        p.bounds.alpha0 = j.value("alpha0", p.bounds.alpha0);
        p.bounds.gamma0 = j.value("gamma0", p.bounds.gamma0);
        p.bounds.mu_bar = j.value("mu_bar", p.bounds.mu_bar);
        p.bounds.lambda_bar = j.value("lambda_bar", p.bounds.lambda_bar);
        p.eta0 = j.value("eta0", p.eta0);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("materials: ") + e.what());
    } catch (const InputError& e) {
        throw ConfigError(std::string("materials: ") + e.what());
    }
    return p;
}

nlohmann::json MaterialPreset::to_json() const {
    auto lame = [](const LameField& f) {
        return nlohmann::json{{"lambda", f.lambda.describe()},
                              {"mu", f.mu.describe()},
                              {"regularity", f.regularity == Regularity::C11 ? "C11" : "Ctau"},
                              {"tau", f.tau},
                              {"M", f.bound_M}};
    };
    return {{"background", lame(background)}, {"inclusion", lame(inclusion)}, {"alpha0", bounds.alpha0},
            {"gamma0", bounds.gamma0},         {"mu_bar", bounds.mu_bar},     {"lambda_bar", bounds.lambda_bar},
            {"eta0", eta0}};
}

std::vector<Vec3> grid_points(const Box& box, int k) {
    if (k < 1) throw InputError("grid_points: k must be positive");
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(k + 1) * (k + 1) * (k + 1));
    const Vec3 step = box.extent() / k;
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= k; ++j)
            for (int l = 0; l <= k; ++l) pts.push_back(box.lo + Vec3(i * step[0], j * step[1], l * step[2]));
    return pts;
}

}  // namespace lamelab
