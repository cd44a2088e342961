#include "lamelab/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lamelab {

namespace {

using json = nlohmann::json;

json vec(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 to_vec(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be an array of 3 numbers");
    Vec3 v;
    for (int k = 0; k < 3; ++k) {
        if (!j[k].is_number()) throw ConfigError(what + " must be an array of 3 numbers");
        v[k] = j[k].get<double>();
    }
    return v;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok |= it.key() == k;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + what);
    }
}

const char* type_name(const json& j) {
    if (j.is_number()) return "number";
    return j.type_name();
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

double positive(const json& j, const std::string& what) {
    const double v = j.get<double>();
    if (!(v > 0)) throw ConfigError(what + " must be positive");
    return v;
}

int positive_int(const json& j, const std::string& what) {
    if (!j.is_number_integer() && !(j.is_number() && std::floor(j.get<double>()) == j.get<double>()))
        throw ConfigError(what + " must be an integer");
    const int v = static_cast<int>(j.get<double>());
    if (v < 1) throw ConfigError(what + " must be positive");
    return v;
}

}  // namespace

InclusionGeometry inclusion_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("inclusion needs a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    try {
        if (kind == "ball") {
            reject_unknown(j, {"kind", "center", "radius"}, "ball inclusion");
            return InclusionGeometry::ball(to_vec(j.at("center"), "center"), j.at("radius").get<double>());
        }
        if (kind == "ellipsoid") {
            reject_unknown(j, {"kind", "center", "semiaxes", "rotation"}, "ellipsoid inclusion");
            Mat3 R = Mat3::Identity();
            if (j.contains("rotation")) {
                const json& r = j.at("rotation");
                if (!r.is_array() || r.size() != 3) throw ConfigError("rotation must be a 3x3 array");
                for (int i = 0; i < 3; ++i) R.row(i) = to_vec(r[i], "rotation row").transpose();
            }
            return InclusionGeometry::ellipsoid(to_vec(j.at("center"), "center"), to_vec(j.at("semiaxes"), "semiaxes"), R);
        }
    } catch (const InputError& e) {
        throw ConfigError(std::string("inclusion: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("inclusion: ") + e.what());
    }
    throw ConfigError("unknown inclusion kind '" + kind + "' (ball | ellipsoid)");
}

json inclusion_to_json(const InclusionGeometry& g) {
    switch (g.kind()) {
    case InclusionGeometry::Kind::Ball: return {{"kind", "ball"}, {"center", vec(g.center())}, {"radius", g.radius()}};
    case InclusionGeometry::Kind::Ellipsoid: {
        json R = json::array();
        for (int i = 0; i < 3; ++i) R.push_back(vec(g.rotation().row(i).transpose()));
        return {{"kind", "ellipsoid"}, {"center", vec(g.center())}, {"semiaxes", vec(g.semiaxes())}, {"rotation", R}};
    }
    case InclusionGeometry::Kind::HalfSpace: break;
    }
    throw ConfigError("half-spaces are not configurable inclusions");
}

json default_config() {
    json j;
    j["seed"] = 1;
    j["materials"] = MaterialPreset::defaults().to_json();
    j["omega"] = {{"box", {{"lo", {0.0, 0.0, 0.0}}, {"hi", {1.0, 1.0, 1.0}}}},
                  {"rho0", 1.0},
                  {"M0", 1.0},
                  {"M1", 1.0},
                  {"alpha", 1.0}};
    j["inclusions"] = json::array({inclusion_to_json(InclusionGeometry::ball(Vec3(0.45, 0.5, 0.5), 0.25)),
                                   inclusion_to_json(InclusionGeometry::ball(Vec3(0.8, 0.5, 0.5), 0.1))});
    j["mesh"] = {{"n", 16}, {"chi", "volume_fraction"}, {"subcells", 4}};
    j["norm"] = {{"scale", 1.0}, {"rho0_exponent", 1.0}};
    const GreensOptions g;
    j["greens"] = {{"backend", to_string(g.backend)},
                   {"center", {0.5, 0.5, 0.5}},
                   {"L1", g.L1},
                   {"L2", g.L2},
                   {"extrapolate", g.extrapolate},
                   {"kappa", g.kappa},
                   {"probe_delta", g.probe_delta},
                   {"probe_fraction", g.probe_fraction},
                   {"surface_delta", g.surface_delta},
                   {"surface_kappa", g.surface_kappa},
                   {"resolve_box", nullptr},
                   {"box_delta", g.box_delta},
                   {"moll_cells", g.moll_cells},
                   {"max_level", g.max_level},
                   {"variants", {"frozen", "variable_background", "full1", "full2"}},
                   {"pairs",
                    {{{-0.3, 0.45, 0.5}, {-0.3, 0.75, 0.45}},
                     {{0.1, 0.1, 0.1}, {0.9, 0.2, 0.8}},
                     {{0.2, 0.85, 0.5}, {0.6, 0.15, 0.3}}}}};
    const BoundsConfig b;
    j["bounds"] = {{"h_bar", b.h_bar},
                   {"h_tilde", b.h_tilde},
                   {"h_ceiling", b.h_ceiling},
                   {"num_h", b.num_h},
                   {"h_ratio", b.h_ratio},
                   {"h_list", json::array()},
                   {"lambda_ws", b.lambda_ws},
                   {"directions", b.directions},
                   {"plateau_fraction", b.plateau_fraction},
                   {"triangle_tol", b.triangle_tol},
                   {"slope_center", b.slope_center},
                   {"slope_halfwidth", b.slope_halfwidth},
                   {"term2_slope_max", b.term2_slope_max},
                   {"null_tol", b.null_tol},
                   {"terms", true}};
    j["stability"] = {{"family", "ball_offset"},
                      {"count", 6},
                      {"t", json::array()},
                      {"base", nullptr},
                      {"direction", {1.0, 1.0, 1.0}},
                      {"include_reference", true},
                      {"hausdorff_samples", 4096},
                      {"clearance", 0.2}};
    j["forward"] = {{"data", "linear"}, {"export_field", true}};
    j["dtn"] = {{"export", false}};
    j["verify"] = {{"n", 8}, {"data_pairs", 5}, {"bounds", true}, {"greens", true}};
    return j;
}

void merge_config(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config" + (path.empty() ? std::string() : " at '" + path + "'") + " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& slot = base[it.key()];
        if (it.key() == "materials" && path.empty()) {
            // Validated as a whole by the materials parser.
            if (!it->is_object()) throw ConfigError("'materials' must be an object");
            json m = slot;
            for (auto mt = it->begin(); mt != it->end(); ++mt) m[mt.key()] = *mt;
            slot = m;
            continue;
        }
        if (slot.is_null()) {
            slot = *it;
        } else if (slot.is_object()) {
            merge_config(slot, *it, key);
        } else {
            if (!same_kind(slot, *it) && !it->is_null())
                throw ConfigError("config key '" + key + "' expects " + type_name(slot) + ", got " + type_name(*it));
            slot = *it;
        }
    }
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    // Build a nested patch and merge it so the same checks apply.
    json patch = value;
    std::string rest = key;
    std::vector<std::string> parts;
    for (size_t p; (p = rest.find('.')) != std::string::npos; rest = rest.substr(p + 1)) parts.push_back(rest.substr(0, p));
    parts.push_back(rest);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
        patch = json{{*it, patch}};
    }
    merge_config(doc, patch);
}

RunConfig resolve_config(const json& doc_in) {
    json doc = default_config();
    merge_config(doc, doc_in);
    RunConfig c;
    c.doc = doc;
    try {
        const json& s = doc.at("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seed must be a nonnegative integer");
        c.seed = s.get<uint64_t>();

        c.materials = MaterialPreset::from_json(doc.at("materials"));

        const json& o = doc.at("omega");
        reject_unknown(o, {"box", "rho0", "M0", "M1", "alpha"}, "omega");
        reject_unknown(o.at("box"), {"lo", "hi"}, "omega.box");
        c.omega.box.lo = to_vec(o.at("box").at("lo"), "omega.box.lo");
        c.omega.box.hi = to_vec(o.at("box").at("hi"), "omega.box.hi");
        c.omega.rho0 = o.at("rho0").get<double>();
        c.omega.M0 = o.at("M0").get<double>();
        c.omega.M1 = o.at("M1").get<double>();
        c.omega.alpha = o.at("alpha").get<double>();
        try {
            c.omega.validate();
        } catch (const InputError& e) {
            throw ConfigError(std::string("omega: ") + e.what());
        }

        const json& inc = doc.at("inclusions");
        if (inc.size() < 2) throw ConfigError("inclusions must list D1 and D2");
        for (const json& e : inc) {
            c.inclusions.push_back(inclusion_from_json(e));
            const Box b = c.inclusions.back().bounding_box();
            for (int k = 0; k < 3; ++k)
                if (!(b.lo[k] > c.omega.box.lo[k] && b.hi[k] < c.omega.box.hi[k]))
                    throw ConfigError("inclusion " + c.inclusions.back().describe() + " is not strictly inside omega");
        }

        const json& m = doc.at("mesh");
        c.setup.omega = c.omega;
        c.setup.materials = c.materials;
        c.setup.n = positive_int(m.at("n"), "mesh.n");
        c.setup.assembly.chi = parse_chi_mode(m.at("chi").get<std::string>());
        c.setup.assembly.subcells = positive_int(m.at("subcells"), "mesh.subcells");
        c.setup.norm_scale = positive(doc.at("norm").at("scale"), "norm.scale");
        c.setup.rho0_exponent = doc.at("norm").at("rho0_exponent").get<double>();

        const json& g = doc.at("greens");
        c.greens.backend = parse_backend(g.at("backend").get<std::string>());
        c.greens.center = to_vec(g.at("center"), "greens.center");
        c.greens.L1 = positive(g.at("L1"), "greens.L1");
        c.greens.L2 = positive(g.at("L2"), "greens.L2");
        if (!(c.greens.L2 >= 1.5 * c.greens.L1)) throw ConfigError("greens: need L2 >= 1.5 L1");
        c.greens.extrapolate = g.at("extrapolate").get<bool>();
        c.greens.kappa = positive(g.at("kappa"), "greens.kappa");
        c.greens.probe_delta = positive(g.at("probe_delta"), "greens.probe_delta");
        c.greens.probe_fraction = positive(g.at("probe_fraction"), "greens.probe_fraction");
        c.greens.surface_delta = positive(g.at("surface_delta"), "greens.surface_delta");
        c.greens.surface_kappa = positive(g.at("surface_kappa"), "greens.surface_kappa");
        if (!g.at("resolve_box").is_null()) {
            const json& rb = g.at("resolve_box");
            reject_unknown(rb, {"lo", "hi"}, "greens.resolve_box");
            c.greens.resolve_box = Box{to_vec(rb.at("lo"), "resolve_box.lo"), to_vec(rb.at("hi"), "resolve_box.hi")};
        }
        c.greens.box_delta = positive(g.at("box_delta"), "greens.box_delta");
        c.greens.moll_cells = positive(g.at("moll_cells"), "greens.moll_cells");
        c.greens.max_level = positive_int(g.at("max_level"), "greens.max_level");
        for (const json& v : g.at("variants")) {
            const std::string name = v.get<std::string>();
            if (name != "frozen" && name != "variable_background" && name != "full1" && name != "full2")
                throw ConfigError("unknown Green's variant '" + name + "' (frozen | variable_background | full1 | full2)");
            c.greens_probes.variants.push_back(name);
        }
        for (const json& p : g.at("pairs")) {
            if (!p.is_array() || p.size() != 2) throw ConfigError("greens.pairs entries must be [x, y]");
            c.greens_probes.pairs.emplace_back(to_vec(p[0], "greens pair x"), to_vec(p[1], "greens pair y"));
        }

        const json& b = doc.at("bounds");
        BoundsConfig& bc = c.bounds;
        bc.materials = c.materials;
        bc.omega = c.omega;
        bc.d1 = std::make_shared<const InclusionGeometry>(c.inclusions[0]);
        bc.d2 = std::make_shared<const InclusionGeometry>(c.inclusions[1]);
        bc.greens = c.greens;
        bc.h_bar = b.at("h_bar").get<double>();
        bc.h_tilde = b.at("h_tilde").get<double>();
        bc.h_ceiling = b.at("h_ceiling").get<double>();
        bc.num_h = positive_int(b.at("num_h"), "bounds.num_h");
        bc.h_ratio = b.at("h_ratio").get<double>();
        bc.h_override = b.at("h_list").get<std::vector<double>>();
        bc.lambda_ws = b.at("lambda_ws").get<std::vector<double>>();
        bc.directions = b.at("directions").get<std::vector<int>>();
        bc.plateau_fraction = b.at("plateau_fraction").get<double>();
        bc.triangle_tol = b.at("triangle_tol").get<double>();
        bc.slope_center = b.at("slope_center").get<double>();
        bc.slope_halfwidth = b.at("slope_halfwidth").get<double>();
        bc.term2_slope_max = b.at("term2_slope_max").get<double>();
        bc.null_tol = b.at("null_tol").get<double>();
        c.bounds_terms = b.at("terms").get<bool>();
        try {
            bc.validate();
        } catch (const InputError& e) {
            throw ConfigError(e.what());
        }

        const json& st = doc.at("stability");
        const std::string fam = st.at("family").get<std::string>();
        const int count = positive_int(st.at("count"), "stability.count");
        if (fam == "ball_offset") c.stability.family = PairFamily::ball_offset(c.omega, count);
        else if (fam == "radius_growth") c.stability.family = PairFamily::radius_growth(c.omega, count);
        else throw ConfigError("unknown stability family '" + fam + "' (ball_offset | radius_growth)");
        const auto ts = st.at("t").get<std::vector<double>>();
        if (!ts.empty()) c.stability.family.t = ts;
        if (!st.at("base").is_null()) c.stability.family.base = inclusion_from_json(st.at("base"));
        c.stability.family.direction = to_vec(st.at("direction"), "stability.direction");
        if (!(c.stability.family.direction.norm() > 0)) throw ConfigError("stability.direction must be nonzero");
        c.stability.include_reference = st.at("include_reference").get<bool>();
        c.stability.hausdorff_samples = positive_int(st.at("hausdorff_samples"), "stability.hausdorff_samples");
        c.stability.clearance = st.at("clearance").get<double>();
        try {
            c.stability.family.validate(c.omega, c.stability.clearance * c.omega.rho0);
        } catch (const InputError& e) {
            throw ConfigError(std::string("stability: ") + e.what());
        }

        const json& f = doc.at("forward");
        c.forward.data = f.at("data").get<std::string>();
        if (c.forward.data != "zero" && c.forward.data != "translation" && c.forward.data != "rotation" &&
            c.forward.data != "linear")
            throw ConfigError("forward.data must be zero | translation | rotation | linear");
        c.forward.export_field = f.at("export_field").get<bool>();
        c.dtn_export = doc.at("dtn").at("export").get<bool>();

        const json& v = doc.at("verify");
        c.verify.n = positive_int(v.at("n"), "verify.n");
        c.verify.data_pairs = positive_int(v.at("data_pairs"), "verify.data_pairs");
        c.verify.bounds = v.at("bounds").get<bool>();
        c.verify.greens = v.at("greens").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<uint64_t> seed) {
    json doc = default_config();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file '" + *path + "'");
        json user;
        try {
            user = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config file '" + *path + "' is not valid JSON: " + e.what());
        }
        merge_config(doc, user);
    }
    for (const auto& o : overrides) apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    return resolve_config(doc);
}

std::string canonical_dump(const json& doc) { return doc.dump(); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace lamelab
