#include "lamelab/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace lamelab;
using json = nlohmann::json;

TEST(Config, DefaultsResolve) {
    const RunConfig c = resolve_config(json::object());
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.setup.n, 16);
    EXPECT_EQ(c.inclusions.size(), 2u);
    EXPECT_EQ(c.d1(), InclusionGeometry::ball(Vec3(0.45, 0.5, 0.5), 0.25));
    EXPECT_EQ(c.bounds.h_tilde, 0.1);
    EXPECT_EQ(c.greens.backend, GreensBackend::KelvinCorrected);
    EXPECT_FALSE(c.greens.resolve_box.has_value());
    EXPECT_EQ(c.stability.family.t.size(), 6u);
    EXPECT_EQ(c.doc, default_config());
}

TEST(Config, UnknownKeysAndWrongTypesAreRejected) {
    EXPECT_THROW(resolve_config(json{{"colour", 1}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"mesh", {{"N", 8}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"mesh", {{"n", "8"}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"mesh", 8}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"materials", {{"bogus", 1}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"greens", {{"backend", "magic"}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"mesh", {{"n", 0}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"mesh", {{"n", 2.5}}}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"seed", -1}}), ConfigError);
    EXPECT_THROW(resolve_config(json{{"bounds", {{"lambda_ws", {1.0}}}}}), ConfigError);
}

TEST(Config, InclusionsMustFitInsideOmega) {
    json j = {{"inclusions", json::array({{{"kind", "ball"}, {"center", {0.5, 0.5, 0.5}}, {"radius", 0.2}},
                                          {{"kind", "ball"}, {"center", {0.9, 0.5, 0.5}}, {"radius", 0.2}}})}};
    EXPECT_THROW(resolve_config(j), ConfigError);
    j["inclusions"][1] = {{"kind", "ellipsoid"}, {"center", {0.7, 0.5, 0.5}}, {"semiaxes", {0.1, 0.05, 0.05}}};
    const RunConfig c = resolve_config(j);
    EXPECT_EQ(c.d2().kind(), InclusionGeometry::Kind::Ellipsoid);
    j["inclusions"][1] = {{"kind", "torus"}, {"center", {0.7, 0.5, 0.5}}};
    EXPECT_THROW(resolve_config(j), ConfigError);
    j["inclusions"] = json::array({j["inclusions"][0]});
    EXPECT_THROW(resolve_config(j), ConfigError);
}

TEST(Config, OverridesParseJsonOrFallBackToStrings) {
    json doc = default_config();
    apply_override(doc, "mesh.n=12");
    apply_override(doc, "greens.backend=truncated_fem");
    apply_override(doc, "greens.resolve_box={\"lo\":[0,0,0],\"hi\":[1,1,1]}");
    apply_override(doc, "bounds.lambda_ws=[0.75]");
    const RunConfig c = resolve_config(doc);
    EXPECT_EQ(c.setup.n, 12);
    EXPECT_EQ(c.greens.backend, GreensBackend::TruncatedFem);
    ASSERT_TRUE(c.greens.resolve_box.has_value());
    EXPECT_EQ(c.greens.resolve_box->hi, Vec3::Ones());
    EXPECT_EQ(c.bounds.lambda_ws, std::vector<double>{0.75});
    EXPECT_THROW(apply_override(doc, "mesh.n"), ConfigError);
    EXPECT_THROW(apply_override(doc, "mesh..n=3"), ConfigError);
    EXPECT_THROW(apply_override(doc, "mesh.q=3"), ConfigError);
}

TEST(Config, FileOverridesAndSeedCompose) {
    const auto path = std::filesystem::temp_directory_path() / "lamelab_config_test.json";
    {
        std::ofstream os(path);
        os << R"({"seed": 5, "mesh": {"n": 10}, "materials": {"eta0": 0.0}})";
    }
    const RunConfig c = load_config(path.string(), {"mesh.n=11"}, 9);
    EXPECT_EQ(c.setup.n, 11);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.materials.eta0, 0.0);
    EXPECT_THROW(load_config(std::string("/nonexistent/x.json"), {}), ConfigError);
    {
        std::ofstream os(path);
        os << "{ not json";
    }
    EXPECT_THROW(load_config(path.string(), {}), ConfigError);
    std::filesystem::remove(path);
}

TEST(Config, ResolvedDocumentRoundTrips) {
    json doc = default_config();
    apply_override(doc, "mesh.n=9");
    apply_override(doc, "inclusions=[{\"kind\":\"ball\",\"center\":[0.3,0.5,0.5],\"radius\":0.1},"
                        "{\"kind\":\"ellipsoid\",\"center\":[0.7,0.5,0.5],\"semiaxes\":[0.1,0.08,0.06]}]");
    const RunConfig a = resolve_config(doc);
    const json dumped = json::parse(canonical_dump(a.doc));
    const RunConfig b = resolve_config(dumped);
    EXPECT_EQ(a.doc, b.doc);
    EXPECT_EQ(canonical_dump(a.doc), canonical_dump(b.doc));
    EXPECT_EQ(sha256_hex(canonical_dump(a.doc)), sha256_hex(canonical_dump(b.doc)));
    EXPECT_EQ(a.d2(), b.d2());
    EXPECT_EQ(inclusion_from_json(inclusion_to_json(a.d2())), a.d2());
}

TEST(Config, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
