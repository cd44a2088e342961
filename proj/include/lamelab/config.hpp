#pragma once

#include "lamelab/bounds.hpp"
#include "lamelab/common.hpp"
#include "lamelab/geometry.hpp"
#include "lamelab/greens.hpp"
#include "lamelab/stability.hpp"
#include "lamelab/tensor_field.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lamelab {

struct GreensProbeSpec {
    std::vector<std::string> variants;  // frozen | variable_background | full1 | full2
    std::vector<std::pair<Vec3, Vec3>> pairs;
};

struct StabilitySpec {
    PairFamily family;
    bool include_reference = true;
    int hausdorff_samples = 4096;
    double clearance = 0.2;  // in units of rho0
};

struct ForwardSpec {
    std::string data = "linear";  // zero | translation | rotation | linear
    bool export_field = true;
};

struct VerifySpec {
    int n = 8;
    int data_pairs = 5;
    bool bounds = true;
    bool greens = true;  // inclusion symmetry, decay and representation checks
};

/// Fully resolved run configuration. `doc` is the canonical JSON document
/// (defaults merged with the user file and overrides); the typed fields are
/// derived from it.
struct RunConfig {
    nlohmann::json doc;
    uint64_t seed = 1;
    MaterialPreset materials;
    DomainSpec omega;
    std::vector<InclusionGeometry> inclusions;
    ForwardSetup setup;
    GreensOptions greens;
    GreensProbeSpec greens_probes;
    BoundsConfig bounds;
    bool bounds_terms = true;
    StabilitySpec stability;
    ForwardSpec forward;
    bool dtn_export = false;
    VerifySpec verify;

    const InclusionGeometry& d1() const { return inclusions.at(0); }
    const InclusionGeometry& d2() const { return inclusions.at(1); }
};

// The default document; every accepted key appears in it.
nlohmann::json default_config();

// Recursively merges `user` into `base`. Keys absent from `base` and values
// whose JSON type differs from the default are ConfigErrors. Arrays are
// replaced wholesale; a null default accepts any value.
void merge_config(nlohmann::json& base, const nlohmann::json& user, const std::string& path = "");

// Applies "a.b.c=value". The value is parsed as JSON when possible, else
// taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Validates a merged document and builds the typed configuration.
RunConfig resolve_config(const nlohmann::json& doc);

// Defaults <- file <- overrides <- seed.
RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<uint64_t> seed = std::nullopt);

std::string canonical_dump(const nlohmann::json& doc);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

InclusionGeometry inclusion_from_json(const nlohmann::json& j);
nlohmann::json inclusion_to_json(const InclusionGeometry& g);

}  // namespace lamelab
