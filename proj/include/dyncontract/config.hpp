#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dyncontract/model.hpp"

namespace dyncontract {

struct SweepSpec {
    std::string parameter; // V_h, mu_l or rho
    std::vector<double> values;
};

/// A parsed scenario file. See README for the grammar.
struct ScenarioConfig {
    ModelPrimitives model = default_fixture();
    int T = 1;
    std::string V_l = "fi_l";
    std::string V_h = "mid";
    double tol = 1e-10;
    std::uint64_t ic_budget = 10'000'000;
    bool exploit_low_insurance = true;
    bool commitment = false;
    std::string mechanism;
    std::optional<int> threads;
    std::optional<SweepSpec> sweep;
    /// FNV-1a of the raw file contents.
    std::uint64_t hash = 0;
};

ScenarioConfig parse_config(std::istream& is, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);

/// Resolves a target expression: a number, fi_l, fi_h, outside_l, outside_h, or mid
/// (midpoint of fi_l and fi_h).
double resolve_target(const ModelPrimitives& model, int T, const std::string& expr);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

} // namespace dyncontract
