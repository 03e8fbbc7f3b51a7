#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyncontract/config.hpp"

namespace dyncontract {

inline constexpr const char* kVersion = "1.0.0";

struct RunOptions {
    std::string out_dir = "out";
    std::optional<double> tol;
    std::optional<std::uint64_t> ic_budget;
    std::string mechanism; // verify: overrides run.mechanism
};

/// Each command writes its outputs under out_dir and returns the file names it wrote.
std::vector<std::string> cmd_solve(const ScenarioConfig& cfg, const RunOptions& opt);
std::vector<std::string> cmd_equilibrium(const ScenarioConfig& cfg, const RunOptions& opt);
std::vector<std::string> cmd_monopoly(const ScenarioConfig& cfg, const RunOptions& opt);
std::vector<std::string> cmd_verify(const ScenarioConfig& cfg, const RunOptions& opt);
std::vector<std::string> cmd_sweep(const ScenarioConfig& cfg, const RunOptions& opt);

/// Runs a command by name and writes manifest.json (the only output that carries wall time).
std::vector<std::string> run_command(const std::string& command, const ScenarioConfig& cfg, const RunOptions& opt);

} // namespace dyncontract
