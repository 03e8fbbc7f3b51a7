#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "dyncontract/commands.hpp"
#include "dyncontract/errors.hpp"
#include "dyncontract/format.hpp"
#include "dyncontract/parallel.hpp"

using namespace dyncontract;

namespace {

int pick_threads(std::optional<int> flag, const ScenarioConfig& cfg) {
    if (flag)
        return *flag;
    if (const char* env = std::getenv("DYNCONTRACT_THREADS"); env && *env) {
        const long long n = parse_int(env, "DYNCONTRACT_THREADS");
        if (n < 1)
            throw ConfigError("DYNCONTRACT_THREADS must be positive");
        return static_cast<int>(n);
    }
    return cfg.threads.value_or(1);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Profit-maximizing dynamic insurance contracts with persistent private types"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1, 1);

    std::string config_path;
    RunOptions opt;
    std::optional<double> tol;
    std::optional<std::uint64_t> budget;
    std::optional<int> threads;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", opt.out_dir, "output directory")->capture_default_str();
        sub->add_option("--tol", tol, "solver tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--ic-budget", budget, "largest number of reporting strategies to enumerate")
            ->check(CLI::PositiveNumber);
        sub->add_option("--threads", threads, "kernel threads")->check(CLI::PositiveNumber);
    };
    add_common(app.add_subcommand("solve", "solve the relaxed problem at a target utility pair"));
    add_common(app.add_subcommand("equilibrium", "competitive equilibrium"));
    add_common(app.add_subcommand("monopoly", "monopoly optimum"));
    auto* verify = app.add_subcommand("verify", "check a mechanism file");
    add_common(verify);
    verify->add_option("-m,--mechanism", opt.mechanism, "mechanism file (overrides run.mechanism)");
    add_common(app.add_subcommand("sweep", "solve along the [sweep] grid"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const ScenarioConfig cfg = load_config(config_path);
        opt.tol = tol;
        opt.ic_budget = budget;
        set_kernel_threads(pick_threads(threads, cfg));
        for (const auto& f : run_command(command, cfg, opt))
            std::cout << opt.out_dir << '/' << f << '\n';
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
