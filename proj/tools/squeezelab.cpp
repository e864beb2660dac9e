// squeezelab <subcommand> [config-path]
//
// Exit status: 0 when every hard invariant passes, 1 on a numerical failure
// or a failed invariant, 2 when the configuration is rejected.

#include "squeezelab/errors.hpp"
#include "squeezelab/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

int run(const std::string& path) {
    using namespace squeezelab;
    ScenarioConfig cfg;
    try {
        cfg = path.empty() ? ScenarioConfig::defaults("harmonic-coherent") : load_config(path);
        if (const char* env = std::getenv("SQUEEZELAB_OUT"); env && *env) cfg.output_dir = env;
        cfg.validate();
    } catch (const ValidationError& e) {
        std::cerr << "squeezelab: invalid configuration: " << e.what() << '\n';
        return 2;
    }

    ScenarioResult result;
    try {
        result = run_scenario(cfg);
    } catch (const ValidationError& e) {
        std::cerr << "squeezelab: invalid configuration: " << e.what() << '\n';
        return 2;
    }
    try {
        write_artifacts(result, cfg.output_dir);
    } catch (const std::exception& e) {
        std::cerr << "squeezelab: " << e.what() << '\n';
        return 1;
    }

    for (const auto& e : result.invariants) {
        std::cout << e.status << ' ' << e.name;
        if (!e.value.is_null()) std::cout << ' ' << e.value.dump();
        std::cout << '\n';
    }
    if (!result.failure.empty()) {
        std::cerr << "squeezelab: numerical failure: " << result.failure << '\n';
        return 1;
    }
    std::cout << (result.passed() ? "all hard invariants pass" : "some invariants failed") << " ("
              << cfg.output_dir << ")\n";
    return result.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"squeezelab: coherent-state dynamics laboratory"};
    app.footer("\n" + squeezelab::config_reference() +
               "\nSQUEEZELAB_OUT overrides output.directory. Exit status 0 = pass, 1 = numerical failure or "
               "failed invariant, 2 = invalid configuration.");
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "run the scenario described by a config file");
    run_cmd->add_option("config", config_path, "config file (harmonic-coherent defaults when omitted)");

    std::string scenario = "harmonic-coherent";
    auto* print_cmd = app.add_subcommand("print-default-config", "print the default config of a scenario");
    print_cmd->add_option("scenario", scenario, "scenario name");

    auto* list_cmd = app.add_subcommand("list-scenarios", "list the available scenarios");

    CLI11_PARSE(app, argc, argv);

    if (*run_cmd) return run(config_path);
    if (*print_cmd) {
        try {
            std::cout << squeezelab::render_config(squeezelab::ScenarioConfig::defaults(scenario));
        } catch (const squeezelab::ValidationError& e) {
            std::cerr << "squeezelab: " << e.what() << '\n';
            return 2;
        }
        return 0;
    }
    if (*list_cmd) {
        for (const auto& name : squeezelab::scenario_names())
            std::cout << name << "  " << squeezelab::scenario_summary(name) << '\n';
    }
    return 0;
}
