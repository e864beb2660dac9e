#pragma once

// Scenario configuration and end-to-end runs behind the command-line tool.

#include "squeezelab/grid.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace squeezelab {

struct ScenarioConfig {
    std::string scenario = "harmonic-coherent";
    PhysConstants constants;

    double grid_x_min = -20.0;
    double grid_x_max = 20.0;
    std::size_t grid_points = 1024;

    std::string profile = "gaussian"; ///< gaussian | sech2 | table
    std::string profile_table;        ///< CSV of (xi, rho) when profile = table

    double omega = 1.0;       ///< well frequency (before the quench)
    double omega_after = 2.0; ///< quench-squeeze only

    double q0 = 1.0;
    double v0 = 0.0;
    double dq0 = 0.0; ///< 0 selects the projected fixed point of the initial well
    double dq_dot0 = 0.0;

    double dt = 1e-3;
    double t_end = 0.0;
    std::string law = "projected";

    bool pde = true;
    double pde_dt = 2.5e-4;
    double frame_interval = 0.1;
    double leakage_tol = 1e-8;

    std::size_t synthesis_stride = 5;

    bool sampler = false;
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    double sampler_dt = 1e-3;
    std::size_t sampler_stride = 100;
    double xi_max = 8.0;
    unsigned workers = 0;

    double op_ratio = 2.0;  ///< dq / dq0 for the single operator case
    double op_dq_dot = 0.25;
    std::string op_coefficient = "exact";
    double op_sweep_g = 0.1;

    std::string output_dir = "squeezelab-out";
    std::size_t trajectory_stride = 10;

    /// Defaults for one scenario; throws ValidationError for unknown names.
    static ScenarioConfig defaults(const std::string& scenario);
    void validate() const;
};

const std::vector<std::string>& scenario_names();
std::string scenario_summary(const std::string& scenario);

/// Parses an INI-style file. The [scenario] name selects the defaults that
/// the remaining keys override; unknown sections or keys are rejected.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& text);
/// Complete INI text for a configuration, with one comment per key.
std::string render_config(const ScenarioConfig& cfg);
/// Key reference for --help.
std::string config_reference();

/// Outcome of one invariant check.
struct InvariantEntry {
    std::string name;
    std::string status; ///< pass | fail | skipped | reported
    nlohmann::json value;
    nlohmann::json threshold;
    std::string detail;
};

struct ScenarioResult {
    std::string scenario;
    std::vector<InvariantEntry> invariants;
    nlohmann::json reports = nlohmann::json::object();
    std::map<std::string, std::string> artifacts; ///< file name -> contents
    std::string failure; ///< numerical failure that stopped the run, empty otherwise
    bool passed() const;
    const InvariantEntry* find(const std::string& name) const;
};

/// Validates and runs a configuration. A NumericalError stops the run but is
/// recorded in `failure` and in the invariant report; ValidationError propagates.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

/// Invariant report as JSON (also stored as invariants.json in the artifacts).
nlohmann::json invariants_json(const ScenarioResult& result);

/// Writes the artifacts into `dir`, creating it if needed.
void write_artifacts(const ScenarioResult& result, const std::filesystem::path& dir);

} // namespace squeezelab
