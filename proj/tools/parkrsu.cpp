// parkrsu: simulate parked-car RSU networks and run the experiment drivers.

#include <parkrsu/beacons.hpp>
#include <parkrsu/commands.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace parkrsu;

void add_common(CLI::App* cmd, CommandOptions& opts, std::vector<std::string>& sets,
                std::optional<double>& w_sat, std::optional<std::uint64_t>& seed,
                std::optional<std::int64_t>& duration) {
    cmd->add_option("-c,--config", opts.config_path, "Configuration file");
    cmd->add_option("-o,--out", opts.out_dir, "Output directory");
    cmd->add_option("--set", sets, "Override any key, e.g. --set decision.w_cov=0.3");
    cmd->add_option("--w-sat", w_sat, "Saturation weight");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--duration", duration, "Simulated seconds");
}

void collect_overrides(CommandOptions& opts, const std::vector<std::string>& sets, const std::optional<double>& w_sat,
                       const std::optional<std::uint64_t>& seed, const std::optional<std::int64_t>& duration) {
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        opts.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (w_sat) opts.overrides.emplace_back("decision.w_sat", detail::format_double(*w_sat));
    if (seed) opts.overrides.emplace_back("sim.seed", std::to_string(*seed));
    if (duration) opts.overrides.emplace_back("sim.duration_s", std::to_string(*duration));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parked-car roadside unit network simulator"};
    app.require_subcommand(1);

    CommandOptions sim_opts;
    std::vector<std::string> sim_sets;
    std::optional<double> sim_wsat;
    std::optional<std::uint64_t> sim_seed;
    std::optional<std::int64_t> sim_duration;
    auto* simulate = app.add_subcommand("simulate", "Run one simulation");
    add_common(simulate, sim_opts, sim_sets, sim_wsat, sim_seed, sim_duration);

    SweepOptions sweep_opts;
    std::vector<std::string> sweep_sets;
    std::optional<double> sweep_wsat;
    std::optional<std::uint64_t> sweep_seed;
    std::optional<std::int64_t> sweep_duration;
    auto* sweep = app.add_subcommand("sweep", "Sweep one numeric parameter");
    add_common(sweep, sweep_opts.base, sweep_sets, sweep_wsat, sweep_seed, sweep_duration);
    sweep->add_option("--axis", sweep_opts.axis, "Parameter name, e.g. w_sat or decision.w_sat")->required();
    sweep->add_option("--values", sweep_opts.values, "Values to sweep")->required()->delimiter(',');
    sweep->add_option("-j,--jobs", sweep_opts.jobs, "Concurrent runs")->check(CLI::PositiveNumber);

    BoundsOptions bounds_opts;
    std::vector<std::string> bounds_sets;
    std::optional<double> bounds_wsat;
    std::optional<std::uint64_t> bounds_seed;
    std::optional<std::int64_t> bounds_duration;
    auto* bounds = app.add_subcommand("bounds", "Random-assignment bounds with the decision overlay");
    add_common(bounds, bounds_opts.base, bounds_sets, bounds_wsat, bounds_seed, bounds_duration);
    bounds->add_option("-n,--num-samples", bounds_opts.num_samples, "Random assignments to draw");

    InferOptions infer_opts;
    auto* infer = app.add_subcommand("infer-map", "Learn a coverage map from a beacon log");
    infer->add_option("log", infer_opts.log_path, "Beacon log (time_s,tx_id,cell_x,cell_y,rssi)")->required();
    infer->add_option("--min-samples", infer_opts.min_samples, "Beacons needed before a cell is mapped");
    infer->add_option("-o,--out", infer_opts.out_dir, "Output directory");

    BeaconScenario beacon_scenario;
    std::string beacon_config;
    std::vector<int> receiver{0, 0};
    std::string beacon_path = "beacons.csv";
    auto* beacons = app.add_subcommand("beacons", "Write a synthetic beacon log for one receiver");
    beacons->add_option("-c,--config", beacon_config, "Configuration file (grid and radio)")->check(CLI::ExistingFile);
    beacons->add_option("--receiver", receiver, "Receiver cell x y")->expected(2);
    beacons->add_option("--duration", beacon_scenario.duration_s, "Simulated seconds");
    beacons->add_option("--vehicles", beacon_scenario.vehicles, "Moving vehicles");
    beacons->add_option("--seed", beacon_scenario.seed, "Random seed");
    beacons->add_option("--noise-sd", beacon_scenario.noise_sd, "RSSI noise sd");
    beacons->add_option("-o,--output", beacon_path, "Log file to write");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            collect_overrides(sim_opts, sim_sets, sim_wsat, sim_seed, sim_duration);
            return cmd_simulate(sim_opts);
        }
        if (sweep->parsed()) {
            collect_overrides(sweep_opts.base, sweep_sets, sweep_wsat, sweep_seed, sweep_duration);
            return cmd_sweep(sweep_opts);
        }
        if (bounds->parsed()) {
            collect_overrides(bounds_opts.base, bounds_sets, bounds_wsat, bounds_seed, bounds_duration);
            return cmd_bounds(bounds_opts);
        }
        if (infer->parsed()) return cmd_infer_map(infer_opts);
        if (beacons->parsed()) {
            const RunConfig cfg = beacon_config.empty() ? RunConfig{} : load_config(beacon_config);
            const auto grid = build_grid(cfg.grid);
            const PropagationTable table(*grid, cfg.radio);
            std::ofstream out(beacon_path);
            if (!out) throw Error("cannot write '" + beacon_path + "'");
            std::uint64_t n = 0;
            generate_beacon_log(*grid, table, Cell{receiver[0], receiver[1]}, beacon_scenario,
                                [&](const BeaconRecord& b) {
                                    write_beacon(out, b);
                                    ++n;
                                });
            std::cout << n << " beacons written to " << beacon_path << '\n';
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
