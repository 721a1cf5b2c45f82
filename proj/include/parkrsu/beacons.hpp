#pragma once

// Synthetic beacon logs with known ground truth: a stationary receiver
// overhears CAMs from vehicles driving random routes through the city.

#include <parkrsu/grid.hpp>
#include <parkrsu/maps.hpp>
#include <parkrsu/radio.hpp>
#include <parkrsu/traffic.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace parkrsu {

struct BeaconScenario {
    double duration_s = 3600.0;
    std::size_t vehicles = 20;
    double speed_mps = 8.0;
    int beacons_per_s = 10;
    double noise_sd = 3.0;
    std::uint64_t seed = 1;
};

/// Emits every beacon heard at `receiver`, a usable cell.
template <typename Sink>
void generate_beacon_log(const CityGrid& grid, const PropagationTable& table, Cell receiver,
                         const BeaconScenario& scenario, Sink&& sink) {
    const auto rx = grid.usable_index(receiver);
    if (rx < 0) throw ValidationError("receiver must sit on a usable cell");
    if (scenario.beacons_per_s < 0) throw ValidationError("beacons_per_s must be >= 0");
    std::mt19937_64 rng(scenario.seed);
    std::uniform_int_distribution<std::size_t> start(0, grid.usable_count() - 1);
    std::vector<Vehicle> fleet(scenario.vehicles);
    for (std::size_t i = 0; i < fleet.size(); ++i) {
        auto& v = fleet[i];
        v.id = static_cast<EntityId>(i + 1);
        v.from = v.to = grid.usable_cells()[start(rng)];
        v.speed_mps = scenario.speed_mps;
        v.position = grid.center_of(v.from);
    }
    const auto ticks = static_cast<std::int64_t>(scenario.duration_s);
    for (std::int64_t t = 0; t < ticks; ++t) {
        for (auto& v : fleet) {
            const Cell c = v.cell(grid);
            const auto tx = grid.usable_index(c);
            const auto s = tx < 0 ? SignalStrength{0} : table.between(tx, rx);
            if (s >= 1) {
                for (int k = 0; k < scenario.beacons_per_s; ++k) {
                    const double at = static_cast<double>(t) + static_cast<double>(k) / scenario.beacons_per_s;
                    sink(BeaconRecord{at, v.id, c, sample_rssi(s, scenario.noise_sd, rng)});
                }
            }
            step_vehicle(v, grid, 1.0, rng);
        }
    }
}

}  // namespace parkrsu
