#include "oracles.hpp"

#include <parkrsu/beacons.hpp>
#include <parkrsu/commands.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace parkrsu;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = PARKRSU_CONFIG_DIR;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

RunConfig default_config() { return load_config(kConfigDir + "/default.ini"); }

SteadyStateSummary steady(const RunConfig& cfg) {
    return steady_state_stats(run(to_simulation_config(cfg)).metrics, cfg.discard_s);
}

double relative_change(double value, double base) { return std::abs(value - base) / std::abs(base); }

Outcome enumeration() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::size_t n8 = 0;
    for (std::size_t n = 1; n <= 12; ++n) {
        CandidatePool pool;
        pool.decision_maker = 1;
        std::vector<EntityId> ids{1};
        for (std::size_t i = 1; i < n; ++i) {
            pool.neighbors.push_back({static_cast<EntityId>(i + 1), {}, 1.0});
            ids.push_back(static_cast<EntityId>(i + 1));
        }
        const auto sols = enumerate_solutions(pool);
        std::set<std::vector<EntityId>> got;
        for (const auto& s : sols) got.insert(s.active);
        ok &= sols.size() == 1 + n + n * (n - 1) / 2;
        ok &= got.size() == sols.size() && got == oracle::subsets_with_at_most_two_revoked(ids);
        if (n == 8) n8 = sols.size();
    }
    const double secs = seconds_since(t0);
    return {ok && n8 == 37 && secs < 1.0, fmt("n=8 -> %zu solutions, %.3f s", n8, secs)};
}

Outcome attribute_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(7);
    double worst = 0.0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto dense = oracle::random_dense_pool(rng);
        const auto pool = oracle::to_pool(dense);
        for (const auto& s : enumerate_solutions(pool)) {
            const auto want = oracle::dense_attributes(dense, oracle::active_flags(s, dense));
            worst = std::max({worst, oracle::relative_error(attr_sig(s, pool), want.sig),
                              oracle::relative_error(attr_sat(s, pool), want.sat),
                              oracle::relative_error(attr_cov(s, pool), want.cov),
                              oracle::relative_error(attr_bat(s, pool), want.bat)});
            ++checked;
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 10.0, fmt("%zu solutions, max rel err %.2e, %.2f s", checked, worst, secs)};
}

Outcome battery_model() {
    const BatteryPolicy p{1800, 3600};
    const bool endpoints = battery_indicator(0, p) == 1.0 && battery_indicator(1800, p) == 1.0 &&
                           battery_indicator(2700, p) == 0.5 && battery_indicator(3600, p) == 0.0;
    auto cfg = default_config();
    cfg.duration_s = 8 * 3600;
    struct Row {
        double forced_fraction;
        SteadyStateSummary s;
    };
    std::vector<Row> rows;
    for (double w : {0.0, 0.3, 0.5, 1.0}) {
        cfg.weights.w_bat = w;
        const auto r = run(to_simulation_config(cfg));
        std::size_t forced = 0;
        for (const auto& l : r.lifetimes) forced += l.cause == RevocationCause::forced_tau_M;
        rows.push_back({r.lifetimes.empty() ? 0.0 : static_cast<double>(forced) / static_cast<double>(r.lifetimes.size()),
                        steady_state_stats(r.metrics, cfg.discard_s)});
    }
    bool ok = endpoints;
    double worst = 0.0;
    const auto& b = rows[0].s;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        ok &= rows[i].forced_fraction < rows[0].forced_fraction;
        const auto& s = rows[i].s;
        worst = std::max({worst, relative_change(s.coverage_pct.mean, b.coverage_pct.mean),
                          relative_change(s.mean_signal.mean, b.mean_signal.mean),
                          relative_change(s.mean_saturation.mean, b.mean_saturation.mean),
                          relative_change(s.active_rsus.mean, b.active_rsus.mean)});
    }
    ok &= worst < 0.05;
    return {ok, fmt("forced fraction %.5f at w_bat 0 vs %.5f/%.5f/%.5f, max metric change %.2f%%",
                    rows[0].forced_fraction, rows[1].forced_fraction, rows[2].forced_fraction, rows[3].forced_fraction,
                    100.0 * worst)};
}

std::vector<SweepRow> w_sat_sweep() {
    static const auto rows = run_sweep(default_config(), "decision.w_sat", {"0.05", "0.1", "0.2", "0.3", "0.4"}, 1);
    return rows;
}

Outcome saturation_trend() {
    const auto rows = w_sat_sweep();
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = rows[i].pooled.stats;
        ok &= s.mean_saturation.mean >= 1.3;
        if (i > 0) {
            const auto& prev = rows[i - 1].pooled.stats;
            ok &= s.active_rsus.mean <= prev.active_rsus.mean;
            ok &= s.mean_saturation.mean <= prev.mean_saturation.mean;
            ok &= s.coverage_pct.mean <= prev.coverage_pct.mean;
        }
        detail += fmt("%s%s: rsus %.1f sat %.3f cov %.3f", i ? "; " : "", rows[i].value.c_str(), s.active_rsus.mean,
                      s.mean_saturation.mean, s.coverage_pct.mean);
    }
    return {ok, detail};
}

Outcome coverage_trend() {
    auto base = default_config();
    base.weights.w_sat = 0.2;
    const auto rows = run_sweep(base, "decision.w_cov", {"0", "0.1", "0.3", "0.5", "1.0"}, 1);
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double c = rows[i].pooled.stats.coverage_pct.mean;
        if (i > 0) ok &= c >= rows[i - 1].pooled.stats.coverage_pct.mean;
        detail += fmt("%s: %.4f; ", rows[i].value.c_str(), c);
    }
    base.mode = DecisionMode::always_join;
    const double saturation_free = steady(base).coverage_pct.mean;
    const double top = rows.back().pooled.stats.coverage_pct.mean;
    ok &= top >= 0.95 * saturation_free;
    return {ok, detail + fmt("saturation-free %.4f, ratio %.3f", saturation_free, top / saturation_free)};
}

Outcome saturation_area_correlation() {
    std::vector<double> sat, area;
    for (const auto& r : w_sat_sweep()) {
        sat.push_back(r.pooled.stats.mean_saturation.mean);
        area.push_back(r.pooled.stats.area_per_rsu_m2.mean);
    }
    const double rho = oracle::correlation(sat, area);
    return {rho <= -0.9, fmt("correlation %.4f", rho)};
}

Outcome envelope_optimality() {
    const auto cfg = default_config();
    const auto r = run_bounds(cfg, 100000);
    const auto bins = saturation_envelope(r.bounds.samples, cfg.bounds.bin_width);
    std::size_t inside = 0, total = 0;
    std::vector<double> position;
    for (const auto& m : r.decision.metrics) {
        if (m.t < cfg.discard_s) continue;
        ++total;
        const auto it = bins.find(envelope_bin_index(m.mean_signal, cfg.bounds.bin_width));
        if (it == bins.end()) continue;
        const auto& b = it->second;
        inside += m.mean_saturation >= b.sat_min && m.mean_saturation <= b.sat_max;
        const double height = b.sat_max - b.sat_min;
        position.push_back(height > 0.0 ? (m.mean_saturation - b.sat_min) / height : 0.0);
    }
    double median = std::numeric_limits<double>::quiet_NaN();
    if (!position.empty()) {
        std::nth_element(position.begin(), position.begin() + static_cast<std::ptrdiff_t>(position.size() / 2),
                         position.end());
        median = position[position.size() / 2];
    }
    const bool ok = total > 0 && inside == total && median <= 0.25;
    return {ok, fmt("%zu samples, population %zu; %zu/%zu decision samples inside envelope, median position %.3f",
                    r.bounds.samples.size(), r.population.size(), inside, total, median)};
}

Outcome range_sensitivity() {
    auto cfg = default_config();
    const auto base = steady(cfg);
    cfg.radio.range_multiplier = 2.0;
    const auto wide = steady(cfg);
    const double ratio = base.active_rsus.mean / wide.active_rsus.mean;
    const double dsig = relative_change(wide.mean_signal.mean, base.mean_signal.mean);
    const double dsat = relative_change(wide.mean_saturation.mean, base.mean_saturation.mean);
    return {ratio >= 1.6 && ratio <= 2.4 && dsig < 0.1 && dsat < 0.1,
            fmt("rsus %.1f -> %.1f (x%.2f), signal %+.1f%%, saturation %+.1f%%", base.active_rsus.mean,
                wide.active_rsus.mean, ratio, 100.0 * dsig, 100.0 * dsat)};
}

Outcome density_robustness() {
    auto cfg = default_config();
    cfg.weights.w_cov = 0.3;
    cfg.duration_s = 12 * 3600;
    cfg.discard_s = 4 * 3600;
    std::vector<std::string> rates;
    for (double density : {55.0, 35.0, 25.0, 20.0}) rates.push_back(fmt("%.9g", cfg.parking.arrival_rate_vps * density / 55.0));
    const auto rows = run_sweep(cfg, "traffic.arrival_rate_vps", rates, 1);
    std::vector<double> cov;
    std::string detail;
    for (const auto& r : rows) {
        cov.push_back(r.pooled.stats.coverage_pct.mean);
        detail += fmt("%s veh/s: %.4f; ", r.value.c_str(), cov.back());
    }
    const auto [lo, hi] = std::minmax_element(cov.begin(), cov.end());
    return {*hi - *lo <= 0.03, detail + fmt("spread %.2f pp", 100.0 * (*hi - *lo))};
}

Outcome realistic_parking() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t total : {4000u, 2000u}) {
        auto cfg = load_config(kConfigDir + "/day_profile.ini");
        cfg.parking.daily_total = total;
        const auto r = run(to_simulation_config(cfg));
        std::array<double, 24> sum{};
        std::array<std::size_t, 24> n{};
        for (const auto& m : r.metrics) {
            const int h = static_cast<int>(m.t / 3600.0) % 24;
            sum[h] += m.coverage_pct;
            ++n[h];
        }
        double peak = 0.0, low = 1.0;
        for (int h = 0; h < 24; ++h) peak = std::max(peak, n[h] ? sum[h] / n[h] : 0.0);
        for (int h = 8; h <= 20; ++h) low = std::min(low, n[h] ? sum[h] / n[h] : 0.0);
        const double share = static_cast<double>(r.counters.assignments) / static_cast<double>(r.counters.parking_events);
        ok &= low >= 0.8 * peak && share < 0.5;
        detail += fmt("%llu/day: hours 8-20 min %.3f of peak %.3f (%.2f), assignments %.1f%% of %llu parkings; ",
                      static_cast<unsigned long long>(total), low, peak, low / peak, 100.0 * share,
                      static_cast<unsigned long long>(r.counters.parking_events));
    }
    return {ok, detail};
}

Outcome beacon_inference() {
    const auto cfg = default_config();
    const CityGrid grid = *build_grid(cfg.grid);
    const PropagationTable table(grid, cfg.radio);
    std::mt19937_64 rng(11);
    std::size_t eligible = 0, correct = 0, observed = 0, tight = 0;
    for (int k = 0; k < 5; ++k) {
        const Cell receiver = grid.usable_cells()[rng() % grid.usable_count()];
        BeaconScenario sc;
        sc.noise_sd = cfg.noise_sd;
        sc.seed = rng();
        MapBuilder b;
        generate_beacon_log(grid, table, receiver, sc, [&](const BeaconRecord& r) { b.record_beacon(r.cell, r.rssi); });
        const auto rx = grid.usable_index(receiver);
        for (const auto& s : b.stats()) {
            ++observed;
            tight += s.sd_rssi < 5.0;
            if (s.count < 50) continue;
            ++eligible;
            correct += MapBuilder::quantize_mean(s.mean_rssi) == table.between(grid.usable_index(s.cell), rx);
        }
    }
    const double acc = eligible ? static_cast<double>(correct) / static_cast<double>(eligible) : 0.0;
    const double low_sd = observed ? static_cast<double>(tight) / static_cast<double>(observed) : 0.0;
    return {acc >= 0.95 && low_sd >= 0.85,
            fmt("class recovered %.1f%% of %zu cells, sd<5 in %.1f%% of %zu cells", 100.0 * acc, eligible, 100.0 * low_sd,
                observed)};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "parkrsu_acceptance_determinism";
    fs::remove_all(root);
    std::string first;
    bool ok = true;
    for (int i = 0; i < 2; ++i) {
        CommandOptions o;
        o.config_path = kConfigDir + "/default.ini";
        o.out_dir = (root / std::to_string(i)).string();
        std::ostringstream log, err;
        ok &= cmd_simulate(o, log, err) == kExitOk;
        std::ifstream in(root / std::to_string(i) / "metrics.csv", std::ios::binary);
        std::ostringstream body;
        body << in.rdbuf();
        if (i == 0) first = body.str();
        else ok &= !first.empty() && body.str() == first;
    }
    return {ok, fmt("metrics.csv %zu bytes, repeat %s", first.size(), ok ? "identical" : "differs")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"enumeration exactness", enumeration},
        {"attribute oracle equivalence", attribute_oracle},
        {"battery model", battery_model},
        {"saturation-weight trend", saturation_trend},
        {"coverage-weight trend", coverage_trend},
        {"saturation/area anticorrelation", saturation_area_correlation},
        {"envelope optimality", envelope_optimality},
        {"range sensitivity", range_sensitivity},
        {"density robustness", density_robustness},
        {"realistic parking", realistic_parking},
        {"beacon inference", beacon_inference},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
