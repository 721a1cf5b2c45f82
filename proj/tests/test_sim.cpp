#include "oracles.hpp"

#include <parkrsu/sim.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace parkrsu;

namespace {

std::shared_ptr<const CityGrid> default_grid() {
    static const auto g = std::make_shared<const CityGrid>(build_manhattan_city(8, 8, 1, 3));
    return g;
}

SimulationConfig base_config(std::int64_t duration) {
    SimulationConfig c;
    c.grid = default_grid();
    c.duration_s = duration;
    return c;
}

// Expected parked cars at time T for Poisson arrivals at rate lambda that
// park after an Exp(p) drive and stay Exp(mean D).
double transient_parked_mean(double lambda, double p, double D, double T) {
    const double q = p - 1.0 / D;
    const int steps = 20000;
    double sum = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double u = (i + 0.5) * T / steps;
        sum += p * std::exp(-u / D) * (1.0 - std::exp(-u * q)) / q;
    }
    return lambda * sum * T / steps;
}

}  // namespace

TEST(Simulation, ZeroArrivalsEmptyCity) {
    auto c = base_config(600);
    c.parking.arrival_rate_vps = 0.0;
    const auto r = run(c);
    ASSERT_EQ(r.metrics.size(), 600u);
    for (const auto& m : r.metrics) {
        EXPECT_EQ(m.active_rsus, 0u);
        EXPECT_EQ(m.coverage_pct, 0.0);
        EXPECT_EQ(m.mean_signal, 0.0);
        EXPECT_EQ(m.mean_saturation, 0.0);
        EXPECT_EQ(m.area_per_rsu_m2, 0.0);
    }
    EXPECT_TRUE(r.lifetimes.empty());
    EXPECT_TRUE(r.commands.empty());
}

TEST(Simulation, ValidatesBeforeStart) {
    auto c = base_config(10);
    c.weights.w_sat = -1;
    EXPECT_THROW(Simulation{c}, ConfigError);
    c = base_config(10);
    c.grid = nullptr;
    EXPECT_THROW(Simulation{c}, ConfigError);
}

TEST(Simulation, Deterministic) {
    const auto c = base_config(1500);
    const auto a = run(c), b = run(c);
    EXPECT_EQ(a.metrics, b.metrics);
    ASSERT_EQ(a.commands.size(), b.commands.size());
    for (std::size_t i = 0; i < a.commands.size(); ++i) EXPECT_EQ(a.commands[i].command, b.commands[i].command);
}

TEST(Simulation, SeedsDiffer) {
    auto c = base_config(1500);
    const auto a = run(c);
    c.seed = 2;
    EXPECT_NE(a.metrics, run(c).metrics);
}

TEST(Simulation, MetricsMatchFullRecompute) {
    Simulation sim(base_config(3000));
    for (int t = 0; t < 3000; ++t) {
        sim.step();
        if (t % 100 == 99) ASSERT_EQ(sim.recompute_metrics(), sim.result().metrics.back()) << t;
    }
}

TEST(Simulation, MetricInvariants) {
    const auto r = run(base_config(3000));
    for (const auto& m : r.metrics) {
        ASSERT_GE(m.coverage_pct, 0.0);
        ASSERT_LE(m.coverage_pct, 1.0);
        if (m.coverage_pct > 0) ASSERT_GE(m.mean_saturation, 1.0);
        ASSERT_TRUE(std::isfinite(m.mean_signal) && std::isfinite(m.area_per_rsu_m2));
    }
    for (const auto& l : r.lifetimes) ASSERT_GE(l.revoked_at, l.assigned_at);
}

TEST(Simulation, OneDecisionPerTickAppliedAtomically) {
    Simulation sim(base_config(3000));
    std::size_t seen = 0;
    for (int t = 0; t < 3000; ++t) {
        sim.step();
        const auto& cmds = sim.result().commands;
        std::set<EntityId> makers;
        for (; seen < cmds.size(); ++seen) {
            ASSERT_EQ(cmds[seen].time_s, static_cast<double>(t));
            makers.insert(cmds[seen].command.maker);
            const auto& car = sim.parked().at(cmds[seen].command.target);
            const Role want = cmds[seen].command.verb == RoleVerb::assign ? Role::parked_rsu : Role::parked_silent;
            ASSERT_EQ(car.role, want);
        }
        ASSERT_LE(makers.size(), 1u);
    }
    EXPECT_GT(seen, 0u);
}

TEST(Simulation, VehicleConservation) {
    auto c = base_config(2500);
    c.parking.mean_duration_s = 600;
    c.parking.through_rate_vps = 0.2;
    Simulation sim(c);
    for (int t = 0; t < 2500; ++t) {
        sim.step();
        const auto& k = sim.result().counters;
        ASSERT_EQ(k.spawned, sim.moving().size() + sim.parked().size() + k.departures + k.exits);
        ASSERT_EQ(k.parking_events, sim.parked().size() + k.departures);
    }
}

TEST(Simulation, ZeroDurationParkingDepartsNextTick) {
    auto c = base_config(1200);
    c.parking.mean_duration_s = 0.0;
    Simulation sim(c);
    for (int t = 0; t < 1200; ++t) {
        sim.step();
        for (const auto& [id, car] : sim.parked()) ASSERT_EQ(car.parked_at, static_cast<double>(t));
    }
    EXPECT_GT(sim.result().counters.departures, 0u);
    EXPECT_EQ(sim.result().counters.assignments, 0u);
}

TEST(Simulation, RsuRoleDiesWithVehicle) {
    const auto r = run(base_config(4000));
    std::size_t departures = 0;
    for (const auto& l : r.lifetimes) departures += l.cause == RevocationCause::departure;
    EXPECT_GT(departures, 0u);
}

TEST(Simulation, UndeliveredStateDoesNotMatter) {
    Simulation a(base_config(3000));
    for (int t = 0; t < 1500; ++t) a.step();
    Simulation b = a;
    std::size_t corrupted = 0;
    for (auto& [id, car] : b.parked_for_testing()) {
        if (car.role == Role::parked_silent && !car.learning && car.learn_until + 300.0 < a.now()) {
            CoverageMap junk(id);
            for (int x = 0; x < 33; ++x) junk.set(Cell{x, 0}, 1);
            car.scm = junk;
            ++corrupted;
        }
    }
    ASSERT_GT(corrupted, 0u);
    for (int t = 1500; t < 3000; ++t) {
        a.step();
        b.step();
    }
    EXPECT_EQ(a.result().metrics, b.result().metrics);
    ASSERT_EQ(a.result().commands.size(), b.result().commands.size());
    for (std::size_t i = 0; i < a.result().commands.size(); ++i)
        EXPECT_EQ(a.result().commands[i].command, b.result().commands[i].command);
}

TEST(Simulation, DeliveredMapsDoMatter) {
    Simulation a(base_config(3000));
    for (int t = 0; t < 1500; ++t) a.step();
    Simulation b = a;
    for (auto& [id, car] : b.parked_for_testing()) {
        if (car.role == Role::parked_rsu) {
            CoverageMap junk(id);
            for (int x = 0; x < 33; ++x) junk.set(Cell{x, 16}, 5);
            car.scm = junk;
        }
    }
    for (int t = 1500; t < 3000; ++t) {
        a.step();
        b.step();
    }
    const auto& ca = a.result().commands;
    const auto& cb = b.result().commands;
    const bool same = ca.size() == cb.size() && std::equal(ca.begin(), ca.end(), cb.begin(), [](const auto& x, const auto& y) {
                          return x.command == y.command;
                      });
    EXPECT_FALSE(same);
}

TEST(Simulation, GatherPoolOnlySeesReachableRsus) {
    Simulation sim(base_config(2000));
    for (int t = 0; t < 2000; ++t) sim.step();
    const auto& table = sim.table();
    for (const auto& [id, car] : sim.parked()) {
        const auto pool = sim.gather_pool(id);
        for (const auto& n : pool.neighbors) {
            const auto& other = sim.parked().at(n.id);
            ASSERT_EQ(other.role, Role::parked_rsu);
            ASSERT_GE(table.between(car.usable, other.usable), 1);
            ASSERT_NE(n.id, id);
        }
    }
}

TEST(Simulation, ParkedPopulationMatchesQueueingModel) {
    const auto c = base_config(7200);
    Simulation sim(c);
    sim.run();
    const double want = transient_parked_mean(c.parking.arrival_rate_vps, c.parking.park_probability,
                                              c.parking.mean_duration_s, 7200.0);
    EXPECT_NEAR(static_cast<double>(sim.parked().size()), want, 0.15 * want);
}

TEST(Simulation, DefaultRunStabilizes) {
    const auto r = run(base_config(7200));
    std::vector<double> last;
    for (const auto& m : r.metrics)
        if (m.t >= 5400) last.push_back(m.coverage_pct);
    EXPECT_LT(mean_sd(last).sd, 0.02);
}

TEST(Simulation, ForcedRevocationSpikeAtMaximumActivity) {
    auto c = base_config(8 * 3600);
    c.weights.w_bat = 0.0;
    c.weights.w_cov = 0.3;
    const auto r = run(c);
    std::map<int, int> bins;
    std::size_t forced = 0;
    for (const auto& l : r.lifetimes) {
        ++bins[static_cast<int>(l.lifetime() / 120.0)];
        forced += l.cause == RevocationCause::forced_tau_M;
        if (l.cause == RevocationCause::forced_tau_M) EXPECT_EQ(l.lifetime(), 3600.0);
    }
    ASSERT_GT(forced, 0u);
    const int spike = bins[30];
    for (int k = 25; k < 30; ++k) EXPECT_GT(spike, bins[k]) << k;
    for (int k = 31; k < 36; ++k) EXPECT_GT(spike, bins[k]) << k;
}

TEST(Simulation, TraceDrivenVehiclesParkAtLastFix) {
    auto trace = std::make_shared<std::vector<TraceRecord>>();
    for (int t = 0; t < 20; ++t) trace->push_back({static_cast<double>(t), 1, Point{15.45 + 8.0 * t, 15.45}});
    for (int t = 5; t < 10; ++t) trace->push_back({static_cast<double>(t), 2, Point{15.45, 15.45 + 8.0 * t}});
    auto c = base_config(100);
    c.trace = trace;
    EXPECT_THROW(Simulation{c}, ConfigError);
    std::stable_sort(trace->begin(), trace->end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
    Simulation sim(c);
    sim.run();
    ASSERT_EQ(sim.parked().size(), 2u);
    EXPECT_EQ(sim.parked().at(1).cell, default_grid()->cell_of(Point{15.45 + 8.0 * 19, 15.45}));
    EXPECT_EQ(sim.parked().at(2).parked_at, 9.0);
    EXPECT_EQ(sim.result().counters.assignments, 2u);
}

TEST(SteadyState, ConstantSeriesHasZeroSd) {
    std::vector<MetricsSample> s;
    for (int t = 0; t < 100; ++t) s.push_back({static_cast<double>(t), 5, 0.5, 4.0, 1.5, 7000});
    const auto st = steady_state_stats(s, 10);
    EXPECT_EQ(st.samples, 90u);
    EXPECT_EQ(st.coverage_pct.sd, 0.0);
    EXPECT_EQ(st.active_rsus.mean, 5.0);
}

TEST(SteadyState, StepAtDiscardBoundary) {
    std::vector<MetricsSample> s;
    for (int t = 0; t < 100; ++t) s.push_back({static_cast<double>(t), t < 40 ? 1u : 9u, 0, 0, 0, 0});
    const auto st = steady_state_stats(s, 40);
    EXPECT_EQ(st.active_rsus.mean, 9.0);
    EXPECT_EQ(st.active_rsus.sd, 0.0);
}

TEST(SteadyState, TooShortRejected) {
    std::vector<MetricsSample> s(10);
    EXPECT_THROW(steady_state_stats(s, 100), ValidationError);
}

TEST(Bounds, SingleRsuHasUnitSaturation) {
    const PropagationTable table(*default_grid(), PropagationConfig{});
    const std::vector<std::int32_t> pop{37};
    std::mt19937_64 rng(1);
    const auto r = random_assignment_bounds(table, pop, 50, rng);
    ASSERT_FALSE(r.samples.empty());
    for (const auto& s : r.samples) {
        EXPECT_EQ(s.active, 1u);
        EXPECT_EQ(s.mean_saturation, 1.0);
    }
    EXPECT_EQ(r.samples.size() + r.skipped_empty, 50u);
}

TEST(Bounds, EmptyPopulationRejected) {
    const PropagationTable table(*default_grid(), PropagationConfig{});
    std::mt19937_64 rng(1);
    EXPECT_THROW(random_assignment_bounds(table, std::vector<std::int32_t>{}, 10, rng), ValidationError);
}

TEST(Bounds, ToyEnvelopeMatchesExhaustiveEnumeration) {
    const CityGrid grid = build_manhattan_city(2, 2, 1, 3);
    const PropagationConfig cfg;
    const PropagationTable table(grid, cfg);
    const std::vector<std::int32_t> cars{0, 4, 9, 17, 30, 44};
    const auto& cells = grid.usable_cells();

    std::vector<BoundsSample> exhaustive;
    for (unsigned mask = 1; mask < 64; ++mask) {
        std::map<Cell, std::pair<int, int>> cover;  // best, count
        for (std::size_t i = 0; i < cars.size(); ++i) {
            if (!(mask & (1u << i))) continue;
            for (const Cell rx : cells) {
                const int s = strength(cells[static_cast<std::size_t>(cars[i])], rx, grid, cfg);
                if (s == 0) continue;
                auto& [best, count] = cover[rx];
                best = std::max(best, s);
                ++count;
            }
        }
        long sig = 0, sat = 0;
        for (const auto& [c, v] : cover) {
            sig += v.first;
            sat += v.second;
        }
        const double n = static_cast<double>(cover.size());
        exhaustive.push_back({static_cast<std::size_t>(__builtin_popcount(mask)), sig / n, sat / n});
    }
    std::mt19937_64 rng(8);
    const auto sampled = random_assignment_bounds(table, cars, 20000, rng);
    const auto want = saturation_envelope(exhaustive, 0.05);
    const auto got = saturation_envelope(sampled.samples, 0.05);
    ASSERT_EQ(got.size(), want.size());
    for (const auto& [k, b] : want) {
        ASSERT_TRUE(got.contains(k));
        EXPECT_EQ(got.at(k).sat_min, b.sat_min);
        EXPECT_EQ(got.at(k).sat_max, b.sat_max);
    }
}

TEST(Bounds, Reproducible) {
    const PropagationTable table(*default_grid(), PropagationConfig{});
    std::mt19937_64 pop_rng(3);
    const auto pop = random_parked_population(*default_grid(), 300, pop_rng);
    std::mt19937_64 a(5), b(5);
    const auto ra = random_assignment_bounds(table, pop, 500, a);
    const auto rb = random_assignment_bounds(table, pop, 500, b);
    ASSERT_EQ(ra.samples.size(), rb.samples.size());
    for (std::size_t i = 0; i < ra.samples.size(); ++i) {
        EXPECT_EQ(ra.samples[i].mean_signal, rb.samples[i].mean_signal);
        EXPECT_EQ(ra.samples[i].mean_saturation, rb.samples[i].mean_saturation);
    }
}

TEST(Bounds, EnvelopeBins) {
    const std::vector<BoundsSample> s{{1, 4.01, 1.5}, {2, 4.04, 2.5}, {3, 4.06, 2.0}};
    const auto env = saturation_envelope(s, 0.05);
    ASSERT_EQ(env.size(), 2u);
    EXPECT_EQ(env.at(80).count, 2u);
    EXPECT_EQ(env.at(80).sat_min, 1.5);
    EXPECT_EQ(env.at(80).sat_max, 2.5);
    EXPECT_EQ(env.at(81).count, 1u);
    EXPECT_THROW(saturation_envelope(s, 0.0), ValidationError);
}

TEST(Csv, MetricsHeader) {
    std::ostringstream out;
    write_metrics_csv(out, std::vector<MetricsSample>{});
    EXPECT_EQ(out.str(), "t,active_rsus,coverage_pct,mean_signal,mean_saturation,area_per_rsu\n");
}
