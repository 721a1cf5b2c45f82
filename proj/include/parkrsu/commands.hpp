#pragma once

// Experiment drivers behind the `parkrsu` command line. Each returns a
// process exit status and reports problems on `err`.

#include <parkrsu/config.hpp>
#include <parkrsu/sim.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace parkrsu {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

using Override = std::pair<std::string, std::string>;

struct CommandOptions {
    std::string config_path;  ///< empty: built-in defaults
    std::vector<Override> overrides;
    std::string out_dir;  ///< empty: output.dir, then PARKRSU_OUT_DIR, then ./out
};

inline RunConfig load_run_config(const CommandOptions& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config(opts.config_path);
    for (const auto& [key, value] : opts.overrides) set_config_value(cfg, key, value);
    return cfg;
}

inline std::filesystem::path resolve_output_dir(const CommandOptions& opts, const RunConfig& cfg) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("PARKRSU_OUT_DIR"); env && *env) return env;
    return "out";
}

// ---------------------------------------------------------------------------
// Summary rows

struct RunSummary {
    std::uint64_t seed = 0;
    SteadyStateSummary stats;
    std::uint64_t parking_events = 0;
    std::uint64_t assignments = 0;
    std::uint64_t lifetime_records = 0;
    std::uint64_t forced_revocations = 0;
};

inline RunSummary summarize_run(const RunResult& r, std::uint64_t seed, double discard_s) {
    RunSummary s;
    s.seed = seed;
    s.stats = steady_state_stats(r.metrics, discard_s);
    s.parking_events = r.counters.parking_events;
    s.assignments = r.counters.assignments;
    s.lifetime_records = r.lifetimes.size();
    for (const auto& l : r.lifetimes) s.forced_revocations += l.cause == RevocationCause::forced_tau_M;
    return s;
}

/// Statistics of the concatenation of equally long per-seed windows.
inline RunSummary pool_summaries(std::span<const RunSummary> runs) {
    RunSummary p;
    if (runs.empty()) return p;
    const double n = static_cast<double>(runs.size());
    const auto pool = [&](auto member) {
        double mean = 0.0;
        for (const auto& r : runs) mean += (r.stats.*member).mean;
        mean /= n;
        double var = 0.0;
        for (const auto& r : runs) {
            const auto& m = r.stats.*member;
            var += m.sd * m.sd + (m.mean - mean) * (m.mean - mean);
        }
        return MeanSd{mean, std::sqrt(var / n)};
    };
    p.stats.active_rsus = pool(&SteadyStateSummary::active_rsus);
    p.stats.coverage_pct = pool(&SteadyStateSummary::coverage_pct);
    p.stats.mean_signal = pool(&SteadyStateSummary::mean_signal);
    p.stats.mean_saturation = pool(&SteadyStateSummary::mean_saturation);
    p.stats.area_per_rsu_m2 = pool(&SteadyStateSummary::area_per_rsu_m2);
    for (const auto& r : runs) {
        p.stats.samples += r.stats.samples;
        p.parking_events += r.parking_events;
        p.assignments += r.assignments;
        p.lifetime_records += r.lifetime_records;
        p.forced_revocations += r.forced_revocations;
    }
    return p;
}

inline const char* kSummaryColumns =
    "samples,active_rsus_mean,active_rsus_sd,coverage_pct_mean,coverage_pct_sd,mean_signal_mean,mean_signal_sd,"
    "mean_saturation_mean,mean_saturation_sd,area_per_rsu_mean,area_per_rsu_sd,parking_events,assignments,"
    "lifetime_records,forced_revocations";

inline void write_summary_fields(std::ostream& out, const RunSummary& s) {
    using detail::format_double;
    const auto ms = [&](const MeanSd& m) { out << ',' << format_double(m.mean) << ',' << format_double(m.sd); };
    out << s.stats.samples;
    ms(s.stats.active_rsus);
    ms(s.stats.coverage_pct);
    ms(s.stats.mean_signal);
    ms(s.stats.mean_saturation);
    ms(s.stats.area_per_rsu_m2);
    out << ',' << s.parking_events << ',' << s.assignments << ',' << s.lifetime_records << ',' << s.forced_revocations;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << body;
}

template <typename Writer>
void write_csv(const std::filesystem::path& path, Writer&& writer) {
    std::ostringstream buf;
    writer(buf);
    write_file(path, buf.str());
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& f : config_fields()) j[f.key] = f.get(cfg);
    return j;
}

inline nlohmann::ordered_json manifest(const std::string& command, const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config_digest"] = config_digest(cfg);
    j["config"] = config_json(cfg);
    return j;
}

inline nlohmann::ordered_json counters_json(const RunCounters& c) {
    nlohmann::ordered_json j;
    j["spawned"] = c.spawned;
    j["parking_events"] = c.parking_events;
    j["departures"] = c.departures;
    j["exits"] = c.exits;
    j["decisions"] = c.decisions;
    j["assignments"] = c.assignments;
    j["beacons"] = c.beacons;
    static constexpr const char* kinds[kMessageKinds] = {"cam", "map_request", "map_response", "role_assign",
                                                         "role_revoke"};
    for (std::size_t k = 0; k < kMessageKinds; ++k) j["messages"][kinds[k]] = c.messages[k];
    return j;
}

inline void write_manifest(const std::filesystem::path& dir, const nlohmann::ordered_json& j) {
    write_file(dir / "manifest.json", j.dump(2) + "\n");
}

inline std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const CommandOptions& opts, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const RunConfig cfg = load_run_config(opts);
        const SimulationConfig sim = to_simulation_config(cfg);
        const auto dir = detail::prepare_dir(resolve_output_dir(opts, cfg));
        const RunResult r = run(sim);

        detail::write_csv(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, r.metrics); });
        detail::write_csv(dir / "lifetimes.csv", [&](std::ostream& o) { write_lifetimes_csv(o, r.lifetimes); });
        detail::write_csv(dir / "commands.csv", [&](std::ostream& o) { write_commands_csv(o, r.commands); });
        std::optional<RunSummary> summary;
        if (std::any_of(r.metrics.begin(), r.metrics.end(), [&](const MetricsSample& m) { return m.t >= cfg.discard_s; })) {
            summary = summarize_run(r, cfg.seed, cfg.discard_s);
            detail::write_csv(dir / "summary.csv", [&](std::ostream& o) {
                o << "seed," << kSummaryColumns << '\n' << cfg.seed << ',';
                write_summary_fields(o, *summary);
                o << '\n';
            });
        }
        auto m = detail::manifest("simulate", cfg);
        m["counters"] = detail::counters_json(r.counters);
        detail::write_manifest(dir, m);

        log << "simulated " << r.metrics.size() << " s, " << r.counters.parking_events << " parking events, "
            << r.counters.assignments << " RSU assignments\n";
        if (summary)
            log << "steady state: active_rsus " << summary->stats.active_rsus.mean << ", coverage "
                << summary->stats.coverage_pct.mean << ", signal " << summary->stats.mean_signal.mean
                << ", saturation " << summary->stats.mean_saturation.mean << '\n';
        else
            log << "run shorter than discard window; no summary written\n";
        log << "outputs in " << dir.string() << '\n';
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// sweep

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct SweepOptions {
    CommandOptions base;
    std::string axis;
    std::vector<std::string> values;
    unsigned jobs = 1;
};

struct SweepRow {
    std::string value;
    std::vector<RunSummary> seeds;
    RunSummary pooled;
};

/// Per-value summaries; seeds are cfg.seed .. cfg.seed + sweep_seeds - 1.
inline std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& axis,
                                       const std::vector<std::string>& values, unsigned jobs) {
    const ConfigField& field = find_config_field(axis);
    if (!field.numeric) throw ConfigError("sweep axis '" + axis + "' is not numeric");
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const auto seeds = static_cast<std::size_t>(base.sweep_seeds);
    std::vector<SimulationConfig> runs;
    std::vector<RunConfig> cfgs;
    for (const auto& v : values) {
        for (std::size_t s = 0; s < seeds; ++s) {
            RunConfig c = base;
            field.set(c, v);
            c.seed = base.seed + s;
            runs.push_back(to_simulation_config(c));
            cfgs.push_back(c);
        }
    }
    std::vector<RunSummary> out(runs.size());
    parallel_for(runs.size(), jobs, [&](std::size_t i) {
        out[i] = summarize_run(run(runs[i]), cfgs[i].seed, cfgs[i].discard_s);
    });
    std::vector<SweepRow> rows;
    for (std::size_t v = 0; v < values.size(); ++v) {
        SweepRow row;
        row.value = values[v];
        row.seeds.assign(out.begin() + static_cast<std::ptrdiff_t>(v * seeds),
                         out.begin() + static_cast<std::ptrdiff_t>((v + 1) * seeds));
        row.pooled = pool_summaries(row.seeds);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::string& axis, std::span<const SweepRow> rows) {
    out << "axis,value,seed," << kSummaryColumns << '\n';
    for (const auto& row : rows) {
        for (const auto& s : row.seeds) {
            out << axis << ',' << row.value << ',' << s.seed << ',';
            write_summary_fields(out, s);
            out << '\n';
        }
        out << axis << ',' << row.value << ",pooled,";
        write_summary_fields(out, row.pooled);
        out << '\n';
    }
}

inline int cmd_sweep(const SweepOptions& opts, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const RunConfig cfg = load_run_config(opts.base);
        const std::string axis = find_config_field(opts.axis).key;
        const auto dir = detail::prepare_dir(resolve_output_dir(opts.base, cfg));
        const auto rows = run_sweep(cfg, opts.axis, opts.values, opts.jobs);
        detail::write_csv(dir / "sweep_summary.csv", [&](std::ostream& o) { write_sweep_csv(o, axis, rows); });
        auto m = detail::manifest("sweep", cfg);
        m["axis"] = axis;
        m["values"] = opts.values;
        m["seeds"] = cfg.sweep_seeds;
        detail::write_manifest(dir, m);
        for (const auto& row : rows)
            log << axis << '=' << row.value << ": active_rsus " << row.pooled.stats.active_rsus.mean << ", coverage "
                << row.pooled.stats.coverage_pct.mean << ", saturation " << row.pooled.stats.mean_saturation.mean
                << '\n';
        log << "outputs in " << dir.string() << '\n';
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsOptions {
    CommandOptions base;
    std::optional<std::uint64_t> num_samples;
};

struct BoundsRun {
    RunResult decision;
    std::vector<std::int32_t> population;
    BoundsResult bounds;
};

/// Runs the decision simulation, snapshots its parked cars, then samples
/// random assignments over that population.
inline BoundsRun run_bounds(const RunConfig& cfg, std::uint64_t num_samples) {
    Simulation sim(to_simulation_config(cfg));
    BoundsRun out;
    out.decision = sim.run();
    for (const auto& [id, car] : sim.parked()) out.population.push_back(car.usable);
    if (out.population.empty()) throw ValidationError("no parked cars at the end of the decision run");
    std::mt19937_64 rng(derive_stream_seed(cfg.seed, kBoundsStream));
    out.bounds = random_assignment_bounds(sim.table(), out.population, num_samples, rng);
    return out;
}

inline int cmd_bounds(const BoundsOptions& opts, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const RunConfig cfg = load_run_config(opts.base);
        const auto dir = detail::prepare_dir(resolve_output_dir(opts.base, cfg));
        const std::uint64_t n = opts.num_samples.value_or(cfg.bounds.num_samples);
        const BoundsRun r = run_bounds(cfg, n);

        detail::write_csv(dir / "bounds.csv", [&](std::ostream& o) { write_bounds_csv(o, r.bounds.samples); });
        detail::write_csv(dir / "envelope.csv", [&](std::ostream& o) {
            write_envelope_csv(o, saturation_envelope(r.bounds.samples, cfg.bounds.bin_width));
        });
        detail::write_csv(dir / "overlay.csv", [&](std::ostream& o) {
            std::vector<MetricsSample> steady;
            for (const auto& m : r.decision.metrics)
                if (m.t >= cfg.discard_s) steady.push_back(m);
            write_metrics_csv(o, steady);
        });
        auto m = detail::manifest("bounds", cfg);
        m["num_samples"] = n;
        m["population"] = r.population.size();
        m["skipped_empty"] = r.bounds.skipped_empty;
        detail::write_manifest(dir, m);
        log << r.bounds.samples.size() << " random assignments over " << r.population.size() << " parked cars ("
            << r.bounds.skipped_empty << " empty skipped)\n";
        log << "outputs in " << dir.string() << '\n';
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// infer-map

struct InferOptions {
    std::string log_path;
    std::uint64_t min_samples = kDefaultMinSamples;
    std::string out_dir;
};

inline int cmd_infer_map(const InferOptions& opts, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        std::ifstream in(opts.log_path);
        if (!in) {
            err << "error: cannot open beacon log '" << opts.log_path << "'\n";
            return kExitUsage;
        }
        MapBuilder builder;
        std::uint64_t beacons = 0;
        read_beacon_log(in, [&](const BeaconRecord& b) {
            builder.record_beacon(b.cell, b.rssi);
            ++beacons;
        });
        const InferredMap inferred = finalize_scm(builder, opts.min_samples);
        CommandOptions where;
        where.out_dir = opts.out_dir;
        const auto dir = detail::prepare_dir(resolve_output_dir(where, RunConfig{}));
        detail::write_csv(dir / "cell_stats.csv", [&](std::ostream& o) { write_cell_stats_csv(o, inferred.stats); });
        detail::write_csv(dir / "scm.csv", [&](std::ostream& o) { write_scm_csv(o, inferred.scm); });
        log << beacons << " beacons, " << inferred.stats.size() << " cells observed, " << inferred.scm.covered_count()
            << " in the inferred map\n";
        log << "outputs in " << dir.string() << '\n';
        return kExitOk;
    });
}

}  // namespace parkrsu
