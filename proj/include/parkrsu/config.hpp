#pragma once

// Run configuration: a flat key-value file with one section per module
//
//   [decision]
//   w_sat = 0.2
//
// Every key is registered once in `config_fields()`, which drives parsing,
// canonical serialization (and hence the manifest digest), CLI overrides and
// sweep axes.

#include <parkrsu/error.hpp>
#include <parkrsu/sim.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace parkrsu {

struct GridSpec {
    int blocks_x = 8;
    int blocks_y = 8;
    int road_width_cells = 1;
    int block_size_cells = 3;
    double cell_size_m = kDefaultCellSizeM;
    std::string city_file;  ///< overrides the Manhattan layout when set
};

struct BoundsSpec {
    std::uint64_t population = 1800;
    std::uint64_t num_samples = 100000;
    double bin_width = 0.05;
};

struct RunConfig {
    GridSpec grid;
    PropagationConfig radio;
    double noise_sd = 3.0;
    int cams_per_tick = 10;
    std::uint64_t min_samples = kDefaultMinSamples;
    ParkingModel parking;
    std::string profile_file;
    std::string trace_file;
    ScoringWeights weights;
    BatteryPolicy battery;
    bool enforce_tau_max = true;
    DecisionMode mode = DecisionMode::weighted_product;
    double t_learn_s = 60.0;
    std::int64_t duration_s = 7200;
    std::uint64_t seed = 1;
    double discard_s = 1800.0;
    int sweep_seeds = 3;
    BoundsSpec bounds;
    std::string output_dir;
};

namespace detail {

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

inline double parse_real(std::string_view key, std::string_view v) {
    const auto d = parse_double(trim(v));
    if (!d) throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    return *d;
}

template <typename Int>
Int parse_integer(std::string_view key, std::string_view v) {
    const auto t = trim(v);
    if (const auto i = parse_number<Int>(t)) return *i;
    // Accept integral reals such as 4e3 or 7200.0.
    if (const auto d = parse_double(t); d && std::floor(*d) == *d) return static_cast<Int>(*d);
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
}

}  // namespace detail

struct ConfigField {
    std::string key;  ///< section.name
    bool numeric = true;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
    using detail::format_double;
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f;
#define PARKRSU_REAL(KEY, EXPR)                                                                              \
    f.push_back(ConfigField{KEY, true, [](RunConfig& c, std::string_view v) { EXPR = detail::parse_real(KEY, v); }, \
                            [](const RunConfig& c) { return format_double(EXPR); }})
#define PARKRSU_INT(KEY, TYPE, EXPR)                                                                 \
    f.push_back(ConfigField{KEY, true,                                                               \
                            [](RunConfig& c, std::string_view v) { EXPR = detail::parse_integer<TYPE>(KEY, v); }, \
                            [](const RunConfig& c) { return std::to_string(EXPR); }})
#define PARKRSU_BOOL(KEY, EXPR)                                                                              \
    f.push_back(ConfigField{KEY, false, [](RunConfig& c, std::string_view v) { EXPR = detail::parse_bool(KEY, v); }, \
                            [](const RunConfig& c) { return detail::bool_text(EXPR); }})
#define PARKRSU_TEXT(KEY, EXPR)                                                                                \
    f.push_back(ConfigField{KEY, false, [](RunConfig& c, std::string_view v) { EXPR = std::string(detail::trim(v)); }, \
                            [](const RunConfig& c) { return EXPR; }})

        PARKRSU_INT("grid.blocks_x", int, c.grid.blocks_x);
        PARKRSU_INT("grid.blocks_y", int, c.grid.blocks_y);
        PARKRSU_INT("grid.road_width_cells", int, c.grid.road_width_cells);
        PARKRSU_INT("grid.block_size_cells", int, c.grid.block_size_cells);
        PARKRSU_REAL("grid.cell_size_m", c.grid.cell_size_m);
        PARKRSU_TEXT("grid.city_file", c.grid.city_file);

        PARKRSU_REAL("radio.base_range_m", c.radio.base_range_m);
        PARKRSU_REAL("radio.range_multiplier", c.radio.range_multiplier);
        PARKRSU_INT("radio.nlos_penalty", int, c.radio.nlos_penalty);
        PARKRSU_REAL("radio.band_5", c.radio.band_fractions[0]);
        PARKRSU_REAL("radio.band_4", c.radio.band_fractions[1]);
        PARKRSU_REAL("radio.band_3", c.radio.band_fractions[2]);
        PARKRSU_REAL("radio.noise_sd", c.noise_sd);
        PARKRSU_INT("radio.cams_per_tick", int, c.cams_per_tick);

        PARKRSU_INT("maps.min_samples", std::uint64_t, c.min_samples);

        PARKRSU_REAL("decision.w_sig", c.weights.w_sig);
        PARKRSU_REAL("decision.w_sat", c.weights.w_sat);
        PARKRSU_REAL("decision.w_cov", c.weights.w_cov);
        PARKRSU_REAL("decision.w_bat", c.weights.w_bat);
        PARKRSU_REAL("decision.tau_m", c.battery.tau_m);
        PARKRSU_REAL("decision.tau_M", c.battery.tau_M);
        PARKRSU_BOOL("decision.enforce_tau_max", c.enforce_tau_max);
        PARKRSU_REAL("decision.t_learn_s", c.t_learn_s);
        f.push_back(ConfigField{
            "decision.mode", false,
            [](RunConfig& c, std::string_view v) {
                v = detail::trim(v);
                if (v == "weighted_product") c.mode = DecisionMode::weighted_product;
                else if (v == "always_join") c.mode = DecisionMode::always_join;
                else throw ConfigError("decision.mode: expected weighted_product or always_join");
            },
            [](const RunConfig& c) {
                return std::string(c.mode == DecisionMode::weighted_product ? "weighted_product" : "always_join");
            }});

        f.push_back(ConfigField{
            "traffic.mode", false,
            [](RunConfig& c, std::string_view v) {
                v = detail::trim(v);
                if (v == "uniform") c.parking.mode = ParkingMode::uniform;
                else if (v == "day_profile") c.parking.mode = ParkingMode::day_profile;
                else throw ConfigError("traffic.mode: expected uniform or day_profile");
            },
            [](const RunConfig& c) {
                return std::string(c.parking.mode == ParkingMode::uniform ? "uniform" : "day_profile");
            }});
        PARKRSU_REAL("traffic.arrival_rate_vps", c.parking.arrival_rate_vps);
        PARKRSU_REAL("traffic.park_probability", c.parking.park_probability);
        PARKRSU_REAL("traffic.mean_duration_s", c.parking.mean_duration_s);
        PARKRSU_INT("traffic.daily_total", std::uint64_t, c.parking.daily_total);
        PARKRSU_REAL("traffic.through_rate_vps", c.parking.through_rate_vps);
        PARKRSU_REAL("traffic.speed_mps", c.parking.speed_mps);
        PARKRSU_TEXT("traffic.profile_file", c.profile_file);
        PARKRSU_TEXT("traffic.trace_file", c.trace_file);

        PARKRSU_INT("sim.duration_s", std::int64_t, c.duration_s);
        PARKRSU_INT("sim.seed", std::uint64_t, c.seed);
        PARKRSU_REAL("sim.discard_s", c.discard_s);
        PARKRSU_INT("sim.sweep_seeds", int, c.sweep_seeds);

        PARKRSU_INT("bounds.population", std::uint64_t, c.bounds.population);
        PARKRSU_INT("bounds.num_samples", std::uint64_t, c.bounds.num_samples);
        PARKRSU_REAL("bounds.bin_width", c.bounds.bin_width);

        PARKRSU_TEXT("output.dir", c.output_dir);
#undef PARKRSU_REAL
#undef PARKRSU_INT
#undef PARKRSU_BOOL
#undef PARKRSU_TEXT
        return f;
    }();
    return fields;
}

/// Looks up a field by full key or by its unique trailing name (`w_sat`).
inline const ConfigField& find_config_field(std::string_view name) {
    const ConfigField* match = nullptr;
    for (const auto& f : config_fields()) {
        if (f.key == name) return f;
        const auto dot = f.key.find('.');
        if (std::string_view(f.key).substr(dot + 1) == name) {
            if (match) throw ConfigError("ambiguous configuration key '" + std::string(name) + "'");
            match = &f;
        }
    }
    if (!match) throw ConfigError("unknown configuration key '" + std::string(name) + "'");
    return *match;
}

inline void set_config_value(RunConfig& cfg, std::string_view name, std::string_view value) {
    find_config_field(name).set(cfg, value);
}

/// `key=value` lines in registry order.
inline std::string canonical_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : config_fields()) out += f.key + "=" + f.get(cfg) + "\n";
    return out;
}

/// FNV-1a 64 over the canonical serialization, as 16 hex digits.
inline std::string config_digest(const RunConfig& cfg) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : canonical_config(cfg)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline std::string resolve_relative(const std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("key '" + section + "' must live in a [section]");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const ConfigField* field = nullptr;
            for (const auto& f : config_fields())
                if (f.key == full) field = &f;
            if (!field) throw ConfigError("unknown configuration key '" + full + "'");
            field->set(cfg, value.data());
        }
    }
    cfg.grid.city_file = detail::resolve_relative(cfg.grid.city_file, base_dir);
    cfg.profile_file = detail::resolve_relative(cfg.profile_file, base_dir);
    cfg.trace_file = detail::resolve_relative(cfg.trace_file, base_dir);
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_config(in, path.parent_path());
}

inline void write_config(std::ostream& out, const RunConfig& cfg) {
    std::string section;
    for (const auto& f : config_fields()) {
        const auto dot = f.key.find('.');
        const std::string s = f.key.substr(0, dot);
        if (s != section) {
            if (!section.empty()) out << '\n';
            out << '[' << s << "]\n";
            section = s;
        }
        out << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
    }
}

inline std::shared_ptr<const CityGrid> build_grid(const GridSpec& spec) {
    if (!spec.city_file.empty()) {
        std::ifstream in(spec.city_file);
        if (!in) throw ConfigError("grid.city_file: cannot open '" + spec.city_file + "'");
        return std::make_shared<CityGrid>(read_city(in, spec.cell_size_m));
    }
    return std::make_shared<CityGrid>(build_manhattan_city(spec.blocks_x, spec.blocks_y, spec.road_width_cells,
                                                           spec.block_size_cells, spec.cell_size_m));
}

inline std::string default_profile_path() {
#ifdef PARKRSU_DATA_DIR
    return std::string(PARKRSU_DATA_DIR) + "/day_profile.csv";
#else
    return "data/day_profile.csv";
#endif
}

/// Resolves files and builds the simulation inputs. Errors name the field.
inline SimulationConfig to_simulation_config(const RunConfig& cfg) {
    SimulationConfig s;
    s.grid = build_grid(cfg.grid);
    s.radio = cfg.radio;
    s.noise_sd = cfg.noise_sd;
    s.cams_per_tick = cfg.cams_per_tick;
    s.min_samples = cfg.min_samples;
    s.parking = cfg.parking;
    if (cfg.parking.mode == ParkingMode::day_profile) {
        const std::string path = cfg.profile_file.empty() ? default_profile_path() : cfg.profile_file;
        std::ifstream in(path);
        if (!in) throw ConfigError("traffic.profile_file: cannot open '" + path + "'");
        try {
            s.parking.hourly = read_day_profile(in);
        } catch (const ParseError& e) {
            throw ConfigError("traffic.profile_file: " + std::string(e.what()));
        }
    }
    if (!cfg.trace_file.empty()) {
        std::ifstream in(cfg.trace_file);
        if (!in) throw ConfigError("traffic.trace_file: cannot open '" + cfg.trace_file + "'");
        s.trace = std::make_shared<const std::vector<TraceRecord>>(read_trace(in));
    }
    s.weights = cfg.weights;
    s.battery = cfg.battery;
    s.enforce_tau_max = cfg.enforce_tau_max;
    s.mode = cfg.mode;
    s.t_learn_s = cfg.t_learn_s;
    s.duration_s = cfg.duration_s;
    s.seed = cfg.seed;
    if (cfg.sweep_seeds < 1) throw ConfigError("sim.sweep_seeds must be >= 1");
    if (!(cfg.bounds.bin_width > 0.0)) throw ConfigError("bounds.bin_width must be positive");
    s.validate();
    return s;
}

}  // namespace parkrsu
