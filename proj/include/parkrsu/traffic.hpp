#pragma once

// Vehicle arrivals, road-constrained random-turn mobility, parking and
// departure. Two arrival models are supported: a homogeneous Poisson stream
// and a 24-slot day profile with per-hour log-normal parking durations.

#include <parkrsu/detail/text.hpp>
#include <parkrsu/error.hpp>
#include <parkrsu/grid.hpp>
#include <parkrsu/maps.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace parkrsu {

enum class Role { moving, parked_silent, parked_rsu };

struct Vehicle {
    EntityId id = 0;
    Point position;
    Cell from;  ///< cell center the vehicle last passed
    Cell to;    ///< cell center it is heading to
    double progress_m = 0.0;
    double speed_mps = 8.0;
    Role role = Role::moving;
    bool parks = true;  ///< false for through traffic that leaves the city
    double entered_at = 0.0;
    double parked_at = 0.0;
    std::optional<double> planned_duration_s;
    std::optional<double> rsu_active_since;

    Cell cell(const CityGrid& grid) const { return grid.cell_of(position); }
};

enum class ParkingMode { uniform, day_profile };

struct HourSlot {
    double weight = 0.0;
    double median_s = 3600.0;
    double sigma = 0.5;
};

using DayProfile = std::array<HourSlot, 24>;

struct ParkingModel {
    ParkingMode mode = ParkingMode::uniform;
    double arrival_rate_vps = 0.5;       ///< uniform mode
    double park_probability = 0.5 / 55;  ///< per second of driving
    double mean_duration_s = 3600.0;     ///< uniform mode, exponential
    DayProfile hourly{};                 ///< day-profile mode
    std::uint64_t daily_total = 4000;    ///< day-profile mode
    double through_rate_vps = 0.0;       ///< vehicles that never park
    double speed_mps = 8.0;

    void validate() const {
        if (!(arrival_rate_vps >= 0.0) || !std::isfinite(arrival_rate_vps))
            throw ConfigError("traffic.arrival_rate_vps must be >= 0");
        if (!(park_probability >= 0.0) || park_probability > 1.0)
            throw ConfigError("traffic.park_probability must be in [0, 1]");
        if (!(mean_duration_s >= 0.0) || !std::isfinite(mean_duration_s))
            throw ConfigError("traffic.mean_duration_s must be >= 0");
        if (!(through_rate_vps >= 0.0) || !std::isfinite(through_rate_vps))
            throw ConfigError("traffic.through_rate_vps must be >= 0");
        if (!(speed_mps > 0.0) || !std::isfinite(speed_mps)) throw ConfigError("traffic.speed_mps must be positive");
        if (mode == ParkingMode::day_profile) {
            double total = 0.0;
            for (const auto& h : hourly) {
                if (!(h.weight >= 0.0) || !(h.median_s >= 0.0) || !(h.sigma >= 0.0))
                    throw ConfigError("day profile entries must be non-negative");
                total += h.weight;
            }
            if (std::abs(total - 1.0) > 1e-6) throw ConfigError("day profile weights must sum to 1");
        }
    }
};

/// `hour,weight,median_s,sigma`, one line per hour 0..23.
inline DayProfile read_day_profile(std::istream& in) {
    DayProfile p{};
    std::array<bool, 24> seen{};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#' || body.starts_with("hour")) continue;
        const auto f = detail::split(body, ',');
        if (f.size() != 4) throw ParseError(lineno, "expected hour,weight,median_s,sigma");
        const auto h = detail::parse_number<int>(f[0]);
        const auto w = detail::parse_double(f[1]);
        const auto m = detail::parse_double(f[2]);
        const auto s = detail::parse_double(f[3]);
        if (!h || !w || !m || !s) throw ParseError(lineno, "non-numeric field");
        if (*h < 0 || *h > 23) throw ParseError(lineno, "hour outside 0..23");
        if (seen[*h]) throw ParseError(lineno, "duplicate hour");
        seen[*h] = true;
        p[*h] = HourSlot{*w, *m, *s};
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw ConfigError("day profile must list all 24 hours");
    return p;
}

inline void write_day_profile(std::ostream& out, const DayProfile& p) {
    out << "hour,weight,median_s,sigma\n";
    for (int h = 0; h < 24; ++h)
        out << h << ',' << detail::format_double(p[h].weight) << ',' << detail::format_double(p[h].median_s) << ','
            << detail::format_double(p[h].sigma) << '\n';
}

inline int hour_of_day(double t) {
    const double day = std::fmod(std::max(t, 0.0), 86400.0);
    return std::min(23, static_cast<int>(day / 3600.0));
}

template <typename Rng>
double sample_parking_duration(const ParkingModel& model, double t, Rng& rng) {
    if (model.mode == ParkingMode::uniform) {
        if (model.mean_duration_s == 0.0) return 0.0;
        return std::exponential_distribution<double>(1.0 / model.mean_duration_s)(rng);
    }
    const auto& slot = model.hourly[static_cast<std::size_t>(hour_of_day(t))];
    if (slot.median_s <= 0.0) return 0.0;
    if (slot.sigma == 0.0) return slot.median_s;
    return std::lognormal_distribution<double>(std::log(slot.median_s), slot.sigma)(rng);
}

namespace detail {

inline constexpr std::array<std::pair<int, int>, 4> kHeadings{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

// Neighbors are one cell apart, so (to - from) is a unit heading.
inline void refresh_position(Vehicle& v, const CityGrid& grid) {
    const Point a = grid.center_of(v.from);
    const double dx = v.to.x - v.from.x, dy = v.to.y - v.from.y;
    v.position = Point{a.x + dx * v.progress_m, a.y + dy * v.progress_m};
}

}  // namespace detail

/// Advances a moving vehicle along road cells. At each cell center it picks a
/// uniformly random usable neighbor other than the one it came from; on a
/// dead end it turns back.
template <typename Rng>
void step_vehicle(Vehicle& v, const CityGrid& grid, double dt, Rng& rng) {
    if (v.role != Role::moving) throw ValidationError("only moving vehicles can be stepped");
    double remaining = v.speed_mps * dt;
    const double edge = grid.cell_size_m();
    while (remaining > 0.0) {
        if (v.from == v.to) {
            // Stationary at a center: choose any usable neighbor.
            std::vector<Cell> options;
            for (auto [dx, dy] : detail::kHeadings) {
                const Cell n{v.from.x + dx, v.from.y + dy};
                if (grid.is_usable(n)) options.push_back(n);
            }
            if (options.empty()) break;
            v.to = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
        }
        const double to_center = edge - v.progress_m;
        if (remaining < to_center) {
            v.progress_m += remaining;
            break;
        }
        remaining -= to_center;
        const Cell back = v.from;
        v.from = v.to;
        v.progress_m = 0.0;
        std::vector<Cell> options;
        for (auto [dx, dy] : detail::kHeadings) {
            const Cell n{v.from.x + dx, v.from.y + dy};
            if (n != back && grid.is_usable(n)) options.push_back(n);
        }
        if (options.empty()) v.to = back;
        else v.to = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    }
    detail::refresh_position(v, grid);
}

struct ParkingEvent {
    EntityId id = 0;
    double at = 0.0;
    double duration_s = 0.0;
};

/// With probability park_probability*dt the vehicle parks where it is.
template <typename Rng>
std::optional<ParkingEvent> maybe_park(Vehicle& v, const ParkingModel& model, double t, Rng& rng, double dt = 1.0) {
    if (v.role != Role::moving) throw ValidationError("only moving vehicles can park");
    if (!v.parks || model.park_probability <= 0.0) return std::nullopt;
    const double p = std::min(1.0, model.park_probability * dt);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= p) return std::nullopt;
    v.role = Role::parked_silent;
    v.parked_at = t;
    v.planned_duration_s = sample_parking_duration(model, t, rng);
    v.progress_m = 0.0;
    return ParkingEvent{v.id, t, *v.planned_duration_s};
}

/// Through traffic leaves with the same per-second hazard that parking
/// traffic parks with.
template <typename Rng>
bool maybe_exit(const Vehicle& v, const ParkingModel& model, Rng& rng, double dt = 1.0) {
    if (v.parks || v.role != Role::moving) return false;
    const double p = std::min(1.0, model.park_probability * dt);
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

inline bool should_depart(const Vehicle& v, double t) {
    return v.role != Role::moving && v.planned_duration_s && t >= v.parked_at + *v.planned_duration_s;
}

/// Arrival process plus entry-point selection. Day-profile arrivals are
/// drawn as exactly round(daily_total * weight) vehicles per hour (largest
/// remainder rounding) at uniform times inside the hour.
class TrafficGenerator {
public:
    TrafficGenerator(const CityGrid& grid, ParkingModel model, std::uint64_t seed)
        : grid_(&grid), model_(std::move(model)), rng_(seed) {
        model_.validate();
        for (const Cell c : grid.usable_cells()) {
            const bool border = c.x == grid.origin().x || c.y == grid.origin().y ||
                                c.x == grid.origin().x + grid.width() - 1 || c.y == grid.origin().y + grid.height() - 1;
            if (border) entry_cells_.push_back(c);
        }
        if (entry_cells_.empty()) entry_cells_ = grid.usable_cells();
    }

    const ParkingModel& model() const noexcept { return model_; }

    /// Vehicles entering during [t, t + dt).
    std::vector<Vehicle> spawn(double t, double dt, EntityId& next_id) {
        std::vector<Vehicle> out;
        std::size_t parking = 0;
        if (model_.mode == ParkingMode::uniform) {
            if (model_.arrival_rate_vps > 0.0)
                parking = std::poisson_distribution<std::size_t>(model_.arrival_rate_vps * dt)(rng_);
        } else {
            parking = scheduled_between(t, t + dt);
        }
        std::size_t through = 0;
        if (model_.through_rate_vps > 0.0)
            through = std::poisson_distribution<std::size_t>(model_.through_rate_vps * dt)(rng_);
        for (std::size_t i = 0; i < parking + through; ++i) out.push_back(make_vehicle(t, next_id++, i < parking));
        return out;
    }

    std::mt19937_64& rng() noexcept { return rng_; }

private:
    Vehicle make_vehicle(double t, EntityId id, bool parks) {
        Vehicle v;
        v.id = id;
        v.from = entry_cells_[std::uniform_int_distribution<std::size_t>(0, entry_cells_.size() - 1)(rng_)];
        v.to = v.from;
        v.speed_mps = model_.speed_mps;
        v.parks = parks;
        v.entered_at = t;
        std::vector<Cell> options;
        for (auto [dx, dy] : detail::kHeadings) {
            const Cell n{v.from.x + dx, v.from.y + dy};
            if (grid_->is_usable(n)) options.push_back(n);
        }
        if (!options.empty())
            v.to = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng_)];
        v.position = grid_->center_of(v.from);
        return v;
    }

    std::size_t scheduled_between(double lo, double hi) {
        std::size_t n = 0;
        while (true) {
            const auto day = static_cast<std::int64_t>(std::floor(lo / 86400.0));
            if (day != scheduled_day_) build_day(day);
            while (!schedule_.empty() && schedule_.front() < lo) schedule_.pop_front();
            while (!schedule_.empty() && schedule_.front() < hi) {
                schedule_.pop_front();
                ++n;
            }
            const double day_end = static_cast<double>(day + 1) * 86400.0;
            if (hi <= day_end) break;
            lo = day_end;
        }
        return n;
    }

    void build_day(std::int64_t day) {
        scheduled_day_ = day;
        schedule_.clear();
        std::array<std::uint64_t, 24> counts{};
        std::array<std::pair<double, int>, 24> remainders{};
        std::uint64_t assigned = 0;
        for (int h = 0; h < 24; ++h) {
            const double exact = static_cast<double>(model_.daily_total) * model_.hourly[h].weight;
            counts[h] = static_cast<std::uint64_t>(std::floor(exact));
            remainders[h] = {exact - std::floor(exact), h};
            assigned += counts[h];
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; assigned < model_.daily_total && i < remainders.size(); ++i, ++assigned)
            ++counts[remainders[i].second];
        const double base = static_cast<double>(day) * 86400.0;
        std::vector<double> times;
        for (int h = 0; h < 24; ++h) {
            std::uniform_real_distribution<double> u(base + h * 3600.0, base + (h + 1) * 3600.0);
            for (std::uint64_t i = 0; i < counts[h]; ++i) times.push_back(u(rng_));
        }
        std::sort(times.begin(), times.end());
        schedule_.assign(times.begin(), times.end());
    }

    const CityGrid* grid_;
    ParkingModel model_;
    std::mt19937_64 rng_;
    std::vector<Cell> entry_cells_;
    std::int64_t scheduled_day_ = -1;
    std::deque<double> schedule_;
};

/// Externally recorded mobility: `time_s,vehicle_id,x,y` with x, y in meters.
/// A vehicle is moving between its first and last record and parks at its
/// last recorded position.
struct TraceRecord {
    double time_s = 0.0;
    EntityId vehicle = 0;
    Point position;
};

inline std::vector<TraceRecord> read_trace(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#' || body.starts_with("time")) continue;
        const auto f = detail::split(body, ',');
        if (f.size() != 4) throw ParseError(lineno, "expected time_s,vehicle_id,x,y");
        const auto t = detail::parse_double(f[0]);
        const auto id = detail::parse_number<EntityId>(f[1]);
        const auto x = detail::parse_double(f[2]);
        const auto y = detail::parse_double(f[3]);
        if (!t || !id || !x || !y) throw ParseError(lineno, "non-numeric field");
        out.push_back(TraceRecord{*t, *id, Point{*x, *y}});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
    return out;
}

}  // namespace parkrsu
