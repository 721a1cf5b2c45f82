#pragma once

// Obstruction-aware distance-band propagation and the RSSI <-> strength-class
// conversions.
//
// Strength classes 5..2 are assigned by which distance band (between cell
// centers) the receiver falls in; beyond the last band there is no coverage.
// If the straight segment between the two cell centers touches any building
// cell, `nlos_penalty` classes are subtracted (floored at 0).

#include <parkrsu/error.hpp>
#include <parkrsu/grid.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace parkrsu {

/// 0 = no coverage, 1 = marginal, 2..5 usable service classes.
using SignalStrength = std::uint8_t;

inline constexpr SignalStrength kMaxStrength = 5;
inline constexpr int kRssiMin = 1;
inline constexpr int kRssiMax = 50;

/// OBU-reported received signal strength indicator, 1..50.
class Rssi {
public:
    explicit Rssi(int value) : value_(value) {
        if (value < kRssiMin || value > kRssiMax)
            throw ValidationError("rssi " + std::to_string(value) + " outside [1, 50]");
    }
    int value() const noexcept { return value_; }
    friend auto operator<=>(const Rssi&, const Rssi&) = default;

private:
    int value_;
};

struct PropagationConfig {
    double base_range_m = 155.0;
    double range_multiplier = 1.0;
    int nlos_penalty = 4;
    /// Upper band edges for classes 5, 4, 3, 2 as fractions of the max range.
    std::array<double, 4> band_fractions{0.25, 0.5, 0.75, 1.0};

    double max_range_m() const noexcept { return base_range_m * range_multiplier; }

    std::array<double, 4> band_edges_m() const noexcept {
        std::array<double, 4> edges{};
        for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = band_fractions[i] * max_range_m();
        return edges;
    }

    void validate() const {
        if (!(base_range_m > 0.0) || !std::isfinite(base_range_m))
            throw ConfigError("radio.base_range_m must be positive");
        if (!(range_multiplier > 0.0) || !std::isfinite(range_multiplier))
            throw ConfigError("radio.range_multiplier must be positive");
        if (nlos_penalty < 0 || nlos_penalty > kMaxStrength)
            throw ConfigError("radio.nlos_penalty must be in [0, 5]");
        double prev = 0.0;
        for (double f : band_fractions) {
            if (!(f > prev)) throw ConfigError("radio band edges must be strictly increasing");
            prev = f;
        }
        if (band_fractions.back() != 1.0) throw ConfigError("last radio band edge must equal the max range");
    }
};

namespace detail {

// Closed-square / closed-segment intersection in doubled integer coordinates:
// cell (i, j) spans [2i-1, 2i+1] x [2j-1, 2j+1]; the segment joins two cell
// centers. Separating axes are x, y and the segment normal.
inline bool segment_touches_cell(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by,
                                 std::int64_t i, std::int64_t j) {
    const std::int64_t lx = 2 * i - 1, hx = 2 * i + 1, ly = 2 * j - 1, hy = 2 * j + 1;
    if (std::max(ax, bx) < lx || std::min(ax, bx) > hx) return false;
    if (std::max(ay, by) < ly || std::min(ay, by) > hy) return false;
    const std::int64_t dx = bx - ax, dy = by - ay;
    bool neg = false, pos = false;
    for (auto [cx, cy] : {std::pair{lx, ly}, std::pair{lx, hy}, std::pair{hx, ly}, std::pair{hx, hy}}) {
        const std::int64_t cross = dx * (cy - ay) - dy * (cx - ax);
        if (cross <= 0) neg = true;
        if (cross >= 0) pos = true;
    }
    return neg && pos;
}

}  // namespace detail

/// True when the center-to-center segment touches a building cell other than
/// the endpoints themselves.
inline bool path_obstructed(Cell tx, Cell rx, const CityGrid& grid) {
    const std::int64_t ax = 2 * static_cast<std::int64_t>(tx.x), ay = 2 * static_cast<std::int64_t>(tx.y);
    const std::int64_t bx = 2 * static_cast<std::int64_t>(rx.x), by = 2 * static_cast<std::int64_t>(rx.y);
    for (std::int32_t j = std::min(tx.y, rx.y); j <= std::max(tx.y, rx.y); ++j) {
        for (std::int32_t i = std::min(tx.x, rx.x); i <= std::max(tx.x, rx.x); ++i) {
            const Cell c{i, j};
            if (c == tx || c == rx) continue;
            if (!grid.is_obstruction(c)) continue;
            if (detail::segment_touches_cell(ax, ay, bx, by, i, j)) return true;
        }
    }
    return false;
}

/// Class from distance alone (line of sight).
inline SignalStrength los_strength(double distance_m, const PropagationConfig& cfg) {
    const auto edges = cfg.band_edges_m();
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (distance_m <= edges[k]) return static_cast<SignalStrength>(kMaxStrength - k);
    return 0;
}

inline SignalStrength strength(Cell tx, Cell rx, const CityGrid& grid, const PropagationConfig& cfg) {
    if (!grid.contains(tx) || !grid.contains(rx)) throw BoundsError("propagation endpoint outside grid");
    if (tx == rx) return kMaxStrength;
    const double d = distance(grid.center_of(tx), grid.center_of(rx));
    const int los = los_strength(d, cfg);
    if (los == 0) return 0;
    if (cfg.nlos_penalty > 0 && path_obstructed(tx, rx, grid))
        return static_cast<SignalStrength>(std::max(0, los - cfg.nlos_penalty));
    return static_cast<SignalStrength>(los);
}

inline int strength_to_rssi_center(SignalStrength s) {
    if (s < 1 || s > kMaxStrength) throw ValidationError("strength class must be in [1, 5]");
    return 10 * s;
}

/// Linear decile binning: class k for r in ((k-1)*10, k*10].
inline SignalStrength rssi_to_strength(Rssi r) { return static_cast<SignalStrength>((r.value() + 9) / 10); }

inline SignalStrength rssi_to_strength(int r) { return rssi_to_strength(Rssi(r)); }

/// Noisy RSSI reading of a beacon received at class `s`.
template <typename Rng>
Rssi sample_rssi(SignalStrength s, double noise_sd, Rng& rng) {
    if (s < 1) throw NoBeaconError("cannot sample a beacon at strength 0");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ValidationError("noise_sd must be >= 0");
    double value = strength_to_rssi_center(s);
    if (noise_sd > 0.0) value += std::normal_distribution<double>(0.0, noise_sd)(rng);
    const long rounded = std::lround(value);
    return Rssi(static_cast<int>(std::clamp<long>(rounded, kRssiMin, kRssiMax)));
}

/// Precomputed strengths between every pair of usable cells within range.
/// Strength is symmetric, so one table serves transmit and receive.
class PropagationTable {
public:
    struct Link {
        std::int32_t cell;  ///< usable index
        SignalStrength strength;
    };

    PropagationTable(const CityGrid& grid, const PropagationConfig& cfg) {
        cfg.validate();
        const auto& cells = grid.usable_cells();
        links_.resize(cells.size());
        const int reach = static_cast<int>(std::ceil(cfg.max_range_m() / grid.cell_size_m()));
        for (std::size_t t = 0; t < cells.size(); ++t) {
            const Cell tx = cells[t];
            for (int dy = -reach; dy <= reach; ++dy) {
                for (int dx = -reach; dx <= reach; ++dx) {
                    const Cell rx{tx.x + dx, tx.y + dy};
                    const auto r = grid.usable_index(rx);
                    if (r < 0) continue;
                    const auto s = strength(tx, rx, grid, cfg);
                    if (s >= 1) links_[t].push_back(Link{r, s});
                }
            }
            std::sort(links_[t].begin(), links_[t].end(),
                      [](const Link& a, const Link& b) { return a.cell < b.cell; });
        }
    }

    /// Usable cells reachable (strength >= 1) from usable cell `from`.
    const std::vector<Link>& links(std::int32_t from) const { return links_.at(static_cast<std::size_t>(from)); }

    SignalStrength between(std::int32_t a, std::int32_t b) const {
        const auto& l = links(a);
        const auto it = std::lower_bound(l.begin(), l.end(), b,
                                         [](const Link& x, std::int32_t v) { return x.cell < v; });
        return (it != l.end() && it->cell == b) ? it->strength : SignalStrength{0};
    }

    std::size_t size() const noexcept { return links_.size(); }

private:
    std::vector<std::vector<Link>> links_;
};

}  // namespace parkrsu
