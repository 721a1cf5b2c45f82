#pragma once

// Self-observed coverage maps (SCM), the beacon accumulator that learns them,
// and the merged local coverage / saturation maps used by the decision kernel.

#include <parkrsu/detail/text.hpp>
#include <parkrsu/error.hpp>
#include <parkrsu/grid.hpp>
#include <parkrsu/radio.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace parkrsu {

using EntityId = std::uint32_t;

/// Sparse per-cell signal map observed by one entity. Absent cells have
/// strength 0 and are never stored.
class CoverageMap {
public:
    CoverageMap() = default;
    explicit CoverageMap(EntityId owner) : owner_(owner) {}
    CoverageMap(EntityId owner, std::initializer_list<std::pair<const Cell, SignalStrength>> cells)
        : owner_(owner) {
        for (const auto& [c, s] : cells) set(c, s);
    }

    EntityId owner() const noexcept { return owner_; }

    void set(Cell c, SignalStrength s) {
        if (s > kMaxStrength) throw ValidationError("strength above 5");
        if (s == 0) cells_.erase(c);
        else cells_[c] = s;
    }

    SignalStrength at(Cell c) const {
        const auto it = cells_.find(c);
        return it == cells_.end() ? SignalStrength{0} : it->second;
    }

    bool covers(Cell c) const { return cells_.contains(c); }
    std::size_t covered_count() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    auto begin() const { return cells_.begin(); }
    auto end() const { return cells_.end(); }

    friend bool operator==(const CoverageMap&, const CoverageMap&) = default;

private:
    EntityId owner_ = 0;
    std::map<Cell, SignalStrength> cells_;
};

inline constexpr std::size_t kRssiBins = 50;

struct CellStats {
    Cell cell;
    std::uint64_t count = 0;
    double mean_rssi = 0.0;
    double sd_rssi = 0.0;  ///< population standard deviation
    std::array<std::uint32_t, kRssiBins> histogram{};  ///< bin i holds RSSI i+1
    bool bimodal = false;

    friend bool operator==(const CellStats&, const CellStats&) = default;
};

/// Two separated modes: windowed (+-2) mass peaks at RSSI a and b with
/// b - a >= 15, each holding >= 25% of the samples, with a dip between.
inline bool histogram_is_bimodal(const std::array<std::uint32_t, kRssiBins>& h) {
    std::uint64_t total = 0;
    for (auto v : h) total += v;
    if (total == 0) return false;
    std::array<std::uint64_t, kRssiBins> window{};
    for (std::size_t i = 0; i < kRssiBins; ++i) {
        for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(kRssiBins - 1, i + 2); ++j) window[i] += h[j];
    }
    const auto heavy = [&](std::size_t i) { return 4 * window[i] >= total; };
    for (std::size_t a = 0; a < kRssiBins; ++a) {
        if (!heavy(a)) continue;
        for (std::size_t b = a + 15; b < kRssiBins; ++b) {
            if (!heavy(b)) continue;
            const auto floor = std::min(window[a], window[b]);
            for (std::size_t m = a + 1; m < b; ++m)
                if (window[m] < floor) return true;
        }
    }
    return false;
}

/// Accumulates beacon RSSI samples per cell. Integer sums make the final
/// statistics independent of sample order.
class MapBuilder {
public:
    void record_beacon(Cell cell, Rssi rssi) {
        auto& acc = cells_[cell];
        const auto r = static_cast<std::uint64_t>(rssi.value());
        ++acc.count;
        acc.sum += r;
        acc.sum_sq += r * r;
        ++acc.histogram[static_cast<std::size_t>(rssi.value() - 1)];
    }

    static SignalStrength quantize_mean(double mean_rssi) {
        const long r = std::clamp<long>(std::lround(mean_rssi), kRssiMin, kRssiMax);
        return rssi_to_strength(static_cast<int>(r));
    }

    std::size_t observed_cells() const noexcept { return cells_.size(); }
    std::uint64_t samples_at(Cell c) const {
        const auto it = cells_.find(c);
        return it == cells_.end() ? 0 : it->second.count;
    }

    /// Per-cell statistics, ordered by cell.
    std::vector<CellStats> stats() const {
        std::vector<CellStats> out;
        out.reserve(cells_.size());
        for (const auto& [cell, acc] : cells_) {
            CellStats s;
            s.cell = cell;
            s.count = acc.count;
            const double n = static_cast<double>(acc.count);
            s.mean_rssi = static_cast<double>(acc.sum) / n;
            // n*sum_sq - sum^2 is exact in integers.
            const auto num = acc.count * acc.sum_sq - acc.sum * acc.sum;
            s.sd_rssi = std::sqrt(static_cast<double>(num)) / n;
            s.histogram = acc.histogram;
            s.bimodal = histogram_is_bimodal(acc.histogram);
            out.push_back(s);
        }
        std::sort(out.begin(), out.end(), [](const CellStats& a, const CellStats& b) { return a.cell < b.cell; });
        return out;
    }

private:
    struct Accumulator {
        std::uint64_t count = 0;
        std::uint64_t sum = 0;
        std::uint64_t sum_sq = 0;
        std::array<std::uint32_t, kRssiBins> histogram{};
    };
    std::unordered_map<Cell, Accumulator> cells_;
};

inline constexpr std::uint64_t kDefaultMinSamples = 5;

struct InferredMap {
    CoverageMap scm;
    std::vector<CellStats> stats;
};

/// Mean-then-quantize: a cell with at least `min_samples` beacons gets
/// rssi_to_strength(round(mean)). Stats are returned for every observed cell.
inline InferredMap finalize_scm(const MapBuilder& builder, std::uint64_t min_samples = kDefaultMinSamples,
                                EntityId owner = 0) {
    InferredMap out{CoverageMap(owner), builder.stats()};
    for (const auto& s : out.stats) {
        if (s.count < min_samples) continue;
        out.scm.set(s.cell, MapBuilder::quantize_mean(s.mean_rssi));
    }
    return out;
}

struct LocalMaps {
    std::map<Cell, SignalStrength> lmc;  ///< best available strength
    std::map<Cell, int> lms;             ///< number of covering maps

    bool empty() const noexcept { return lmc.empty(); }
};

/// Per-cell max into lmc and contributor count into lms.
inline LocalMaps merge_local_maps(std::span<const CoverageMap* const> scms) {
    LocalMaps out;
    for (const CoverageMap* m : scms) {
        for (const auto& [cell, s] : *m) {
            auto& best = out.lmc[cell];
            if (s > best) best = s;
            ++out.lms[cell];
        }
    }
    return out;
}

inline LocalMaps merge_local_maps(std::span<const CoverageMap> scms) {
    std::vector<const CoverageMap*> ptrs;
    ptrs.reserve(scms.size());
    for (const auto& m : scms) ptrs.push_back(&m);
    return merge_local_maps(std::span<const CoverageMap* const>(ptrs));
}

// ---------------------------------------------------------------------------
// Text formats

struct BeaconRecord {
    double time_s = 0.0;
    EntityId tx_id = 0;
    Cell cell;
    Rssi rssi{kRssiMin};
};

/// One beacon per line: `time_s,tx_id,cell_x,cell_y,rssi`. Blank lines and
/// lines starting with '#' are skipped.
template <typename Sink>
void read_beacon_log(std::istream& in, Sink&& sink) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto f = detail::split(body, ',');
        if (f.size() != 5) throw ParseError(lineno, "expected time_s,tx_id,cell_x,cell_y,rssi");
        const auto t = detail::parse_double(f[0]);
        const auto id = detail::parse_number<EntityId>(f[1]);
        const auto x = detail::parse_number<std::int32_t>(f[2]);
        const auto y = detail::parse_number<std::int32_t>(f[3]);
        const auto r = detail::parse_number<int>(f[4]);
        if (!t || !id || !x || !y || !r) throw ParseError(lineno, "non-numeric field");
        if (*r < kRssiMin || *r > kRssiMax) throw ParseError(lineno, "rssi outside [1, 50]");
        sink(BeaconRecord{*t, *id, Cell{*x, *y}, Rssi(*r)});
    }
}

inline void write_beacon(std::ostream& out, const BeaconRecord& b) {
    out << detail::format_double(b.time_s) << ',' << b.tx_id << ',' << b.cell.x << ',' << b.cell.y << ','
        << b.rssi.value() << '\n';
}

inline void write_cell_stats_csv(std::ostream& out, std::span<const CellStats> stats) {
    out << "cell_x,cell_y,count,mean,sd,bimodal\n";
    for (const auto& s : stats) {
        out << s.cell.x << ',' << s.cell.y << ',' << s.count << ',' << detail::format_double(s.mean_rssi) << ','
            << detail::format_double(s.sd_rssi) << ',' << (s.bimodal ? 1 : 0) << '\n';
    }
}

inline void write_scm_csv(std::ostream& out, const CoverageMap& scm) {
    out << "cell_x,cell_y,strength\n";
    for (const auto& [c, s] : scm) out << c.x << ',' << c.y << ',' << int(s) << '\n';
}

}  // namespace parkrsu
