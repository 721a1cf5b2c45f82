#pragma once

// Geodesic cell decomposition of the simulated city.
//
// Cells are squares of `cell_size_m` meters aligned to the grid origin. A cell
// is identified by integer indices that may be negative; planar positions are
// meters measured from the south-west corner of the grid.

#include <parkrsu/detail/text.hpp>
#include <parkrsu/error.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace parkrsu {

struct Cell {
    std::int32_t x = 0;
    std::int32_t y = 0;

    friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Cell& c) {
    return os << '(' << c.x << ',' << c.y << ')';
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline constexpr double kDefaultCellSizeM = 30.9;

enum class CellKind : std::uint8_t { open, road, building };

class CityGrid {
public:
    CityGrid(std::int32_t width, std::int32_t height, Cell origin, double cell_size_m,
             std::vector<CellKind> kinds)
        : width_(width), height_(height), origin_(origin), cell_size_m_(cell_size_m),
          kinds_(std::move(kinds)) {
        if (width_ < 1 || height_ < 1) throw ConfigError("grid dimensions must be positive");
        if (!(cell_size_m_ > 0.0) || !std::isfinite(cell_size_m_))
            throw ConfigError("cell_size_m must be positive");
        if (kinds_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_))
            throw ConfigError("cell mask size does not match grid dimensions");
        usable_index_.assign(kinds_.size(), -1);
        for (std::size_t i = 0; i < kinds_.size(); ++i) {
            if (kinds_[i] == CellKind::road) {
                usable_index_[i] = static_cast<std::int32_t>(usable_cells_.size());
                usable_cells_.push_back(cell_at(i));
            }
        }
        if (usable_cells_.empty()) throw ConfigError("grid has no usable cells");
    }

    std::int32_t width() const noexcept { return width_; }
    std::int32_t height() const noexcept { return height_; }
    Cell origin() const noexcept { return origin_; }
    double cell_size_m() const noexcept { return cell_size_m_; }
    double cell_area_m2() const noexcept { return cell_size_m_ * cell_size_m_; }

    bool contains(Cell c) const noexcept {
        return c.x >= origin_.x && c.y >= origin_.y && c.x < origin_.x + width_ &&
               c.y < origin_.y + height_;
    }

    std::size_t index(Cell c) const {
        if (!contains(c)) throw BoundsError("cell outside grid");
        return static_cast<std::size_t>(c.y - origin_.y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(c.x - origin_.x);
    }

    Cell cell_at(std::size_t idx) const {
        return Cell{origin_.x + static_cast<std::int32_t>(idx % static_cast<std::size_t>(width_)),
                    origin_.y + static_cast<std::int32_t>(idx / static_cast<std::size_t>(width_))};
    }

    CellKind kind(Cell c) const { return kinds_[index(c)]; }
    bool is_usable(Cell c) const noexcept { return contains(c) && kinds_[index(c)] == CellKind::road; }
    bool is_obstruction(Cell c) const noexcept {
        return contains(c) && kinds_[index(c)] == CellKind::building;
    }

    /// Dense 0-based index among usable cells, or -1.
    std::int32_t usable_index(Cell c) const noexcept {
        return contains(c) ? usable_index_[index(c)] : -1;
    }
    const std::vector<Cell>& usable_cells() const noexcept { return usable_cells_; }
    std::size_t usable_count() const noexcept { return usable_cells_.size(); }
    std::size_t cell_count() const noexcept { return kinds_.size(); }

    double width_m() const noexcept { return width_ * cell_size_m_; }
    double height_m() const noexcept { return height_ * cell_size_m_; }

    Point center_of(Cell c) const {
        if (!contains(c)) throw BoundsError("cell outside grid");
        return Point{(c.x - origin_.x + 0.5) * cell_size_m_, (c.y - origin_.y + 0.5) * cell_size_m_};
    }

    /// Cell whose half-open square [k*size, (k+1)*size) holds the position.
    Cell cell_of(Point p) const {
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw BoundsError("non-finite position");
        const double fx = std::floor(p.x / cell_size_m_);
        const double fy = std::floor(p.y / cell_size_m_);
        if (fx < 0 || fy < 0 || fx >= width_ || fy >= height_)
            throw BoundsError("position (" + detail::format_double(p.x) + ", " +
                              detail::format_double(p.y) + ") outside grid");
        return Cell{origin_.x + static_cast<std::int32_t>(fx), origin_.y + static_cast<std::int32_t>(fy)};
    }

    friend bool operator==(const CityGrid& a, const CityGrid& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.origin_ == b.origin_ &&
               a.cell_size_m_ == b.cell_size_m_ && a.kinds_ == b.kinds_;
    }

private:
    std::int32_t width_;
    std::int32_t height_;
    Cell origin_;
    double cell_size_m_;
    std::vector<CellKind> kinds_;
    std::vector<std::int32_t> usable_index_;
    std::vector<Cell> usable_cells_;
};

inline Cell cell_of(Point position, const CityGrid& grid) { return grid.cell_of(position); }

/// Orthogonal road corridors of `road_width_cells` around square building
/// blocks of `block_size_cells`. The layout starts and ends with a road.
inline CityGrid build_manhattan_city(int blocks_x, int blocks_y, int road_width_cells,
                                     int block_size_cells, double cell_size_m = kDefaultCellSizeM) {
    if (blocks_x < 1 || blocks_y < 1 || road_width_cells < 1 || block_size_cells < 1)
        throw ConfigError("manhattan city parameters must be >= 1");
    const int period = road_width_cells + block_size_cells;
    const int w = blocks_x * period + road_width_cells;
    const int h = blocks_y * period + road_width_cells;
    std::vector<CellKind> kinds(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool road = (x % period) < road_width_cells || (y % period) < road_width_cells;
            kinds[static_cast<std::size_t>(y) * w + x] = road ? CellKind::road : CellKind::building;
        }
    }
    return CityGrid(w, h, Cell{0, 0}, cell_size_m, std::move(kinds));
}

/// Reads `x,y,flag` lines (flag road|building). Unlisted cells inside the
/// bounding box are open ground: neither usable nor obstructing.
inline CityGrid read_city(std::istream& in, double cell_size_m = kDefaultCellSizeM) {
    struct Entry {
        Cell cell;
        CellKind kind;
    };
    std::vector<Entry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = detail::split(body, ',');
        if (fields.size() != 3) throw ParseError(lineno, "expected x,y,flag");
        const auto x = detail::parse_number<std::int32_t>(fields[0]);
        const auto y = detail::parse_number<std::int32_t>(fields[1]);
        if (!x || !y) throw ParseError(lineno, "bad cell coordinate");
        CellKind kind;
        if (fields[2] == "road") kind = CellKind::road;
        else if (fields[2] == "building") kind = CellKind::building;
        else throw ParseError(lineno, "flag must be road or building");
        entries.push_back({Cell{*x, *y}, kind});
    }
    if (entries.empty()) throw ConfigError("city file lists no cells");
    Cell lo = entries.front().cell;
    Cell hi = lo;
    for (const auto& e : entries) {
        lo.x = std::min(lo.x, e.cell.x);
        lo.y = std::min(lo.y, e.cell.y);
        hi.x = std::max(hi.x, e.cell.x);
        hi.y = std::max(hi.y, e.cell.y);
    }
    const std::int32_t w = hi.x - lo.x + 1;
    const std::int32_t h = hi.y - lo.y + 1;
    std::vector<CellKind> kinds(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), CellKind::open);
    for (const auto& e : entries)
        kinds[static_cast<std::size_t>(e.cell.y - lo.y) * w + (e.cell.x - lo.x)] = e.kind;
    return CityGrid(w, h, lo, cell_size_m, std::move(kinds));
}

inline void write_city(std::ostream& out, const CityGrid& grid) {
    for (std::size_t i = 0; i < grid.cell_count(); ++i) {
        const Cell c = grid.cell_at(i);
        const CellKind k = grid.kind(c);
        if (k == CellKind::open) continue;
        out << c.x << ',' << c.y << ',' << (k == CellKind::road ? "road" : "building") << '\n';
    }
}

}  // namespace parkrsu

template <>
struct std::hash<parkrsu::Cell> {
    std::size_t operator()(const parkrsu::Cell& c) const noexcept {
        const auto ux = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x));
        const auto uy = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y));
        return std::hash<std::uint64_t>{}((ux << 32) | uy);
    }
};
