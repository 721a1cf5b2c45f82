#pragma once

// Local decision kernel run by a newly parked car.
//
// The decision maker and its 1-hop RSUs form the toggleable pool. Every
// coverage solution that revokes at most two roles is scored with a Weighted
// Product Model over four attributes (signal, saturation, coverage, battery)
// and the best one is turned into role commands.

#include <parkrsu/error.hpp>
#include <parkrsu/maps.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace parkrsu {

struct NeighborRsu {
    EntityId id = 0;
    CoverageMap scm;
    double battery = 1.0;  ///< indicator reported by the RSU itself
};

struct CandidatePool {
    EntityId decision_maker = 0;
    CoverageMap maker_scm;
    std::vector<NeighborRsu> neighbors;     ///< 1-hop active RSUs
    std::vector<CoverageMap> second_hop;    ///< context only, never toggled

    /// Number of toggleable entities.
    std::size_t size() const noexcept { return 1 + neighbors.size(); }

    void validate() const {
        std::set<EntityId> seen{decision_maker};
        for (const auto& n : neighbors) {
            if (!seen.insert(n.id).second)
                throw ValidationError("entity " + std::to_string(n.id) + " appears twice in the pool");
            if (!std::isfinite(n.battery) || n.battery < 0.0 || n.battery > 1.0)
                throw ValidationError("battery indicator outside [0, 1]");
        }
    }
};

struct Attributes {
    double sig = 0.0;
    double sat = 0.0;
    double cov = 0.0;
    double bat = 0.0;

    friend bool operator==(const Attributes&, const Attributes&) = default;
};

struct CoverageSolution {
    std::vector<EntityId> active;  ///< sorted ascending
    int revoked_count = 0;
    Attributes attrs;
    double score = 0.0;

    bool is_active(EntityId id) const { return std::binary_search(active.begin(), active.end(), id); }

    friend bool operator==(const CoverageSolution&, const CoverageSolution&) = default;
};

struct ScoringWeights {
    double w_sig = 1.0;
    double w_sat = 0.2;
    double w_cov = 0.0;
    double w_bat = 0.0;

    void validate() const {
        for (double w : {w_sig, w_sat, w_cov, w_bat})
            if (!std::isfinite(w) || w < 0.0) throw ConfigError("scoring weights must be finite and >= 0");
    }
};

struct BatteryPolicy {
    double tau_m = 1800.0;  ///< standard activity time, s
    double tau_M = 3600.0;  ///< maximum activity time, s

    void validate() const {
        if (!(tau_m > 0.0) || !(tau_M > tau_m) || !std::isfinite(tau_M))
            throw ConfigError("battery policy requires 0 < tau_m < tau_M");
    }
};

/// Linear battery indicator: 1 before tau_m, falling to 0 at tau_M.
inline double battery_indicator(double tau, const BatteryPolicy& policy) {
    if (tau < 0.0) throw ValidationError("active time must be >= 0");
    if (tau < policy.tau_m) return 1.0;
    return std::max(0.0, 1.0 - (tau - policy.tau_m) / (policy.tau_M - policy.tau_m));
}

/// All solutions revoking at most two roles, ordered by revoked set size and
/// then lexicographically by revoked ids. Attributes and scores are unset.
inline std::vector<CoverageSolution> enumerate_solutions(const CandidatePool& pool) {
    std::vector<EntityId> ids{pool.decision_maker};
    for (const auto& n : pool.neighbors) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    const std::size_t n = ids.size();

    const auto without = [&](std::initializer_list<std::size_t> drop) {
        CoverageSolution s;
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(drop.begin(), drop.end(), i) == drop.end()) s.active.push_back(ids[i]);
        s.revoked_count = static_cast<int>(drop.size());
        return s;
    };

    std::vector<CoverageSolution> out;
    out.reserve(1 + n + n * (n - 1) / 2);
    out.push_back(without({}));
    for (std::size_t i = 0; i < n; ++i) out.push_back(without({i}));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.push_back(without({i, j}));
    return out;
}

namespace detail {

inline std::vector<const CoverageMap*> solution_maps(const CoverageSolution& s, const CandidatePool& pool) {
    std::vector<const CoverageMap*> maps;
    if (s.is_active(pool.decision_maker)) maps.push_back(&pool.maker_scm);
    for (const auto& n : pool.neighbors)
        if (s.is_active(n.id)) maps.push_back(&n.scm);
    for (const auto& m : pool.second_hop) maps.push_back(&m);
    return maps;
}

struct RestrictedSums {
    double sig_sum = 0.0;
    double sat_sum = 0.0;
    std::size_t covered = 0;
};

// Sums of lmc / lms over cells the decision maker itself covers.
inline RestrictedSums restricted_sums(const LocalMaps& local, const CoverageMap& maker) {
    RestrictedSums r;
    for (const auto& [cell, s] : maker) {
        (void)s;
        const auto it = local.lmc.find(cell);
        if (it == local.lmc.end() || it->second == 0) continue;
        r.sig_sum += it->second;
        r.sat_sum += local.lms.at(cell);
        ++r.covered;
    }
    return r;
}

inline void require_maker_map(const CandidatePool& pool) {
    if (pool.maker_scm.empty())
        throw AttributeError("decision maker " + std::to_string(pool.decision_maker) + " has an empty coverage map");
}

inline std::size_t pool_union_size(const CandidatePool& pool) {
    std::set<Cell> cells;
    for (const auto& [c, s] : pool.maker_scm) cells.insert(c);
    for (const auto& n : pool.neighbors)
        for (const auto& [c, s] : n.scm) cells.insert(c);
    for (const auto& m : pool.second_hop)
        for (const auto& [c, s] : m) cells.insert(c);
    return cells.size();
}

}  // namespace detail

/// Mean best signal over the decision maker's cells. Cells without service in
/// the solution contribute 0 but still count in the denominator. When none of
/// those cells has service the attribute takes its minimal value 1.
inline double attr_sig(const CoverageSolution& s, const CandidatePool& pool) {
    detail::require_maker_map(pool);
    const auto local = merge_local_maps(std::span<const CoverageMap* const>(detail::solution_maps(s, pool)));
    const auto r = detail::restricted_sums(local, pool.maker_scm);
    if (r.covered == 0) return 1.0;
    return r.sig_sum / static_cast<double>(pool.maker_scm.covered_count());
}

/// Mean RSU count over the decision maker's cells, same restriction and
/// denominator as attr_sig.
inline double attr_sat(const CoverageSolution& s, const CandidatePool& pool) {
    detail::require_maker_map(pool);
    const auto local = merge_local_maps(std::span<const CoverageMap* const>(detail::solution_maps(s, pool)));
    const auto r = detail::restricted_sums(local, pool.maker_scm);
    if (r.covered == 0) return 1.0;
    return r.sat_sum / static_cast<double>(pool.maker_scm.covered_count());
}

/// Cells with service in the solution over cells with service when nothing
/// is revoked, counted over every map in the pool.
inline double attr_cov(const CoverageSolution& s, const CandidatePool& pool) {
    const auto widest = detail::pool_union_size(pool);
    if (widest == 0) throw AttributeError("no cell has service in the full solution");
    const auto local = merge_local_maps(std::span<const CoverageMap* const>(detail::solution_maps(s, pool)));
    return static_cast<double>(local.lmc.size()) / static_cast<double>(widest);
}

/// Mean battery indicator of the active entities. The decision maker has
/// just parked and reports 1.0; the empty solution scores 1.0.
inline double attr_bat(const CoverageSolution& s, const CandidatePool& pool) {
    if (s.active.empty()) return 1.0;
    double sum = 0.0;
    if (s.is_active(pool.decision_maker)) sum += 1.0;
    for (const auto& n : pool.neighbors)
        if (s.is_active(n.id)) sum += n.battery;
    return sum / static_cast<double>(s.active.size());
}

/// All four attributes with a single map merge.
inline Attributes compute_attributes(const CoverageSolution& s, const CandidatePool& pool) {
    detail::require_maker_map(pool);
    const auto widest = detail::pool_union_size(pool);
    if (widest == 0) throw AttributeError("no cell has service in the full solution");
    const auto local = merge_local_maps(std::span<const CoverageMap* const>(detail::solution_maps(s, pool)));
    const auto r = detail::restricted_sums(local, pool.maker_scm);
    const double denom = static_cast<double>(pool.maker_scm.covered_count());
    Attributes a;
    a.sig = r.covered == 0 ? 1.0 : r.sig_sum / denom;
    a.sat = r.covered == 0 ? 1.0 : r.sat_sum / denom;
    a.cov = static_cast<double>(local.lmc.size()) / static_cast<double>(widest);
    a.bat = attr_bat(s, pool);
    return a;
}

/// Weighted product. Saturation is a cost criterion and enters with a
/// negative exponent; x^0 is 1 for every x including 0.
inline double score(const Attributes& a, const ScoringWeights& w) {
    for (double v : {a.sig, a.sat, a.cov, a.bat})
        if (!std::isfinite(v)) throw ScoringError("non-finite attribute");
    if (a.sat <= 0.0 && w.w_sat > 0.0) throw ScoringError("saturation must be positive");
    const auto term = [](double base, double exponent) { return exponent == 0.0 ? 1.0 : std::pow(base, exponent); };
    const double result = term(a.sig, w.w_sig) * term(a.sat, -w.w_sat) * term(a.cov, w.w_cov) * term(a.bat, w.w_bat);
    if (!std::isfinite(result)) throw ScoringError("non-finite score");
    return result;
}

enum class RoleVerb { assign, revoke };

struct RoleCommand {
    EntityId maker = 0;
    RoleVerb verb = RoleVerb::assign;
    EntityId target = 0;

    friend bool operator==(const RoleCommand&, const RoleCommand&) = default;
};

inline const char* to_string(RoleVerb v) { return v == RoleVerb::assign ? "assign" : "revoke"; }

/// `time_s,maker_id,verb,target_id`
inline void write_role_command(std::ostream& out, double time_s, const RoleCommand& c) {
    out << detail::format_double(time_s) << ',' << c.maker << ',' << to_string(c.verb) << ',' << c.target << '\n';
}

struct Decision {
    CoverageSolution chosen;
    std::vector<RoleCommand> commands;
    std::vector<CoverageSolution> scored;  ///< every solution that could be scored
};

inline bool is_no_action(const CoverageSolution& s, const CandidatePool& pool) {
    return s.revoked_count == 1 && !s.is_active(pool.decision_maker);
}

/// Strict "a ranks above b": higher score, then more revocations, then the
/// no-action solution, then the lexicographically smaller active set.
inline bool ranks_above(const CoverageSolution& a, const CoverageSolution& b, const CandidatePool& pool) {
    if (a.score != b.score) return a.score > b.score;
    if (a.revoked_count != b.revoked_count) return a.revoked_count > b.revoked_count;
    const bool a_na = is_no_action(a, pool), b_na = is_no_action(b, pool);
    if (a_na != b_na) return a_na;
    return a.active < b.active;
}

inline CoverageSolution no_action_solution(const CandidatePool& pool) {
    CoverageSolution s;
    for (const auto& n : pool.neighbors) s.active.push_back(n.id);
    std::sort(s.active.begin(), s.active.end());
    s.revoked_count = 1;
    return s;
}

/// Scores every enumerated solution and turns the winner into commands.
/// Solutions whose attributes are undefined are skipped; if none can be
/// scored the network is left unchanged.
inline Decision decide(const CandidatePool& pool, const ScoringWeights& weights) {
    pool.validate();
    weights.validate();
    Decision d;
    for (auto& s : enumerate_solutions(pool)) {
        try {
            s.attrs = compute_attributes(s, pool);
            s.score = score(s.attrs, weights);
        } catch (const AttributeError&) {
            continue;
        } catch (const ScoringError&) {
            continue;
        }
        d.scored.push_back(std::move(s));
    }
    if (d.scored.empty()) {
        d.chosen = no_action_solution(pool);
        return d;
    }
    d.chosen = *std::min_element(d.scored.begin(), d.scored.end(),
                                 [&](const auto& a, const auto& b) { return ranks_above(a, b, pool); });
    if (d.chosen.is_active(pool.decision_maker))
        d.commands.push_back(RoleCommand{pool.decision_maker, RoleVerb::assign, pool.decision_maker});
    for (const auto& n : pool.neighbors)
        if (!d.chosen.is_active(n.id)) d.commands.push_back(RoleCommand{pool.decision_maker, RoleVerb::revoke, n.id});
    return d;
}

}  // namespace parkrsu
