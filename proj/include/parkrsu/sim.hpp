#pragma once

// Discrete-time simulation of a self-organizing network of parked cars.
//
// Each 1 s tick: departures, forced tau_M revocations, arrivals, movement and
// CAM beaconing, parking, learning completion, at most one decision, metrics.
// Parked cars only learn about each other through Messages delivered by the
// NetworkBus; the bus is the sole place where radio reachability is checked.

#include <parkrsu/decision.hpp>
#include <parkrsu/error.hpp>
#include <parkrsu/grid.hpp>
#include <parkrsu/maps.hpp>
#include <parkrsu/radio.hpp>
#include <parkrsu/traffic.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace parkrsu {

/// Independent generator seed for one named stream of a run.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

inline constexpr std::uint64_t kBoundsStream = 5;

enum class DecisionMode { weighted_product, always_join };

struct SimulationConfig {
    std::shared_ptr<const CityGrid> grid;
    PropagationConfig radio;
    double noise_sd = 3.0;
    int cams_per_tick = 10;
    std::uint64_t min_samples = kDefaultMinSamples;
    ParkingModel parking;
    ScoringWeights weights;
    BatteryPolicy battery;
    bool enforce_tau_max = true;
    DecisionMode mode = DecisionMode::weighted_product;
    double t_learn_s = 60.0;
    std::int64_t duration_s = 7200;
    std::uint64_t seed = 1;
    std::shared_ptr<const std::vector<TraceRecord>> trace;

    void validate() const {
        if (!grid) throw ConfigError("grid: no city configured");
        radio.validate();
        parking.validate();
        weights.validate();
        battery.validate();
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("radio.noise_sd must be >= 0");
        if (cams_per_tick < 0) throw ConfigError("radio.cams_per_tick must be >= 0");
        if (!(t_learn_s >= 0.0) || !std::isfinite(t_learn_s)) throw ConfigError("decision.t_learn_s must be >= 0");
        if (duration_s < 0) throw ConfigError("sim.duration_s must be >= 0");
        if (trace && !std::is_sorted(trace->begin(), trace->end(),
                                     [](const TraceRecord& a, const TraceRecord& b) { return a.time_s < b.time_s; }))
            throw ConfigError("traffic.trace_file must be sorted by time");
    }
};

// ---------------------------------------------------------------------------
// Messages

enum class MessageKind { cam, map_request, map_response, role_assign, role_revoke };
inline constexpr std::size_t kMessageKinds = 5;

struct CamPayload {
    Point position;
};

struct MapRequestPayload {
    bool forward = true;  ///< ask responders to include their own neighbors' maps
};

struct ForwardedMap {
    EntityId owner = 0;
    CoverageMap scm;
};

struct MapResponsePayload {
    CoverageMap scm;
    double battery = 1.0;
    std::vector<ForwardedMap> forwarded;
};

struct RolePayload {
    EntityId target = 0;
};

struct Message {
    MessageKind kind = MessageKind::cam;
    EntityId src = 0;
    std::optional<EntityId> dst;  ///< absent for broadcast
    std::variant<CamPayload, MapRequestPayload, MapResponsePayload, RolePayload> payload;
};

struct MetricsSample {
    double t = 0.0;
    std::size_t active_rsus = 0;
    double coverage_pct = 0.0;  ///< fraction of usable cells, 0..1
    double mean_signal = 0.0;
    double mean_saturation = 0.0;
    double area_per_rsu_m2 = 0.0;

    friend bool operator==(const MetricsSample&, const MetricsSample&) = default;
};

enum class RevocationCause { decision, forced_tau_M, departure };

inline const char* to_string(RevocationCause c) {
    switch (c) {
        case RevocationCause::decision: return "decision";
        case RevocationCause::forced_tau_M: return "forced_tau_M";
        case RevocationCause::departure: return "departure";
    }
    return "?";
}

struct RsuLifetimeRecord {
    EntityId id = 0;
    double assigned_at = 0.0;
    double revoked_at = 0.0;
    RevocationCause cause = RevocationCause::decision;

    double lifetime() const noexcept { return revoked_at - assigned_at; }
};

struct TimedCommand {
    double time_s = 0.0;
    RoleCommand command;
};

struct RunCounters {
    std::uint64_t spawned = 0;
    std::uint64_t parking_events = 0;
    std::uint64_t departures = 0;
    std::uint64_t exits = 0;
    std::uint64_t decisions = 0;
    std::uint64_t assignments = 0;
    std::uint64_t beacons = 0;
    std::array<std::uint64_t, kMessageKinds> messages{};
};

struct RunResult {
    std::vector<MetricsSample> metrics;
    std::vector<RsuLifetimeRecord> lifetimes;
    std::vector<TimedCommand> commands;
    RunCounters counters;
};

/// Per-cell count of covering RSUs per strength class, maintained as roles
/// change. Coverage is the physical propagation table, not learned maps.
class CoverageTracker {
public:
    CoverageTracker(const CityGrid& grid, std::shared_ptr<const PropagationTable> table)
        : grid_(&grid), table_(std::move(table)), counts_(grid.usable_count()) {}

    void add(std::int32_t tx) { apply(tx, +1); }
    void remove(std::int32_t tx) { apply(tx, -1); }

    std::size_t active() const noexcept { return active_; }

    MetricsSample sample(double t) const {
        MetricsSample m;
        m.t = t;
        m.active_rsus = active_;
        std::size_t covered = 0;
        double signal = 0.0, saturation = 0.0;
        for (const auto& c : counts_) {
            int total = 0, best = 0;
            for (int s = 1; s <= kMaxStrength; ++s) {
                total += c[s];
                if (c[s] > 0) best = s;
            }
            if (total == 0) continue;
            ++covered;
            signal += best;
            saturation += total;
        }
        if (covered > 0) {
            m.coverage_pct = static_cast<double>(covered) / static_cast<double>(counts_.size());
            m.mean_signal = signal / static_cast<double>(covered);
            m.mean_saturation = saturation / static_cast<double>(covered);
        }
        if (active_ > 0) m.area_per_rsu_m2 = static_cast<double>(covered) * grid_->cell_area_m2() / static_cast<double>(active_);
        return m;
    }

private:
    void apply(std::int32_t tx, int delta) {
        for (const auto& link : table_->links(tx)) counts_[static_cast<std::size_t>(link.cell)][link.strength] += delta;
        active_ = static_cast<std::size_t>(static_cast<long>(active_) + delta);
    }

    const CityGrid* grid_;
    std::shared_ptr<const PropagationTable> table_;
    std::vector<std::array<int, kMaxStrength + 1>> counts_;
    std::size_t active_ = 0;
};

struct ParkedCar {
    EntityId id = 0;
    Cell cell;
    std::int32_t usable = -1;
    double parked_at = 0.0;
    double duration_s = 0.0;
    Role role = Role::parked_silent;
    double rsu_since = 0.0;
    bool learning = true;
    double learn_until = 0.0;
    MapBuilder learner;
    CoverageMap scm;
};

/// Counts messages and answers the physical question of who hears whom.
class NetworkBus {
public:
    explicit NetworkBus(std::shared_ptr<const PropagationTable> table) : table_(std::move(table)) {}

    bool reachable(std::int32_t a, std::int32_t b) const { return table_->between(a, b) >= 1; }
    const PropagationTable& table() const noexcept { return *table_; }

    void count(const Message& m) { ++counts_[static_cast<std::size_t>(m.kind)]; }
    const std::array<std::uint64_t, kMessageKinds>& counts() const noexcept { return counts_; }

private:
    std::shared_ptr<const PropagationTable> table_;
    std::array<std::uint64_t, kMessageKinds> counts_{};
};

class Simulation {
public:
    explicit Simulation(SimulationConfig cfg)
        : cfg_(std::move(cfg)),
          table_((cfg_.validate(), std::make_shared<PropagationTable>(*cfg_.grid, cfg_.radio))),
          bus_(table_),
          tracker_(*cfg_.grid, table_),
          traffic_(*cfg_.grid, cfg_.parking, stream_seed(1)),
          mobility_rng_(stream_seed(2)),
          radio_rng_(stream_seed(3)),
          parking_rng_(stream_seed(4)),
          listeners_(cfg_.grid->usable_count()),
          rsus_by_cell_(cfg_.grid->usable_count()) {
        if (cfg_.trace) {
            for (const auto& r : *cfg_.trace) {
                (void)cfg_.grid->cell_of(r.position);
                trace_last_[r.vehicle] = std::max(trace_last_[r.vehicle], r.time_s);
            }
        }
    }

    const SimulationConfig& config() const noexcept { return cfg_; }
    const CityGrid& grid() const noexcept { return *cfg_.grid; }
    const PropagationTable& table() const noexcept { return *table_; }
    double now() const noexcept { return static_cast<double>(tick_); }
    const RunResult& result() const noexcept { return result_; }

    RunResult run() {
        while (tick_ < cfg_.duration_s) step();
        result_.counters.messages = bus_.counts();
        return result_;
    }

    void step() {
        const double t = now();
        process_departures(t);
        if (cfg_.enforce_tau_max) process_forced_revocations(t);
        if (cfg_.trace) advance_trace(t);
        else advance_synthetic(t);
        complete_learning(t);
        run_one_decision(t);
        result_.metrics.push_back(tracker_.sample(t));
        ++tick_;
    }

    /// Metrics recomputed from scratch from the current set of active RSUs.
    MetricsSample recompute_metrics() const {
        CoverageTracker fresh(*cfg_.grid, table_);
        for (const auto& [id, car] : parked_)
            if (car.role == Role::parked_rsu) fresh.add(car.usable);
        return fresh.sample(tick_ > 0 ? now() - 1.0 : 0.0);
    }

    std::vector<EntityId> active_rsus() const {
        std::vector<EntityId> out;
        for (const auto& [id, car] : parked_)
            if (car.role == Role::parked_rsu) out.push_back(id);
        return out;
    }

    const std::map<EntityId, ParkedCar>& parked() const noexcept { return parked_; }
    const std::vector<Vehicle>& moving() const noexcept { return moving_; }

    /// Direct state access for fault-injection tests.
    std::map<EntityId, ParkedCar>& parked_for_testing() noexcept { return parked_; }

    /// Assembles the decision maker's candidate pool purely from the map
    /// responses its broadcast request receives.
    CandidatePool gather_pool(EntityId maker_id) {
        const ParkedCar& maker = parked_.at(maker_id);
        Message request{MessageKind::map_request, maker_id, std::nullopt, MapRequestPayload{true}};
        bus_.count(request);
        std::vector<Message> inbox;
        for (EntityId rid : broadcast_recipients(maker)) {
            inbox.push_back(handle_map_request(parked_.at(rid), request));
        }
        CandidatePool pool;
        pool.decision_maker = maker_id;
        pool.maker_scm = maker.scm;
        std::set<EntityId> direct;
        for (const auto& m : inbox) direct.insert(m.src);
        std::map<EntityId, CoverageMap> second;
        for (auto& m : inbox) {
            bus_.count(m);
            auto& body = std::get<MapResponsePayload>(m.payload);
            pool.neighbors.push_back(NeighborRsu{m.src, std::move(body.scm), body.battery});
            for (auto& f : body.forwarded)
                if (f.owner != maker_id && !direct.contains(f.owner)) second.emplace(f.owner, std::move(f.scm));
        }
        for (auto& [id, scm] : second) pool.second_hop.push_back(std::move(scm));
        return pool;
    }

private:
    std::uint64_t stream_seed(std::uint64_t stream) const { return derive_stream_seed(cfg_.seed, stream); }

    // Active RSUs that hear a broadcast from `from`, excluding itself.
    std::vector<EntityId> broadcast_recipients(const ParkedCar& from) const {
        std::vector<EntityId> out;
        for (const auto& link : table_->links(from.usable))
            for (EntityId id : rsus_by_cell_[static_cast<std::size_t>(link.cell)])
                if (id != from.id) out.push_back(id);
        std::sort(out.begin(), out.end());
        return out;
    }

    // Runs on the responding RSU; reads only its own state and what it is told.
    Message handle_map_request(const ParkedCar& self, const Message& request) {
        MapResponsePayload body;
        body.scm = self.scm;
        body.battery = battery_indicator(now() - self.rsu_since, cfg_.battery);
        if (std::get<MapRequestPayload>(request.payload).forward) {
            Message sub{MessageKind::map_request, self.id, std::nullopt, MapRequestPayload{false}};
            bus_.count(sub);
            for (EntityId rid : broadcast_recipients(self)) {
                if (rid == request.src) continue;
                Message reply = handle_map_request(parked_.at(rid), sub);
                bus_.count(reply);
                body.forwarded.push_back(ForwardedMap{reply.src, std::get<MapResponsePayload>(reply.payload).scm});
            }
        }
        return Message{MessageKind::map_response, self.id, request.src, std::move(body)};
    }

    void handle_role(ParkedCar& self, const Message& m, double t) {
        if (m.kind == MessageKind::role_assign) {
            if (self.role == Role::parked_rsu) return;
            self.role = Role::parked_rsu;
            self.rsu_since = t;
            tracker_.add(self.usable);
            rsus_by_cell_[static_cast<std::size_t>(self.usable)].push_back(self.id);
            ++result_.counters.assignments;
        } else if (m.kind == MessageKind::role_revoke) {
            revoke(self, t, RevocationCause::decision);
        }
    }

    void revoke(ParkedCar& car, double t, RevocationCause cause) {
        if (car.role != Role::parked_rsu) return;
        car.role = Role::parked_silent;
        tracker_.remove(car.usable);
        auto& ids = rsus_by_cell_[static_cast<std::size_t>(car.usable)];
        ids.erase(std::remove(ids.begin(), ids.end(), car.id), ids.end());
        result_.lifetimes.push_back(RsuLifetimeRecord{car.id, car.rsu_since, t, cause});
    }

    void stop_listening(ParkedCar& car) {
        if (!car.learning) return;
        car.learning = false;
        auto& ids = listeners_[static_cast<std::size_t>(car.usable)];
        ids.erase(std::remove(ids.begin(), ids.end(), car.id), ids.end());
    }

    void process_departures(double t) {
        for (auto it = parked_.begin(); it != parked_.end();) {
            ParkedCar& car = it->second;
            if (t >= car.parked_at + car.duration_s) {
                revoke(car, t, RevocationCause::departure);
                stop_listening(car);
                ++result_.counters.departures;
                it = parked_.erase(it);
            } else {
                ++it;
            }
        }
    }

    void process_forced_revocations(double t) {
        for (auto& [id, car] : parked_)
            if (car.role == Role::parked_rsu && t - car.rsu_since >= cfg_.battery.tau_M)
                revoke(car, t, RevocationCause::forced_tau_M);
    }

    void broadcast_cam(const Vehicle& v) {
        const Cell cell = v.cell(*cfg_.grid);
        const auto u = cfg_.grid->usable_index(cell);
        if (u < 0) return;
        bus_.count(Message{MessageKind::cam, v.id, std::nullopt, CamPayload{v.position}});
        for (const auto& link : table_->links(u)) {
            for (EntityId lid : listeners_[static_cast<std::size_t>(link.cell)]) {
                ParkedCar& listener = parked_.at(lid);
                for (int k = 0; k < cfg_.cams_per_tick; ++k) {
                    listener.learner.record_beacon(cell, sample_rssi(link.strength, cfg_.noise_sd, radio_rng_));
                    ++result_.counters.beacons;
                }
            }
        }
    }

    void park(const Vehicle& v, double t, double duration) {
        ParkedCar car;
        car.id = v.id;
        car.cell = v.cell(*cfg_.grid);
        car.usable = cfg_.grid->usable_index(car.cell);
        if (car.usable < 0) throw BoundsError("vehicle parked off-road");
        car.parked_at = t;
        car.duration_s = duration;
        car.learn_until = t + cfg_.t_learn_s;
        car.scm = CoverageMap(v.id);
        listeners_[static_cast<std::size_t>(car.usable)].push_back(car.id);
        parked_.emplace(car.id, std::move(car));
        ++result_.counters.parking_events;
    }

    void advance_synthetic(double t) {
        auto arrivals = traffic_.spawn(t, 1.0, next_id_);
        result_.counters.spawned += arrivals.size();
        for (auto& v : arrivals) moving_.push_back(std::move(v));

        std::vector<Vehicle> still_moving;
        still_moving.reserve(moving_.size());
        for (auto& v : moving_) {
            step_vehicle(v, *cfg_.grid, 1.0, mobility_rng_);
            broadcast_cam(v);
            if (maybe_exit(v, cfg_.parking, parking_rng_)) {
                ++result_.counters.exits;
                continue;
            }
            if (auto ev = maybe_park(v, cfg_.parking, t, parking_rng_)) {
                park(v, t, ev->duration_s);
                continue;
            }
            still_moving.push_back(std::move(v));
        }
        moving_ = std::move(still_moving);
    }

    void advance_trace(double t) {
        const auto& trace = *cfg_.trace;
        while (trace_pos_ < trace.size() && trace[trace_pos_].time_s < t + 1.0) {
            const auto& r = trace[trace_pos_++];
            if (r.time_s < t) continue;
            auto it = std::find_if(moving_.begin(), moving_.end(), [&](const Vehicle& v) { return v.id == r.vehicle; });
            if (it == moving_.end()) {
                if (parked_.contains(r.vehicle) || departed_trace_.contains(r.vehicle)) continue;
                Vehicle v;
                v.id = r.vehicle;
                v.entered_at = t;
                moving_.push_back(v);
                it = std::prev(moving_.end());
                ++result_.counters.spawned;
            }
            it->position = r.position;
        }
        std::vector<Vehicle> still_moving;
        for (auto& v : moving_) {
            broadcast_cam(v);
            if (trace_last_.at(v.id) < t + 1.0) {
                departed_trace_.insert(v.id);
                park(v, t, sample_parking_duration(cfg_.parking, t, parking_rng_));
                continue;
            }
            still_moving.push_back(std::move(v));
        }
        moving_ = std::move(still_moving);
    }

    void complete_learning(double t) {
        std::vector<std::pair<double, EntityId>> done;
        for (auto& [id, car] : parked_)
            if (car.learning && car.learn_until <= t) done.emplace_back(car.learn_until, id);
        std::sort(done.begin(), done.end());
        for (const auto& [until, id] : done) {
            ParkedCar& car = parked_.at(id);
            stop_listening(car);
            car.scm = finalize_scm(car.learner, cfg_.min_samples, id).scm;
            car.scm.set(car.cell, kMaxStrength);
            car.learner = MapBuilder{};
            queue_.push_back(id);
        }
    }

    void run_one_decision(double t) {
        while (!queue_.empty()) {
            const EntityId id = queue_.front();
            queue_.pop_front();
            auto it = parked_.find(id);
            if (it == parked_.end() || it->second.role != Role::parked_silent) continue;
            decide_for(it->second, t);
            return;
        }
    }

    void decide_for(ParkedCar& maker, double t) {
        ++result_.counters.decisions;
        std::vector<RoleCommand> commands;
        if (cfg_.mode == DecisionMode::always_join) {
            commands.push_back(RoleCommand{maker.id, RoleVerb::assign, maker.id});
        } else {
            commands = decide(gather_pool(maker.id), cfg_.weights).commands;
        }
        for (const auto& c : commands) {
            Message m{c.verb == RoleVerb::assign ? MessageKind::role_assign : MessageKind::role_revoke, maker.id,
                      c.target, RolePayload{c.target}};
            bus_.count(m);
            handle_role(parked_.at(c.target), m, t);
            result_.commands.push_back(TimedCommand{t, c});
        }
    }

    SimulationConfig cfg_;
    std::shared_ptr<const PropagationTable> table_;
    NetworkBus bus_;
    CoverageTracker tracker_;
    TrafficGenerator traffic_;
    std::mt19937_64 mobility_rng_;
    std::mt19937_64 radio_rng_;
    std::mt19937_64 parking_rng_;

    std::int64_t tick_ = 0;
    EntityId next_id_ = 1;
    std::vector<Vehicle> moving_;
    std::map<EntityId, ParkedCar> parked_;
    std::vector<std::vector<EntityId>> listeners_;
    std::vector<std::vector<EntityId>> rsus_by_cell_;
    std::deque<EntityId> queue_;
    RunResult result_;

    std::size_t trace_pos_ = 0;
    std::map<EntityId, double> trace_last_;
    std::set<EntityId> departed_trace_;
};

inline RunResult run(const SimulationConfig& cfg) { return Simulation(cfg).run(); }

// ---------------------------------------------------------------------------
// Steady-state summaries

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  ///< population standard deviation
};

inline MeanSd mean_sd(std::span<const double> xs) {
    if (xs.empty()) return {};
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return MeanSd{mean, std::sqrt(ss / n)};
}

struct SteadyStateSummary {
    std::size_t samples = 0;
    MeanSd active_rsus;
    MeanSd coverage_pct;
    MeanSd mean_signal;
    MeanSd mean_saturation;
    MeanSd area_per_rsu_m2;
};

/// Statistics over samples with t >= discard_s.
inline SteadyStateSummary steady_state_stats(std::span<const MetricsSample> series, double discard_s) {
    std::vector<double> rsus, cov, sig, sat, area;
    for (const auto& m : series) {
        if (m.t < discard_s) continue;
        rsus.push_back(static_cast<double>(m.active_rsus));
        cov.push_back(m.coverage_pct);
        sig.push_back(m.mean_signal);
        sat.push_back(m.mean_saturation);
        area.push_back(m.area_per_rsu_m2);
    }
    if (rsus.empty()) throw ValidationError("series has no samples after the discard window");
    SteadyStateSummary s;
    s.samples = rsus.size();
    s.active_rsus = mean_sd(rsus);
    s.coverage_pct = mean_sd(cov);
    s.mean_signal = mean_sd(sig);
    s.mean_saturation = mean_sd(sat);
    s.area_per_rsu_m2 = mean_sd(area);
    return s;
}

// ---------------------------------------------------------------------------
// Random-assignment bounds

struct BoundsSample {
    std::size_t active = 0;
    double mean_signal = 0.0;
    double mean_saturation = 0.0;
};

struct BoundsResult {
    std::vector<BoundsSample> samples;
    std::size_t skipped_empty = 0;
};

/// Parked cars on uniformly random usable cells.
template <typename Rng>
std::vector<std::int32_t> random_parked_population(const CityGrid& grid, std::size_t count, Rng& rng) {
    std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(grid.usable_count()) - 1);
    std::vector<std::int32_t> cells(count);
    for (auto& c : cells) c = pick(rng);
    return cells;
}

/// Citywide mean signal / saturation over covered cells when exactly the
/// given parked cars are RSUs. Returns nullopt when nothing is covered.
inline std::optional<BoundsSample> evaluate_assignment(const PropagationTable& table, std::span<const std::int32_t> rsu_cells,
                                                       std::vector<std::uint8_t>& best, std::vector<std::uint32_t>& count,
                                                       std::vector<std::int32_t>& touched) {
    touched.clear();
    for (std::int32_t tx : rsu_cells) {
        for (const auto& link : table.links(tx)) {
            const auto c = static_cast<std::size_t>(link.cell);
            if (count[c] == 0) touched.push_back(link.cell);
            ++count[c];
            best[c] = std::max(best[c], link.strength);
        }
    }
    if (touched.empty()) return std::nullopt;
    double sig = 0.0, sat = 0.0;
    for (std::int32_t c : touched) {
        sig += best[static_cast<std::size_t>(c)];
        sat += count[static_cast<std::size_t>(c)];
        best[static_cast<std::size_t>(c)] = 0;
        count[static_cast<std::size_t>(c)] = 0;
    }
    const double n = static_cast<double>(touched.size());
    return BoundsSample{rsu_cells.size(), sig / n, sat / n};
}

/// Each sample activates a uniformly random subset: cardinality uniform in
/// [0, N], then a uniform subset of that size. Empty subsets are skipped and
/// counted.
template <typename Rng>
BoundsResult random_assignment_bounds(const PropagationTable& table, std::span<const std::int32_t> population,
                                      std::size_t num_samples, Rng& rng) {
    if (population.empty()) throw ValidationError("random assignment needs a non-empty parked population");
    BoundsResult out;
    std::vector<std::int32_t> perm(population.begin(), population.end());
    std::vector<std::uint8_t> best(table.size(), 0);
    std::vector<std::uint32_t> count(table.size(), 0);
    std::vector<std::int32_t> touched;
    std::uniform_int_distribution<std::size_t> cardinality(0, perm.size());
    for (std::size_t s = 0; s < num_samples; ++s) {
        const std::size_t k = cardinality(rng);
        if (k == 0) {
            ++out.skipped_empty;
            continue;
        }
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, perm.size() - 1);
            std::swap(perm[i], perm[pick(rng)]);
        }
        if (auto r = evaluate_assignment(table, std::span<const std::int32_t>(perm.data(), k), best, count, touched))
            out.samples.push_back(*r);
        else
            ++out.skipped_empty;
    }
    return out;
}

struct EnvelopeBin {
    double signal_lo = 0.0;
    double signal_hi = 0.0;
    std::size_t count = 0;
    double sat_min = 0.0;
    double sat_max = 0.0;
};

inline std::int64_t envelope_bin_index(double mean_signal, double bin_width) {
    return static_cast<std::int64_t>(std::floor(mean_signal / bin_width));
}

/// Lower / upper mean_saturation per mean_signal bin of width `bin_width`.
inline std::map<std::int64_t, EnvelopeBin> saturation_envelope(std::span<const BoundsSample> samples, double bin_width) {
    if (!(bin_width > 0.0)) throw ValidationError("envelope bin width must be positive");
    std::map<std::int64_t, EnvelopeBin> bins;
    for (const auto& s : samples) {
        const auto k = envelope_bin_index(s.mean_signal, bin_width);
        auto [it, fresh] = bins.try_emplace(k);
        auto& b = it->second;
        if (fresh) {
            b.signal_lo = static_cast<double>(k) * bin_width;
            b.signal_hi = static_cast<double>(k + 1) * bin_width;
            b.sat_min = b.sat_max = s.mean_saturation;
        }
        ++b.count;
        b.sat_min = std::min(b.sat_min, s.mean_saturation);
        b.sat_max = std::max(b.sat_max, s.mean_saturation);
    }
    return bins;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_metrics_csv(std::ostream& out, std::span<const MetricsSample> series) {
    out << "t,active_rsus,coverage_pct,mean_signal,mean_saturation,area_per_rsu\n";
    for (const auto& m : series)
        out << detail::format_double(m.t) << ',' << m.active_rsus << ',' << detail::format_double(m.coverage_pct) << ','
            << detail::format_double(m.mean_signal) << ',' << detail::format_double(m.mean_saturation) << ','
            << detail::format_double(m.area_per_rsu_m2) << '\n';
}

inline void write_lifetimes_csv(std::ostream& out, std::span<const RsuLifetimeRecord> records) {
    out << "entity_id,assigned_at,revoked_at,cause\n";
    for (const auto& r : records)
        out << r.id << ',' << detail::format_double(r.assigned_at) << ',' << detail::format_double(r.revoked_at) << ','
            << to_string(r.cause) << '\n';
}

inline void write_commands_csv(std::ostream& out, std::span<const TimedCommand> commands) {
    out << "time_s,maker_id,verb,target_id\n";
    for (const auto& c : commands) write_role_command(out, c.time_s, c.command);
}

inline void write_bounds_csv(std::ostream& out, std::span<const BoundsSample> samples) {
    out << "active,mean_signal,mean_saturation\n";
    for (const auto& s : samples)
        out << s.active << ',' << detail::format_double(s.mean_signal) << ',' << detail::format_double(s.mean_saturation)
            << '\n';
}

inline void write_envelope_csv(std::ostream& out, const std::map<std::int64_t, EnvelopeBin>& bins) {
    out << "signal_lo,signal_hi,count,sat_min,sat_max\n";
    for (const auto& [k, b] : bins)
        out << detail::format_double(b.signal_lo) << ',' << detail::format_double(b.signal_hi) << ',' << b.count << ','
            << detail::format_double(b.sat_min) << ',' << detail::format_double(b.sat_max) << '\n';
}

}  // namespace parkrsu
