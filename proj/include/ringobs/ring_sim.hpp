#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/rng.hpp"

namespace ringobs {

// Krauss car-following parameters. Vehicles drive as fast as possible subject
// to a collision-avoiding safe speed; imperfection adds a random slowdown.
struct KraussParams {
    double v_max = 15.0;          // m/s
    double accel = 1.5;           // m/s^2
    double decel = 3.0;           // m/s^2
    double reaction_time = 1.0;   // s
    double imperfection = 0.3;    // in [0,1]
    double min_gap = 2.0;         // m
    double vehicle_length = 5.5;  // m
    double dt_micro = 0.5;        // s

    // Space one vehicle occupies at the jam density; makes rho = 1 the
    // bumper-to-bumper (min-gap) packing.
    double footprint() const { return vehicle_length + min_gap; }

    void validate() const {
        if (v_max <= 0 || accel <= 0 || decel <= 0 || reaction_time <= 0 ||
            vehicle_length <= 0 || dt_micro <= 0 || min_gap < 0)
            throw config_error("KraussParams: all parameters must be positive (min_gap >= 0)");
        if (imperfection < 0 || imperfection > 1)
            throw config_error("KraussParams: imperfection must be in [0,1]");
        if (dt_micro > reaction_time)
            throw config_error("KraussParams: dt_micro must not exceed reaction_time");
    }
};

// Positions/velocities of all vehicles on the ring at one microscopic step.
// Index order is circular driving order: vehicle i follows vehicle (i+1) % N.
struct MicroState {
    std::vector<double> positions;   // meters in [0, L)
    std::vector<double> velocities;  // m/s
    double vehicle_length = 5.5;
    double ring_length = 0.0;
    double time = 0.0;

    int count() const { return static_cast<int>(positions.size()); }

    // Front-to-rear-bumper gap ahead of vehicle i (>= 0 when collision-free).
    double gap_ahead(int i) const {
        int n = count();
        if (n == 1) return ring_length - vehicle_length;
        double lead = positions[(i + 1) % n];
        double d = lead - positions[i];
        if (d <= 0) d += ring_length;
        return d - vehicle_length;
    }
};

// One simulation scenario: density target, horizon, grid and sensor layout.
struct ScenarioConfig {
    double target_mean_density = 0.5;
    uint64_t seed = 0;
    int warmup_steps = 300;   // micro steps after the last insertion
    int record_steps = 600;   // recorded macroscopic steps
    double dt_record = 1.0;   // s between recorded fields
    int grid_cells = 64;
    std::vector<int> sensor_cells;
    double kernel_bandwidth = 25.0;  // m
    double noise_sigma = 0.0;        // measurement noise std
    bool ood = false;
    double ring_length = 3200.0;  // m
    KraussParams params;

    Grid grid() const { return Grid{grid_cells, ring_length / grid_cells}; }

    void validate() const {
        params.validate();
        if (target_mean_density < 0 || target_mean_density > 1)
            throw config_error("ScenarioConfig: target_mean_density must be in [0,1]");
        if (grid_cells <= 0) throw config_error("ScenarioConfig: grid_cells must be positive");
        if (ring_length <= 0) throw config_error("ScenarioConfig: ring_length must be positive");
        if (record_steps < 0 || warmup_steps < 0)
            throw config_error("ScenarioConfig: step counts must be non-negative");
        if (kernel_bandwidth <= 0)
            throw config_error("ScenarioConfig: kernel_bandwidth must be positive");
        if (noise_sigma < 0) throw config_error("ScenarioConfig: noise_sigma must be >= 0");
        double ratio = dt_record / params.dt_micro;
        if (dt_record <= 0 || std::fabs(ratio - std::round(ratio)) > 1e-9)
            throw config_error("ScenarioConfig: dt_record must be a multiple of dt_micro");
        std::vector<int> seen;
        for (int c : sensor_cells) {
            if (c < 0 || c >= grid_cells)
                throw config_error("ScenarioConfig: sensor cell " + std::to_string(c) +
                                   " outside grid [0," + std::to_string(grid_cells) + ")");
            if (std::find(seen.begin(), seen.end(), c) != seen.end())
                throw config_error("ScenarioConfig: duplicate sensor cell " + std::to_string(c));
            seen.push_back(c);
        }
    }
};

// Sparse time-indexed readings at fixed sensor cells.
struct SensorRecord {
    std::vector<int> sensor_cells;
    std::vector<std::vector<double>> readings;  // readings[step][sensor]
    double noise_sigma = 0.0;
    uint64_t seed = 0;

    int steps() const { return static_cast<int>(readings.size()); }
    bool has_step(long s) const { return s >= 0 && s < static_cast<long>(readings.size()); }
};

inline std::vector<int> equidistant_sensors(int grid_cells, int count) {
    std::vector<int> cells(count);
    for (int i = 0; i < count; ++i)
        cells[i] = static_cast<int>(std::lround(static_cast<double>(i) * grid_cells / count)) %
                   grid_cells;
    return cells;
}

// OOD parameter perturbation: sloppier drivers, weaker brakes; empirically
// raises the stop-and-go jam frequency.
inline KraussParams make_ood_params(const KraussParams& p) {
    KraussParams q = p;
    q.imperfection = std::min(1.0, 2.0 * p.imperfection);
    q.decel = 0.7 * p.decel;
    return q;
}

// Krauss update, synchronous over all vehicles. Deterministic given rng_seed.
//
// Each driver plans a target speed from the stopping-distance rule
// v_safe*tau + v_safe^2/(2b) <= gap + v_lead^2/(2b), then adapts toward that
// target with a relaxation time of 2*tau, bounded by the comfortable rates a
// and b.  The sluggish adaptation makes dense flow string-unstable, so the
// dawdle perturbations grow into stop-and-go waves instead of damping out.
// Collision-freedom does not rest on the plan: a hard per-step bound
// gap/dt_micro (leader treated as stationary) caps every new speed, which
// keeps all gaps >= min(gap, min_gap) no matter what the relaxed plan asks.
inline MicroState step_krauss(const MicroState& state, const KraussParams& p, uint64_t rng_seed) {
    Rng rng(rng_seed);
    const int n = state.count();
    MicroState out = state;
    out.time = state.time + p.dt_micro;
    for (int i = 0; i < n; ++i) {
        double v = state.velocities[i];
        double v_lead = n == 1 ? v : state.velocities[(i + 1) % n];
        double gap = std::max(0.0, state.gap_ahead(i) - p.min_gap);
        double bt = p.decel * p.reaction_time;
        double v_safe = -bt + std::sqrt(bt * bt + v_lead * v_lead + 2.0 * p.decel * gap);
        double v_target = std::min(p.v_max, v_safe);
        double dv = (v_target - v) * p.dt_micro / (2.0 * p.reaction_time);
        dv = std::clamp(dv, -p.decel * p.dt_micro, p.accel * p.dt_micro);
        double v_des = std::min(v + dv, gap / p.dt_micro);
        double v_new = std::max(0.0, v_des - p.imperfection * p.accel * p.dt_micro * rng.uniform());
        out.velocities[i] = v_new;
        out.positions[i] = wrap_position(state.positions[i] + v_new * p.dt_micro, state.ring_length);
    }
    for (int i = 0; i < n; ++i) {
        if (out.gap_ahead(i) < -1e-9)
            throw numeric_error("step_krauss: collision at vehicle " + std::to_string(i));
    }
    return out;
}

namespace detail {

inline int widest_gap(const MicroState& state, double* gap_out = nullptr) {
    int widest = 0;
    double best = -1.0;
    for (int i = 0; i < state.count(); ++i) {
        double g = state.gap_ahead(i);
        if (g > best) {
            best = g;
            widest = i;
        }
    }
    if (gap_out) *gap_out = best;
    return widest;
}

// Insert a vehicle at the center of the widest gap's free space, speed-matched
// to the gap's leader so the merge does not force an emergency stop behind it.
inline void insert_vehicle(MicroState& state, const KraussParams& p) {
    const int n = state.count();
    if (n == 0) {
        state.positions.push_back(0.0);
        state.velocities.push_back(0.5 * p.v_max);
        return;
    }
    double best = 0.0;
    int widest = widest_gap(state, &best);
    double margin = 0.5 * (best - p.vehicle_length);
    double x = wrap_position(state.positions[widest] + p.vehicle_length + margin,
                             state.ring_length);
    double v_lead = state.velocities[(widest + 1) % n];
    double bt = p.decel * p.reaction_time;
    double g_eff = std::max(0.0, margin - p.min_gap);
    double v_safe = -bt + std::sqrt(bt * bt + v_lead * v_lead + 2.0 * p.decel * g_eff);
    double v = std::max(0.0, std::min(v_lead, v_safe));
    state.positions.insert(state.positions.begin() + widest + 1, x);
    state.velocities.insert(state.velocities.begin() + widest + 1, v);
}

// Equally spaced standstill layout; the collision-free configuration any
// feasible count admits. Used when merging traffic cannot open a gap.
inline MicroState packed_ring(long count, const KraussParams& p, double ring_length) {
    MicroState state;
    state.vehicle_length = p.vehicle_length;
    state.ring_length = ring_length;
    state.positions.resize(count);
    state.velocities.assign(count, 0.0);
    for (long i = 0; i < count; ++i) state.positions[i] = i * ring_length / count;
    return state;
}

}  // namespace detail

// Build a warmed-up microscopic state at the target mean density: vehicles are
// introduced one at a time into the widest gap, each insertion followed by two
// relaxation steps, then the ring settles for warmup_steps. Near the packing
// limit moving traffic cannot open a vehicle-sized gap; once insertion stalls
// the ring is rebuilt as an equally spaced standstill jam at the exact count.
// Deterministic given cfg.seed.
inline MicroState init_ring(const ScenarioConfig& cfg) {
    cfg.validate();
    const KraussParams& p = cfg.params;
    const double L = cfg.ring_length;
    const double fp = p.footprint();
    long desired = std::lround(cfg.target_mean_density * L / fp);
    long max_fit = static_cast<long>(std::floor(L / fp));
    long count = std::min(desired, max_fit);
    if (count > 0 && count * fp / L < 0.95 * cfg.target_mean_density)
        throw config_error("init_ring: infeasible density " +
                           std::to_string(cfg.target_mean_density) +
                           ", min_gap cannot be satisfied");
    MicroState state;
    state.vehicle_length = p.vehicle_length;
    state.ring_length = L;
    if (count == 0) return state;

    uint64_t stream = Rng::mix(cfg.seed, 0xA11CE);
    uint64_t step_index = 0;
    auto micro = [&](MicroState& s) { s = step_krauss(s, p, Rng::mix(stream, step_index++)); };

    const int max_wait = 400;  // micro steps to wait for a vehicle-sized gap
    const int max_retries = 50;
    bool stalled = false;
    try {
        long placed = 0;
        int retries = 0;
        while (placed < count) {
            if (state.count() > 0) {
                double best = 0.0;
                detail::widest_gap(state, &best);
                int waited = 0;
                while (best < fp && waited < max_wait) {
                    micro(state);
                    detail::widest_gap(state, &best);
                    ++waited;
                }
                if (best < fp) {
                    stalled = true;
                    break;
                }
            }
            MicroState backup = state;
            detail::insert_vehicle(state, p);
            try {
                micro(state);
                micro(state);
                ++placed;
                retries = 0;
            } catch (const numeric_error&) {
                // Merge failed against a braking chain; let traffic evolve and retry.
                state = std::move(backup);
                for (int r = 0; r < 10; ++r) micro(state);
                if (++retries > max_retries) {
                    stalled = true;
                    break;
                }
            }
        }
        if (!stalled)
            for (int s = 0; s < cfg.warmup_steps; ++s) micro(state);
    } catch (const numeric_error&) {
        stalled = true;
    }
    if (stalled) {
        state = detail::packed_ring(count, p, L);
        for (int s = 0; s < cfg.warmup_steps; ++s) micro(state);
    }
    return state;
}

// Vehicle positions -> continuous density via a wrapped Gaussian kernel,
// integrated exactly over each cell. Normalization: cell mass divided by the
// cell capacity dx/footprint, so a bumper-to-bumper jam maps to rho = 1.
inline DensityField kernel_density(const MicroState& state, const Grid& grid, double bandwidth,
                                   double footprint) {
    if (bandwidth <= 0) throw config_error("kernel_density: bandwidth must be positive");
    DensityField field;
    field.dx = grid.dx;
    field.values.assign(grid.cells, 0.0);
    const double inv_s2 = 1.0 / (bandwidth * std::sqrt(2.0));
    const int halfspan = static_cast<int>(std::ceil(6.0 * bandwidth / grid.dx)) + 1;
    const bool full_ring = 2 * halfspan + 1 >= grid.cells;
    for (double x : state.positions) {
        if (full_ring) {
            // Wide kernel: integrate every cell with explicit periodic images.
            int images = static_cast<int>(std::ceil(6.0 * bandwidth / state.ring_length)) + 1;
            for (int c = 0; c < grid.cells; ++c) {
                double mass = 0.0;
                for (int m = -images; m <= images; ++m) {
                    double lo = c * grid.dx + m * state.ring_length - x;
                    double hi = lo + grid.dx;
                    mass += 0.5 * (std::erf(hi * inv_s2) - std::erf(lo * inv_s2));
                }
                field.values[c] += mass;
            }
        } else {
            int c0 = static_cast<int>(std::floor(x / grid.dx));
            for (int c = c0 - halfspan; c <= c0 + halfspan; ++c) {
                double lo = c * grid.dx - x;
                double hi = lo + grid.dx;
                double mass = 0.5 * (std::erf(hi * inv_s2) - std::erf(lo * inv_s2));
                field.values[grid.wrap(c)] += mass;
            }
        }
    }
    const double capacity = grid.dx / footprint;
    for (double& v : field.values) v = clamp01(v / capacity);
    return field;
}

// Sample sensor readings from a trajectory; noise stream independent of the
// simulation so the same truth can be re-measured under different sigma.
inline SensorRecord make_sensor_record(const Trajectory& traj, const std::vector<int>& cells,
                                       double sigma, uint64_t seed) {
    SensorRecord rec;
    rec.sensor_cells = cells;
    rec.noise_sigma = sigma;
    rec.seed = seed;
    Rng rng(Rng::mix(seed, 0x5E4503));
    rec.readings.resize(traj.fields.size());
    for (size_t s = 0; s < traj.fields.size(); ++s) {
        rec.readings[s].resize(cells.size());
        for (size_t j = 0; j < cells.size(); ++j) {
            double v = traj.fields[s].values[cells[j]];
            if (sigma > 0) v += sigma * rng.normal();
            rec.readings[s][j] = clamp01(v);
        }
    }
    return rec;
}

struct ScenarioResult {
    Trajectory trajectory;
    SensorRecord sensors;
    // Fraction of (vehicle, recorded step) samples below 0.1 * v_max; a cheap
    // stop-and-go indicator.
    double slow_fraction = 0.0;
};

// Full data-generation run: warmup, then record_steps density fields at
// dt_record spacing plus the matching sensor record. Bit-reproducible given
// cfg.seed.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
    ScenarioConfig c = cfg;
    if (cfg.ood) c.params = make_ood_params(cfg.params);
    const KraussParams& p = c.params;
    MicroState state = init_ring(c);
    const Grid grid = c.grid();
    const int micro_per_record = static_cast<int>(std::lround(c.dt_record / p.dt_micro));

    ScenarioResult result;
    result.trajectory.dt = c.dt_record;
    result.trajectory.fields.reserve(c.record_steps);
    uint64_t stream = Rng::mix(c.seed, 0x5EC0D);
    uint64_t step_index = 0;
    long slow = 0, total = 0;
    for (int s = 0; s < c.record_steps; ++s) {
        if (s > 0) {
            for (int m = 0; m < micro_per_record; ++m)
                state = step_krauss(state, p, Rng::mix(stream, step_index++));
        }
        result.trajectory.fields.push_back(
            kernel_density(state, grid, c.kernel_bandwidth, p.footprint()));
        for (double v : state.velocities) {
            slow += v < 0.1 * p.v_max ? 1 : 0;
            ++total;
        }
    }
    result.slow_fraction = total > 0 ? static_cast<double>(slow) / total : 0.0;
    result.sensors = make_sensor_record(result.trajectory, c.sensor_cells, c.noise_sigma,
                                        Rng::mix(c.seed, 0x4015E));
    return result;
}

}  // namespace ringobs
