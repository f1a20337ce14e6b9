#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/fno.hpp"
#include "ringobs/gp.hpp"
#include "ringobs/ring_sim.hpp"

namespace ringobs {

enum class ObserverMode { ol, ol_reset, cl };

inline ObserverMode parse_observer_mode(const std::string& s) {
    if (s == "ol") return ObserverMode::ol;
    if (s == "ol-r" || s == "ol_reset") return ObserverMode::ol_reset;
    if (s == "cl") return ObserverMode::cl;
    throw config_error("unknown observer mode '" + s + "' (expected ol, ol-r, or cl)");
}

inline std::string observer_mode_name(ObserverMode m) {
    switch (m) {
        case ObserverMode::ol: return "ol";
        case ObserverMode::ol_reset: return "ol-r";
        default: return "cl";
    }
}

struct ObserverConfig {
    int n = 0;    // operator input window
    int n_d = 0;  // measurement delay; the extended window holds n_d + 1 slices
    Grid grid;
    GpConfig gp_cfg;
    int horizon_steps = 0;
    ObserverMode mode = ObserverMode::cl;

    int n_out() const { return n_d + 1; }

    void validate() const {
        if (n < 1) throw config_error("ObserverConfig: n must be >= 1");
        if (n_d <= n - 1)
            throw config_error("ObserverConfig: need n_d > n-1 (delay must exceed the window)");
        if (horizon_steps < 0) throw config_error("ObserverConfig: horizon_steps must be >= 0");
        if (grid.cells < 1) throw config_error("ObserverConfig: empty grid");
        gp_cfg.validate();
    }
};

// Observer output. Observer time 0 sits at record step n_d + n - 1 (the first
// step with enough measurement history); prefix[i] estimates time
// (i - n_d + 1)*dt, estimates[i] time (i + 1)*dt.
struct EstimateTrajectory {
    std::vector<DensityField> prefix;     // times -n_d+1 .. 0, GP-interpolated
    std::vector<DensityField> estimates;  // times 1 .. horizon
    int start_record_step = 0;            // record step aligned with time 0
    double dt = 1.0;
    double step_seconds = 0.0;  // mean wall-clock cost per emitted estimate

    // Observer time of prefix[0]; each later entry advances by dt with the
    // estimates continuing seamlessly after the prefix.
    double first_time() const { return (1.0 - static_cast<double>(prefix.size())) * dt; }
};

// Luenberger-style innovation: elementwise difference between the rolled
// prediction window and the measurement-based window.
inline FieldStack error_operator(const FieldStack& extended, const FieldStack& data_based) {
    if (extended.rows != data_based.rows || extended.cols != data_based.cols)
        throw shape_error("error_operator: window shapes differ");
    FieldStack e(extended.rows, extended.cols, extended.dx);
    for (size_t i = 0; i < e.data.size(); ++i)
        e.data[i] = extended.data[i] - data_based.data[i];
    return e;
}

// The n oldest slices of the corrected extended window, reordered newest-first
// to form the next operator input.
inline StateWindow extract_next_input(const FieldStack& updated, int n) {
    if (n < 1 || n > updated.rows)
        throw shape_error("extract_next_input: need 1 <= n <= window length");
    StateWindow w(n, updated.cols, updated.dx);
    for (int r = 0; r < n; ++r) {
        const double* src = updated.row(n - 1 - r);
        std::copy(src, src + updated.cols, w.row(r));
    }
    return w;
}

// Prediction callback: window of n slices (newest first) -> n_d + 1 future
// slices. Lets tests substitute exact oracles for the trained operator.
using SolutionFn = std::function<FieldStack(const StateWindow&)>;
// Correction callback: (extended window, error window) -> corrected window.
using WindowCorrectionFn = std::function<FieldStack(const FieldStack&, const FieldStack&)>;

namespace detail {

// Caches per-record-step GP posterior means; every observer reads measurement
// slices exclusively through this, so identical inputs give identical bits
// regardless of which observer asks first.
class GpMeanCache {
public:
    GpMeanCache(const GpInterpolator& gp, const SensorRecord& rec) : gp_(gp), rec_(rec) {}

    const std::vector<double>& at(long record_step) {
        auto it = cache_.find(record_step);
        if (it != cache_.end()) return it->second;
        if (!rec_.has_step(record_step))
            throw data_error("observer: measurement record has no step " +
                             std::to_string(record_step));
        DensityField f = gp_.posterior_mean(rec_.readings[record_step]);
        return cache_.emplace(record_step, std::move(f.values)).first->second;
    }

private:
    const GpInterpolator& gp_;
    const SensorRecord& rec_;
    std::map<long, std::vector<double>> cache_;
};

// Shared observer engine. The three observer variants differ only in how the
// next input window is produced:
//   ol      — slide the extended window over its own past predictions
//   ol-r    — rebuild the delayed window from measurements every step
//   cl      — like ol, but pass the shifted window through the correction
inline EstimateTrajectory run_observer(const SolutionFn& solve, const WindowCorrectionFn& correct,
                                       const SensorRecord& rec, const ObserverConfig& cfg) {
    cfg.validate();
    const int n = cfg.n, n_d = cfg.n_d, n_out = cfg.n_out();
    const int t0 = n_d + n - 1;  // record step at observer time 0
    const bool reset_mode = cfg.mode == ObserverMode::ol_reset;
    const bool closed = cfg.mode == ObserverMode::cl;
    if (!rec.has_step(0) || !rec.has_step(t0))
        throw data_error("observer: record too short for initialization (needs steps 0.." +
                         std::to_string(t0) + ")");

    GpInterpolator gp(rec.sensor_cells, cfg.grid, cfg.gp_cfg);
    GpMeanCache means(gp, rec);
    auto mean_at_time = [&](long s) -> const std::vector<double>& { return means.at(t0 + s); };

    EstimateTrajectory out;
    out.start_record_step = t0;
    out.dt = 1.0;
    auto make_field = [&](const std::vector<double>& v) {
        DensityField f;
        f.dx = cfg.grid.dx;
        f.values = v;
        return f;
    };

    // Estimates for times -n_d+1 .. 0 come straight from the measurements.
    for (long s = -n_d + 1; s <= 0; ++s) out.prefix.push_back(make_field(mean_at_time(s)));

    // emitted[s]: the observer's own estimate of time s, used both as output
    // and as append material when the window slides past s. Seed with the
    // GP prefix (times <= 0).
    std::map<long, std::vector<double>> emitted;
    for (long s = -n_d + 1; s <= 0; ++s) emitted[s] = mean_at_time(s);
    emitted[-n_d] = mean_at_time(-n_d);  // oldest init slice, below the prefix

    // Extended window before step t covers times t-n_d-(n-1) .. t-(n-1),
    // oldest first. Initialize from measurements (t = 0).
    FieldStack window(n_out, cfg.grid.cells, cfg.grid.dx);
    for (int r = 0; r < n_out; ++r) {
        const std::vector<double>& v = mean_at_time(-n_d - (n - 1) + r);
        std::copy(v.begin(), v.end(), window.row(r));
    }

    auto t_start = std::chrono::steady_clock::now();
    for (int t = 0; t < cfg.horizon_steps; ++t) {
        StateWindow input;
        if (reset_mode) {
            // Fresh delayed window from measurements at times t-n_d-(n-1)..t-n_d.
            input = StateWindow(n, cfg.grid.cells, cfg.grid.dx);
            for (int r = 0; r < n; ++r) {
                const std::vector<double>& v = mean_at_time(t - n_d - r);
                std::copy(v.begin(), v.end(), input.row(r));
            }
        } else {
            input = extract_next_input(window, n);
        }
        FieldStack pred = solve(input);
        if (pred.rows != n_out || pred.cols != cfg.grid.cells)
            throw shape_error("observer: prediction stack has wrong shape");
        const double* newest = pred.row(n_out - 1);
        long emit_time = t + 1;
        emitted[emit_time] = std::vector<double>(newest, newest + cfg.grid.cells);
        out.estimates.push_back(make_field(emitted[emit_time]));

        if (!reset_mode && t + 1 < cfg.horizon_steps) {
            // Slide: drop the oldest slice, append the estimate of the time
            // entering the window (t-(n-1)+1; the fresh prediction iff n = 1).
            long append_time = t - (n - 1) + 1;
            FieldStack shifted(n_out, cfg.grid.cells, cfg.grid.dx);
            for (int r = 0; r + 1 < n_out; ++r) {
                const double* src = window.row(r + 1);
                std::copy(src, src + cfg.grid.cells, shifted.row(r));
            }
            const std::vector<double>& app = emitted.at(append_time);
            std::copy(app.begin(), app.end(), shifted.row(n_out - 1));
            if (closed) {
                // Measurement-based window over the same span, then correct.
                FieldStack data_based(n_out, cfg.grid.cells, cfg.grid.dx);
                for (int r = 0; r < n_out; ++r) {
                    const std::vector<double>& v = mean_at_time((t + 1) - n_d - (n - 1) + r);
                    std::copy(v.begin(), v.end(), data_based.row(r));
                }
                FieldStack err = error_operator(shifted, data_based);
                window = correct(shifted, err);
                if (window.rows != n_out || window.cols != cfg.grid.cells)
                    throw shape_error("observer: corrected window has wrong shape");
            } else {
                window = std::move(shifted);
            }
        }
    }
    if (cfg.horizon_steps > 0) {
        double total =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        out.step_seconds = total / cfg.horizon_steps;
    }
    return out;
}

inline SolutionFn make_solution_fn(const FnoParams& theta, FnoWorkspace* ws = nullptr) {
    return [&theta, ws](const StateWindow& w) { return fno_forward(w, theta, nullptr, ws); };
}

}  // namespace detail

// Autoregressive observer: initialized from measurements, then rolls forward
// on its own predictions with no further measurement use.
inline EstimateTrajectory observe_open_loop_fn(const SolutionFn& solve, const SensorRecord& rec,
                                               ObserverConfig cfg) {
    cfg.mode = ObserverMode::ol;
    return detail::run_observer(solve, nullptr, rec, cfg);
}

inline EstimateTrajectory observe_open_loop(const FnoParams& theta, const SensorRecord& rec,
                                            ObserverConfig cfg) {
    FnoWorkspace ws;
    return observe_open_loop_fn(detail::make_solution_fn(theta, &ws), rec, cfg);
}

// Re-initialized observer: every step rebuilds the (delayed) input window from
// current measurements, so estimates never feed back.
inline EstimateTrajectory observe_open_loop_reset_fn(const SolutionFn& solve,
                                                     const SensorRecord& rec,
                                                     ObserverConfig cfg) {
    cfg.mode = ObserverMode::ol_reset;
    return detail::run_observer(solve, nullptr, rec, cfg);
}

inline EstimateTrajectory observe_open_loop_reset(const FnoParams& theta, const SensorRecord& rec,
                                                  ObserverConfig cfg) {
    FnoWorkspace ws;
    return observe_open_loop_reset_fn(detail::make_solution_fn(theta, &ws), rec, cfg);
}

// Closed-loop observer: prediction as in the open loop, then the shifted
// extended window is compared against the measurement-based window and passed
// through the correction operator before the next input is extracted.
inline EstimateTrajectory observe_closed_loop_fn(const SolutionFn& solve,
                                                 const WindowCorrectionFn& correct,
                                                 const SensorRecord& rec, ObserverConfig cfg) {
    cfg.mode = ObserverMode::cl;
    return detail::run_observer(solve, correct, rec, cfg);
}

inline EstimateTrajectory observe_closed_loop(const FnoParams& theta, const FnoParams& psi,
                                              const SensorRecord& rec, ObserverConfig cfg,
                                              bool use_identity_correction = false) {
    FnoWorkspace ws1, ws2;
    WindowCorrectionFn correct;
    if (use_identity_correction) {
        correct = identity_correction;
    } else {
        correct = [&psi, &ws2](const FieldStack& s, const FieldStack& e) {
            return fno2d_forward(s, e, psi, nullptr, &ws2);
        };
    }
    return observe_closed_loop_fn(detail::make_solution_fn(theta, &ws1), correct, rec, cfg);
}

// Flattens prefix + estimates into one uniformly spaced trajectory starting at
// observer time -n_d+1.
inline Trajectory estimate_to_trajectory(const EstimateTrajectory& est) {
    Trajectory traj;
    traj.dt = est.dt;
    traj.t0 = est.first_time();
    traj.fields = est.prefix;
    traj.fields.insert(traj.fields.end(), est.estimates.begin(), est.estimates.end());
    return traj;
}

// CSV of the emitted estimates (steps 1..horizon), one row per (step, cell).
inline void export_estimate_csv(const std::string& path, const EstimateTrajectory& est) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "step,cell,estimate\n";
    for (size_t s = 0; s < est.estimates.size(); ++s)
        for (int c = 0; c < est.estimates[s].cells(); ++c)
            f << s + 1 << ',' << c << ',' << est.estimates[s].values[c] << '\n';
    if (!f) throw data_error("short write: " + path);
}

}  // namespace ringobs
