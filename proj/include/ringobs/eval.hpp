#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/fno.hpp"
#include "ringobs/observers.hpp"
#include "ringobs/ring_sim.hpp"

namespace ringobs {

// Truth-normalized spatial L2 distance; the floor keeps near-vacuum truth
// fields from exploding the ratio.
inline double relative_l2(const DensityField& est, const DensityField& truth) {
    if (est.cells() != truth.cells()) throw shape_error("relative_l2: grid mismatch");
    double num = 0.0, den = 0.0;
    for (int i = 0; i < est.cells(); ++i) {
        double d = est.values[i] - truth.values[i];
        num += d * d;
        den += truth.values[i] * truth.values[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-6);
}

// Per-step error of the emitted estimates against the aligned truth steps.
inline std::vector<double> error_evolution(const EstimateTrajectory& est,
                                           const Trajectory& truth) {
    std::vector<double> errors;
    errors.reserve(est.estimates.size());
    for (size_t k = 0; k < est.estimates.size(); ++k) {
        long step = est.start_record_step + 1 + static_cast<long>(k);
        if (step < 0 || step >= truth.steps())
            throw data_error("error_evolution: truth trajectory has no step " +
                             std::to_string(step));
        errors.push_back(relative_l2(est.estimates[k], truth.fields[step]));
    }
    return errors;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Linear-interpolation quantile on a sorted copy.
inline double quantile_of(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double pos = p * (v.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    double frac = pos - lo;
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

struct ErrorReport {
    std::vector<double> errors;  // one per emitted step
    double median = 0.0;
    int scenario_id = 0;
    std::string observer;
    std::string condition;  // noiseless / noisy / ood
    double step_seconds = 0.0;
};

struct QuantileCell {
    std::string observer;
    std::string condition;
    double q25 = 0.0, q50 = 0.0, q75 = 0.0;
};

struct BenchmarkReport {
    std::vector<ErrorReport> reports;
    std::vector<QuantileCell> cells;

    // Pooled per-step errors of one (observer, condition) cell.
    std::vector<double> pooled(const std::string& observer, const std::string& condition) const {
        std::vector<double> all;
        for (const ErrorReport& r : reports)
            if (r.observer == observer && r.condition == condition)
                all.insert(all.end(), r.errors.begin(), r.errors.end());
        return all;
    }
};

struct BenchmarkConfig {
    std::vector<ScenarioConfig> scenarios;  // base truth configs, noiseless
    std::vector<std::string> conditions{"noiseless", "noisy", "ood"};
    std::vector<ObserverMode> observers{ObserverMode::ol, ObserverMode::ol_reset,
                                        ObserverMode::cl};
    double noise_sigma = 0.1;
    ObserverConfig obs;
    bool identity_correction = false;
    int jobs = 1;
};

// Runs every (scenario, condition, observer) cell and aggregates quantiles.
// The noisy condition perturbs only the sensor readings — the truth trajectory
// that errors are scored against is shared with the noiseless condition.
inline BenchmarkReport run_benchmark(const FnoParams& theta, const FnoParams* psi,
                                     const BenchmarkConfig& bcfg) {
    for (const std::string& c : bcfg.conditions)
        if (c != "noiseless" && c != "noisy" && c != "ood")
            throw config_error("run_benchmark: unknown condition '" + c + "'");
    bool needs_psi = !bcfg.identity_correction &&
                     std::count(bcfg.observers.begin(), bcfg.observers.end(), ObserverMode::cl);
    if (needs_psi && !psi)
        throw config_error("run_benchmark: closed-loop observer requires correction params");

    struct Cell {
        int scenario;
        std::string condition;
        ObserverMode mode;
    };
    std::vector<Cell> cells;
    for (size_t i = 0; i < bcfg.scenarios.size(); ++i)
        for (const std::string& cond : bcfg.conditions)
            for (ObserverMode m : bcfg.observers)
                cells.push_back({static_cast<int>(i), cond, m});

    std::vector<ErrorReport> reports(cells.size());
    auto run_cell = [&](size_t ci) {
        const Cell& cell = cells[ci];
        ScenarioConfig sc = bcfg.scenarios[cell.scenario];
        sc.noise_sigma = 0.0;
        sc.ood = cell.condition == "ood";
        ScenarioResult truth = run_scenario(sc);
        SensorRecord rec = truth.sensors;
        if (cell.condition == "noisy")
            rec = make_sensor_record(truth.trajectory, sc.sensor_cells, bcfg.noise_sigma,
                                     Rng::mix(sc.seed, 0x015E));
        ObserverConfig oc = bcfg.obs;
        oc.grid = sc.grid();
        EstimateTrajectory est;
        switch (cell.mode) {
            case ObserverMode::ol: est = observe_open_loop(theta, rec, oc); break;
            case ObserverMode::ol_reset: est = observe_open_loop_reset(theta, rec, oc); break;
            case ObserverMode::cl:
                est = observe_closed_loop(theta, psi ? *psi : FnoParams{}, rec, oc,
                                          bcfg.identity_correction);
                break;
        }
        ErrorReport rep;
        rep.errors = error_evolution(est, truth.trajectory);
        rep.median = median_of(rep.errors);
        rep.scenario_id = cell.scenario;
        rep.observer = observer_mode_name(cell.mode);
        rep.condition = cell.condition;
        rep.step_seconds = est.step_seconds;
        reports[ci] = std::move(rep);
    };

    if (bcfg.jobs <= 1) {
        for (size_t ci = 0; ci < cells.size(); ++ci) run_cell(ci);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(bcfg.jobs);
        for (int w = 0; w < bcfg.jobs; ++w)
            workers.emplace_back([&, w] {
                try {
                    for (size_t ci = next.fetch_add(1); ci < cells.size(); ci = next.fetch_add(1))
                        run_cell(ci);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (std::thread& t : workers) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    BenchmarkReport report;
    report.reports = std::move(reports);
    for (const std::string& cond : bcfg.conditions)
        for (ObserverMode m : bcfg.observers) {
            QuantileCell qc;
            qc.observer = observer_mode_name(m);
            qc.condition = cond;
            std::vector<double> all = report.pooled(qc.observer, cond);
            qc.q25 = quantile_of(all, 0.25);
            qc.q50 = quantile_of(all, 0.50);
            qc.q75 = quantile_of(all, 0.75);
            report.cells.push_back(std::move(qc));
        }
    return report;
}

// Long-format per-step errors; input to external plotting.
inline void export_benchmark_csv(const std::string& path, const BenchmarkReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "observer,condition,scenario,step,error\n";
    for (const ErrorReport& r : report.reports)
        for (size_t s = 0; s < r.errors.size(); ++s)
            f << r.observer << ',' << r.condition << ',' << r.scenario_id << ',' << s + 1 << ','
              << r.errors[s] << '\n';
    if (!f) throw data_error("short write: " + path);
}

inline void export_summary_csv(const std::string& path, const BenchmarkReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "observer,condition,q25,q50,q75\n";
    for (const QuantileCell& c : report.cells)
        f << c.observer << ',' << c.condition << ',' << c.q25 << ',' << c.q50 << ',' << c.q75
          << '\n';
    if (!f) throw data_error("short write: " + path);
}

}  // namespace ringobs
