// Command-line front end: simulate -> train -> observe / evaluate, driven by
// one config file. Exit codes: 0 ok, 2 bad config, 3 missing prerequisite
// artifact, 4 shape/compatibility mismatch, 1 anything else.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ringobs/checkpoint.hpp"
#include "ringobs/config.hpp"
#include "ringobs/dataset.hpp"
#include "ringobs/eval.hpp"
#include "ringobs/observers.hpp"
#include "ringobs/train.hpp"

namespace fs = std::filesystem;
using namespace ringobs;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;  // overrides [experiment] output_dir when non-empty
    uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
    std::string mode;  // observe only
    std::string which = "both";
    bool identity_correction = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "experiment config file")->required();
    cmd->add_option("--out", a.out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", a.seed, "override the experiment seed")
        ->each([&a](const std::string&) { a.seed_set = true; });
}

ExperimentConfig load_config(const CommonArgs& a) {
    if (!fs::exists(a.config_path))
        throw config_error("config file not found: " + a.config_path);
    ExperimentConfig cfg = ExperimentConfig::from_file(a.config_path);
    if (a.seed_set) cfg.seed = a.seed;
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    fs::create_directories(cfg.output_dir);
    return cfg;
}

std::string artifact(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

void require_artifact(const std::string& path, const std::string& produced_by) {
    if (!fs::exists(path))
        throw data_error("missing prerequisite: " + path + " (run `ringobs " + produced_by +
                         "` first)");
}

// Human-readable field-by-field arch comparison; empty string means equal.
std::string arch_diff(const FnoArch& got, const FnoArch& want) {
    auto joined = [](const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    std::string d;
    auto field = [&](const std::string& name, const std::string& g, const std::string& w) {
        if (g != w) d += (d.empty() ? "" : "; ") + name + " " + g + " vs " + w;
    };
    field("dimensionality", std::to_string(got.dimensionality),
          std::to_string(want.dimensionality));
    field("in_channels", std::to_string(got.in_channels), std::to_string(want.in_channels));
    field("out_channels", std::to_string(got.out_channels), std::to_string(want.out_channels));
    field("lift_width", std::to_string(got.lift_width), std::to_string(want.lift_width));
    field("projection_hidden", std::to_string(got.projection_hidden),
          std::to_string(want.projection_hidden));
    field("coord_channels", std::to_string(got.coord_channels),
          std::to_string(want.coord_channels));
    field("layer_widths", joined(got.layer_widths), joined(want.layer_widths));
    field("modes", joined(got.modes_per_layer), joined(want.modes_per_layer));
    field("modes_time", joined(got.modes_time), joined(want.modes_time));
    return d;
}

Checkpoint load_compatible(const std::string& path, const FnoArch& want,
                           const std::string& label) {
    Checkpoint ckpt = load_checkpoint(path);
    std::string diff = arch_diff(ckpt.params.arch, want);
    if (!diff.empty())
        throw shape_error(label + " checkpoint " + path +
                          " does not match the configured architecture: " + diff);
    return ckpt;
}

double wall_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    std::vector<ScenarioConfig> scenarios = cfg.training_scenarios();

    Dataset ds;
    ds.grid_cells = cfg.grid_cells;
    ds.dx = cfg.grid().dx;
    ds.dt = cfg.dt_record;
    ds.n = cfg.n;
    ds.n_out = cfg.n_out();
    ds.scenarios.resize(scenarios.size());

    auto t0 = std::chrono::steady_clock::now();
    auto run_one = [&](size_t i) {
        ScenarioResult res = run_scenario(scenarios[i]);
        DatasetScenario& sc = ds.scenarios[i];
        sc.seed = scenarios[i].seed;
        sc.target_density = scenarios[i].target_mean_density;
        sc.ood = scenarios[i].ood;
        sc.source = "krauss";
        sc.trajectory = std::move(res.trajectory);
        sc.sensors = std::move(res.sensors);
    };
    if (args.jobs <= 1) {
        for (size_t i = 0; i < scenarios.size(); ++i) run_one(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(args.jobs);
        for (int w = 0; w < args.jobs; ++w)
            workers.emplace_back([&, w] {
                try {
                    for (size_t i = next.fetch_add(1); i < scenarios.size();
                         i = next.fetch_add(1))
                        run_one(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (std::thread& t : workers) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::string path = artifact(cfg, "dataset.bin");
    save_dataset(path, ds);
    if (cfg.sim_export_csv) export_dataset_csv(artifact(cfg, "dataset.csv"), ds);

    WindowedPairs wp = window_dataset(ds);
    std::cout << "scenarios: " << ds.scenarios.size();
    if (!cfg.sim_densities.empty()) {
        auto [lo, hi] = std::minmax_element(cfg.sim_densities.begin(), cfg.sim_densities.end());
        std::cout << " (mean densities " << *lo << " .. " << *hi << ")";
    }
    std::cout << "\nrecord steps per scenario: " << cfg.sim_record_steps
              << "\nwindow pairs (n=" << ds.n << ", n_out=" << ds.n_out << "): "
              << wp.pairs.size() << "\n";
    if (wp.skipped > 0)
        std::cout << "warning: " << wp.skipped
                  << " scenario(s) shorter than one window block were skipped\n";
    if (ds.scenarios.empty()) std::cout << "warning: wrote an empty dataset\n";
    std::cout << "wrote " << path << " (" << fs::file_size(path) << " bytes) in " << std::fixed
              << std::setprecision(1) << wall_since(t0) << " s\n";
    return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const CommonArgs& args) {
    if (args.which != "solution" && args.which != "correction" && args.which != "both")
        throw config_error("--which must be solution, correction, or both");
    ExperimentConfig cfg = load_config(args);
    std::string ds_path = artifact(cfg, "dataset.bin");
    require_artifact(ds_path, "simulate");
    Dataset ds = load_dataset(ds_path);
    if (ds.grid_cells != cfg.grid_cells || ds.n != cfg.n || ds.n_out != cfg.n_out())
        throw shape_error("dataset " + ds_path + " has grid_cells=" +
                          std::to_string(ds.grid_cells) + ", n=" + std::to_string(ds.n) +
                          ", n_out=" + std::to_string(ds.n_out) + " but the config expects " +
                          std::to_string(cfg.grid_cells) + ", " + std::to_string(cfg.n) + ", " +
                          std::to_string(cfg.n_out()));

    WindowedPairs wp = window_dataset(ds);
    std::cout << "training pairs: " << wp.pairs.size() << " (from " << ds.scenarios.size()
              << " scenarios";
    if (wp.skipped > 0) std::cout << ", " << wp.skipped << " too short";
    std::cout << ")\n";
    if (wp.pairs.empty()) throw config_error("train: dataset yields no window pairs");

    bool do_solution = args.which != "correction";
    bool do_correction = args.which != "solution";
    std::string theta_path = artifact(cfg, "solution.ckpt");

    FnoParams theta;
    if (do_solution) {
        TrainConfig tc = cfg.train_solution;
        tc.seed = Rng::mix(cfg.seed, 0x1D50);
        tc.checkpoint_path = theta_path;
        tc.log_path = artifact(cfg, "solution_train_log.csv");
        auto t0 = std::chrono::steady_clock::now();
        theta = train_solution_operator(wp.pairs, cfg.solution_arch(), tc);
        std::cout << "solution operator: " << theta.size() << " parameters, " << tc.epochs
                  << " epochs in " << std::fixed << std::setprecision(1) << wall_since(t0)
                  << " s\n  final loss " << std::setprecision(6)
                  << loss_solution(theta, wp.pairs) << "\n  wrote " << theta_path << " and "
                  << tc.log_path << "\n";
    }
    if (do_correction) {
        if (!do_solution) {
            require_artifact(theta_path, "train --which solution");
            theta = load_compatible(theta_path, cfg.solution_arch(), "solution").params;
        }
        GpInterpolator gp(cfg.sensor_cells, ds.grid(), cfg.gp);
        // Optional strided subsample: correction batches cost a GP draw per
        // target slice, so a cap keeps wall time bounded on small machines.
        std::vector<SamplePair> pairs;
        const std::vector<SamplePair>* train_pairs = &wp.pairs;
        if (cfg.correction_pair_cap > 0 &&
            static_cast<size_t>(cfg.correction_pair_cap) < wp.pairs.size()) {
            double stride = static_cast<double>(wp.pairs.size()) / cfg.correction_pair_cap;
            for (int i = 0; i < cfg.correction_pair_cap; ++i)
                pairs.push_back(wp.pairs[static_cast<size_t>(i * stride)]);
            train_pairs = &pairs;
            std::cout << "correction subsample: " << pairs.size() << " of " << wp.pairs.size()
                      << " pairs\n";
        }
        TrainConfig tc = cfg.train_correction;
        tc.seed = Rng::mix(cfg.seed, 0x2D50);
        tc.checkpoint_path = artifact(cfg, "correction.ckpt");
        tc.log_path = artifact(cfg, "correction_train_log.csv");
        auto t0 = std::chrono::steady_clock::now();
        FnoParams psi = train_correction_operator(*train_pairs, theta, cfg.correction_arch(),
                                                  tc, gp);
        std::cout << "correction operator: " << psi.size() << " parameters, " << tc.epochs
                  << " epochs in " << std::fixed << std::setprecision(1) << wall_since(t0)
                  << " s\n  wrote " << tc.checkpoint_path << " and " << tc.log_path << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- observe

void write_truth_csv(const std::string& path, const Trajectory& truth, int start_record_step,
                     int horizon) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "step,cell,density\n";
    for (int k = 0; k < horizon; ++k) {
        const DensityField& field = truth.fields.at(start_record_step + 1 + k);
        for (int c = 0; c < field.cells(); ++c)
            f << k + 1 << ',' << c << ',' << field.values[c] << '\n';
    }
}

int cmd_observe(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    ObserverMode mode = parse_observer_mode(args.mode.empty() ? cfg.observe_mode : args.mode);

    std::string theta_path = artifact(cfg, "solution.ckpt");
    require_artifact(theta_path, "train");
    FnoParams theta = load_compatible(theta_path, cfg.solution_arch(), "solution").params;
    FnoParams psi;
    if (mode == ObserverMode::cl && !args.identity_correction) {
        std::string psi_path = artifact(cfg, "correction.ckpt");
        require_artifact(psi_path, "train --which correction");
        psi = load_compatible(psi_path, cfg.correction_arch(), "correction").params;
    }

    ScenarioConfig sc =
        cfg.scenario(cfg.observe_density, Rng::mix(cfg.seed + cfg.test_seed_offset, 0x0B5E57),
                     cfg.observe_record_steps(), cfg.observe_noise);
    std::cout << "test scenario: density " << sc.target_mean_density << ", seed " << sc.seed
              << ", " << sc.record_steps << " record steps, noise sigma " << sc.noise_sigma
              << "\n";
    ScenarioResult truth = run_scenario(sc);

    ObserverConfig oc = cfg.observer_config(mode);
    EstimateTrajectory est;
    switch (mode) {
        case ObserverMode::ol: est = observe_open_loop(theta, truth.sensors, oc); break;
        case ObserverMode::ol_reset:
            est = observe_open_loop_reset(theta, truth.sensors, oc);
            break;
        case ObserverMode::cl:
            est = observe_closed_loop(theta, psi, truth.sensors, oc, args.identity_correction);
            break;
    }

    std::vector<double> errors = error_evolution(est, truth.trajectory);
    std::string est_path = artifact(cfg, "estimate_" + observer_mode_name(mode) + ".csv");
    export_estimate_csv(est_path, est);
    write_truth_csv(artifact(cfg, "observe_truth.csv"), truth.trajectory,
                    est.start_record_step, cfg.horizon_steps);

    std::cout << "observer " << observer_mode_name(mode)
              << (args.identity_correction ? " (identity correction)" : "") << ": "
              << est.estimates.size() << " estimates\n"
              << std::fixed << std::setprecision(4) << "  relative L2 error: median "
              << median_of(errors) << ", first " << (errors.empty() ? 0.0 : errors.front())
              << ", last " << (errors.empty() ? 0.0 : errors.back()) << "\n"
              << std::setprecision(3) << "  per-step latency: " << est.step_seconds * 1e3
              << " ms\n  wrote " << est_path << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    std::string theta_path = artifact(cfg, "solution.ckpt");
    require_artifact(theta_path, "train");
    FnoParams theta = load_compatible(theta_path, cfg.solution_arch(), "solution").params;
    FnoParams psi;
    bool have_psi = false;
    if (!args.identity_correction) {
        std::string psi_path = artifact(cfg, "correction.ckpt");
        require_artifact(psi_path, "train --which correction");
        psi = load_compatible(psi_path, cfg.correction_arch(), "correction").params;
        have_psi = true;
    }

    BenchmarkConfig bc = cfg.benchmark_config();
    bc.jobs = std::max(1, args.jobs);
    bc.identity_correction = args.identity_correction;
    std::cout << "benchmark: " << bc.scenarios.size() << " scenarios x " << bc.conditions.size()
              << " conditions x " << bc.observers.size() << " observers = "
              << bc.scenarios.size() * bc.conditions.size() * bc.observers.size()
              << " cells (jobs=" << bc.jobs << ")\n";

    auto t0 = std::chrono::steady_clock::now();
    BenchmarkReport report = run_benchmark(theta, have_psi ? &psi : nullptr, bc);
    std::cout << "finished in " << std::fixed << std::setprecision(1) << wall_since(t0)
              << " s\n\n"
              << std::left << std::setw(10) << "observer" << std::setw(12) << "condition"
              << std::right << std::setw(9) << "q25" << std::setw(9) << "q50" << std::setw(9)
              << "q75" << "\n";
    for (const QuantileCell& c : report.cells)
        std::cout << std::left << std::setw(10) << c.observer << std::setw(12) << c.condition
                  << std::right << std::fixed << std::setprecision(4) << std::setw(9) << c.q25
                  << std::setw(9) << c.q50 << std::setw(9) << c.q75 << "\n";

    export_benchmark_csv(artifact(cfg, "benchmark.csv"), report);
    export_summary_csv(artifact(cfg, "summary.csv"), report);
    std::cout << "\nwrote " << artifact(cfg, "benchmark.csv") << " and "
              << artifact(cfg, "summary.csv") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ring-road traffic density observation toolkit"};
    app.require_subcommand(1);
    CommonArgs args;

    CLI::App* sim = app.add_subcommand("simulate", "generate training scenarios");
    add_common(sim, args);
    sim->add_option("--jobs", args.jobs, "parallel scenario workers");

    CLI::App* train = app.add_subcommand("train", "train the operators on a dataset");
    add_common(train, args);
    train->add_option("--which", args.which, "solution | correction | both");

    CLI::App* observe = app.add_subcommand("observe", "run one observer on a test scenario");
    add_common(observe, args);
    observe->add_option("--mode", args.mode, "ol | ol-r | cl");
    observe->add_flag("--identity-correction", args.identity_correction,
                      "replace the trained correction with the identity");

    CLI::App* evaluate = app.add_subcommand("evaluate", "benchmark all observers");
    add_common(evaluate, args);
    evaluate->add_option("--jobs", args.jobs, "parallel benchmark workers");
    evaluate->add_flag("--identity-correction", args.identity_correction,
                       "replace the trained correction with the identity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(args);
        if (train->parsed()) return cmd_train(args);
        if (observe->parsed()) return cmd_observe(args);
        if (evaluate->parsed()) return cmd_evaluate(args);
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const shape_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
