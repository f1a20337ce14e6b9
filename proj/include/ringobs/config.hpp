#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/eval.hpp"
#include "ringobs/fno.hpp"
#include "ringobs/gp.hpp"
#include "ringobs/observers.hpp"
#include "ringobs/ring_sim.hpp"
#include "ringobs/train.hpp"

namespace ringobs {

// Minimal INI-style reader: [section] headers, key = value lines, # or ;
// comments. Every lookup error names the offending section.key.
class ConfigFile {
public:
    static ConfigFile parse_string(const std::string& text) {
        ConfigFile cf;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = trim(strip_comment(line));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw config_error("config line " + std::to_string(lineno) +
                                       ": malformed section header");
                section = trim(s.substr(1, s.size() - 2));
                cf.sections_.insert(section);
                continue;
            }
            size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw config_error("config line " + std::to_string(lineno) +
                                   ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty())
                throw config_error("config line " + std::to_string(lineno) + ": empty key");
            cf.values_[section + "." + key] = value;
        }
        return cf;
    }

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw data_error("cannot open config: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& sec, const std::string& key) const {
        return values_.count(sec + "." + key) > 0;
    }

    std::string str(const std::string& sec, const std::string& key,
                    const std::string& fallback) const {
        auto it = values_.find(sec + "." + key);
        return it == values_.end() ? fallback : it->second;
    }

    double num(const std::string& sec, const std::string& key, double fallback) const {
        auto it = values_.find(sec + "." + key);
        return it == values_.end() ? fallback : to_num(sec, key, it->second);
    }

    int integer(const std::string& sec, const std::string& key, int fallback) const {
        double v = num(sec, key, static_cast<double>(fallback));
        int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw config_error("config " + sec + "." + key + ": expected an integer");
        return i;
    }

    uint64_t uinteger(const std::string& sec, const std::string& key, uint64_t fallback) const {
        auto it = values_.find(sec + "." + key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw config_error("config " + sec + "." + key + ": expected a non-negative integer");
        }
    }

    bool flag(const std::string& sec, const std::string& key, bool fallback) const {
        auto it = values_.find(sec + "." + key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw config_error("config " + sec + "." + key + ": expected a boolean");
    }

    std::vector<double> num_list(const std::string& sec, const std::string& key,
                                 const std::vector<double>& fallback) const {
        auto it = values_.find(sec + "." + key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        for (const std::string& item : split(it->second)) out.push_back(to_num(sec, key, item));
        return out;
    }

    std::vector<int> int_list(const std::string& sec, const std::string& key,
                              const std::vector<int>& fallback) const {
        std::vector<double> fd(fallback.begin(), fallback.end());
        std::vector<int> out;
        for (double v : num_list(sec, key, fd)) {
            int i = static_cast<int>(v);
            if (static_cast<double>(i) != v)
                throw config_error("config " + sec + "." + key + ": expected integers");
            out.push_back(i);
        }
        return out;
    }

    std::vector<std::string> str_list(const std::string& sec, const std::string& key,
                                      const std::vector<std::string>& fallback) const {
        auto it = values_.find(sec + "." + key);
        if (it == values_.end()) return fallback;
        return split(it->second);
    }

    // Rejects keys outside the known set so typos fail loudly instead of
    // silently falling back to defaults.
    void check_known(const std::set<std::string>& known) const {
        for (const auto& [full_key, value] : values_) {
            (void)value;
            if (!known.count(full_key))
                throw config_error("config: unknown key '" + full_key + "'");
        }
    }

private:
    static std::string strip_comment(const std::string& s) {
        size_t p = s.find_first_of("#;");
        return p == std::string::npos ? s : s.substr(0, p);
    }
    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }
    static double to_num(const std::string& sec, const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            throw config_error("config " + sec + "." + key + ": expected a number, got '" + v +
                               "'");
        }
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> sections_;
};

// Fully materialized experiment settings. Built-in defaults are the full-scale
// reference setup (6.2 km ring, 123 cells, 6 sensors, n = 10, n_d + 1 = 100,
// 500 epochs); config files override from there.
struct ExperimentConfig {
    uint64_t seed = 42;
    std::string output_dir = "out";

    double ring_length = 6200.0;
    int grid_cells = 123;
    double kernel_bandwidth = 25.0;
    double dt_record = 1.0;
    KraussParams krauss;

    int sensor_count = 6;
    std::vector<int> sensor_cells;  // resolved: explicit list or equidistant
    double noise_sigma = 0.1;       // noisy-condition measurement noise
    GpConfig gp;

    int n = 10;
    int n_d = 99;

    std::vector<double> sim_densities{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    int scenarios_per_density = 20;
    int sim_record_steps = 2400;
    int warmup_steps = 300;
    bool sim_export_csv = false;

    int sol_lift = 16, sol_hidden = 128;
    std::vector<int> sol_widths{24, 24, 32, 32};
    std::vector<int> sol_modes{15, 12, 9, 9};
    int cor_lift = 16, cor_hidden = 128;
    std::vector<int> cor_widths{24, 32};
    std::vector<int> cor_modes{15, 9};

    TrainConfig train_solution;
    TrainConfig train_correction;
    int correction_pair_cap = 0;  // 0 = train the correction on every pair

    int horizon_steps = 200;
    double observe_density = 0.5;
    double observe_noise = 0.0;
    uint64_t test_seed_offset = 10000;
    std::string observe_mode = "cl";

    std::vector<double> eval_densities{0.3, 0.5, 0.7};
    int eval_seeds = 3;
    std::vector<std::string> eval_conditions{"noiseless", "noisy", "ood"};

    int n_out() const { return n_d + 1; }
    Grid grid() const { return Grid{grid_cells, ring_length / grid_cells}; }
    // Record length that feeds an observer run: initialization history plus
    // horizon plus the truth step for the last emitted estimate.
    int observe_record_steps() const { return n_d + n + horizon_steps; }

    FnoArch solution_arch() const {
        FnoArch a = FnoArch::solution(n, n_out());
        a.lift_width = sol_lift;
        a.projection_hidden = sol_hidden;
        a.layer_widths = sol_widths;
        a.modes_per_layer = sol_modes;
        a.validate();
        return a;
    }

    FnoArch correction_arch() const {
        FnoArch a = FnoArch::correction(n_out());
        a.lift_width = cor_lift;
        a.projection_hidden = cor_hidden;
        a.layer_widths = cor_widths;
        a.modes_per_layer = cor_modes;
        a.modes_time.clear();
        int cap = (n_out() + 3) / 4;
        for (int m : a.modes_per_layer) a.modes_time.push_back(std::max(1, std::min(m, cap)));
        a.validate();
        return a;
    }

    ScenarioConfig scenario(double density, uint64_t scenario_seed, int record_steps,
                            double sigma = 0.0, bool ood = false) const {
        ScenarioConfig sc;
        sc.target_mean_density = density;
        sc.seed = scenario_seed;
        sc.warmup_steps = warmup_steps;
        sc.record_steps = record_steps;
        sc.dt_record = dt_record;
        sc.grid_cells = grid_cells;
        sc.sensor_cells = sensor_cells;
        sc.kernel_bandwidth = kernel_bandwidth;
        sc.noise_sigma = sigma;
        sc.ood = ood;
        sc.ring_length = ring_length;
        sc.params = krauss;
        return sc;
    }

    // Noiseless training scenarios: scenarios_per_density per listed density,
    // seeds derived from the global seed.
    std::vector<ScenarioConfig> training_scenarios() const {
        std::vector<ScenarioConfig> out;
        uint64_t index = 0;
        for (double density : sim_densities)
            for (int k = 0; k < scenarios_per_density; ++k)
                out.push_back(
                    scenario(density, Rng::mix(seed, 0x51A0000 + index++), sim_record_steps));
        return out;
    }

    ObserverConfig observer_config(ObserverMode mode) const {
        ObserverConfig oc;
        oc.n = n;
        oc.n_d = n_d;
        oc.grid = grid();
        oc.gp_cfg = gp;
        oc.horizon_steps = horizon_steps;
        oc.mode = mode;
        return oc;
    }

    // Evaluation scenarios use a disjoint seed stream from training.
    BenchmarkConfig benchmark_config() const {
        BenchmarkConfig bc;
        uint64_t index = 0;
        for (double density : eval_densities)
            for (int s = 0; s < eval_seeds; ++s)
                bc.scenarios.push_back(scenario(
                    density, Rng::mix(seed + test_seed_offset, 0x7E57000 + index++),
                    observe_record_steps()));
        bc.conditions = eval_conditions;
        bc.noise_sigma = noise_sigma;
        bc.obs = observer_config(ObserverMode::cl);
        return bc;
    }

    void validate() const {
        if (scenarios_per_density < 0 || eval_seeds < 0)
            throw config_error("config: scenario counts must be >= 0");
        scenario(0.5, 1, std::max(1, sim_record_steps)).validate();
        observer_config(ObserverMode::cl).validate();
        solution_arch();
        correction_arch();
        train_solution.validate();
        train_correction.validate();
        gp.validate();
        if (noise_sigma < 0 || observe_noise < 0)
            throw config_error("config: noise sigma must be >= 0");
        for (double d : sim_densities)
            if (d < 0 || d > 1)
                throw config_error("config simulate.densities: densities must be in [0,1]");
        for (double d : eval_densities)
            if (d < 0 || d > 1)
                throw config_error("config evaluate.densities: densities must be in [0,1]");
    }

    static ExperimentConfig from_file(const std::string& path) {
        return from_config(ConfigFile::parse_file(path));
    }

    static ExperimentConfig from_config(const ConfigFile& cf);
};

inline ExperimentConfig ExperimentConfig::from_config(const ConfigFile& cf) {
    static const std::set<std::string> known = {
        "experiment.seed", "experiment.output_dir",
        "ring.length", "ring.grid_cells", "ring.kernel_bandwidth", "ring.dt_record",
        "krauss.v_max", "krauss.accel", "krauss.decel", "krauss.reaction_time",
        "krauss.imperfection", "krauss.min_gap", "krauss.vehicle_length", "krauss.dt_micro",
        "sensors.count", "sensors.cells", "sensors.noise_sigma",
        "gp.length_scale", "gp.signal_variance", "gp.noise_variance",
        "window.n", "window.n_d",
        "simulate.densities", "simulate.scenarios_per_density", "simulate.record_steps",
        "simulate.warmup_steps", "simulate.export_csv",
        "solution.lift_width", "solution.widths", "solution.modes", "solution.projection_hidden",
        "correction.lift_width", "correction.widths", "correction.modes",
        "correction.projection_hidden",
        "train_solution.epochs", "train_solution.learning_rate", "train_solution.batch_size",
        "train_solution.validation_fraction", "train_solution.checkpoint_every",
        "train_correction.epochs", "train_correction.learning_rate",
        "train_correction.batch_size", "train_correction.validation_fraction",
        "train_correction.checkpoint_every", "train_correction.gp_sample_mode",
        "train_correction.pair_cap",
        "observe.horizon_steps", "observe.density", "observe.noise_sigma", "observe.mode",
        "observe.test_seed_offset",
        "evaluate.densities", "evaluate.seeds", "evaluate.conditions",
    };
    cf.check_known(known);

    ExperimentConfig c;
    c.seed = cf.uinteger("experiment", "seed", c.seed);
    c.output_dir = cf.str("experiment", "output_dir", c.output_dir);

    c.ring_length = cf.num("ring", "length", c.ring_length);
    c.grid_cells = cf.integer("ring", "grid_cells", c.grid_cells);
    c.kernel_bandwidth = cf.num("ring", "kernel_bandwidth", c.kernel_bandwidth);
    c.dt_record = cf.num("ring", "dt_record", c.dt_record);

    c.krauss.v_max = cf.num("krauss", "v_max", c.krauss.v_max);
    c.krauss.accel = cf.num("krauss", "accel", c.krauss.accel);
    c.krauss.decel = cf.num("krauss", "decel", c.krauss.decel);
    c.krauss.reaction_time = cf.num("krauss", "reaction_time", c.krauss.reaction_time);
    c.krauss.imperfection = cf.num("krauss", "imperfection", c.krauss.imperfection);
    c.krauss.min_gap = cf.num("krauss", "min_gap", c.krauss.min_gap);
    c.krauss.vehicle_length = cf.num("krauss", "vehicle_length", c.krauss.vehicle_length);
    c.krauss.dt_micro = cf.num("krauss", "dt_micro", c.krauss.dt_micro);

    c.sensor_count = cf.integer("sensors", "count", c.sensor_count);
    c.noise_sigma = cf.num("sensors", "noise_sigma", c.noise_sigma);
    if (cf.has("sensors", "cells")) {
        c.sensor_cells = cf.int_list("sensors", "cells", {});
    } else {
        if (c.sensor_count < 1 || c.sensor_count > c.grid_cells)
            throw config_error("config sensors.count: must be in [1, grid_cells]");
        c.sensor_cells = equidistant_sensors(c.grid_cells, c.sensor_count);
    }

    c.gp.length_scale = cf.num("gp", "length_scale", c.gp.length_scale);
    c.gp.signal_variance = cf.num("gp", "signal_variance", c.gp.signal_variance);
    c.gp.noise_variance = cf.num("gp", "noise_variance", c.gp.noise_variance);

    c.n = cf.integer("window", "n", c.n);
    c.n_d = cf.integer("window", "n_d", c.n_d);

    c.sim_densities = cf.num_list("simulate", "densities", c.sim_densities);
    c.scenarios_per_density =
        cf.integer("simulate", "scenarios_per_density", c.scenarios_per_density);
    c.sim_record_steps = cf.integer("simulate", "record_steps", c.sim_record_steps);
    c.warmup_steps = cf.integer("simulate", "warmup_steps", c.warmup_steps);
    c.sim_export_csv = cf.flag("simulate", "export_csv", c.sim_export_csv);

    c.sol_lift = cf.integer("solution", "lift_width", c.sol_lift);
    c.sol_widths = cf.int_list("solution", "widths", c.sol_widths);
    c.sol_modes = cf.int_list("solution", "modes", c.sol_modes);
    c.sol_hidden = cf.integer("solution", "projection_hidden", c.sol_hidden);
    c.cor_lift = cf.integer("correction", "lift_width", c.cor_lift);
    c.cor_widths = cf.int_list("correction", "widths", c.cor_widths);
    c.cor_modes = cf.int_list("correction", "modes", c.cor_modes);
    c.cor_hidden = cf.integer("correction", "projection_hidden", c.cor_hidden);

    c.train_solution.epochs = cf.integer("train_solution", "epochs", 500);
    c.train_solution.learning_rate = cf.num("train_solution", "learning_rate", 1e-3);
    c.train_solution.batch_size = cf.integer("train_solution", "batch_size", 32);
    c.train_solution.validation_fraction =
        cf.num("train_solution", "validation_fraction", 0.1);
    c.train_solution.checkpoint_every = cf.integer("train_solution", "checkpoint_every", 50);

    c.train_correction.epochs = cf.integer("train_correction", "epochs", 500);
    c.train_correction.learning_rate = cf.num("train_correction", "learning_rate", 1e-3);
    c.train_correction.batch_size = cf.integer("train_correction", "batch_size", 32);
    c.train_correction.validation_fraction =
        cf.num("train_correction", "validation_fraction", 0.1);
    c.train_correction.checkpoint_every =
        cf.integer("train_correction", "checkpoint_every", 50);
    c.correction_pair_cap = cf.integer("train_correction", "pair_cap", 0);
    std::string mode = cf.str("train_correction", "gp_sample_mode", "fresh");
    if (mode == "fresh")
        c.train_correction.gp_sample_mode = GpSampleMode::fresh_per_presentation;
    else if (mode == "per_pair")
        c.train_correction.gp_sample_mode = GpSampleMode::fixed_per_pair;
    else
        throw config_error("config train_correction.gp_sample_mode: expected fresh or per_pair");

    c.horizon_steps = cf.integer("observe", "horizon_steps", c.horizon_steps);
    c.observe_density = cf.num("observe", "density", c.observe_density);
    c.observe_noise = cf.num("observe", "noise_sigma", c.observe_noise);
    c.observe_mode = cf.str("observe", "mode", c.observe_mode);
    c.test_seed_offset = cf.uinteger("observe", "test_seed_offset", c.test_seed_offset);

    c.eval_densities = cf.num_list("evaluate", "densities", c.eval_densities);
    c.eval_seeds = cf.integer("evaluate", "seeds", c.eval_seeds);
    c.eval_conditions = cf.str_list("evaluate", "conditions", c.eval_conditions);

    c.validate();
    return c;
}

}  // namespace ringobs
