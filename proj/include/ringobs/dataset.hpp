#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ringobs/binio.hpp"
#include "ringobs/common.hpp"
#include "ringobs/ring_sim.hpp"

namespace ringobs {

// One recorded scenario: full density trajectory plus the sensor view of it.
struct DatasetScenario {
    uint64_t seed = 0;
    double target_density = 0.0;
    bool ood = false;
    std::string source = "krauss";  // generator tag: "krauss" or "lwr"
    Trajectory trajectory;
    SensorRecord sensors;
};

// On-disk training/evaluation container. Layout:
//   magic "RINGDS01"
//   u64 metadata length, metadata (grid, dt, window sizes, scenario descriptors)
//   per scenario: u64 count + f64 trajectory values (step-major),
//                 u64 count + f64 sensor readings (step-major)
struct Dataset {
    int grid_cells = 0;
    double dx = 1.0;
    double dt = 1.0;
    int n = 0;      // operator input window
    int n_out = 0;  // operator prediction horizon
    std::vector<DatasetScenario> scenarios;

    Grid grid() const { return Grid{grid_cells, dx}; }
};

inline std::string encode_dataset(const Dataset& ds) {
    std::string meta;
    detail::put_u32(meta, static_cast<uint32_t>(ds.grid_cells));
    detail::put_f64(meta, ds.dx);
    detail::put_f64(meta, ds.dt);
    detail::put_u32(meta, static_cast<uint32_t>(ds.n));
    detail::put_u32(meta, static_cast<uint32_t>(ds.n_out));
    detail::put_u32(meta, static_cast<uint32_t>(ds.scenarios.size()));
    for (const DatasetScenario& sc : ds.scenarios) {
        detail::put_u64(meta, sc.seed);
        detail::put_f64(meta, sc.target_density);
        detail::put_u8(meta, sc.ood ? 1 : 0);
        detail::put_str(meta, sc.source);
        detail::put_f64(meta, sc.sensors.noise_sigma);
        detail::put_u32(meta, static_cast<uint32_t>(sc.trajectory.steps()));
        detail::put_u32(meta, static_cast<uint32_t>(sc.sensors.sensor_cells.size()));
        for (int c : sc.sensors.sensor_cells) detail::put_u32(meta, static_cast<uint32_t>(c));
    }

    std::string buf = "RINGDS01";
    detail::put_str(buf, meta);
    for (const DatasetScenario& sc : ds.scenarios) {
        detail::put_u64(buf, static_cast<uint64_t>(sc.trajectory.steps()) * ds.grid_cells);
        for (const DensityField& f : sc.trajectory.fields) {
            if (f.cells() != ds.grid_cells) throw shape_error("encode_dataset: field size mismatch");
            for (double v : f.values) detail::put_f64(buf, v);
        }
        detail::put_u64(buf, static_cast<uint64_t>(sc.sensors.steps()) *
                                 sc.sensors.sensor_cells.size());
        for (const auto& row : sc.sensors.readings)
            for (double v : row) detail::put_f64(buf, v);
    }
    return buf;
}

inline Dataset decode_dataset(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(8) != "RINGDS01") throw data_error("dataset: bad magic");
    std::string meta = r.str();
    detail::ByteReader mr(meta);
    Dataset ds;
    ds.grid_cells = static_cast<int>(mr.u32());
    ds.dx = mr.f64();
    ds.dt = mr.f64();
    ds.n = static_cast<int>(mr.u32());
    ds.n_out = static_cast<int>(mr.u32());
    uint32_t count = mr.u32();
    std::vector<uint32_t> step_counts(count);
    for (uint32_t i = 0; i < count; ++i) {
        DatasetScenario sc;
        sc.seed = mr.u64();
        sc.target_density = mr.f64();
        sc.ood = mr.u8() != 0;
        sc.source = mr.str();
        sc.sensors.noise_sigma = mr.f64();
        step_counts[i] = mr.u32();
        uint32_t sensors = mr.u32();
        for (uint32_t j = 0; j < sensors; ++j)
            sc.sensors.sensor_cells.push_back(static_cast<int>(mr.u32()));
        sc.sensors.seed = sc.seed;
        sc.trajectory.dt = ds.dt;
        ds.scenarios.push_back(std::move(sc));
    }
    for (uint32_t i = 0; i < count; ++i) {
        DatasetScenario& sc = ds.scenarios[i];
        uint64_t traj_count = r.u64();
        if (traj_count != static_cast<uint64_t>(step_counts[i]) * ds.grid_cells)
            throw shape_error("dataset: trajectory array size mismatch");
        sc.trajectory.fields.resize(step_counts[i]);
        for (uint32_t s = 0; s < step_counts[i]; ++s) {
            DensityField& f = sc.trajectory.fields[s];
            f.dx = ds.dx;
            f.values.resize(ds.grid_cells);
            for (int c = 0; c < ds.grid_cells; ++c) f.values[c] = r.f64();
        }
        uint64_t read_count = r.u64();
        size_t m = sc.sensors.sensor_cells.size();
        if (m == 0 ? read_count != 0 : read_count % m != 0)
            throw shape_error("dataset: sensor array size mismatch");
        uint64_t steps = m == 0 ? 0 : read_count / m;
        sc.sensors.readings.assign(steps, std::vector<double>(m));
        for (uint64_t s = 0; s < steps; ++s)
            for (size_t j = 0; j < m; ++j) sc.sensors.readings[s][j] = r.f64();
    }
    if (r.remaining() != 0) throw data_error("dataset: trailing bytes");
    return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    detail::write_file(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) {
    return decode_dataset(detail::read_file(path));
}

// Long-format CSV dump of all trajectories, for spot-checking outside the
// binary container.
inline void export_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "scenario,step,cell,density\n";
    for (size_t i = 0; i < ds.scenarios.size(); ++i) {
        const Trajectory& traj = ds.scenarios[i].trajectory;
        for (int s = 0; s < traj.steps(); ++s)
            for (int c = 0; c < ds.grid_cells; ++c)
                f << i << ',' << s << ',' << c << ',' << traj.fields[s].values[c] << '\n';
    }
    if (!f) throw data_error("short write: " + path);
}

}  // namespace ringobs
