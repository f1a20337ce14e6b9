#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringobs {

// Uniform periodic grid on a ring of length cells*dx meters.
struct Grid {
    int cells = 0;
    double dx = 1.0;

    double length() const { return cells * dx; }
    // Cell-center coordinate in meters.
    double center(int i) const { return (i + 0.5) * dx; }
    int wrap(int i) const {
        int m = i % cells;
        return m < 0 ? m + cells : m;
    }
};

// One spatial density snapshot, values in [0,1], periodic by construction.
struct DensityField {
    std::vector<double> values;
    double dx = 1.0;

    int cells() const { return static_cast<int>(values.size()); }
};

// Dense stack of `rows` fields over `cols` grid cells, row-major.
// Used both for operator input windows (newest-first slices) and for
// prediction stacks (slices in increasing time order).
struct FieldStack {
    int rows = 0;
    int cols = 0;
    double dx = 1.0;
    std::vector<double> data;

    FieldStack() = default;
    FieldStack(int r, int c, double dx_ = 1.0)
        : rows(r), cols(c), dx(dx_), data(static_cast<size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Operator input window: n consecutive snapshots, newest-first.
using StateWindow = FieldStack;

// Sequence of density snapshots with uniform time spacing.
struct Trajectory {
    std::vector<DensityField> fields;
    double t0 = 0.0;
    double dt = 1.0;

    int steps() const { return static_cast<int>(fields.size()); }
};

// Configuration / feasibility problems (CLI exit code 2).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or checkpoint/arch compatibility problems (CLI exit code 4).
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing or inconsistent input data (absent measurement steps etc.).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure (factorization breakdown, NaN loss).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline void clip01(std::vector<double>& v) {
    for (double& x : v) x = clamp01(x);
}

// Circular (shortest-way) distance between a and b on a ring of length L.
inline double ring_distance(double a, double b, double L) {
    double d = std::fabs(a - b);
    d = std::fmod(d, L);
    return std::min(d, L - d);
}

inline double wrap_position(double x, double L) {
    double m = std::fmod(x, L);
    return m < 0.0 ? m + L : m;
}

}  // namespace ringobs
