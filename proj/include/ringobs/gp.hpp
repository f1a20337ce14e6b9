#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/ring_sim.hpp"
#include "ringobs/rng.hpp"

namespace ringobs {

// Squared-exponential GP on the unit circle; length_scale is a fraction of the
// ring, so the same config works across physical ring lengths.
struct GpConfig {
    double length_scale = 0.15;
    double signal_variance = 0.25;
    double noise_variance = 1e-4;

    void validate() const {
        if (length_scale <= 0 || signal_variance <= 0)
            throw config_error("GpConfig: length_scale and signal_variance must be positive");
        if (noise_variance < 0) throw config_error("GpConfig: noise_variance must be >= 0");
    }
};

namespace detail {

// Periodized squared-exponential kernel.  Applying the line kernel to the arc
// distance directly is not positive definite on a circle (the distance kink at
// the antipode puts negative mass into the spectrum); summing the line kernel
// over integer wraps keeps every Fourier coefficient a sample of the Gaussian
// spectral density, hence >= 0 for any length scale.  Three wraps bound the
// truncation error by exp(-6/length_scale^2), far below the jitter floor for
// the sub-ring length scales used here.
inline double ring_kernel(double a, double b, const GpConfig& cfg) {
    double d = ring_distance(a, b, 1.0);
    double inv2l2 = 1.0 / (2.0 * cfg.length_scale * cfg.length_scale);
    double s = 0.0;
    for (int w = -3; w <= 3; ++w) {
        double u = d + w;
        s += std::exp(-u * u * inv2l2);
    }
    return cfg.signal_variance * s;
}

// Cholesky with an escalating diagonal jitter: the smooth kernel's spectrum
// decays below machine precision on dense grids, so the factorization of a
// grid-sized covariance needs a small positive shift.
inline Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& K, const char* what) {
    double scale = K.diagonal().mean();
    for (double jitter = 0.0; jitter <= 1.1e-6; jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0) {
        Eigen::MatrixXd Kj = K;
        Kj.diagonal().array() += jitter * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(Kj);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw numeric_error(std::string(what) + ": covariance not positive definite after jitter");
}

}  // namespace detail

// Posterior of the ring GP conditioned at fixed sensor locations, evaluated at
// fixed grid cell centers. Factorizations are done once in the constructor, so
// per-time-step conditioning on fresh readings is a pair of small mat-vecs.
class GpInterpolator {
public:
    GpInterpolator(const std::vector<int>& sensor_cells, const Grid& grid, const GpConfig& cfg)
        : grid_(grid), cfg_(cfg), sensor_cells_(sensor_cells) {
        cfg.validate();
        const int m = static_cast<int>(sensor_cells.size());
        if (m == 0) throw config_error("GpInterpolator: need at least one sensor");
        locations_.resize(m);
        for (int i = 0; i < m; ++i) {
            if (sensor_cells[i] < 0 || sensor_cells[i] >= grid.cells)
                throw config_error("GpInterpolator: sensor cell outside grid");
            locations_[i] = (sensor_cells[i] + 0.5) / grid.cells;
        }
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j)
                if (ring_distance(locations_[i], locations_[j], 1.0) < 1e-12)
                    throw config_error("GpInterpolator: duplicate sensor locations");

        Eigen::MatrixXd K(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                K(i, j) = detail::ring_kernel(locations_[i], locations_[j], cfg);
        K.diagonal().array() += cfg.noise_variance;
        llt_ = detail::robust_llt(K, "GpInterpolator");

        kstar_.resize(grid.cells, m);
        for (int c = 0; c < grid.cells; ++c) {
            double x = (c + 0.5) / grid.cells;
            for (int j = 0; j < m; ++j) kstar_(c, j) = detail::ring_kernel(x, locations_[j], cfg);
        }

        // Posterior covariance over the grid, factored once for sampling.
        Eigen::MatrixXd Kgg(grid.cells, grid.cells);
        for (int a = 0; a < grid.cells; ++a)
            for (int b = 0; b < grid.cells; ++b)
                Kgg(a, b) = detail::ring_kernel((a + 0.5) / grid.cells, (b + 0.5) / grid.cells, cfg);
        Eigen::MatrixXd post = Kgg - kstar_ * llt_.solve(kstar_.transpose());
        post = 0.5 * (post + post.transpose());
        lpost_ = detail::robust_llt(post, "GpInterpolator posterior").matrixL();
    }

    const Grid& grid() const { return grid_; }
    const std::vector<int>& sensor_cells() const { return sensor_cells_; }
    int sensor_count() const { return static_cast<int>(locations_.size()); }

    // Posterior mean field (zero prior mean), clipped to valid densities.
    DensityField posterior_mean(const std::vector<double>& readings) const {
        Eigen::VectorXd mu = mean_vector(readings);
        DensityField field;
        field.dx = grid_.dx;
        field.values.resize(grid_.cells);
        for (int c = 0; c < grid_.cells; ++c) field.values[c] = clamp01(mu(c));
        return field;
    }

    // Posterior draw: mean + L_post z. Deterministic given seed.
    DensityField sample(const std::vector<double>& readings, uint64_t seed) const {
        Eigen::VectorXd mu = mean_vector(readings);
        Rng rng(seed);
        Eigen::VectorXd z(grid_.cells);
        for (int c = 0; c < grid_.cells; ++c) z(c) = rng.normal();
        Eigen::VectorXd draw = mu + lpost_ * z;
        DensityField field;
        field.dx = grid_.dx;
        field.values.resize(grid_.cells);
        for (int c = 0; c < grid_.cells; ++c) field.values[c] = clamp01(draw(c));
        return field;
    }

    // Stack of per-step posterior means for record steps
    // [first_step, first_step + count), oldest first.
    FieldStack window_means(const SensorRecord& rec, long first_step, int count) const {
        check_record(rec);
        FieldStack stack(count, grid_.cells, grid_.dx);
        for (int r = 0; r < count; ++r) {
            long s = first_step + r;
            if (!rec.has_step(s))
                throw data_error("window_means: record has no step " + std::to_string(s));
            Eigen::VectorXd mu = mean_vector(rec.readings[s]);
            double* row = stack.row(r);
            for (int c = 0; c < grid_.cells; ++c) row[c] = clamp01(mu(c));
        }
        return stack;
    }

private:
    void check_record(const SensorRecord& rec) const {
        if (static_cast<int>(rec.sensor_cells.size()) != sensor_count())
            throw shape_error("GpInterpolator: record sensor count mismatch");
    }

    Eigen::VectorXd mean_vector(const std::vector<double>& readings) const {
        if (static_cast<int>(readings.size()) != sensor_count())
            throw shape_error("GpInterpolator: reading count mismatch");
        Eigen::Map<const Eigen::VectorXd> y(readings.data(), readings.size());
        return kstar_ * llt_.solve(y);
    }

    Grid grid_;
    GpConfig cfg_;
    std::vector<int> sensor_cells_;
    std::vector<double> locations_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::MatrixXd kstar_;
    Eigen::MatrixXd lpost_;
};

enum class GpWindowMode { mean, sample };

// Interpolates the requested record steps into a newest-first state window.
// Sample mode draws each slice with a seed derived from (seed, step).
inline StateWindow interpolate_window(const SensorRecord& rec, std::vector<long> steps,
                                      const Grid& grid, const GpConfig& cfg,
                                      GpWindowMode mode = GpWindowMode::mean,
                                      uint64_t seed = 0) {
    if (steps.empty()) throw config_error("interpolate_window: no steps requested");
    std::sort(steps.begin(), steps.end(), std::greater<long>());
    GpInterpolator gp(rec.sensor_cells, grid, cfg);
    StateWindow w(static_cast<int>(steps.size()), grid.cells, grid.dx);
    for (size_t r = 0; r < steps.size(); ++r) {
        if (!rec.has_step(steps[r]))
            throw data_error("interpolate_window: record has no step " +
                             std::to_string(steps[r]));
        DensityField f = mode == GpWindowMode::mean
                             ? gp.posterior_mean(rec.readings[steps[r]])
                             : gp.sample(rec.readings[steps[r]],
                                         Rng::mix(seed, static_cast<uint64_t>(steps[r])));
        std::copy(f.values.begin(), f.values.end(), w.row(static_cast<int>(r)));
    }
    return w;
}

}  // namespace ringobs
