#include <catch_amalgamated.hpp>

#include <cmath>

#include "ringobs/lwr.hpp"

using namespace ringobs;

namespace {

DensityField make_field(int cells, double dx, double value) {
    DensityField f;
    f.dx = dx;
    f.values.assign(cells, value);
    return f;
}

double total_mass(const DensityField& f) {
    double m = 0.0;
    for (double v : f.values) m += v;
    return m * f.dx;
}

}  // namespace

TEST_CASE("greenshields flux endpoints and midpoint") {
    FluxModel flux;
    flux.v_free = 15.0;
    CHECK(flux_value(flux, 0.0) == 0.0);
    CHECK(flux_value(flux, 1.0) == 0.0);
    CHECK(flux_value(flux, 0.5) == Catch::Approx(3.75).margin(1e-14));
    CHECK_THROWS_AS(flux_value(flux, -0.01), config_error);
    CHECK_THROWS_AS(flux_value(flux, 1.01), config_error);
}

TEST_CASE("greenshields flux is concave with zero boundary flow") {
    FluxModel flux;
    for (int i = 0; i <= 100; ++i) {
        double a = i / 100.0;
        // Chord below the curve at the midpoint.
        double mid = flux_value(flux, 0.5 * a);
        CHECK(mid >= 0.5 * (flux_value(flux, 0.0) + flux_value(flux, a)) - 1e-12);
    }
}

TEST_CASE("godunov step leaves constant states unchanged") {
    LwrConfig cfg;
    cfg.dx = 50.0;
    cfg.dt = 1.0;
    for (double c : {0.0, 0.3, 0.5, 0.9, 1.0}) {
        DensityField f = make_field(64, cfg.dx, c);
        DensityField g = godunov_step(f, cfg);
        for (double v : g.values) CHECK(v == Catch::Approx(c).margin(1e-14));
    }
}

TEST_CASE("godunov conserves mass to 1e-12 per step") {
    LwrConfig cfg;
    cfg.dx = 20.0;
    cfg.dt = 1.0;
    DensityField f = make_field(128, cfg.dx, 0.0);
    for (int i = 0; i < 128; ++i)
        f.values[i] = 0.5 + 0.4 * std::sin(2.0 * M_PI * i / 128.0) *
                                std::cos(6.0 * M_PI * i / 128.0);
    double m0 = total_mass(f);
    for (int s = 0; s < 200; ++s) {
        f = godunov_step(f, cfg);
        CHECK(std::fabs(total_mass(f) - m0) <= 1e-12 * std::max(1.0, std::fabs(m0)));
    }
}

TEST_CASE("godunov rejects CFL violations") {
    LwrConfig cfg;
    cfg.dx = 10.0;
    cfg.dt = 1.0;  // v_free 15 > dx/dt
    DensityField f = make_field(32, cfg.dx, 0.5);
    CHECK_THROWS_AS(godunov_step(f, cfg), config_error);
}

TEST_CASE("symmetric Riemann pair gives a stationary shock") {
    // Q(0.2) = Q(0.8) for Greenshields, so the jump speed is zero; the
    // transition layer must stay within one cell of where it started.
    LwrConfig cfg;
    cfg.dx = 20.0;
    cfg.dt = 1.0;
    const int n = 512;
    DensityField f = make_field(n, cfg.dx, 0.2);
    for (int i = n / 4; i < 3 * n / 4; ++i) f.values[i] = 0.8;
    auto layer_mid = [&](const DensityField& field) {
        // Midpoint of the upward transition around i = n/4: first index with
        // value crossing 0.5.
        for (int i = 0; i < n; ++i) {
            if (field.values[i] < 0.5 && field.values[(i + 1) % n] >= 0.5) {
                double a = field.values[i], b = field.values[(i + 1) % n];
                return i + (0.5 - a) / (b - a);
            }
        }
        return -1.0;
    };
    double start = layer_mid(f);
    REQUIRE(start >= 0.0);
    for (int s = 0; s < 100; ++s) f = godunov_step(f, cfg);
    double end = layer_mid(f);
    REQUIRE(end >= 0.0);
    CHECK(std::fabs(end - start) <= 1.0);
}

TEST_CASE("solve_ivp returns the initial field for zero steps") {
    LwrConfig cfg;
    cfg.dx = 50.0;
    cfg.dt = 1.0;
    cfg.steps = 0;
    DensityField f = make_field(32, cfg.dx, 0.4);
    Trajectory traj = solve_ivp(f, cfg);
    REQUIRE(traj.steps() == 1);
    CHECK(traj.fields[0].values == f.values);
}

TEST_CASE("solve_ivp obeys the maximum principle") {
    LwrConfig cfg;
    cfg.dx = 25.0;
    cfg.dt = 1.0;
    cfg.steps = 300;
    const int n = 96;
    DensityField f = make_field(n, cfg.dx, 0.0);
    for (int i = 0; i < n; ++i) f.values[i] = 0.45 + 0.35 * std::sin(2.0 * M_PI * i / n);
    double lo = *std::min_element(f.values.begin(), f.values.end());
    double hi = *std::max_element(f.values.begin(), f.values.end());
    Trajectory traj = solve_ivp(f, cfg);
    REQUIRE(traj.steps() == cfg.steps + 1);
    for (const DensityField& field : traj.fields)
        for (double v : field.values) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
}

TEST_CASE("godunov self-converges against a refined grid") {
    // Smooth data, short horizon: the 4x finer solution downsampled should be
    // close, and halving dx should shrink the discrepancy.
    auto run = [](int cells, double dx, double t_end) {
        LwrConfig cfg;
        cfg.dx = dx;
        cfg.dt = 0.2 * dx / 15.0;  // fixed CFL number
        cfg.steps = static_cast<int>(std::lround(t_end / cfg.dt));
        DensityField f;
        f.dx = dx;
        f.values.resize(cells);
        for (int i = 0; i < cells; ++i)
            f.values[i] = 0.5 + 0.2 * std::sin(2.0 * M_PI * (i + 0.5) / cells);
        return solve_ivp(f, cfg).fields.back();
    };
    const double length = 6400.0, t_end = 40.0;
    auto error_vs_fine = [&](int cells) {
        DensityField coarse = run(cells, length / cells, t_end);
        DensityField fine = run(4 * cells, length / (4 * cells), t_end);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < cells; ++i) {
            // Cell i covers fine cells 4i..4i+3; compare against their mean.
            double avg = 0.25 * (fine.values[4 * i] + fine.values[4 * i + 1] +
                                 fine.values[4 * i + 2] + fine.values[4 * i + 3]);
            double d = coarse.values[i] - avg;
            num += d * d;
            den += avg * avg;
        }
        return std::sqrt(num / den);
    };
    double e128 = error_vs_fine(128);
    double e256 = error_vs_fine(256);
    CHECK(e128 < 0.02);
    // Order >= 0.7 between the two refinement levels.
    CHECK(std::log2(e128 / e256) >= 0.7);
}
