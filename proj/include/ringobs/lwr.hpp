#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ringobs/common.hpp"

namespace ringobs {

// Fundamental diagram. Greenshields is the only built-in: Q(rho) = v_f * rho * (1 - rho),
// concave on [0,1] with Q(0) = Q(1) = 0 and critical density 1/2.
struct FluxModel {
    enum class Kind { greenshields };
    Kind kind = Kind::greenshields;
    double v_free = 15.0;  // m/s
    double rho_max = 1.0;  // normalized

    double critical_density() const { return 0.5; }
    // max |Q'(rho)| over [0,1]; Greenshields: v_f at the endpoints.
    double max_wave_speed() const { return v_free; }
};

struct LwrConfig {
    FluxModel flux;
    double dx = 50.0;  // m
    double dt = 1.0;   // s
    int steps = 0;
};

inline double flux_value(const FluxModel& flux, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw config_error("flux_value: density " + std::to_string(rho) + " outside [0,1]");
    return flux.v_free * rho * (1.0 - rho);
}

// Exact Riemann (Godunov) flux for concave Q:
// min over [rho_l, rho_r] when rho_l <= rho_r, max over [rho_r, rho_l] otherwise.
inline double godunov_flux(const FluxModel& flux, double rho_l, double rho_r) {
    if (rho_l <= rho_r) {
        return std::min(flux_value(flux, rho_l), flux_value(flux, rho_r));
    }
    double rc = flux.critical_density();
    if (rho_r <= rc && rc <= rho_l) return flux_value(flux, rc);
    return std::max(flux_value(flux, rho_l), flux_value(flux, rho_r));
}

inline void check_cfl(const LwrConfig& cfg) {
    if (cfg.dt * cfg.flux.max_wave_speed() > cfg.dx)
        throw config_error("godunov: CFL violated, dt*max|Q'| = " +
                           std::to_string(cfg.dt * cfg.flux.max_wave_speed()) +
                           " > dx = " + std::to_string(cfg.dx));
}

inline DensityField godunov_step(const DensityField& field, const LwrConfig& cfg) {
    check_cfl(cfg);
    const int n = field.cells();
    DensityField out;
    out.dx = field.dx;
    out.values.resize(n);
    const double lam = cfg.dt / cfg.dx;
    // F[i] = flux across the interface between cell i and cell i+1.
    std::vector<double> F(n);
    for (int i = 0; i < n; ++i) {
        int ip = (i + 1) % n;
        F[i] = godunov_flux(cfg.flux, field.values[i], field.values[ip]);
    }
    for (int i = 0; i < n; ++i) {
        int im = (i - 1 + n) % n;
        out.values[i] = field.values[i] - lam * (F[i] - F[im]);
    }
    return out;
}

inline Trajectory solve_ivp(const DensityField& rho0, const LwrConfig& cfg) {
    Trajectory traj;
    traj.dt = cfg.dt;
    traj.fields.reserve(cfg.steps + 1);
    traj.fields.push_back(rho0);
    DensityField cur = rho0;
    for (int s = 0; s < cfg.steps; ++s) {
        cur = godunov_step(cur, cfg);
        traj.fields.push_back(cur);
    }
    return traj;
}

}  // namespace ringobs
