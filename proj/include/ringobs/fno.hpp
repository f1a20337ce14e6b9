#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ringobs/common.hpp"
#include "ringobs/rng.hpp"

namespace ringobs {

// ---------------------------------------------------------------------------
// Truncated Fourier transforms (one-sided, real-signal convention).
//
// Forward:  c_k = (1/N) sum_j v_j exp(-2*pi*i*j*k/N),  k = 0..k_max-1
// Inverse:  v_j = Re( sum_k m(k) c_k exp(+2*pi*i*j*k/N) ),  m(0)=1, m(k>0)=2
//
// The normalization makes mode 0 the signal mean, independent of grid size,
// which is what lets one set of spectral weights act across resolutions.
// ---------------------------------------------------------------------------

struct Spectrum {
    std::vector<double> re, im;

    int modes() const { return static_cast<int>(re.size()); }
};

// cos/sin(2*pi*j*k/N) lookup for j in [0,N), k in [0,modes). The angle is
// reduced with (j*k) mod N before evaluation so large j*k loses no precision.
class TrigTable {
public:
    TrigTable() = default;
    TrigTable(int n, int modes) : n_(n), modes_(modes) {
        cos_.resize(static_cast<size_t>(n) * modes);
        sin_.resize(static_cast<size_t>(n) * modes);
        const double step = 2.0 * 3.14159265358979323846 / n;
        for (int k = 0; k < modes; ++k)
            for (int j = 0; j < n; ++j) {
                double a = step * ((static_cast<long>(j) * k) % n);
                cos_[static_cast<size_t>(k) * n + j] = std::cos(a);
                sin_[static_cast<size_t>(k) * n + j] = std::sin(a);
            }
    }

    int size() const { return n_; }
    int modes() const { return modes_; }
    double c(int k, int j) const { return cos_[static_cast<size_t>(k) * n_ + j]; }
    double s(int k, int j) const { return sin_[static_cast<size_t>(k) * n_ + j]; }

private:
    int n_ = 0, modes_ = 0;
    std::vector<double> cos_, sin_;
};

// Per-grid-size table cache; keeping one per run amortizes trig setup across
// every layer and sample at that resolution.
class TrigCache {
public:
    const TrigTable& get(int n, int min_modes) {
        TrigTable& t = tabs_[n];
        if (t.modes() < min_modes) t = TrigTable(n, min_modes);
        return t;
    }

private:
    std::map<int, TrigTable> tabs_;
};

struct FnoWorkspace {
    TrigCache trig;
};

namespace detail {

inline void require_resolvable(int grid, int modes, const char* what) {
    // Excludes the Nyquist mode so every kept coefficient has a full
    // conjugate partner and the one-sided reconstruction stays exact.
    if (grid < 2 * modes - 1)
        throw shape_error(std::string(what) + ": grid " + std::to_string(grid) +
                          " cannot resolve " + std::to_string(modes) + " one-sided modes");
}

}  // namespace detail

inline Spectrum dft_truncate(const std::vector<double>& values, int k_max) {
    const int n = static_cast<int>(values.size());
    if (k_max < 1) throw shape_error("dft_truncate: k_max must be >= 1");
    detail::require_resolvable(n, k_max, "dft_truncate");
    TrigTable tab(n, k_max);
    Spectrum s;
    s.re.assign(k_max, 0.0);
    s.im.assign(k_max, 0.0);
    for (int k = 0; k < k_max; ++k) {
        double re = 0.0, im = 0.0;
        for (int j = 0; j < n; ++j) {
            re += values[j] * tab.c(k, j);
            im -= values[j] * tab.s(k, j);
        }
        s.re[k] = re / n;
        s.im[k] = im / n;
    }
    return s;
}

// Band-limited reconstruction; grid_size may exceed the source resolution.
inline std::vector<double> idft(const Spectrum& s, int grid_size) {
    const int modes = s.modes();
    detail::require_resolvable(grid_size, modes, "idft");
    TrigTable tab(grid_size, modes);
    std::vector<double> v(grid_size, 0.0);
    for (int k = 0; k < modes; ++k) {
        double m = k == 0 ? 1.0 : 2.0;
        for (int j = 0; j < grid_size; ++j)
            v[j] += m * (s.re[k] * tab.c(k, j) - s.im[k] * tab.s(k, j));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Multi-channel spectral convolutions and their adjoints.
//
// Layouts (row-major throughout):
//   1D activations: x[ch*N + j]
//   1D weights:     R[(k*w_in + in)*w_out + out], separate re/im arrays
//   2D activations: x[ch*(Nt*Nx) + it*Nx + ix]
//   2D weights:     R[((kx*(2*mt-1) + kt)*w_in + in)*w_out + out],
//                   kt index 0..2*mt-2 encodes signed mode kt-(mt-1)
//
// All outputs accumulate (+=) so the spectral path can share a buffer with
// the pointwise linear path of a layer.
// ---------------------------------------------------------------------------

// y (w_out x N) += spectral conv of x (w_in x N). If coef is non-null it
// receives the truncated input spectrum (re block then im block, each
// modes*w_in) for later use by the adjoint.
inline void spectral_conv_1d(const double* x, int w_in, int w_out, int n, int modes,
                             const double* r_re, const double* r_im, const TrigTable& tab,
                             double* y, double* coef = nullptr) {
    detail::require_resolvable(n, modes, "spectral_conv_1d");
    std::vector<double> c_re(static_cast<size_t>(modes) * w_in);
    std::vector<double> c_im(static_cast<size_t>(modes) * w_in);
    const double inv_n = 1.0 / n;
    for (int in = 0; in < w_in; ++in) {
        const double* xi = x + static_cast<size_t>(in) * n;
        for (int k = 0; k < modes; ++k) {
            double re = 0.0, im = 0.0;
            for (int j = 0; j < n; ++j) {
                re += xi[j] * tab.c(k, j);
                im -= xi[j] * tab.s(k, j);
            }
            c_re[static_cast<size_t>(k) * w_in + in] = re * inv_n;
            c_im[static_cast<size_t>(k) * w_in + in] = im * inv_n;
        }
    }
    if (coef) {
        std::copy(c_re.begin(), c_re.end(), coef);
        std::copy(c_im.begin(), c_im.end(), coef + static_cast<size_t>(modes) * w_in);
    }
    std::vector<double> o_re(static_cast<size_t>(modes) * w_out, 0.0);
    std::vector<double> o_im(static_cast<size_t>(modes) * w_out, 0.0);
    for (int k = 0; k < modes; ++k) {
        const double* cr = c_re.data() + static_cast<size_t>(k) * w_in;
        const double* ci = c_im.data() + static_cast<size_t>(k) * w_in;
        double* orr = o_re.data() + static_cast<size_t>(k) * w_out;
        double* oi = o_im.data() + static_cast<size_t>(k) * w_out;
        const double* rr = r_re + static_cast<size_t>(k) * w_in * w_out;
        const double* ri = r_im + static_cast<size_t>(k) * w_in * w_out;
        for (int in = 0; in < w_in; ++in) {
            double ar = cr[in], ai = ci[in];
            const double* rrk = rr + static_cast<size_t>(in) * w_out;
            const double* rik = ri + static_cast<size_t>(in) * w_out;
            for (int out = 0; out < w_out; ++out) {
                orr[out] += rrk[out] * ar - rik[out] * ai;
                oi[out] += rrk[out] * ai + rik[out] * ar;
            }
        }
    }
    for (int out = 0; out < w_out; ++out) {
        double* yo = y + static_cast<size_t>(out) * n;
        for (int k = 0; k < modes; ++k) {
            double m = k == 0 ? 1.0 : 2.0;
            double orr = m * o_re[static_cast<size_t>(k) * w_out + out];
            double oi = m * o_im[static_cast<size_t>(k) * w_out + out];
            for (int j = 0; j < n; ++j) yo[j] += orr * tab.c(k, j) - oi * tab.s(k, j);
        }
    }
}

// Reverse-mode adjoint of spectral_conv_1d. coef is the cached input
// spectrum from the forward call; x_bar, r_re_bar, r_im_bar accumulate.
inline void spectral_conv_1d_adjoint(const double* y_bar, const double* coef, const double* r_re,
                                     const double* r_im, int w_in, int w_out, int n, int modes,
                                     const TrigTable& tab, double* x_bar, double* r_re_bar,
                                     double* r_im_bar) {
    const double* c_re = coef;
    const double* c_im = coef + static_cast<size_t>(modes) * w_in;
    std::vector<double> e_re(static_cast<size_t>(modes) * w_out);
    std::vector<double> e_im(static_cast<size_t>(modes) * w_out);
    for (int out = 0; out < w_out; ++out) {
        const double* yb = y_bar + static_cast<size_t>(out) * n;
        for (int k = 0; k < modes; ++k) {
            double m = k == 0 ? 1.0 : 2.0;
            double re = 0.0, im = 0.0;
            for (int j = 0; j < n; ++j) {
                re += yb[j] * tab.c(k, j);
                im -= yb[j] * tab.s(k, j);
            }
            e_re[static_cast<size_t>(k) * w_out + out] = m * re;
            e_im[static_cast<size_t>(k) * w_out + out] = m * im;
        }
    }
    std::vector<double> cb_re(static_cast<size_t>(modes) * w_in, 0.0);
    std::vector<double> cb_im(static_cast<size_t>(modes) * w_in, 0.0);
    for (int k = 0; k < modes; ++k) {
        const double* er = e_re.data() + static_cast<size_t>(k) * w_out;
        const double* ei = e_im.data() + static_cast<size_t>(k) * w_out;
        for (int in = 0; in < w_in; ++in) {
            double ar = c_re[static_cast<size_t>(k) * w_in + in];
            double ai = c_im[static_cast<size_t>(k) * w_in + in];
            size_t base = (static_cast<size_t>(k) * w_in + in) * w_out;
            double gr = 0.0, gi = 0.0;
            for (int out = 0; out < w_out; ++out) {
                // o = R*c (complex):  dR_re = e_re*c_re + e_im*c_im,
                // dR_im = -e_re*c_im + e_im*c_re, dc = conj(R)-weighted pull.
                r_re_bar[base + out] += er[out] * ar + ei[out] * ai;
                r_im_bar[base + out] += -er[out] * ai + ei[out] * ar;
                gr += er[out] * r_re[base + out] + ei[out] * r_im[base + out];
                gi += -er[out] * r_im[base + out] + ei[out] * r_re[base + out];
            }
            cb_re[static_cast<size_t>(k) * w_in + in] = gr;
            cb_im[static_cast<size_t>(k) * w_in + in] = gi;
        }
    }
    const double inv_n = 1.0 / n;
    for (int in = 0; in < w_in; ++in) {
        double* xb = x_bar + static_cast<size_t>(in) * n;
        for (int k = 0; k < modes; ++k) {
            double cr = cb_re[static_cast<size_t>(k) * w_in + in] * inv_n;
            double ci = cb_im[static_cast<size_t>(k) * w_in + in] * inv_n;
            for (int j = 0; j < n; ++j) xb[j] += cr * tab.c(k, j) - ci * tab.s(k, j);
        }
    }
}

// y (w_out x Nt x Nx) += 2D spectral conv of x (w_in x Nt x Nx). One-sided
// along x, signed modes along t; the Re() reconstruction keeps the output
// real. coef receives the cached input spectrum (re block then im block,
// each mx*(2*mt-1)*w_in).
inline void spectral_conv_2d(const double* x, int w_in, int w_out, int nx, int nt, int mx, int mt,
                             const double* r_re, const double* r_im, const TrigTable& tab_x,
                             const TrigTable& tab_t, double* y, double* coef = nullptr) {
    detail::require_resolvable(nx, mx, "spectral_conv_2d (x axis)");
    detail::require_resolvable(nt, mt, "spectral_conv_2d (t axis)");
    const int kt_count = 2 * mt - 1;
    const size_t plane = static_cast<size_t>(nt) * nx;
    // Stage 1: truncated transform along x.  t1[(kx*w_in+in)*nt + it]
    std::vector<double> t1_re(static_cast<size_t>(mx) * w_in * nt);
    std::vector<double> t1_im(static_cast<size_t>(mx) * w_in * nt);
    const double inv_nx = 1.0 / nx, inv_nt = 1.0 / nt;
    for (int kx = 0; kx < mx; ++kx)
        for (int in = 0; in < w_in; ++in) {
            const double* xc = x + static_cast<size_t>(in) * plane;
            size_t base = (static_cast<size_t>(kx) * w_in + in) * nt;
            for (int it = 0; it < nt; ++it) {
                const double* row = xc + static_cast<size_t>(it) * nx;
                double re = 0.0, im = 0.0;
                for (int ix = 0; ix < nx; ++ix) {
                    re += row[ix] * tab_x.c(kx, ix);
                    im -= row[ix] * tab_x.s(kx, ix);
                }
                t1_re[base + it] = re * inv_nx;
                t1_im[base + it] = im * inv_nx;
            }
        }
    // Stage 2: transform along t (signed modes).  c[((kx*kt_count)+kt)*w_in+in]
    std::vector<double> c_re(static_cast<size_t>(mx) * kt_count * w_in);
    std::vector<double> c_im(static_cast<size_t>(mx) * kt_count * w_in);
    for (int kx = 0; kx < mx; ++kx)
        for (int kt = 0; kt < kt_count; ++kt) {
            int ks = kt - (mt - 1);
            int ka = ks < 0 ? -ks : ks;
            double sgn = ks < 0 ? -1.0 : 1.0;
            for (int in = 0; in < w_in; ++in) {
                size_t src = (static_cast<size_t>(kx) * w_in + in) * nt;
                double re = 0.0, im = 0.0;
                for (int it = 0; it < nt; ++it) {
                    double cc = tab_t.c(ka, it), ss = sgn * tab_t.s(ka, it);
                    double ar = t1_re[src + it], ai = t1_im[src + it];
                    re += ar * cc + ai * ss;
                    im += ai * cc - ar * ss;
                }
                size_t dst = (static_cast<size_t>(kx) * kt_count + kt) * w_in + in;
                c_re[dst] = re * inv_nt;
                c_im[dst] = im * inv_nt;
            }
        }
    if (coef) {
        std::copy(c_re.begin(), c_re.end(), coef);
        std::copy(c_im.begin(), c_im.end(), coef + c_re.size());
    }
    // Mix channels per retained mode.
    std::vector<double> o_re(static_cast<size_t>(mx) * kt_count * w_out, 0.0);
    std::vector<double> o_im(static_cast<size_t>(mx) * kt_count * w_out, 0.0);
    for (size_t km = 0; km < static_cast<size_t>(mx) * kt_count; ++km) {
        const double* cr = c_re.data() + km * w_in;
        const double* ci = c_im.data() + km * w_in;
        double* orr = o_re.data() + km * w_out;
        double* oi = o_im.data() + km * w_out;
        const double* rr = r_re + km * w_in * w_out;
        const double* ri = r_im + km * w_in * w_out;
        for (int in = 0; in < w_in; ++in) {
            double ar = cr[in], ai = ci[in];
            const double* rrk = rr + static_cast<size_t>(in) * w_out;
            const double* rik = ri + static_cast<size_t>(in) * w_out;
            for (int out = 0; out < w_out; ++out) {
                orr[out] += rrk[out] * ar - rik[out] * ai;
                oi[out] += rrk[out] * ai + rik[out] * ar;
            }
        }
    }
    // Stage 3: inverse along t.  u[(kx*w_out+out)*nt + it]
    std::vector<double> u_re(static_cast<size_t>(mx) * w_out * nt, 0.0);
    std::vector<double> u_im(static_cast<size_t>(mx) * w_out * nt, 0.0);
    for (int kx = 0; kx < mx; ++kx)
        for (int kt = 0; kt < kt_count; ++kt) {
            int ks = kt - (mt - 1);
            int ka = ks < 0 ? -ks : ks;
            double sgn = ks < 0 ? -1.0 : 1.0;
            for (int out = 0; out < w_out; ++out) {
                double ar = o_re[(static_cast<size_t>(kx) * kt_count + kt) * w_out + out];
                double ai = o_im[(static_cast<size_t>(kx) * kt_count + kt) * w_out + out];
                size_t dst = (static_cast<size_t>(kx) * w_out + out) * nt;
                for (int it = 0; it < nt; ++it) {
                    double cc = tab_t.c(ka, it), ss = sgn * tab_t.s(ka, it);
                    u_re[dst + it] += ar * cc - ai * ss;
                    u_im[dst + it] += ar * ss + ai * cc;
                }
            }
        }
    // Stage 4: real reconstruction along x with one-sided multiplicity.
    for (int out = 0; out < w_out; ++out) {
        double* yc = y + static_cast<size_t>(out) * plane;
        for (int kx = 0; kx < mx; ++kx) {
            double m = kx == 0 ? 1.0 : 2.0;
            size_t src = (static_cast<size_t>(kx) * w_out + out) * nt;
            for (int it = 0; it < nt; ++it) {
                double ar = m * u_re[src + it], ai = m * u_im[src + it];
                double* row = yc + static_cast<size_t>(it) * nx;
                for (int ix = 0; ix < nx; ++ix)
                    row[ix] += ar * tab_x.c(kx, ix) - ai * tab_x.s(kx, ix);
            }
        }
    }
}

// Reverse-mode adjoint of spectral_conv_2d; mirrors the four stages in
// reverse order. x_bar, r_re_bar, r_im_bar accumulate.
inline void spectral_conv_2d_adjoint(const double* y_bar, const double* coef, const double* r_re,
                                     const double* r_im, int w_in, int w_out, int nx, int nt,
                                     int mx, int mt, const TrigTable& tab_x,
                                     const TrigTable& tab_t, double* x_bar, double* r_re_bar,
                                     double* r_im_bar) {
    const int kt_count = 2 * mt - 1;
    const size_t plane = static_cast<size_t>(nt) * nx;
    const size_t spec = static_cast<size_t>(mx) * kt_count * w_in;
    const double* c_re = coef;
    const double* c_im = coef + spec;
    // Adjoint of stage 4.
    std::vector<double> ub_re(static_cast<size_t>(mx) * w_out * nt);
    std::vector<double> ub_im(static_cast<size_t>(mx) * w_out * nt);
    for (int out = 0; out < w_out; ++out) {
        const double* yc = y_bar + static_cast<size_t>(out) * plane;
        for (int kx = 0; kx < mx; ++kx) {
            double m = kx == 0 ? 1.0 : 2.0;
            size_t dst = (static_cast<size_t>(kx) * w_out + out) * nt;
            for (int it = 0; it < nt; ++it) {
                const double* row = yc + static_cast<size_t>(it) * nx;
                double re = 0.0, im = 0.0;
                for (int ix = 0; ix < nx; ++ix) {
                    re += row[ix] * tab_x.c(kx, ix);
                    im -= row[ix] * tab_x.s(kx, ix);
                }
                ub_re[dst + it] = m * re;
                ub_im[dst + it] = m * im;
            }
        }
    }
    // Adjoint of stage 3.
    std::vector<double> ob_re(static_cast<size_t>(mx) * kt_count * w_out);
    std::vector<double> ob_im(static_cast<size_t>(mx) * kt_count * w_out);
    for (int kx = 0; kx < mx; ++kx)
        for (int kt = 0; kt < kt_count; ++kt) {
            int ks = kt - (mt - 1);
            int ka = ks < 0 ? -ks : ks;
            double sgn = ks < 0 ? -1.0 : 1.0;
            for (int out = 0; out < w_out; ++out) {
                size_t src = (static_cast<size_t>(kx) * w_out + out) * nt;
                double re = 0.0, im = 0.0;
                for (int it = 0; it < nt; ++it) {
                    double cc = tab_t.c(ka, it), ss = sgn * tab_t.s(ka, it);
                    re += ub_re[src + it] * cc + ub_im[src + it] * ss;
                    im += -ub_re[src + it] * ss + ub_im[src + it] * cc;
                }
                size_t dst = (static_cast<size_t>(kx) * kt_count + kt) * w_out + out;
                ob_re[dst] = re;
                ob_im[dst] = im;
            }
        }
    // Adjoint of the channel mix.
    std::vector<double> cb_re(spec, 0.0);
    std::vector<double> cb_im(spec, 0.0);
    for (size_t km = 0; km < static_cast<size_t>(mx) * kt_count; ++km) {
        const double* er = ob_re.data() + km * w_out;
        const double* ei = ob_im.data() + km * w_out;
        for (int in = 0; in < w_in; ++in) {
            double ar = c_re[km * w_in + in];
            double ai = c_im[km * w_in + in];
            size_t base = (km * w_in + in) * w_out;
            double gr = 0.0, gi = 0.0;
            for (int out = 0; out < w_out; ++out) {
                r_re_bar[base + out] += er[out] * ar + ei[out] * ai;
                r_im_bar[base + out] += -er[out] * ai + ei[out] * ar;
                gr += er[out] * r_re[base + out] + ei[out] * r_im[base + out];
                gi += -er[out] * r_im[base + out] + ei[out] * r_re[base + out];
            }
            cb_re[km * w_in + in] = gr;
            cb_im[km * w_in + in] = gi;
        }
    }
    // Adjoint of stage 2.
    const double inv_nt = 1.0 / nt;
    std::vector<double> tb_re(static_cast<size_t>(mx) * w_in * nt, 0.0);
    std::vector<double> tb_im(static_cast<size_t>(mx) * w_in * nt, 0.0);
    for (int kx = 0; kx < mx; ++kx)
        for (int kt = 0; kt < kt_count; ++kt) {
            int ks = kt - (mt - 1);
            int ka = ks < 0 ? -ks : ks;
            double sgn = ks < 0 ? -1.0 : 1.0;
            for (int in = 0; in < w_in; ++in) {
                double gr = cb_re[(static_cast<size_t>(kx) * kt_count + kt) * w_in + in] * inv_nt;
                double gi = cb_im[(static_cast<size_t>(kx) * kt_count + kt) * w_in + in] * inv_nt;
                size_t dst = (static_cast<size_t>(kx) * w_in + in) * nt;
                for (int it = 0; it < nt; ++it) {
                    double cc = tab_t.c(ka, it), ss = sgn * tab_t.s(ka, it);
                    tb_re[dst + it] += gr * cc - gi * ss;
                    tb_im[dst + it] += gr * ss + gi * cc;
                }
            }
        }
    // Adjoint of stage 1.
    const double inv_nx = 1.0 / nx;
    for (int in = 0; in < w_in; ++in) {
        double* xc = x_bar + static_cast<size_t>(in) * plane;
        for (int kx = 0; kx < mx; ++kx) {
            size_t src = (static_cast<size_t>(kx) * w_in + in) * nt;
            for (int it = 0; it < nt; ++it) {
                double gr = tb_re[src + it] * inv_nx;
                double gi = tb_im[src + it] * inv_nx;
                double* row = xc + static_cast<size_t>(it) * nx;
                for (int ix = 0; ix < nx; ++ix)
                    row[ix] += gr * tab_x.c(kx, ix) - gi * tab_x.s(kx, ix);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Architecture description and parameter storage.
// ---------------------------------------------------------------------------

struct FnoArch {
    int dimensionality = 1;  // 1: space only, 2: space x time
    int in_channels = 0;     // window channels + coordinate channels
    int out_channels = 0;
    int lift_width = 16;
    std::vector<int> layer_widths;
    std::vector<int> modes_per_layer;  // spatial modes
    std::vector<int> modes_time;       // temporal modes (2D only)
    int projection_hidden = 128;
    bool coord_channels = true;  // test hook: false feeds the raw window only

    int coord_count() const {
        if (!coord_channels) return 0;
        return dimensionality == 1 ? 1 : 2;
    }
    int window_channels() const { return in_channels - coord_count(); }
    int layers() const { return static_cast<int>(layer_widths.size()); }
    int max_spatial_modes() const {
        return *std::max_element(modes_per_layer.begin(), modes_per_layer.end());
    }

    void validate() const {
        if (dimensionality != 1 && dimensionality != 2)
            throw shape_error("FnoArch: dimensionality must be 1 or 2");
        if (layer_widths.empty() || layer_widths.size() != modes_per_layer.size())
            throw shape_error("FnoArch: layer_widths and modes_per_layer must match (non-empty)");
        if (dimensionality == 2 && modes_time.size() != layer_widths.size())
            throw shape_error("FnoArch: modes_time must match layer count for 2D");
        if (window_channels() < 1) throw shape_error("FnoArch: need at least one input channel");
        if (out_channels < 1) throw shape_error("FnoArch: out_channels must be >= 1");
        if (dimensionality == 2 && out_channels != 1)
            throw shape_error("FnoArch: 2D operator emits a single channel");
        if (lift_width < 1 || projection_hidden < 1)
            throw shape_error("FnoArch: lift/projection widths must be >= 1");
        for (size_t l = 0; l < layer_widths.size(); ++l) {
            if (layer_widths[l] < 1 || modes_per_layer[l] < 1)
                throw shape_error("FnoArch: layer widths and modes must be >= 1");
            if (dimensionality == 2 && modes_time[l] < 1)
                throw shape_error("FnoArch: temporal modes must be >= 1");
        }
    }

    // Prediction operator: window of n past slices -> n_out future slices.
    static FnoArch solution(int n, int n_out) {
        FnoArch a;
        a.dimensionality = 1;
        a.in_channels = n + 1;
        a.out_channels = n_out;
        a.lift_width = 16;
        a.layer_widths = {24, 24, 32, 32};
        a.modes_per_layer = {15, 12, 9, 9};
        a.projection_hidden = 128;
        return a;
    }

    // Correction operator over the space-time window: (estimate, error) -> estimate.
    // Temporal modes follow the spatial list, capped at ceil(window/4) since the
    // window holds far fewer samples along time than the ring does along space.
    static FnoArch correction(int window_steps) {
        FnoArch a;
        a.dimensionality = 2;
        a.in_channels = 4;
        a.out_channels = 1;
        a.lift_width = 16;
        a.layer_widths = {24, 32};
        a.modes_per_layer = {15, 9};
        a.projection_hidden = 128;
        int cap = (window_steps + 3) / 4;
        for (int m : a.modes_per_layer) a.modes_time.push_back(std::max(1, std::min(m, cap)));
        return a;
    }
};

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    size_t size = 0;
    double init_scale = 0.0;
};

inline std::vector<ParamSpec> param_layout(const FnoArch& arch) {
    arch.validate();
    std::vector<ParamSpec> specs;
    size_t offset = 0;
    auto add = [&](std::string name, std::vector<int> shape, double scale) {
        size_t sz = 1;
        for (int d : shape) sz *= static_cast<size_t>(d);
        specs.push_back({std::move(name), std::move(shape), offset, sz, scale});
        offset += sz;
    };
    double lift_scale = 1.0 / std::sqrt(static_cast<double>(arch.in_channels));
    add("lift.w", {arch.lift_width, arch.in_channels}, lift_scale);
    add("lift.b", {arch.lift_width}, lift_scale);
    int w_in = arch.lift_width;
    for (int l = 0; l < arch.layers(); ++l) {
        int w_out = arch.layer_widths[l];
        std::string prefix = "layer" + std::to_string(l);
        double spec_scale = 1.0 / (static_cast<double>(w_in) * w_out);
        if (arch.dimensionality == 1) {
            add(prefix + ".R.re", {arch.modes_per_layer[l], w_in, w_out}, spec_scale);
            add(prefix + ".R.im", {arch.modes_per_layer[l], w_in, w_out}, spec_scale);
        } else {
            int kt = 2 * arch.modes_time[l] - 1;
            add(prefix + ".R.re", {arch.modes_per_layer[l], kt, w_in, w_out}, spec_scale);
            add(prefix + ".R.im", {arch.modes_per_layer[l], kt, w_in, w_out}, spec_scale);
        }
        double w_scale = 1.0 / std::sqrt(static_cast<double>(w_in));
        add(prefix + ".W.w", {w_out, w_in}, w_scale);
        add(prefix + ".W.b", {w_out}, w_scale);
        w_in = w_out;
    }
    double h_scale = 1.0 / std::sqrt(static_cast<double>(w_in));
    add("proj.hidden.w", {arch.projection_hidden, w_in}, h_scale);
    add("proj.hidden.b", {arch.projection_hidden}, h_scale);
    double o_scale = 1.0 / std::sqrt(static_cast<double>(arch.projection_hidden));
    add("proj.out.w", {arch.out_channels, arch.projection_hidden}, o_scale);
    add("proj.out.b", {arch.out_channels}, o_scale);
    return specs;
}

// Architecture plus flat parameter vector; tensors are views into `values`
// located through the canonical layout above.
struct FnoParams {
    FnoArch arch;
    std::vector<double> values;

    FnoParams() = default;
    explicit FnoParams(FnoArch a) : arch(std::move(a)) {
        specs_ = param_layout(arch);
        values.assign(count(specs_), 0.0);
    }

    const std::vector<ParamSpec>& specs() const { return specs_; }
    size_t size() const { return values.size(); }

    const ParamSpec& spec(const std::string& name) const {
        for (const ParamSpec& s : specs_)
            if (s.name == name) return s;
        throw shape_error("FnoParams: no tensor named " + name);
    }
    double* data(const std::string& name) { return values.data() + spec(name).offset; }
    const double* data(const std::string& name) const { return values.data() + spec(name).offset; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    static size_t count(const std::vector<ParamSpec>& specs) {
        return specs.empty() ? 0 : specs.back().offset + specs.back().size;
    }
    std::vector<ParamSpec> specs_;
};

// Uniform init: spectral tensors ~ U(-s, s) with s = 1/(w_in*w_out); affine
// maps with fan-in scaling. Deterministic given seed.
inline FnoParams init_params(const FnoArch& arch, uint64_t seed) {
    FnoParams p(arch);
    Rng rng(Rng::mix(seed, 0xF0401));
    for (const ParamSpec& s : p.specs()) {
        double* dst = p.values.data() + s.offset;
        for (size_t i = 0; i < s.size; ++i) dst[i] = s.init_scale * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass with optional gradient tape, and the matching backward pass.
// ---------------------------------------------------------------------------

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

inline double gelu_grad(double x) {
    double phi = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    double dens = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return phi + x * dens;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// y (w_out x P) = W (w_out x w_in) * x (w_in x P) + b
inline void affine(const double* w, const double* b, const double* x, int w_in, int w_out,
                   int points, double* y) {
    CMapMat wm(w, w_out, w_in), xm(x, w_in, points);
    MapMat ym(y, w_out, points);
    ym.noalias() = wm * xm;
    ym.colwise() += Eigen::Map<const Eigen::VectorXd>(b, w_out);
}

// Accumulates w_bar += y_bar x^T, b_bar += rowsum(y_bar), x_bar = W^T y_bar.
inline void affine_adjoint(const double* w, const double* x, const double* y_bar, int w_in,
                           int w_out, int points, double* w_bar, double* b_bar, double* x_bar) {
    CMapMat wm(w, w_out, w_in), xm(x, w_in, points), ybm(y_bar, w_out, points);
    MapMat(w_bar, w_out, w_in).noalias() += ybm * xm.transpose();
    Eigen::Map<Eigen::VectorXd>(b_bar, w_out) += ybm.rowwise().sum();
    if (x_bar) MapMat(x_bar, w_in, points).noalias() = wm.transpose() * ybm;
}

}  // namespace detail

// Buffers recorded by one forward pass, replayed in reverse by fno_backward.
struct GradTape {
    int nx = 0, nt = 1;
    std::vector<double> input;                // lifted input incl. coordinates
    std::vector<std::vector<double>> acts;    // acts[0] = lift out, acts[l+1] = layer l out
    std::vector<std::vector<double>> pres;    // per-layer pre-activation
    std::vector<std::vector<double>> coefs;   // per-layer cached input spectrum
    std::vector<double> h_pre, h, out;        // projection stages + final output
};

namespace detail {

inline FnoWorkspace& workspace_or_local(FnoWorkspace* ws, FnoWorkspace& local) {
    return ws ? *ws : local;
}

// Shared forward core. `win` holds window_channels() channels of nt*nx points
// (channel-major); coordinates are appended here.
inline std::vector<double> fno_run(const double* win, int nx, int nt, const FnoParams& p,
                                   GradTape* tape, FnoWorkspace* ws_in) {
    const FnoArch& arch = p.arch;
    arch.validate();
    FnoWorkspace local;
    FnoWorkspace& ws = workspace_or_local(ws_in, local);
    const int points = nx * nt;
    const int wc = arch.window_channels();

    std::vector<double> a0(static_cast<size_t>(arch.in_channels) * points);
    std::copy(win, win + static_cast<size_t>(wc) * points, a0.begin());
    if (arch.coord_count() >= 1) {
        double* cx = a0.data() + static_cast<size_t>(wc) * points;
        for (int it = 0; it < nt; ++it)
            for (int ix = 0; ix < nx; ++ix)
                cx[static_cast<size_t>(it) * nx + ix] = static_cast<double>(ix) / nx;
    }
    if (arch.coord_count() == 2) {
        double* ct = a0.data() + static_cast<size_t>(wc + 1) * points;
        for (int it = 0; it < nt; ++it)
            for (int ix = 0; ix < nx; ++ix)
                ct[static_cast<size_t>(it) * nx + ix] = static_cast<double>(it) / nt;
    }

    std::vector<double> act(static_cast<size_t>(arch.lift_width) * points);
    affine(p.data("lift.w"), p.data("lift.b"), a0.data(), arch.in_channels, arch.lift_width,
           points, act.data());
    if (tape) {
        tape->nx = nx;
        tape->nt = nt;
        tape->input = a0;
        tape->acts.assign(1, act);
        tape->pres.clear();
        tape->coefs.clear();
    }

    int w_in = arch.lift_width;
    for (int l = 0; l < arch.layers(); ++l) {
        int w_out = arch.layer_widths[l];
        int mx = arch.modes_per_layer[l];
        std::string prefix = "layer" + std::to_string(l);
        std::vector<double> pre(static_cast<size_t>(w_out) * points);
        affine(p.data(prefix + ".W.w"), p.data(prefix + ".W.b"), act.data(), w_in, w_out, points,
               pre.data());
        std::vector<double> coef;
        if (arch.dimensionality == 1) {
            const TrigTable& tab = ws.trig.get(nx, arch.max_spatial_modes());
            if (tape) coef.resize(2 * static_cast<size_t>(mx) * w_in);
            spectral_conv_1d(act.data(), w_in, w_out, nx, mx, p.data(prefix + ".R.re"),
                             p.data(prefix + ".R.im"), tab, pre.data(),
                             tape ? coef.data() : nullptr);
        } else {
            int mt = arch.modes_time[l];
            const TrigTable& tab_x = ws.trig.get(nx, arch.max_spatial_modes());
            const TrigTable& tab_t =
                ws.trig.get(nt, *std::max_element(arch.modes_time.begin(), arch.modes_time.end()));
            if (tape) coef.resize(2 * static_cast<size_t>(mx) * (2 * mt - 1) * w_in);
            spectral_conv_2d(act.data(), w_in, w_out, nx, nt, mx, mt, p.data(prefix + ".R.re"),
                             p.data(prefix + ".R.im"), tab_x, tab_t, pre.data(),
                             tape ? coef.data() : nullptr);
        }
        std::vector<double> next(static_cast<size_t>(w_out) * points);
        for (size_t i = 0; i < next.size(); ++i) next[i] = gelu(pre[i]);
        if (tape) {
            tape->pres.push_back(std::move(pre));
            tape->coefs.push_back(std::move(coef));
            tape->acts.push_back(next);
        }
        act = std::move(next);
        w_in = w_out;
    }

    std::vector<double> h_pre(static_cast<size_t>(arch.projection_hidden) * points);
    affine(p.data("proj.hidden.w"), p.data("proj.hidden.b"), act.data(), w_in,
           arch.projection_hidden, points, h_pre.data());
    std::vector<double> h(h_pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = gelu(h_pre[i]);
    std::vector<double> out(static_cast<size_t>(arch.out_channels) * points);
    affine(p.data("proj.out.w"), p.data("proj.out.b"), h.data(), arch.projection_hidden,
           arch.out_channels, points, out.data());
    for (double& v : out) v = sigmoid(v);
    if (tape) {
        tape->h_pre = std::move(h_pre);
        tape->h = std::move(h);
        tape->out = out;
    }
    return out;
}

}  // namespace detail

// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(output) for the
// forward pass recorded on `tape`. Gradients with respect to the input window
// are propagated internally but not returned (training never needs them).
inline void fno_backward(const FnoParams& p, const GradTape& tape, const std::vector<double>& d_out,
                         std::vector<double>& grad, FnoWorkspace* ws_in = nullptr) {
    const FnoArch& arch = p.arch;
    if (grad.size() != p.size()) throw shape_error("fno_backward: gradient buffer size mismatch");
    const int nx = tape.nx, nt = tape.nt, points = nx * nt;
    if (d_out.size() != static_cast<size_t>(arch.out_channels) * points)
        throw shape_error("fno_backward: d_out shape mismatch");
    FnoWorkspace local;
    FnoWorkspace& ws = detail::workspace_or_local(ws_in, local);
    auto gp = [&](const std::string& name) { return grad.data() + p.spec(name).offset; };

    // Sigmoid + output affine.
    std::vector<double> y_bar(d_out.size());
    for (size_t i = 0; i < y_bar.size(); ++i) {
        double s = tape.out[i];
        y_bar[i] = d_out[i] * s * (1.0 - s);
    }
    std::vector<double> h_bar(tape.h.size());
    detail::affine_adjoint(p.data("proj.out.w"), tape.h.data(), y_bar.data(),
                           arch.projection_hidden, arch.out_channels, points, gp("proj.out.w"),
                           gp("proj.out.b"), h_bar.data());
    for (size_t i = 0; i < h_bar.size(); ++i) h_bar[i] *= detail::gelu_grad(tape.h_pre[i]);
    const int w_last = arch.layer_widths.back();
    std::vector<double> act_bar(static_cast<size_t>(w_last) * points);
    detail::affine_adjoint(p.data("proj.hidden.w"), tape.acts.back().data(), h_bar.data(), w_last,
                           arch.projection_hidden, points, gp("proj.hidden.w"),
                           gp("proj.hidden.b"), act_bar.data());

    for (int l = arch.layers() - 1; l >= 0; --l) {
        int w_out = arch.layer_widths[l];
        int w_in = l == 0 ? arch.lift_width : arch.layer_widths[l - 1];
        int mx = arch.modes_per_layer[l];
        std::string prefix = "layer" + std::to_string(l);
        std::vector<double> pre_bar(static_cast<size_t>(w_out) * points);
        for (size_t i = 0; i < pre_bar.size(); ++i)
            pre_bar[i] = act_bar[i] * detail::gelu_grad(tape.pres[l][i]);
        std::vector<double> in_bar(static_cast<size_t>(w_in) * points, 0.0);
        detail::affine_adjoint(p.data(prefix + ".W.w"), tape.acts[l].data(), pre_bar.data(), w_in,
                               w_out, points, gp(prefix + ".W.w"), gp(prefix + ".W.b"),
                               in_bar.data());
        if (arch.dimensionality == 1) {
            const TrigTable& tab = ws.trig.get(nx, arch.max_spatial_modes());
            spectral_conv_1d_adjoint(pre_bar.data(), tape.coefs[l].data(),
                                     p.data(prefix + ".R.re"), p.data(prefix + ".R.im"), w_in,
                                     w_out, nx, mx, tab, in_bar.data(), gp(prefix + ".R.re"),
                                     gp(prefix + ".R.im"));
        } else {
            int mt = arch.modes_time[l];
            const TrigTable& tab_x = ws.trig.get(nx, arch.max_spatial_modes());
            const TrigTable& tab_t =
                ws.trig.get(nt, *std::max_element(arch.modes_time.begin(), arch.modes_time.end()));
            spectral_conv_2d_adjoint(pre_bar.data(), tape.coefs[l].data(),
                                     p.data(prefix + ".R.re"), p.data(prefix + ".R.im"), w_in,
                                     w_out, nx, nt, mx, mt, tab_x, tab_t, in_bar.data(),
                                     gp(prefix + ".R.re"), gp(prefix + ".R.im"));
        }
        act_bar = std::move(in_bar);
    }

    detail::affine_adjoint(p.data("lift.w"), tape.input.data(), act_bar.data(), arch.in_channels,
                           arch.lift_width, points, gp("lift.w"), gp("lift.b"), nullptr);
}

// Solution operator: n past snapshots (newest first) -> out_channels future
// snapshots in increasing time order, each value sigmoid-warped into (0,1).
inline FieldStack fno_forward(const StateWindow& window, const FnoParams& p,
                              GradTape* tape = nullptr, FnoWorkspace* ws = nullptr) {
    if (p.arch.dimensionality != 1) throw shape_error("fno_forward: params are not 1D");
    if (window.rows != p.arch.window_channels())
        throw shape_error("fno_forward: window has " + std::to_string(window.rows) +
                          " slices, arch expects " + std::to_string(p.arch.window_channels()));
    std::vector<double> out = detail::fno_run(window.data.data(), window.cols, 1, p, tape, ws);
    FieldStack result(p.arch.out_channels, window.cols, window.dx);
    result.data = std::move(out);
    return result;
}

// Correction operator: state window and error window (rows = time slices,
// oldest first) -> corrected window of the same shape.
inline FieldStack fno2d_forward(const FieldStack& state_window, const FieldStack& error_window,
                                const FnoParams& p, GradTape* tape = nullptr,
                                FnoWorkspace* ws = nullptr) {
    if (p.arch.dimensionality != 2) throw shape_error("fno2d_forward: params are not 2D");
    if (p.arch.window_channels() != 2)
        throw shape_error("fno2d_forward: arch must take (state, error) channels");
    if (state_window.rows != error_window.rows || state_window.cols != error_window.cols)
        throw shape_error("fno2d_forward: state and error windows differ in shape");
    const int nt = state_window.rows, nx = state_window.cols;
    std::vector<double> win(2 * static_cast<size_t>(nt) * nx);
    std::copy(state_window.data.begin(), state_window.data.end(), win.begin());
    std::copy(error_window.data.begin(), error_window.data.end(),
              win.begin() + static_cast<size_t>(nt) * nx);
    std::vector<double> out = detail::fno_run(win.data(), nx, nt, p, tape, ws);
    FieldStack result(nt, nx, state_window.dx);
    result.data = std::move(out);
    return result;
}

// Correction stand-in that trusts the prediction entirely; closes the loop
// into the plain open-loop observer and anchors the reduction test.
inline FieldStack identity_correction(const FieldStack& state_window,
                                      const FieldStack& /*error_window*/) {
    return state_window;
}

// Single layer of the 1D operator exposed for direct inspection; `identity_act`
// drops the GELU so linearity of the spectral path is testable.
inline FieldStack spectral_layer_1d(const FieldStack& v, const std::vector<double>& r_re,
                                    const std::vector<double>& r_im, const std::vector<double>& w,
                                    const std::vector<double>& b, int w_out, int modes,
                                    bool identity_act = false) {
    const int w_in = v.rows, n = v.cols;
    if (r_re.size() != static_cast<size_t>(modes) * w_in * w_out || r_re.size() != r_im.size())
        throw shape_error("spectral_layer_1d: spectral weight shape mismatch");
    if (w.size() != static_cast<size_t>(w_in) * w_out || b.size() != static_cast<size_t>(w_out))
        throw shape_error("spectral_layer_1d: pointwise map shape mismatch");
    TrigTable tab(n, modes);
    FieldStack out(w_out, n, v.dx);
    detail::affine(w.data(), b.data(), v.data.data(), w_in, w_out, n, out.data.data());
    spectral_conv_1d(v.data.data(), w_in, w_out, n, modes, r_re.data(), r_im.data(), tab,
                     out.data.data());
    if (!identity_act)
        for (double& x : out.data) x = detail::gelu(x);
    return out;
}

}  // namespace ringobs
