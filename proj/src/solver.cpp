#include <cmath>
#include <cstdio>

#include "eqsur/fft.hpp"
#include "eqsur/solver.hpp"

namespace eqsur::solver {

double Field3::max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

namespace {

inline int wrap(int i, int n) { return (i % n + n) % n; }

bool finite(const Field3& f) {
    for (double x : f.v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace

SimState initial_state(const SolverConfig& cfg, Rng& rng, bool perturb) {
    SimState s(cfg.n1, cfg.n2, cfg.n3);
    for (int i = 0; i < cfg.n1; ++i)
        for (int j = 0; j < cfg.n2; ++j)
            for (int k = 0; k < cfg.n3; ++k) {
                double t = cfg.t_conduction(k);
                if (perturb) t += cfg.perturbation * rng.uniform(-1.0, 1.0);
                s.T.at(i, j, k) = t;
            }
    return s;
}

// ---------------------------------------------------------------------------
// Tendencies: second-order centered stencils on the staggered grid.
// Tangential velocities use mirror ghosts at the walls (no slip), the
// temperature uses fixed-value ghosts (T = T_bot / T_top on the walls), and
// u3 lives on faces whose wall values are literal zeros.
// ---------------------------------------------------------------------------

Tendency rhs(const SolverConfig& cfg, const SimState& s) {
    if (!finite(s.u1) || !finite(s.u2) || !finite(s.u3) || !finite(s.T))
        throw NumericalError("rhs: non-finite field at t = " + std::to_string(s.t));
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    const double d1 = cfg.delta1(), d2 = cfg.delta2(), d3 = cfg.delta3();
    const double nu = cfg.nu(), kappa = cfg.kappa();
    Tendency out{Field3(n1, n2, n3), Field3(n1, n2, n3), Field3(n1, n2, n3 + 1),
                 Field3(n1, n2, n3)};

    const Field3 &u1 = s.u1, &u2 = s.u2, &u3 = s.u3, &T = s.T;

    // tangential velocities with mirror ghosts across the walls
    auto u1z = [&](int i, int j, int k) -> double {
        if (k < 0) return -u1.at(i, j, 0);
        if (k >= n3) return -u1.at(i, j, n3 - 1);
        return u1.at(i, j, k);
    };
    auto u2z = [&](int i, int j, int k) -> double {
        if (k < 0) return -u2.at(i, j, 0);
        if (k >= n3) return -u2.at(i, j, n3 - 1);
        return u2.at(i, j, k);
    };
    auto Tz = [&](int i, int j, int k) -> double {
        if (k < 0) return 2.0 * cfg.t_bot - T.at(i, j, 0);
        if (k >= n3) return 2.0 * cfg.t_top - T.at(i, j, n3 - 1);
        return T.at(i, j, k);
    };

#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const int im = wrap(i - 1, n1), ip = wrap(i + 1, n1);
            const int jm = wrap(j - 1, n2), jp = wrap(j + 1, n2);
            for (int k = 0; k < n3; ++k) {
                // --- u1 momentum (x-face at x1 = i*d1) -----------------------
                {
                    const double vbar = 0.25 * (u2.at(im, j, k) + u2.at(im, jp, k) +
                                                u2.at(i, j, k) + u2.at(i, jp, k));
                    const double wbar = 0.25 * (u3.at(im, j, k) + u3.at(im, j, k + 1) +
                                                u3.at(i, j, k) + u3.at(i, j, k + 1));
                    const double ddx = (u1.at(ip, j, k) - u1.at(im, j, k)) / (2 * d1);
                    const double ddy = (u1.at(i, jp, k) - u1.at(i, jm, k)) / (2 * d2);
                    const double ddz = (u1z(i, j, k + 1) - u1z(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (u1.at(ip, j, k) - 2 * u1.at(i, j, k) + u1.at(im, j, k)) / (d1 * d1) +
                        (u1.at(i, jp, k) - 2 * u1.at(i, j, k) + u1.at(i, jm, k)) / (d2 * d2) +
                        (u1z(i, j, k + 1) - 2 * u1.at(i, j, k) + u1z(i, j, k - 1)) / (d3 * d3);
                    out.du1.at(i, j, k) =
                        -(u1.at(i, j, k) * ddx + vbar * ddy + wbar * ddz) + nu * lap;
                }
                // --- u2 momentum (y-face at x2 = j*d2) -----------------------
                {
                    const double ubar = 0.25 * (u1.at(i, jm, k) + u1.at(ip, jm, k) +
                                                u1.at(i, j, k) + u1.at(ip, j, k));
                    const double wbar = 0.25 * (u3.at(i, jm, k) + u3.at(i, jm, k + 1) +
                                                u3.at(i, j, k) + u3.at(i, j, k + 1));
                    const double ddx = (u2.at(ip, j, k) - u2.at(im, j, k)) / (2 * d1);
                    const double ddy = (u2.at(i, jp, k) - u2.at(i, jm, k)) / (2 * d2);
                    const double ddz = (u2z(i, j, k + 1) - u2z(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (u2.at(ip, j, k) - 2 * u2.at(i, j, k) + u2.at(im, j, k)) / (d1 * d1) +
                        (u2.at(i, jp, k) - 2 * u2.at(i, j, k) + u2.at(i, jm, k)) / (d2 * d2) +
                        (u2z(i, j, k + 1) - 2 * u2.at(i, j, k) + u2z(i, j, k - 1)) / (d3 * d3);
                    out.du2.at(i, j, k) =
                        -(ubar * ddx + u2.at(i, j, k) * ddy + wbar * ddz) + nu * lap;
                }
                // --- u3 momentum (interior z-faces only; walls stay 0) -------
                if (k >= 1) {
                    const double ubar = 0.25 * (u1.at(i, j, k - 1) + u1.at(i, j, k) +
                                                u1.at(ip, j, k - 1) + u1.at(ip, j, k));
                    const double vbar = 0.25 * (u2.at(i, j, k - 1) + u2.at(i, j, k) +
                                                u2.at(i, jp, k - 1) + u2.at(i, jp, k));
                    const double ddx = (u3.at(ip, j, k) - u3.at(im, j, k)) / (2 * d1);
                    const double ddy = (u3.at(i, jp, k) - u3.at(i, jm, k)) / (2 * d2);
                    const double ddz = (u3.at(i, j, k + 1) - u3.at(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (u3.at(ip, j, k) - 2 * u3.at(i, j, k) + u3.at(im, j, k)) / (d1 * d1) +
                        (u3.at(i, jp, k) - 2 * u3.at(i, j, k) + u3.at(i, jm, k)) / (d2 * d2) +
                        (u3.at(i, j, k + 1) - 2 * u3.at(i, j, k) + u3.at(i, j, k - 1)) /
                            (d3 * d3);
                    const double buoy = 0.5 * (T.at(i, j, k - 1) + T.at(i, j, k));
                    out.du3.at(i, j, k) =
                        -(ubar * ddx + vbar * ddy + u3.at(i, j, k) * ddz) + nu * lap + buoy;
                }
                // --- temperature (cell center) -------------------------------
                {
                    const double ubar = 0.5 * (u1.at(i, j, k) + u1.at(ip, j, k));
                    const double vbar = 0.5 * (u2.at(i, j, k) + u2.at(i, jp, k));
                    const double wbar = 0.5 * (u3.at(i, j, k) + u3.at(i, j, k + 1));
                    const double ddx = (T.at(ip, j, k) - T.at(im, j, k)) / (2 * d1);
                    const double ddy = (T.at(i, jp, k) - T.at(i, jm, k)) / (2 * d2);
                    const double ddz = (Tz(i, j, k + 1) - Tz(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (T.at(ip, j, k) - 2 * T.at(i, j, k) + T.at(im, j, k)) / (d1 * d1) +
                        (T.at(i, jp, k) - 2 * T.at(i, j, k) + T.at(i, jm, k)) / (d2 * d2) +
                        (Tz(i, j, k + 1) - 2 * T.at(i, j, k) + Tz(i, j, k - 1)) / (d3 * d3);
                    out.dT.at(i, j, k) = -(ubar * ddx + vbar * ddy + wbar * ddz) + kappa * lap;
                }
            }
        }
    return out;
}

Field3 divergence(const SolverConfig& cfg, const SimState& s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    Field3 div(n1, n2, n3);
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k)
                div.at(i, j, k) = (s.u1.at(wrap(i + 1, n1), j, k) - s.u1.at(i, j, k)) /
                                      cfg.delta1() +
                                  (s.u2.at(i, wrap(j + 1, n2), k) - s.u2.at(i, j, k)) /
                                      cfg.delta2() +
                                  (s.u3.at(i, j, k + 1) - s.u3.at(i, j, k)) / cfg.delta3();
    return div;
}

void gradient_faces(const SolverConfig& cfg, const Field3& phi, Field3* g1, Field3* g2,
                    Field3* g3) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    *g1 = Field3(n1, n2, n3);
    *g2 = Field3(n1, n2, n3);
    *g3 = Field3(n1, n2, n3 + 1); // wall faces stay 0 (homogeneous Neumann)
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                g1->at(i, j, k) =
                    (phi.at(i, j, k) - phi.at(wrap(i - 1, n1), j, k)) / cfg.delta1();
                g2->at(i, j, k) =
                    (phi.at(i, j, k) - phi.at(i, wrap(j - 1, n2), k)) / cfg.delta2();
                if (k >= 1)
                    g3->at(i, j, k) = (phi.at(i, j, k) - phi.at(i, j, k - 1)) / cfg.delta3();
            }
}

Field3 advect_temperature(const SolverConfig& cfg, const SimState& s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    Field3 adv(n1, n2, n3);
    const double d1 = cfg.delta1(), d2 = cfg.delta2(), d3 = cfg.delta3();
    auto Tz = [&](int i, int j, int k) -> double {
        if (k < 0) return 2.0 * cfg.t_bot - s.T.at(i, j, 0);
        if (k >= n3) return 2.0 * cfg.t_top - s.T.at(i, j, n3 - 1);
        return s.T.at(i, j, k);
    };
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                const int im = wrap(i - 1, n1), ip = wrap(i + 1, n1);
                const int jm = wrap(j - 1, n2), jp = wrap(j + 1, n2);
                const double ubar = 0.5 * (s.u1.at(i, j, k) + s.u1.at(ip, j, k));
                const double vbar = 0.5 * (s.u2.at(i, j, k) + s.u2.at(i, jp, k));
                const double wbar = 0.5 * (s.u3.at(i, j, k) + s.u3.at(i, j, k + 1));
                adv.at(i, j, k) = -(ubar * (s.T.at(ip, j, k) - s.T.at(im, j, k)) / (2 * d1) +
                                    vbar * (s.T.at(i, jp, k) - s.T.at(i, jm, k)) / (2 * d2) +
                                    wbar * (Tz(i, j, k + 1) - Tz(i, j, k - 1)) / (2 * d3));
            }
    return adv;
}

// ---------------------------------------------------------------------------
// Projection: FFT in the periodic horizontal directions, Thomas algorithm in
// the vertical (homogeneous Neumann walls), zero-mean pressure mode pinned.
// ---------------------------------------------------------------------------

namespace {

/// Solve (tridiag + lambda I) x = r where the tridiagonal is the compact
/// Neumann second difference. For lambda == 0 pin x[0] = 0.
void vertical_solve(int n3, double inv_d3sq, double lambda, std::complex<double>* r) {
    thread_local std::vector<double> b;
    thread_local std::vector<std::complex<double>> x;
    if (std::abs(lambda) < 1e-14) {
        // singular Neumann system: pin x[0] = 0, solve rows 1..n3-1
        b.assign(n3, 0.0);
        x.assign(n3, 0.0);
        // forward elimination on the reduced system
        // row k: a*x[k-1] + bk*x[k] + a*x[k+1] = r[k], a = inv_d3sq
        // with row n3-1 Neumann-modified
        for (int k = 1; k < n3; ++k)
            b[k] = (k < n3 - 1) ? -2.0 * inv_d3sq : -1.0 * inv_d3sq;
        for (int k = 2; k < n3; ++k) {
            const double m = inv_d3sq / b[k - 1];
            b[k] -= m * inv_d3sq;
            r[k] -= m * r[k - 1];
        }
        x[n3 - 1] = r[n3 - 1] / b[n3 - 1];
        for (int k = n3 - 2; k >= 1; --k) x[k] = (r[k] - inv_d3sq * x[k + 1]) / b[k];
        x[0] = 0.0;
        for (int k = 0; k < n3; ++k) r[k] = x[k];
        return;
    }
    b.assign(n3, 0.0);
    x.assign(n3, 0.0);
    for (int k = 0; k < n3; ++k) {
        const double diag = (k == 0 || k == n3 - 1) ? -1.0 : -2.0;
        b[k] = diag * inv_d3sq + lambda;
    }
    for (int k = 1; k < n3; ++k) {
        const double m = inv_d3sq / b[k - 1];
        b[k] -= m * inv_d3sq;
        r[k] -= m * r[k - 1];
    }
    x[n3 - 1] = r[n3 - 1] / b[n3 - 1];
    for (int k = n3 - 2; k >= 0; --k) x[k] = (r[k] - inv_d3sq * x[k + 1]) / b[k];
    for (int k = 0; k < n3; ++k) r[k] = x[k];
}

} // namespace

void project(const SolverConfig& cfg, SimState* s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    const double d1 = cfg.delta1(), d2 = cfg.delta2(), d3 = cfg.delta3();
    Field3 div = divergence(cfg, *s);

    // 2D DFT over (i, j) for every k
    std::vector<std::complex<double>> spec(static_cast<size_t>(n1) * n2 * n3);
    const Dft& fx = dft_plan(n1);
    const Dft& fy = dft_plan(n2);
    {
        std::vector<std::complex<double>> line(std::max(n1, n2)), tline(std::max(n1, n2));
        // transform along i
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                for (int i = 0; i < n1; ++i) line[i] = div.at(i, j, k);
                fx.forward(line.data(), tline.data());
                for (int i = 0; i < n1; ++i)
                    spec[(static_cast<size_t>(i) * n2 + j) * n3 + k] = tline[i];
            }
        // transform along j
        for (int i = 0; i < n1; ++i)
            for (int k = 0; k < n3; ++k) {
                for (int j = 0; j < n2; ++j)
                    line[j] = spec[(static_cast<size_t>(i) * n2 + j) * n3 + k];
                fy.forward(line.data(), tline.data());
                for (int j = 0; j < n2; ++j)
                    spec[(static_cast<size_t>(i) * n2 + j) * n3 + k] = tline[j];
            }
    }

    // per-mode vertical solves
    const double pi = 3.14159265358979323846264338328;
#pragma omp parallel for collapse(2) schedule(static)
    for (int m1 = 0; m1 < n1; ++m1)
        for (int m2 = 0; m2 < n2; ++m2) {
            const double s1 = std::sin(pi * m1 / n1);
            const double s2 = std::sin(pi * m2 / n2);
            const double lambda = -4.0 * (s1 * s1 / (d1 * d1) + s2 * s2 / (d2 * d2));
            vertical_solve(n3, 1.0 / (d3 * d3), lambda,
                           spec.data() + (static_cast<size_t>(m1) * n2 + m2) * n3);
        }

    // inverse 2D DFT
    Field3 phi(n1, n2, n3);
    {
        std::vector<std::complex<double>> line(std::max(n1, n2)), tline(std::max(n1, n2));
        for (int i = 0; i < n1; ++i)
            for (int k = 0; k < n3; ++k) {
                for (int j = 0; j < n2; ++j)
                    line[j] = spec[(static_cast<size_t>(i) * n2 + j) * n3 + k];
                fy.inverse(line.data(), tline.data());
                for (int j = 0; j < n2; ++j)
                    spec[(static_cast<size_t>(i) * n2 + j) * n3 + k] = tline[j];
            }
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                for (int i = 0; i < n1; ++i)
                    line[i] = spec[(static_cast<size_t>(i) * n2 + j) * n3 + k];
                fx.inverse(line.data(), tline.data());
                for (int i = 0; i < n1; ++i) phi.at(i, j, k) = tline[i].real();
            }
    }

    // pin the mean pressure mode to zero
    double mean = 0.0;
    for (double x : phi.v) mean += x;
    mean /= static_cast<double>(phi.v.size());
    for (double& x : phi.v) x -= mean;

    // subtract the face gradient
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                s->u1.at(i, j, k) -= (phi.at(i, j, k) - phi.at(wrap(i - 1, n1), j, k)) / d1;
                s->u2.at(i, j, k) -= (phi.at(i, j, k) - phi.at(i, wrap(j - 1, n2), k)) / d2;
                if (k >= 1)
                    s->u3.at(i, j, k) -= (phi.at(i, j, k) - phi.at(i, j, k - 1)) / d3;
            }
    s->p = phi;

    const double residual = divergence(cfg, *s).max_abs();
    if (residual > cfg.div_tol)
        throw NumericalError("project: post-projection divergence " + std::to_string(residual) +
                             " exceeds tolerance");
}

double step(const SolverConfig& cfg, SimState* s, double dt) {
    const double maxu = std::max({s->u1.max_abs(), s->u2.max_abs(), s->u3.max_abs()});
    const double min_d = std::min({cfg.delta1(), cfg.delta2(), cfg.delta3()});
    while (maxu > 0.0 && dt > 0.5 * min_d / maxu) {
        if (cfg.abort_on_cfl)
            throw NumericalError("step: CFL violation at t = " + std::to_string(s->t) +
                                 " (max|u| = " + std::to_string(maxu) + ")");
        std::fprintf(stderr, "[solver] CFL violation at t = %.4f, halving dt to %.6g\n", s->t,
                     dt / 2);
        dt /= 2;
    }

    auto apply = [&](const SimState& base, const Tendency& t1, const Tendency* t2,
                     double w) -> SimState {
        SimState next = base;
        const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j)
                for (int k = 0; k <= n3; ++k) {
                    if (k < n3) {
                        const double a1 = t2 ? 0.5 * (t1.du1.at(i, j, k) + t2->du1.at(i, j, k))
                                             : t1.du1.at(i, j, k);
                        const double a2 = t2 ? 0.5 * (t1.du2.at(i, j, k) + t2->du2.at(i, j, k))
                                             : t1.du2.at(i, j, k);
                        const double aT = t2 ? 0.5 * (t1.dT.at(i, j, k) + t2->dT.at(i, j, k))
                                             : t1.dT.at(i, j, k);
                        next.u1.at(i, j, k) = base.u1.at(i, j, k) + w * a1;
                        next.u2.at(i, j, k) = base.u2.at(i, j, k) + w * a2;
                        next.T.at(i, j, k) = base.T.at(i, j, k) + w * aT;
                    }
                    if (k >= 1 && k < n3) {
                        const double a3 = t2 ? 0.5 * (t1.du3.at(i, j, k) + t2->du3.at(i, j, k))
                                             : t1.du3.at(i, j, k);
                        next.u3.at(i, j, k) = base.u3.at(i, j, k) + w * a3;
                    }
                }
        return next;
    };

    // Heun: provisional projected stage, then trapezoidal combination
    Tendency k1 = rhs(cfg, *s);
    SimState stage = apply(*s, k1, nullptr, dt);
    project(cfg, &stage);
    stage.t = s->t + dt;
    Tendency k2 = rhs(cfg, stage);
    SimState next = apply(*s, k1, &k2, dt);
    project(cfg, &next);
    next.t = s->t + dt;
    *s = std::move(next);
    return dt;
}

// ---------------------------------------------------------------------------
// D4 action on the staggered state (exact signed permutations)
// ---------------------------------------------------------------------------

namespace {

SimState act_flip(const SolverConfig& cfg, const SimState& s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    SimState o(n1, n2, n3);
    o.t = s.t;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            for (int k = 0; k < n3; ++k) {
                o.T.at(i, j, k) = s.T.at(i, n2 - 1 - j, k);
                o.p.at(i, j, k) = s.p.at(i, n2 - 1 - j, k);
                o.u1.at(i, j, k) = s.u1.at(i, n2 - 1 - j, k);
                o.u2.at(i, j, k) = -s.u2.at(i, wrap(n2 - j, n2), k);
            }
            for (int k = 0; k <= n3; ++k) o.u3.at(i, j, k) = s.u3.at(i, n2 - 1 - j, k);
        }
    return o;
}

SimState act_rot1(const SolverConfig& cfg, const SimState& s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    if (n1 != n2) throw ValidationError("act_on_state: rotation requires a square grid");
    SimState o(n1, n2, n3);
    o.t = s.t;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            for (int k = 0; k < n3; ++k) {
                o.T.at(i, j, k) = s.T.at(j, n1 - 1 - i, k);
                o.p.at(i, j, k) = s.p.at(j, n1 - 1 - i, k);
                o.u1.at(i, j, k) = -s.u2.at(j, wrap(n1 - i, n1), k);
                o.u2.at(i, j, k) = s.u1.at(j, n1 - 1 - i, k);
            }
            for (int k = 0; k <= n3; ++k) o.u3.at(i, j, k) = s.u3.at(j, n1 - 1 - i, k);
        }
    return o;
}

} // namespace

SimState act_on_state(GroupElement g, const SolverConfig& cfg, const SimState& s) {
    SimState out = s;
    if (g.f) out = act_flip(cfg, out);
    for (int r = 0; r < g.r; ++r) out = act_rot1(cfg, out);
    return out;
}

template <typename T>
static Tensor<T> snapshot_impl(const SolverConfig& cfg, const SimState& s) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    Tensor<T> snap({4, n1, n2, n3});
    T* p = snap.data();
    const int64_t plane = static_cast<int64_t>(n1) * n2 * n3;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                const int64_t idx = (static_cast<int64_t>(i) * n2 + j) * n3 + k;
                p[0 * plane + idx] = static_cast<T>(
                    0.5 * (s.u1.at(i, j, k) + s.u1.at(wrap(i + 1, n1), j, k)));
                p[1 * plane + idx] = static_cast<T>(
                    0.5 * (s.u2.at(i, j, k) + s.u2.at(i, wrap(j + 1, n2), k)));
                p[2 * plane + idx] =
                    static_cast<T>(0.5 * (s.u3.at(i, j, k) + s.u3.at(i, j, k + 1)));
                p[3 * plane + idx] = static_cast<T>(s.T.at(i, j, k));
            }
    return snap;
}

Tensor<float> snapshot(const SolverConfig& cfg, const SimState& s) {
    return snapshot_impl<float>(cfg, s);
}
Tensor<double> snapshot_f64(const SolverConfig& cfg, const SimState& s) {
    return snapshot_impl<double>(cfg, s);
}

RunResult simulate(const SolverConfig& cfg, double t_start, double t_end, double dt_snap,
                   const std::function<void(const SimState&)>& record) {
    RunResult res;
    const double steps_f = dt_snap / cfg.dt;
    if (std::abs(steps_f - std::lround(steps_f)) > 1e-9)
        throw ValidationError("simulate: dt must divide the snapshot interval");
    Rng rng(cfg.seed);
    SimState s = initial_state(cfg, rng);
    int64_t steps = 0;

    const double tmax = std::max(cfg.t_bot, cfg.t_top) + 1e-6 + cfg.perturbation;
    const double tmin = std::min(cfg.t_bot, cfg.t_top) - 1e-6 - cfg.perturbation;

    auto advance_to = [&](double target) {
        while (s.t < target - 1e-12) {
            const double want = std::min(cfg.dt, target - s.t);
            step(cfg, &s, want);
            ++steps;
            // discrete maximum principle monitor
            for (double x : s.T.v)
                if (x > tmax || x < tmin)
                    throw NumericalError("temperature bound violated at t = " +
                                         std::to_string(s.t));
        }
    };

    try {
        advance_to(t_start);
        record(s);
        ++res.snapshots;
        double t_next = t_start + dt_snap;
        while (t_next <= t_end + 1e-9) {
            advance_to(t_next);
            record(s);
            ++res.snapshots;
            t_next += dt_snap;
        }
    } catch (const NumericalError& e) {
        res.aborted = true;
        res.failure_step = steps;
        res.error = e.what();
    }
    return res;
}

} // namespace eqsur::solver
