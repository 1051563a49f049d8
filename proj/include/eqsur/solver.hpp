#pragma once

#include <cmath>
#include <functional>

#include "eqsur/group.hpp"
#include "eqsur/tensor.hpp"

namespace eqsur::solver {

/// Scalar field on the structured grid, row-major [i][j][k] with k fastest.
struct Field3 {
    int n1 = 0, n2 = 0, n3 = 0;
    std::vector<double> v;

    Field3() = default;
    Field3(int a, int b, int c) : n1(a), n2(b), n3(c), v(static_cast<size_t>(a) * b * c, 0.0) {}
    double& at(int i, int j, int k) { return v[(static_cast<size_t>(i) * n2 + j) * n3 + k]; }
    double at(int i, int j, int k) const { return v[(static_cast<size_t>(i) * n2 + j) * n3 + k]; }
    double max_abs() const;
};

/// Boussinesq state on a staggered MAC grid over (0,2pi)^2 x (-1,1):
/// u1 at x-faces, u2 at y-faces (both [N1][N2][N3], periodic), u3 at z-faces
/// ([N1][N2][N3+1] with the wall faces pinned to zero), temperature and
/// pressure at cell centers. The staggering makes div(grad) compact, so the
/// projection drives the discrete divergence to solver precision, while all
/// stencils stay symmetric (the D4 commutativity test is exact up to
/// floating-point reordering).
struct SimState {
    Field3 u1, u2, u3; // u3 has n3+1 planes
    Field3 T, p;
    double t = 0.0;

    SimState() = default;
    SimState(int n1, int n2, int n3)
        : u1(n1, n2, n3), u2(n1, n2, n3), u3(n1, n2, n3 + 1), T(n1, n2, n3), p(n1, n2, n3) {}
    int n1() const { return T.n1; }
    int n2() const { return T.n2; }
    int n3() const { return T.n3; }
};

struct SolverConfig {
    double ra = 2500.0;
    double pr = 0.7;
    int n1 = 24, n2 = 24, n3 = 16;
    double dt = 0.02;
    double t_bot = 0.5, t_top = -0.5;
    uint64_t seed = 1;
    double perturbation = 0.01; ///< initial temperature noise amplitude
    double div_tol = 1e-8;      ///< post-projection divergence bound
    bool abort_on_cfl = false;  ///< otherwise halve dt with a warning

    double delta1() const { return 6.283185307179586476925286766559 / n1; }
    double delta2() const { return 6.283185307179586476925286766559 / n2; }
    double delta3() const { return 2.0 / n3; }
    double nu() const { return std::sqrt(pr / ra); }
    double kappa() const { return 1.0 / std::sqrt(ra * pr); }
    /// z-coordinate of cell center k.
    double zc(int k) const { return -1.0 + (k + 0.5) * delta3(); }
    /// conduction profile at cell center k.
    double t_conduction(int k) const {
        return t_bot + (t_top - t_bot) * (zc(k) + 1.0) / 2.0;
    }
};

struct Tendency {
    Field3 du1, du2, du3, dT;
};

/// Motionless conduction state (plus optional seeded temperature noise).
SimState initial_state(const SolverConfig& cfg, Rng& rng, bool perturb = true);

/// Advection + diffusion + buoyancy tendencies (no pressure; the projection
/// in step() handles incompressibility). Rejects non-finite fields.
Tendency rhs(const SolverConfig& cfg, const SimState& s);

/// Compact MAC divergence at cell centers.
Field3 divergence(const SolverConfig& cfg, const SimState& s);

/// Face-located gradient of a cell-centered scalar (periodic horizontal,
/// homogeneous Neumann walls): returns (d/dx1, d/dx2, d/dx3) as a
/// velocity-shaped triple.
void gradient_faces(const SolverConfig& cfg, const Field3& phi, Field3* g1, Field3* g2,
                    Field3* g3);

/// Advection term of the temperature equation, -(u . grad) T, at centers.
Field3 advect_temperature(const SolverConfig& cfg, const SimState& s);

/// Project a provisional velocity onto the divergence-free space (spectral
/// horizontal, Thomas-solved tridiagonal vertical; zero-mean pressure mode
/// pinned to 0). The pressure correction is written to s->p. Throws
/// NumericalError if the post-projection divergence exceeds cfg.div_tol.
void project(const SolverConfig& cfg, SimState* s);

/// One explicit RK2 step with projection after each stage and boundary
/// conditions re-imposed. Halves dt on a CFL violation (or aborts per
/// config). Returns the dt actually taken.
double step(const SolverConfig& cfg, SimState* s, double dt);

/// D4 action on the staggered state (signed face permutations; exact).
SimState act_on_state(GroupElement g, const SolverConfig& cfg, const SimState& s);

/// Cell-centered snapshot [4 x N1 x N2 x N3], channels (u1, u2, u3, T);
/// pressure is excluded. Face values are averaged to centers, which
/// commutes with the D4 action exactly.
Tensor<float> snapshot(const SolverConfig& cfg, const SimState& s);
Tensor<double> snapshot_f64(const SolverConfig& cfg, const SimState& s);

/// Integrate from t=0, invoking `record` at t = t_start, t_start + dt_snap,
/// ..., t_end (dt must divide dt_snap). Used by the ensemble runner.
struct RunResult {
    int snapshots = 0;
    bool aborted = false;
    int64_t failure_step = -1;
    std::string error;
};
RunResult simulate(const SolverConfig& cfg, double t_start, double t_end, double dt_snap,
                   const std::function<void(const SimState&)>& record);

} // namespace eqsur::solver
