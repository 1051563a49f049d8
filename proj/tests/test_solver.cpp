#include <cmath>

#include "doctest.h"
#include "eqsur/solver.hpp"
#include "test_helpers.hpp"

using namespace eqsur;
using namespace eqsur::solver;

namespace {

SolverConfig small_cfg() {
    SolverConfig cfg;
    cfg.n1 = cfg.n2 = 12;
    cfg.n3 = 8;
    cfg.dt = 0.01;
    return cfg;
}

double field_rel_err(const Field3& a, const Field3& b) {
    double diff = 0, norm = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        diff = std::max(diff, std::abs(a.v[i] - b.v[i]));
        norm = std::max({norm, std::abs(a.v[i]), std::abs(b.v[i])});
    }
    return norm == 0 ? diff : diff / norm;
}

double state_rel_err(const SimState& a, const SimState& b) {
    return std::max({field_rel_err(a.u1, b.u1), field_rel_err(a.u2, b.u2),
                     field_rel_err(a.u3, b.u3), field_rel_err(a.T, b.T)});
}

/// Smooth, boundary-respecting random state: a few spectral modes with
/// tangential/vertical structure compatible with the walls.
SimState smooth_state(const SolverConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    SimState s(cfg.n1, cfg.n2, cfg.n3);
    const double pi = 3.14159265358979323846;
    double a[6], b[6];
    for (int m = 0; m < 6; ++m) {
        a[m] = rng.uniform(-1, 1);
        b[m] = rng.uniform(0, 2 * pi);
    }
    for (int i = 0; i < cfg.n1; ++i)
        for (int j = 0; j < cfg.n2; ++j) {
            for (int k = 0; k < cfg.n3; ++k) {
                const double zc = cfg.zc(k);
                const double x1f = i * cfg.delta1();
                const double x2c = (j + 0.5) * cfg.delta2();
                const double x1c = (i + 0.5) * cfg.delta1();
                const double x2f = j * cfg.delta2();
                // tangential velocities vanish at the walls via (1 - z^2)
                s.u1.at(i, j, k) = a[0] * std::sin(x1f + b[0]) * std::cos(x2c) * (1 - zc * zc);
                s.u2.at(i, j, k) = a[1] * std::cos(x1c) * std::sin(x2f + b[1]) * (1 - zc * zc);
                s.T.at(i, j, k) =
                    cfg.t_conduction(k) + 0.1 * a[2] * std::cos(x1c + b[2]) * std::cos(x2c);
            }
            for (int k = 1; k < cfg.n3; ++k) {
                const double zf = -1.0 + k * cfg.delta3();
                const double x1c = (i + 0.5) * cfg.delta1();
                const double x2c = (j + 0.5) * cfg.delta2();
                s.u3.at(i, j, k) =
                    a[3] * std::sin(x1c + b[3]) * std::sin(x2c + b[4]) * (1 - zf * zf);
            }
        }
    return s;
}

} // namespace

TEST_SUITE_BEGIN("solver");

TEST_CASE("conduction profile annihilates the energy equation") {
    SolverConfig cfg = small_cfg();
    Rng rng(1);
    SimState s = initial_state(cfg, rng, /*perturb=*/false);
    Tendency t = rhs(cfg, s);
    CHECK(t.dT.max_abs() < 1e-13);
    CHECK(t.du1.max_abs() < 1e-13);
    CHECK(t.du2.max_abs() < 1e-13);
    // buoyancy is the only momentum tendency: dT/dz-linear profile at faces
    for (int k = 1; k < cfg.n3; ++k) {
        const double tface = 0.5 * (cfg.t_conduction(k - 1) + cfg.t_conduction(k));
        CHECK(t.du3.at(3, 5, k) == doctest::Approx(tface).epsilon(1e-12));
    }
}

TEST_CASE("constant temperature gives pure buoyancy") {
    SolverConfig cfg = small_cfg();
    cfg.t_bot = cfg.t_top = 0.7;
    Rng rng(2);
    SimState s = initial_state(cfg, rng, false);
    Tendency t = rhs(cfg, s);
    for (int k = 1; k < cfg.n3; ++k) CHECK(t.du3.at(0, 0, k) == doctest::Approx(0.7).epsilon(1e-13));
    CHECK(t.dT.max_abs() < 1e-13);
}

TEST_CASE("rhs matches an independent stencil evaluation") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 33);
    Tendency fast = rhs(cfg, s);

    // independent oracle: ghost-extended dense arrays, textbook formulas
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    const double d1 = cfg.delta1(), d2 = cfg.delta2(), d3 = cfg.delta3();
    auto u1g = [&](int i, int j, int k) {
        i = (i % n1 + n1) % n1;
        j = (j % n2 + n2) % n2;
        if (k < 0) return -s.u1.at(i, j, 0);
        if (k >= n3) return -s.u1.at(i, j, n3 - 1);
        return s.u1.at(i, j, k);
    };
    auto u2g = [&](int i, int j, int k) {
        i = (i % n1 + n1) % n1;
        j = (j % n2 + n2) % n2;
        if (k < 0) return -s.u2.at(i, j, 0);
        if (k >= n3) return -s.u2.at(i, j, n3 - 1);
        return s.u2.at(i, j, k);
    };
    auto u3g = [&](int i, int j, int k) {
        i = (i % n1 + n1) % n1;
        j = (j % n2 + n2) % n2;
        return s.u3.at(i, j, k);
    };
    auto Tg = [&](int i, int j, int k) {
        i = (i % n1 + n1) % n1;
        j = (j % n2 + n2) % n2;
        if (k < 0) return 2 * cfg.t_bot - s.T.at(i, j, 0);
        if (k >= n3) return 2 * cfg.t_top - s.T.at(i, j, n3 - 1);
        return s.T.at(i, j, k);
    };

    double worst = 0;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                {
                    // u1 momentum at x-face
                    const double v = 0.25 * (u2g(i - 1, j, k) + u2g(i - 1, j + 1, k) +
                                             u2g(i, j, k) + u2g(i, j + 1, k));
                    const double w = 0.25 * (u3g(i - 1, j, k) + u3g(i - 1, j, k + 1) +
                                             u3g(i, j, k) + u3g(i, j, k + 1));
                    const double adv = u1g(i, j, k) * (u1g(i + 1, j, k) - u1g(i - 1, j, k)) /
                                           (2 * d1) +
                                       v * (u1g(i, j + 1, k) - u1g(i, j - 1, k)) / (2 * d2) +
                                       w * (u1g(i, j, k + 1) - u1g(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (u1g(i + 1, j, k) - 2 * u1g(i, j, k) + u1g(i - 1, j, k)) / (d1 * d1) +
                        (u1g(i, j + 1, k) - 2 * u1g(i, j, k) + u1g(i, j - 1, k)) / (d2 * d2) +
                        (u1g(i, j, k + 1) - 2 * u1g(i, j, k) + u1g(i, j, k - 1)) / (d3 * d3);
                    worst = std::max(worst,
                                     std::abs(fast.du1.at(i, j, k) - (-adv + cfg.nu() * lap)));
                }
                {
                    // temperature at center
                    const double u = 0.5 * (u1g(i, j, k) + u1g(i + 1, j, k));
                    const double v = 0.5 * (u2g(i, j, k) + u2g(i, j + 1, k));
                    const double w = 0.5 * (u3g(i, j, k) + u3g(i, j, k + 1));
                    const double adv = u * (Tg(i + 1, j, k) - Tg(i - 1, j, k)) / (2 * d1) +
                                       v * (Tg(i, j + 1, k) - Tg(i, j - 1, k)) / (2 * d2) +
                                       w * (Tg(i, j, k + 1) - Tg(i, j, k - 1)) / (2 * d3);
                    const double lap =
                        (Tg(i + 1, j, k) - 2 * Tg(i, j, k) + Tg(i - 1, j, k)) / (d1 * d1) +
                        (Tg(i, j + 1, k) - 2 * Tg(i, j, k) + Tg(i, j - 1, k)) / (d2 * d2) +
                        (Tg(i, j, k + 1) - 2 * Tg(i, j, k) + Tg(i, j, k - 1)) / (d3 * d3);
                    worst = std::max(
                        worst, std::abs(fast.dT.at(i, j, k) - (-adv + cfg.kappa() * lap)));
                }
                if (k >= 1) {
                    // u3 momentum at interior z-face
                    const double u = 0.25 * (u1g(i, j, k - 1) + u1g(i, j, k) +
                                             u1g(i + 1, j, k - 1) + u1g(i + 1, j, k));
                    const double v = 0.25 * (u2g(i, j, k - 1) + u2g(i, j, k) +
                                             u2g(i, j + 1, k - 1) + u2g(i, j + 1, k));
                    const double adv = u * (u3g(i + 1, j, k) - u3g(i - 1, j, k)) / (2 * d1) +
                                       v * (u3g(i, j + 1, k) - u3g(i, j - 1, k)) / (2 * d2) +
                                       u3g(i, j, k) * (u3g(i, j, k + 1) - u3g(i, j, k - 1)) /
                                           (2 * d3);
                    const double lap =
                        (u3g(i + 1, j, k) - 2 * u3g(i, j, k) + u3g(i - 1, j, k)) / (d1 * d1) +
                        (u3g(i, j + 1, k) - 2 * u3g(i, j, k) + u3g(i, j - 1, k)) / (d2 * d2) +
                        (u3g(i, j, k + 1) - 2 * u3g(i, j, k) + u3g(i, j, k - 1)) / (d3 * d3);
                    const double buoy = 0.5 * (Tg(i, j, k - 1) + Tg(i, j, k));
                    worst = std::max(worst, std::abs(fast.du3.at(i, j, k) -
                                                     (-adv + cfg.nu() * lap + buoy)));
                }
            }
    CHECK(worst < 1e-12);
}

TEST_CASE("projection: fixed point, kernel, idempotence, divergence") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 44);
    project(cfg, &s);
    CHECK(divergence(cfg, s).max_abs() < 1e-10);

    // projector fixes its image
    SimState s2 = s;
    project(cfg, &s2);
    CHECK(state_rel_err(s, s2) < 1e-10);

    // gradient fields project to ~0 velocity
    Rng rng(5);
    Field3 phi(cfg.n1, cfg.n2, cfg.n3);
    for (double& x : phi.v) x = rng.uniform(-1, 1);
    SimState g(cfg.n1, cfg.n2, cfg.n3);
    gradient_faces(cfg, phi, &g.u1, &g.u2, &g.u3);
    project(cfg, &g);
    CHECK(std::max({g.u1.max_abs(), g.u2.max_abs(), g.u3.max_abs()}) < 1e-10);
}

TEST_CASE("conduction steady state is preserved") {
    SolverConfig cfg = small_cfg();
    Rng rng(3);
    SimState s = initial_state(cfg, rng, false);
    for (int n = 0; n < 10; ++n) {
        SimState before = s;
        step(cfg, &s, cfg.dt);
        CHECK(field_rel_err(before.T, s.T) < 1e-8);
        CHECK(std::max({s.u1.max_abs(), s.u2.max_abs(), s.u3.max_abs()}) < 1e-8);
    }
}

TEST_CASE("sub-critical perturbations decay monotonically") {
    SolverConfig cfg = small_cfg();
    cfg.ra = 100.0;
    cfg.dt = 0.01;
    Rng rng(7);
    SimState s = initial_state(cfg, rng, true);
    auto energy = [&](const SimState& st) {
        double e = 0;
        for (double x : st.u1.v) e += x * x;
        for (double x : st.u2.v) e += x * x;
        for (double x : st.u3.v) e += x * x;
        for (int i = 0; i < cfg.n1; ++i)
            for (int j = 0; j < cfg.n2; ++j)
                for (int k = 0; k < cfg.n3; ++k) {
                    const double d = st.T.at(i, j, k) - cfg.t_conduction(k);
                    e += d * d;
                }
        return e;
    };
    const double e0 = energy(s);
    double prev = e0;
    for (int n = 0; n < 200; ++n) {
        step(cfg, &s, cfg.dt);
        const double e = energy(s);
        CHECK(e <= prev * (1.0 + 1e-12));
        prev = e;
    }
    CHECK(prev < 0.1 * e0); // substantially decayed after t = 2
}

TEST_CASE("discrete vector-calculus identities hold for all 8 elements") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 55);
    Rng rng(9);
    Field3 phi(cfg.n1, cfg.n2, cfg.n3);
    for (double& x : phi.v) x = rng.uniform(-1, 1);

    for (GroupElement g : group_elements(GroupKind::D4)) {
        // gradient identity: grad(R.w) = R.(grad w) for a scalar field
        {
            SimState sp(cfg.n1, cfg.n2, cfg.n3);
            sp.T = phi;
            SimState sp_r = act_on_state(g, cfg, sp);
            SimState gw(cfg.n1, cfg.n2, cfg.n3), gwr(cfg.n1, cfg.n2, cfg.n3);
            gradient_faces(cfg, sp.T, &gw.u1, &gw.u2, &gw.u3);
            gradient_faces(cfg, sp_r.T, &gwr.u1, &gwr.u2, &gwr.u3);
            SimState gw_rot = act_on_state(g, cfg, gw);
            CHECK(std::max({field_rel_err(gwr.u1, gw_rot.u1), field_rel_err(gwr.u2, gw_rot.u2),
                            field_rel_err(gwr.u3, gw_rot.u3)}) < 1e-12);
        }
        // divergence identity: div(R.u) = R.(div u)
        {
            SimState sr = act_on_state(g, cfg, s);
            Field3 lhs = divergence(cfg, sr);
            SimState tmp(cfg.n1, cfg.n2, cfg.n3);
            tmp.T = divergence(cfg, s);
            Field3 rhs_f = act_on_state(g, cfg, tmp).T;
            CHECK(field_rel_err(lhs, rhs_f) < 1e-12);
        }
        // advection product rule: adv(R.u, R.T) = R.(adv(u, T))
        {
            SimState sr = act_on_state(g, cfg, s);
            Field3 lhs = advect_temperature(cfg, sr);
            SimState tmp(cfg.n1, cfg.n2, cfg.n3);
            tmp.T = advect_temperature(cfg, s);
            Field3 rhs_f = act_on_state(g, cfg, tmp).T;
            CHECK(field_rel_err(lhs, rhs_f) < 1e-12);
        }
        // buoyancy: (R.T) e3 = R.(T e3), exact because the action leaves e3
        // invariant
        {
            SimState sr = act_on_state(g, cfg, s);
            Tendency tr = rhs(cfg, sr);
            Tendency t0 = rhs(cfg, s);
            SimState tmp(cfg.n1, cfg.n2, cfg.n3);
            tmp.u3 = t0.du3;
            Field3 rot_du3 = act_on_state(g, cfg, tmp).u3;
            CHECK(field_rel_err(tr.du3, rot_du3) < 1e-12);
        }
    }
}

TEST_CASE("time step commutes with the D4 action") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 66);
    project(cfg, &s); // start from a divergence-free state
    for (GroupElement g : group_elements(GroupKind::D4)) {
        SimState a = act_on_state(g, cfg, s);
        step(cfg, &a, cfg.dt);
        SimState b = s;
        step(cfg, &b, cfg.dt);
        SimState br = act_on_state(g, cfg, b);
        CHECK(state_rel_err(a, br) < 1e-10);
    }
}

TEST_CASE("group action on the staggered state is consistent with the field action") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 77);
    FieldType rb = FieldType::rb_input();
    for (GroupElement g : group_elements(GroupKind::D4)) {
        // snapshot(act(g, state)) == act_on_field(g, snapshot(state))
        Tensor<double> lhs = snapshot_f64(cfg, act_on_state(g, cfg, s));
        Tensor<double> snap = snapshot_f64(cfg, s);
        Tensor<double> batched({1, 4, cfg.n1, cfg.n2, cfg.n3}, snap.vec());
        Tensor<double> rhs_t = act_on_field(g, batched, rb);
        Tensor<double> rhs_unb(Shape{4, cfg.n1, cfg.n2, cfg.n3}, rhs_t.vec());
        CHECK(eqsur::test::rel_err(lhs, rhs_unb) == 0.0); // exact permutation both ways

        // action composition on the staggered state
        for (GroupElement h : group_elements(GroupKind::D4)) {
            SimState one = act_on_state(g, cfg, act_on_state(h, cfg, s));
            SimState two = act_on_state(compose(g, h), cfg, s);
            CHECK(state_rel_err(one, two) == 0.0);
        }
    }
}

TEST_CASE("CFL handling and abort policy") {
    SolverConfig cfg = small_cfg();
    SimState s = smooth_state(cfg, 88);
    for (double& x : s.u1.v) x *= 100.0; // force a CFL violation
    SolverConfig strict = cfg;
    strict.abort_on_cfl = true;
    SimState s2 = s;
    CHECK_THROWS_AS(step(strict, &s2, cfg.dt), NumericalError);
    // default policy: halve dt and proceed
    SimState s3 = s;
    const double taken = step(cfg, &s3, cfg.dt);
    CHECK(taken < cfg.dt);
}

TEST_CASE("simulate: schedule, determinism, abort reporting") {
    SolverConfig cfg = small_cfg();
    cfg.dt = 0.05;
    std::vector<Tensor<float>> snaps1, snaps2;
    RunResult r1 = simulate(cfg, 0.1, 0.5, 0.1,
                            [&](const SimState& s) { snaps1.push_back(snapshot(cfg, s)); });
    CHECK(!r1.aborted);
    CHECK(r1.snapshots == 5);
    CHECK(snaps1.size() == 5);

    RunResult r2 = simulate(cfg, 0.1, 0.5, 0.1,
                            [&](const SimState& s) { snaps2.push_back(snapshot(cfg, s)); });
    CHECK(!r2.aborted);
    for (size_t i = 0; i < snaps1.size(); ++i)
        CHECK(eqsur::test::bitwise_equal(snaps1[i], snaps2[i]));

    CHECK_THROWS_AS(simulate(cfg, 0.0, 1.0, 0.13, [](const SimState&) {}), ValidationError);
}

TEST_SUITE_END();
