#include <cmath>

#include "doctest.h"
#include "eqsur/ref.hpp"
#include "eqsur/steerable.hpp"
#include "test_helpers.hpp"

using namespace eqsur;
using eqsur::test::rel_err;

namespace {

/// Character-formula rank of the intertwiner projector: an independent
/// closed-form route, (1/|G|) sum_g chi_out(g) chi_in(g) fix(g).
int basis_dim_by_characters(RepKind rep_out, RepKind rep_in, GroupKind group, int k) {
    double acc = 0.0;
    for (GroupElement g : group_elements(group)) {
        auto mo = rep_matrix(rep_out, group, g);
        auto mi = rep_matrix(rep_in, group, g);
        const int dro = rep_dim(rep_out, group), dri = rep_dim(rep_in, group);
        double chi_o = 0, chi_i = 0;
        for (int i = 0; i < dro; ++i) chi_o += mo[i * dro + i];
        for (int i = 0; i < dri; ++i) chi_i += mi[i * dri + i];
        int fix = 0;
        for (int64_t a = 0; a < k; ++a)
            for (int64_t b = 0; b < k; ++b) {
                int64_t s1, s2;
                act_on_index(g, k, a, b, &s1, &s2);
                if (s1 == a && s2 == b) ++fix;
            }
        acc += chi_o * chi_i * fix;
    }
    return static_cast<int>(std::lround(acc / group_order(group)));
}

Tensor<double> random_field(Shape s, uint64_t seed) {
    Rng rng(seed);
    return Tensor<double>::uniform(std::move(s), rng, -1, 1);
}

} // namespace

TEST_SUITE_BEGIN("steerable");

TEST_CASE("projector fixes its image and is idempotent") {
    Rng rng(101);
    FieldType in = FieldType::rb_input();
    FieldType out = FieldType::regular(2);
    Tensor<double> raw = Tensor<double>::uniform({16, 4, 3, 3}, rng, -1, 1);
    Tensor<double> p1 = project_kernel(raw, in, out);
    Tensor<double> p2 = project_kernel(p1, in, out);
    CHECK(rel_err(p1, p2) < 1e-14);
    CHECK(steerability_violation(p1, in, out) < 1e-13);

    // already-steerable input is returned unchanged
    Tensor<double> p3 = project_kernel(p2, in, out);
    CHECK(rel_err(p2, p3) < 1e-14);

    Tensor<double> even({16, 4, 2, 2});
    CHECK_THROWS_AS(project_kernel(even, in, out), ValidationError);
}

TEST_CASE("trivial->trivial 3x3 basis = the 3 orbit indicators") {
    auto basis = pair_basis(RepKind::Trivial, RepKind::Trivial, GroupKind::D4, 3);
    CHECK(basis->d == 3);
    CHECK(std::abs(basis->projector_trace - 3.0) < 1e-12);

    // enumerate D4 orbits of the 9 positions: center, edges, corners
    std::vector<int> orbit(9, -1);
    int n_orbits = 0;
    for (int64_t p = 0; p < 9; ++p) {
        if (orbit[p] >= 0) continue;
        for (GroupElement g : group_elements(GroupKind::D4)) {
            int64_t s1, s2;
            act_on_index(g, 3, p / 3, p % 3, &s1, &s2);
            orbit[s1 * 3 + s2] = n_orbits;
        }
        ++n_orbits;
    }
    CHECK(n_orbits == 3);
    // every basis element is constant on orbits
    for (const auto& e : basis->elems)
        for (int64_t p = 0; p < 9; ++p)
            for (int64_t q = 0; q < 9; ++q)
                if (orbit[p] == orbit[q]) CHECK(e[p] == doctest::Approx(e[q]).epsilon(1e-12));
}

TEST_CASE("basis dimensions match projector ranks") {
    // regular->regular 3x3: 8*8*9/8 = 72
    auto rr = pair_basis(RepKind::Regular, RepKind::Regular, GroupKind::D4, 3);
    CHECK(rr->d == 72);
    CHECK(std::abs(rr->projector_trace - 72.0) < 1e-10);
    CHECK(rr->d == basis_dim_by_characters(RepKind::Regular, RepKind::Regular, GroupKind::D4, 3));

    // standard2d->regular k=1: rank fixed by the brute-force trace oracle
    auto sr = pair_basis(RepKind::Standard2d, RepKind::Regular, GroupKind::D4, 1);
    CHECK(std::abs(sr->projector_trace - sr->d) < 1e-10);
    CHECK(sr->d == basis_dim_by_characters(RepKind::Standard2d, RepKind::Regular, GroupKind::D4, 1));

    // orthonormality under the Frobenius inner product
    for (int i = 0; i < rr->d; ++i)
        for (int j = i; j < rr->d; ++j) {
            double dot = 0;
            for (size_t p = 0; p < rr->elems[i].size(); ++p) dot += rr->elems[i][p] * rr->elems[j][p];
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }

    // every element satisfies the constraint
    FieldType reg1 = FieldType::regular(1);
    for (const auto& e : rr->elems) {
        Tensor<double> kern({8, 8, 3, 3}, e);
        CHECK(steerability_violation(kern, reg1, reg1) < 1e-12);
    }
}

TEST_CASE("regular->regular layers expose exactly 1/8 of unconstrained parameters") {
    for (int k : {3, 5}) {
        auto rr = pair_basis(RepKind::Regular, RepKind::Regular, GroupKind::D4, k);
        CHECK(rr->d * 8 == 8 * 8 * k * k);
    }
    // and the same at layer granularity
    FieldType in = FieldType::regular(2), out = FieldType::regular(3);
    auto lb = build_layer_basis(in, out, 5);
    CHECK(lb->total_dim * 8 == in.channels() * out.channels() * 25);
}

TEST_CASE("height-dependent conv: identity and per-height scaling") {
    FieldType triv{GroupKind::D4, {RepKind::Trivial}};
    Rng rng(7);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    spec.in_type = triv;
    spec.out_type = triv;
    spec.k = 1;
    spec.taps = 1;
    spec.n1 = 4;
    spec.n2 = 4;
    spec.n3 = 2;
    Conv3dLayer<double> layer(spec, rng);
    CHECK(layer.param_count() == 2); // one coefficient per height

    // identity kernels at both heights
    layer.set_weights(Tensor<double>({2, 1, 1}, {1.0, 1.0}));
    Tensor<double> x = random_field({1, 1, 4, 4, 2}, 5);
    CHECK(rel_err(layer.forward(x), x) < 1e-15);

    // heights scaling by 2 and 3 on constant input 1
    layer.set_weights(Tensor<double>({2, 1, 1}, {2.0, 3.0}));
    Tensor<double> ones = Tensor<double>::full({1, 1, 4, 4, 2}, 1.0);
    Tensor<double> y = layer.forward(ones);
    for (int64_t p = 0; p < 16; ++p) {
        CHECK(y.data()[2 * p + 0] == doctest::Approx(2.0));
        CHECK(y.data()[2 * p + 1] == doctest::Approx(3.0));
    }
}

TEST_CASE("height-dependent conv matches the naive 5-loop oracle") {
    Rng rng(55);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    spec.in_type = FieldType::rb_input();
    spec.out_type = FieldType::regular(1);
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 6;
    spec.n2 = 6;
    spec.n3 = 4;
    Conv3dLayer<double> layer(spec, rng);

    Tensor<double> x = random_field({2, 4, 6, 6, 4}, 77);
    Tensor<double> fast = layer.forward(x);
    Tensor<double> oracle = ref::conv3d_height_dependent(x, layer.expanded_bank(), 4, 8, 3);
    CHECK(rel_err(fast, oracle) < 1e-13);

    // float path against the double oracle
    typename Conv3dLayer<float>::Spec fspec;
    fspec.variant = Conv3dLayer<float>::Variant::SteerableHeightDependent;
    fspec.in_type = spec.in_type;
    fspec.out_type = spec.out_type;
    fspec.k = 3;
    fspec.taps = 3;
    fspec.n1 = 6;
    fspec.n2 = 6;
    fspec.n3 = 4;
    Rng rng2(55);
    Conv3dLayer<float> flayer(fspec, rng2);
    flayer.set_weights(layer.weights().cast<float>());
    Tensor<double> fast32 = flayer.forward(x.cast<float>()).cast<double>();
    CHECK(rel_err(fast32, oracle) < 1e-6);
}

TEST_CASE("baseline 3d conv matches the oracle with a height-shared bank") {
    Rng rng(66);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::Baseline3d;
    spec.cin = 3;
    spec.cout = 5;
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 5;
    spec.n2 = 5;
    spec.n3 = 4;
    Conv3dLayer<double> layer(spec, rng);
    CHECK(layer.param_count() == 5 * 3 * 3 * 3 * 3);
    Tensor<double> x = random_field({1, 3, 5, 5, 4}, 9);
    Tensor<double> oracle = ref::conv3d_height_dependent(x, layer.expanded_bank(), 4, 5, 3);
    CHECK(rel_err(layer.forward(x), oracle) < 1e-13);
}

TEST_CASE("vertical sharing: kv=0 degenerates to height-dependent") {
    Rng rng(88);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableVerticalShared;
    spec.in_type = FieldType::regular(1);
    spec.out_type = FieldType::regular(1);
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 4;
    spec.n2 = 4;
    spec.n3 = 4;
    spec.kv = 0;
    Conv3dLayer<double> shared(spec, rng);

    typename Conv3dLayer<double>::Spec hd = spec;
    hd.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    Rng rng2(11);
    Conv3dLayer<double> plain(hd, rng2);
    plain.set_weights(shared.weights());

    CHECK(shared.out_channels() == 8);
    Tensor<double> x = random_field({2, 8, 4, 4, 4}, 3);
    CHECK(rel_err(shared.forward(x), plain.forward(x)) < 1e-14);
}

TEST_CASE("vertical sharing: channel count and full coverage at kv=1") {
    Rng rng(99);
    FieldType base{GroupKind::D4, {RepKind::Trivial, RepKind::Trivial}}; // C = 2
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableVerticalShared;
    spec.in_type = FieldType::regular(1);
    spec.out_type = base;
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 4;
    spec.n2 = 4;
    spec.n3 = 6;
    spec.kv = 1;
    Conv3dLayer<double> layer(spec, rng);
    CHECK(layer.out_channels() == 6); // n * C = 3 * 2

    // every height receives exactly n kernel applications: all channel
    // blocks at every height are populated (kernel sets exist thanks to the
    // boundary sets)
    Tensor<double> x = random_field({1, 8, 4, 4, 6}, 31);
    Tensor<double> y = layer.forward(x);
    for (int64_t c = 0; c < 6; ++c)
        for (int64_t z = 0; z < 6; ++z) {
            double mx = 0;
            for (int64_t p = 0; p < 16; ++p)
                mx = std::max(mx, std::abs(y.data()[((c * 4 + p / 4) * 4 + p % 4) * 6 + z]));
            CHECK(mx > 0.0);
        }
}

TEST_CASE("vertical sharing matches the kernel-materialization oracle") {
    Rng rng(123);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableVerticalShared;
    spec.in_type = FieldType::regular(1);
    spec.out_type = FieldType::regular(1);
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 5;
    spec.n2 = 5;
    spec.n3 = 6;
    spec.kv = 1;
    Conv3dLayer<double> layer(spec, rng);

    Tensor<double> x = random_field({2, 8, 5, 5, 6}, 17);
    Tensor<double> fast = layer.forward(x);

    // explicitly materialize the shared kernels at each height, then run the
    // unshared naive reference
    Tensor<double> full = ref::materialize_shared_kernels(layer.expanded_bank(), 6, 1);
    Tensor<double> oracle = ref::conv3d_height_dependent(x, full, 6, 3 * 8, 3);
    CHECK(rel_err(fast, oracle) < 1e-13);

    typename Conv3dLayer<double>::Spec bad = spec;
    bad.kv = 4; // neighborhood taller than the domain
    Rng rng3(5);
    CHECK_THROWS_AS(Conv3dLayer<double>(bad, rng3), ValidationError);
}

TEST_CASE("sharing reduces parameters by ~n at fixed output channels") {
    // same C_out = 24 channels (3 regular fields): unshared learns them per
    // height, shared learns 1 field per height applied across n = 3 heights
    typename Conv3dLayer<double>::Spec unshared;
    unshared.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    unshared.in_type = FieldType::regular(2);
    unshared.out_type = FieldType::regular(3);
    unshared.k = 3;
    unshared.taps = 3;
    unshared.n1 = unshared.n2 = 8;
    unshared.n3 = 16;

    typename Conv3dLayer<double>::Spec shared = unshared;
    shared.variant = Conv3dLayer<double>::Variant::SteerableVerticalShared;
    shared.out_type = FieldType::regular(1);
    shared.kv = 1;

    const int64_t pu = Conv3dLayer<double>::count_parameters(unshared);
    const int64_t ps = Conv3dLayer<double>::count_parameters(shared);
    // closed form: H*taps*d(3 fields) vs (H+2kv)*taps*d(1 field), d linear in
    // output fields -> ratio = (H + 2kv) / (n * H)
    CHECK(pu == 16 * 3 * (3 * 2 * 8 * 9));
    CHECK(ps == (16 + 2) * 3 * (1 * 2 * 8 * 9));
    CHECK(static_cast<double>(ps) / pu == doctest::Approx((16.0 + 2.0) / (3.0 * 16.0)));
}

TEST_CASE("steerable layer is D4-equivariant") {
    Rng rng(2024);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    spec.in_type = FieldType::rb_input();
    spec.out_type = FieldType::regular(2);
    spec.k = 5;
    spec.taps = 5;
    spec.n1 = 8;
    spec.n2 = 8;
    spec.n3 = 4;
    Conv3dLayer<double> layer(spec, rng);

    Tensor<double> x = random_field({2, 4, 8, 8, 4}, 909);
    Tensor<double> fx = layer.forward(x);
    for (GroupElement g : group_elements(GroupKind::D4)) {
        Tensor<double> lhs = layer.forward(act_on_field(g, x, spec.in_type));
        Tensor<double> rhs = act_on_field(g, fx, spec.out_type);
        CHECK(rel_err(lhs, rhs) < 1e-12);
    }

    // negative control: an unprojected random bank of the same shape is not
    // equivariant
    typename Conv3dLayer<double>::Spec bad = spec;
    bad.variant = Conv3dLayer<double>::Variant::Baseline3d;
    bad.cin = 4;
    bad.cout = 16;
    Rng rng2(4);
    Conv3dLayer<double> rawlayer(bad, rng2);
    Tensor<double> fx2 = rawlayer.forward(x);
    double worst = 0;
    for (GroupElement g : group_elements(GroupKind::D4)) {
        Tensor<double> lhs = rawlayer.forward(act_on_field(g, x, spec.in_type));
        Tensor<double> rhs = act_on_field(g, fx2, FieldType::regular(2));
        worst = std::max(worst, rel_err(lhs, rhs));
    }
    CHECK(worst > 1e-3);
}

TEST_CASE("vertical sharing keeps the composite layer equivariant") {
    Rng rng(31337);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableVerticalShared;
    spec.in_type = FieldType::regular(1);
    spec.out_type = FieldType::regular(1);
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 6;
    spec.n2 = 6;
    spec.n3 = 4;
    spec.kv = 1;
    Conv3dLayer<double> layer(spec, rng);
    FieldType out_full = FieldType::regular(3); // n * 1 fields

    Tensor<double> x = random_field({1, 8, 6, 6, 4}, 11);
    Tensor<double> fx = layer.forward(x);
    for (GroupElement g : group_elements(GroupKind::D4)) {
        Tensor<double> lhs = layer.forward(act_on_field(g, x, spec.in_type));
        Tensor<double> rhs = act_on_field(g, fx, out_full);
        CHECK(rel_err(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("gradients flow through basis coefficients (finite differences)") {
    Rng rng(777);
    typename Conv3dLayer<double>::Spec spec;
    spec.variant = Conv3dLayer<double>::Variant::SteerableHeightDependent;
    spec.in_type = FieldType::rb_input();
    spec.out_type = FieldType::regular(1);
    spec.k = 3;
    spec.taps = 3;
    spec.n1 = 4;
    spec.n2 = 4;
    spec.n3 = 2;
    Conv3dLayer<double> layer(spec, rng);
    Tensor<double> x = random_field({1, 4, 4, 4, 2}, 2);
    Tensor<double> target = random_field({1, 8, 4, 4, 2}, 3);

    auto loss_at = [&](const Tensor<double>& w) {
        Conv3dLayer<double>& mut = layer;
        Tensor<double> saved = layer.weights();
        mut.set_weights(w.detached());
        double v = mse(mut.forward(x), target).item();
        mut.set_weights(saved);
        return v;
    };

    Tape<double> tape;
    layer.bind(&tape);
    Tensor<double> loss = mse(layer.forward(x), target);
    tape.backward(loss);
    // the layer's weights are the only leaf on this tape
    Tensor<double> bw = layer.weights();
    Tensor<double> wleaf = bw;
    wleaf.tape = &tape;
    wleaf.node = tape.leaves()[0];
    Tensor<double> g = tape.grad(wleaf);
    layer.bind(nullptr);

    Rng probe(5);
    const double h = 1e-5;
    for (int p = 0; p < 20; ++p) {
        int64_t i = static_cast<int64_t>(probe.below(static_cast<uint64_t>(bw.size())));
        Tensor<double> wp = bw.detached();
        Tensor<double> wm = bw.detached();
        Tensor<double> wp2(wp.shape(), wp.vec());
        Tensor<double> wm2(wm.shape(), wm.vec());
        wp2.data()[i] += h;
        wm2.data()[i] -= h;
        const double fd = (loss_at(wp2) - loss_at(wm2)) / (2 * h);
        const double an = g.data()[i];
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-4);
    }
}

TEST_SUITE_END();
