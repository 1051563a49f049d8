#include <cmath>

#include "doctest.h"
#include "eqsur/cae.hpp"
#include "test_helpers.hpp"

using namespace eqsur;
using eqsur::test::rel_err;

namespace {

/// Small configuration for fast unit tests (the acceptance suite exercises
/// the full desk scale).
CAEConfig tiny_cfg(CAEConfig::Variant v = CAEConfig::Variant::SteerableD4) {
    CAEConfig cfg = CAEConfig::desk(v);
    cfg.n1 = cfg.n2 = 16;
    cfg.n3 = 8;
    if (v == CAEConfig::Variant::Baseline3dConv) {
        cfg.baseline_channels = {6, 6, 8, 8, 10};
        cfg.baseline_latent_channels = 8;
    } else {
        cfg.encoder_fields = {1, 1, 1, 1, 2};
        cfg.latent_fields = 1;
    }
    return cfg;
}

} // namespace

TEST_SUITE_BEGIN("cae");

TEST_CASE("compression arithmetic: paper and desk scale") {
    CAEConfig paper = CAEConfig::paper_scale();
    CHECK(paper.latent_channels() == 32);
    CHECK(paper.m1() == 6);
    CHECK(paper.m2() == 6);
    CHECK(paper.m3() == 4);
    CHECK(paper.compression_ratio() == doctest::Approx(0.015625).epsilon(1e-12));

    CAEConfig desk = CAEConfig::desk();
    CHECK(desk.latent_channels() == 16);
    CHECK(desk.compression_ratio() == doctest::Approx(0.0078125).epsilon(1e-12));
}

TEST_CASE("shape contracts and finite outputs") {
    Rng rng(1);
    CAEConfig cfg = tiny_cfg();
    CAE<float> cae(cfg, rng);
    Rng data(9);
    Tensor<float> s = Tensor<float>::uniform({2, 4, 16, 16, 8}, data, -1, 1);
    Tensor<float> z = cae.encode(s);
    CHECK(z.shape() == Shape{2, 8, 2, 2, 1});
    Tensor<float> r = cae.decode(z);
    CHECK(r.shape() == s.shape());
    CHECK(std::isfinite(static_cast<double>(r.max_abs())));

    Tensor<float> bad({2, 3, 16, 16, 8});
    CHECK_THROWS_AS(cae.encode(bad), ValidationError);
    Tensor<float> badz({2, 8, 2, 2, 2});
    CHECK_THROWS_AS(cae.decode(badz), ValidationError);
}

TEST_CASE("equivariant CAE commutes with the D4 action") {
    Rng rng(2);
    CAEConfig cfg = tiny_cfg();
    CAE<double> cae(cfg, rng);
    Rng data(5);
    Tensor<double> s = Tensor<double>::uniform({1, 4, 16, 16, 8}, data, -1, 1);
    FieldType in_t = cfg.input_type();
    FieldType lat_t = cfg.latent_type();

    Tensor<double> z = cae.encode(s);
    Tensor<double> r = cae.decode(z);
    for (GroupElement g : group_elements(GroupKind::D4)) {
        CHECK(rel_err(cae.encode(act_on_field(g, s, in_t)), act_on_field(g, z, lat_t)) < 1e-12);
        CHECK(rel_err(cae.decode(act_on_field(g, z, lat_t)), act_on_field(g, r, in_t)) < 1e-12);
        // end to end
        Tensor<double> lhs = cae.decode(cae.encode(act_on_field(g, s, in_t)));
        CHECK(rel_err(lhs, act_on_field(g, r, in_t)) < 1e-12);
    }
}

TEST_CASE("C4 variant commutes with rotations") {
    Rng rng(3);
    CAEConfig cfg = tiny_cfg(CAEConfig::Variant::SteerableC4);
    cfg.encoder_fields = {2, 2, 2, 2, 3};
    cfg.latent_fields = 2;
    CAE<double> cae(cfg, rng);
    Rng data(6);
    Tensor<double> s = Tensor<double>::uniform({1, 4, 16, 16, 8}, data, -1, 1);
    Tensor<double> z = cae.encode(s);
    for (GroupElement g : group_elements(GroupKind::C4))
        CHECK(rel_err(cae.encode(act_on_field(g, s, cfg.input_type())),
                      act_on_field(g, z, cfg.latent_type())) < 1e-12);
}

TEST_CASE("baseline CAE fails the equivariance check (negative control)") {
    Rng rng(4);
    CAEConfig cfg = tiny_cfg(CAEConfig::Variant::Baseline3dConv);
    CAE<double> cae(cfg, rng);
    Rng data(7);
    Tensor<double> s = Tensor<double>::uniform({1, 4, 16, 16, 8}, data, -1, 1);
    FieldType in_t = FieldType::rb_input();
    FieldType lat_t = cfg.latent_type();
    Tensor<double> z = cae.encode(s);
    double worst = 0;
    for (GroupElement g : group_elements(GroupKind::D4))
        worst = std::max(worst,
                         rel_err(cae.encode(act_on_field(g, s, in_t)), act_on_field(g, z, lat_t)));
    CHECK(worst > 1e-3);
}

TEST_CASE("count_parameters agrees with the built model") {
    Rng rng(5);
    for (auto v : {CAEConfig::Variant::SteerableD4, CAEConfig::Variant::Baseline3dConv}) {
        CAEConfig cfg = tiny_cfg(v);
        CAE<float> cae(cfg, rng);
        CHECK(cae.param_count() == CAE<float>::count_parameters(cfg));
    }
}

TEST_CASE("baseline channel plan matches steerable parameters within 5%") {
    CAEConfig desk = CAEConfig::desk();
    CAEConfig matched = match_baseline_to(desk, 0.05);
    const double a = static_cast<double>(CAE<float>::count_parameters(desk));
    const double b = static_cast<double>(CAE<float>::count_parameters(matched));
    CHECK(std::abs(a - b) / a < 0.05);
    CHECK(matched.latent_channels() == desk.latent_channels()); // same compression
}

TEST_CASE("vertical sharing reduces the parameter count") {
    CAEConfig desk = CAEConfig::desk();
    CAEConfig shared = desk;
    shared.kv = 1;
    const int64_t a = CAE<float>::count_parameters(desk);
    const int64_t b = CAE<float>::count_parameters(shared);
    CHECK(b < a);

    // the shared model still runs and stays equivariant
    Rng rng(6);
    CAEConfig tiny = tiny_cfg();
    tiny.kv = 1;
    tiny.encoder_fields = {1, 1, 2, 2, 2};
    CAE<double> cae(tiny, rng);
    Rng data(8);
    Tensor<double> s = Tensor<double>::uniform({1, 4, 16, 16, 8}, data, -1, 1);
    Tensor<double> z = cae.encode(s);
    for (GroupElement g : group_elements(GroupKind::D4))
        CHECK(rel_err(cae.encode(act_on_field(g, s, tiny.input_type())),
                      act_on_field(g, z, tiny.latent_type())) < 1e-12);
}

TEST_CASE("training-mode forward is differentiable end to end") {
    Rng rng(7);
    CAEConfig cfg = tiny_cfg();
    cfg.dropout_rate = 0.1;
    CAE<double> cae(cfg, rng);
    Rng data(10);
    Tensor<double> s = Tensor<double>::uniform({2, 4, 16, 16, 8}, data, -1, 1);

    Tape<double> tape;
    cae.bind(&tape);
    Rng drop(42);
    Tensor<double> loss = mse(cae.decode(cae.encode(s, true, &drop), true, &drop), s);
    tape.backward(loss);
    auto refs = cae.params();
    // every parameter receives a finite gradient (dropout may zero a few)
    int with_grad = 0;
    for (auto& leaf : tape.leaves()) {
        if (tape.grad_present(leaf)) ++with_grad;
    }
    CHECK(with_grad == static_cast<int>(refs.size()));
    cae.bind(nullptr);
}

TEST_SUITE_END();
