#include "doctest.h"
#include "eqsur/group.hpp"
#include "test_helpers.hpp"

using namespace eqsur;
using eqsur::test::bitwise_equal;

namespace {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int d) {
    std::vector<double> c(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k)
            for (int j = 0; j < d; ++j) c[i * d + j] += a[i * d + k] * b[k * d + j];
    return c;
}

} // namespace

TEST_SUITE_BEGIN("group");

TEST_CASE("composition convention") {
    CHECK(compose({1, 0}, {1, 0}) == GroupElement{2, 0});
    // flip o rot1 = rot3 o flip under flip o rot^r = rot^{-r} o flip
    CHECK(compose({0, 1}, {1, 0}) == GroupElement{3, 1});
    // every reflection is an involution
    for (int r = 0; r < 4; ++r) {
        GroupElement refl{r, 1};
        CHECK(compose(refl, refl) == GroupElement{0, 0});
        CHECK(inverse(refl) == refl);
    }
    CHECK(inverse(GroupElement{1, 0}) == GroupElement{3, 0});
}

TEST_CASE("group axioms hold exhaustively") {
    auto es = group_elements(GroupKind::D4);
    CHECK(es.size() == 8);
    const GroupElement e{0, 0};
    for (auto g : es) {
        CHECK(compose(g, e) == g);
        CHECK(compose(e, g) == g);
        CHECK(compose(g, inverse(g)) == e);
        CHECK(compose(inverse(g), g) == e);
        for (auto h : es)
            for (auto k : es)
                CHECK(compose(compose(g, h), k) == compose(g, compose(h, k)));
    }
}

TEST_CASE("representation matrices") {
    for (auto g : group_elements(GroupKind::D4)) {
        auto t = rep_matrix(RepKind::Trivial, GroupKind::D4, g);
        CHECK(t.size() == 1);
        CHECK(t[0] == 1.0);
    }
    auto r1 = rep_matrix(RepKind::Standard2d, GroupKind::D4, {1, 0});
    CHECK(r1 == std::vector<double>{0, -1, 1, 0});

    // regular representation: permutation matrices matching the Cayley table
    auto es = group_elements(GroupKind::D4);
    for (auto g : es) {
        auto m = rep_matrix(RepKind::Regular, GroupKind::D4, g);
        for (int i = 0; i < 8; ++i) {
            double row = 0, col = 0;
            for (int j = 0; j < 8; ++j) {
                row += m[i * 8 + j];
                col += m[j * 8 + i];
                CHECK((m[i * 8 + j] == 0.0 || m[i * 8 + j] == 1.0));
            }
            CHECK(row == 1.0);
            CHECK(col == 1.0);
        }
        // left-regular action oracle: column j has its 1 at row idx(g h_j)
        for (int j = 0; j < 8; ++j) {
            const int i = element_index(GroupKind::D4, compose(g, es[j]));
            CHECK(m[i * 8 + j] == 1.0);
        }
    }
}

TEST_CASE("homomorphism property for all rep kinds and all 64 pairs") {
    for (RepKind rep : {RepKind::Trivial, RepKind::Standard2d, RepKind::Regular}) {
        const int d = rep_dim(rep, GroupKind::D4);
        for (auto g : group_elements(GroupKind::D4))
            for (auto h : group_elements(GroupKind::D4)) {
                auto lhs = rep_matrix(rep, GroupKind::D4, compose(g, h));
                auto rhs = matmul(rep_matrix(rep, GroupKind::D4, g),
                                  rep_matrix(rep, GroupKind::D4, h), d);
                CHECK(lhs == rhs); // entries are exact 0/±1
            }
    }
}

TEST_CASE("orthogonality of all representation matrices") {
    for (RepKind rep : {RepKind::Trivial, RepKind::Standard2d, RepKind::Regular}) {
        const int d = rep_dim(rep, GroupKind::D4);
        for (auto g : group_elements(GroupKind::D4)) {
            auto m = rep_matrix(rep, GroupKind::D4, g);
            // m^T m = I
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    double acc = 0;
                    for (int k = 0; k < d; ++k) acc += m[k * d + i] * m[k * d + j];
                    CHECK(acc == (i == j ? 1.0 : 0.0));
                }
        }
    }
}

TEST_CASE("act_on_field: identity, composition, inverse") {
    Rng rng(41);
    FieldType ft = FieldType::regular(2);
    Tensor<double> x = Tensor<double>::uniform({2, 16, 6, 6, 4}, rng, -1, 1);

    CHECK(bitwise_equal(act_on_field({0, 0}, x, ft), x));

    for (auto g : group_elements(GroupKind::D4)) {
        for (auto h : group_elements(GroupKind::D4)) {
            Tensor<double> lhs = act_on_field(g, act_on_field(h, x, ft), ft);
            Tensor<double> rhs = act_on_field(compose(g, h), x, ft);
            CHECK(bitwise_equal(lhs, rhs)); // permutation-only action
        }
        CHECK(bitwise_equal(act_on_field(inverse(g), act_on_field(g, x, ft), ft), x));
    }

    // signed-permutation field types are exact too
    FieldType rb = FieldType::rb_input();
    Tensor<double> s = Tensor<double>::uniform({1, 4, 8, 8, 4}, rng, -1, 1);
    for (auto g : group_elements(GroupKind::D4))
        CHECK(bitwise_equal(act_on_field(inverse(g), act_on_field(g, s, rb), rb), s));
}

TEST_CASE("act_on_field: scalar spike moves to the rotated cell") {
    FieldType scalar{GroupKind::D4, {RepKind::Trivial}};
    Tensor<double> x({1, 1, 4, 4, 1});
    x.data()[1 * 4 + 3] = 7.5; // spike at (i1,i2) = (1,3)
    Tensor<double> y = act_on_field({1, 0}, x, scalar);
    // rot1 maps (i1,i2) -> (N-1-i2, i1) = (0, 1)
    CHECK(y.data()[0 * 4 + 1] == 7.5);
    double total = 0;
    for (int64_t i = 0; i < y.size(); ++i) total += y.data()[i];
    CHECK(total == 7.5);
}

TEST_CASE("act_on_field: velocity vector channels rotate as vectors") {
    FieldType rb = FieldType::rb_input();
    Tensor<double> x({1, 4, 2, 2, 1});
    // uniform velocity (1, 0, 0), T = 2
    for (int64_t p = 0; p < 4; ++p) {
        x.data()[0 * 4 + p] = 1.0;
        x.data()[3 * 4 + p] = 2.0;
    }
    Tensor<double> y = act_on_field({1, 0}, x, rb);
    for (int64_t p = 0; p < 4; ++p) {
        CHECK(y.data()[0 * 4 + p] == 0.0);  // u1' = -u2 = 0
        CHECK(y.data()[1 * 4 + p] == 1.0);  // u2' = u1 = 1
        CHECK(y.data()[2 * 4 + p] == 0.0);  // u3 untouched
        CHECK(y.data()[3 * 4 + p] == 2.0);  // T untouched in value
    }
}

TEST_CASE("act_on_field rejects invalid inputs") {
    FieldType ft = FieldType::regular(1);
    Tensor<double> nonsquare({1, 8, 4, 6, 2});
    CHECK_THROWS_AS(act_on_field({1, 0}, nonsquare, ft), ValidationError);
    Tensor<double> wrongc({1, 4, 4, 4, 2});
    CHECK_THROWS_AS(act_on_field({1, 0}, wrongc, ft), ValidationError);
}

TEST_CASE("C4 subgroup") {
    CHECK(group_order(GroupKind::C4) == 4);
    CHECK(group_elements(GroupKind::C4).size() == 4);
    CHECK(rep_dim(RepKind::Regular, GroupKind::C4) == 4);
    for (auto g : group_elements(GroupKind::C4))
        for (auto h : group_elements(GroupKind::C4)) {
            auto lhs = rep_matrix(RepKind::Regular, GroupKind::C4, compose(g, h));
            auto rhs = matmul(rep_matrix(RepKind::Regular, GroupKind::C4, g),
                              rep_matrix(RepKind::Regular, GroupKind::C4, h), 4);
            CHECK(lhs == rhs);
        }
    FieldType ft = FieldType::regular(1, GroupKind::C4);
    CHECK(ft.channels() == 4);
    Tensor<double> x({1, 4, 4, 4, 2});
    CHECK_THROWS_AS(act_on_field({1, 1}, x, ft), ValidationError);
}

TEST_SUITE_END();
