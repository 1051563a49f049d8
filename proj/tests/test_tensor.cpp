#include <cmath>

#include "doctest.h"
#include "eqsur/adam.hpp"
#include "eqsur/ops.hpp"
#include "eqsur/ref.hpp"
#include "test_helpers.hpp"

using namespace eqsur;
using eqsur::test::bitwise_equal;
using eqsur::test::rel_err;

namespace {

/// Central finite differences against tape gradients on every element (or a
/// random subset of `probes` elements for large parameters).
template <typename LossFn>
void fd_check(const Tensor<double>& p0, LossFn loss_fn, int probes, Rng& rng,
              double tol = 1e-4, double h = 1e-4) {
    Tape<double> tape;
    Tensor<double> p = tape.leaf(p0);
    Tensor<double> loss = loss_fn(p);
    tape.backward(loss);
    Tensor<double> g = tape.grad(p);

    const int64_t n = p0.size();
    for (int probe = 0; probe < probes; ++probe) {
        const int64_t i = (n <= probes) ? probe % n : static_cast<int64_t>(rng.below(n));
        Tensor<double> plus = p0.cast<double>();
        Tensor<double> minus = p0.cast<double>();
        plus.data()[i] += h;
        minus.data()[i] -= h;
        const double lp = loss_fn(plus).item();
        const double lm = loss_fn(minus).item();
        const double fd = (lp - lm) / (2.0 * h);
        const double an = g.data()[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(an);
        CHECK(std::abs(fd - an) / denom < tol);
    }
}

/// Circular shift of the two trailing spatial axes of [B,C,N1,N2].
template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, int64_t a, int64_t b) {
    const int64_t B = x.extent(0), C = x.extent(1), N1 = x.extent(2), N2 = x.extent(3);
    Tensor<T> out(x.shape());
    for (int64_t bc = 0; bc < B * C; ++bc)
        for (int64_t i = 0; i < N1; ++i)
            for (int64_t j = 0; j < N2; ++j)
                out.data()[(bc * N1 + (i + a) % N1) * N2 + (j + b) % N2] =
                    x.data()[(bc * N1 + i) * N2 + j];
    return out;
}

} // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d identity kernel returns input") {
    Rng rng(7);
    Tensor<double> in = Tensor<double>::uniform({1, 1, 3, 3}, rng, -1, 1);
    Tensor<double> k = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    Tensor<double> out = conv2d_grouped(in, k, 1, {PadMode::None, PadMode::None});
    CHECK(bitwise_equal(in, out));
}

TEST_CASE("conv2d grouped scaling per channel") {
    Tensor<double> in = Tensor<double>::full({1, 2, 4, 4}, 1.0);
    for (int64_t i = 16; i < 32; ++i) in.data()[i] = 5.0; // channel 1
    Tensor<double> k({2, 1, 1, 1}, {2.0, 3.0});
    Tensor<double> out = conv2d_grouped(in, k, 2, {PadMode::None, PadMode::None});
    CHECK(out.data()[0] == 2.0);
    CHECK(out.data()[16] == 15.0);
}

TEST_CASE("conv2d matches the direct loop oracle") {
    Rng rng(11);
    Tensor<double> in = Tensor<double>::uniform({2, 4, 8, 8}, rng, -1, 1);
    Tensor<double> k = Tensor<double>::uniform({6, 4, 3, 3}, rng, -1, 1);
    Pad2d circ{PadMode::Circular, PadMode::Circular};
    CHECK(rel_err(conv2d_grouped(in, k, 1, circ), ref::conv2d_grouped(in, k, 1, circ)) < 1e-13);

    // float path against the double oracle
    Tensor<float> inf = in.cast<float>(), kf = k.cast<float>();
    Tensor<double> fast32 = conv2d_grouped(inf, kf, 1, circ).cast<double>();
    CHECK(rel_err(fast32, ref::conv2d_grouped(in, k, 1, circ)) < 1e-6);

    // grouped + zero padding + rectangular kernel coverage
    Tensor<double> in2 = Tensor<double>::uniform({2, 6, 7, 5}, rng, -1, 1);
    Tensor<double> k2 = Tensor<double>::uniform({4, 3, 3, 5}, rng, -1, 1);
    Pad2d zp{PadMode::Zero, PadMode::Zero};
    CHECK(rel_err(conv2d_grouped(in2, k2, 2, zp), ref::conv2d_grouped(in2, k2, 2, zp)) < 1e-13);
}

TEST_CASE("conv2d rejects bad shapes with diagnostics") {
    Tensor<double> in({1, 3, 4, 4});
    Tensor<double> k({2, 2, 3, 3});
    CHECK_THROWS_AS(conv2d_grouped(in, k, 1, {}), ValidationError);
    CHECK_THROWS_AS(conv2d_grouped(in, k, 2, {}), ValidationError); // 2 does not divide 3
}

TEST_CASE("conv2d circular padding is translation equivariant bitwise") {
    Rng rng(3);
    Tensor<float> in = Tensor<float>::uniform({1, 2, 6, 8}, rng, -1, 1);
    Tensor<float> k = Tensor<float>::uniform({3, 2, 3, 3}, rng, -1, 1);
    Pad2d circ{PadMode::Circular, PadMode::Circular};
    Tensor<float> shifted = conv2d_grouped(roll2d(in, 2, 5), k, 1, circ);
    Tensor<float> rolled = roll2d(conv2d_grouped(in, k, 1, circ), 2, 5);
    CHECK(bitwise_equal(shifted, rolled));
}

TEST_CASE("pointwise fixed points and identities") {
    Tensor<double> zero = Tensor<double>::zeros({3});
    CHECK(elu(zero).data()[0] == 0.0);
    CHECK(sigmoid(zero).data()[0] == doctest::Approx(0.5));
    CHECK(tanh_op(zero).data()[0] == 0.0);

    Tensor<double> minus1 = Tensor<double>::full({1}, -1.0);
    CHECK(elu(minus1).item() == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));

    Rng rng(5);
    Tensor<double> x = Tensor<double>::uniform({4, 5}, rng, -2, 2);
    Tensor<double> ones = Tensor<double>::full({4, 5}, 1.0);
    CHECK(bitwise_equal(hadamard(x, ones), x));

    Tensor<double> y({4, 4});
    CHECK_THROWS_AS(add(x, y), ValidationError);
}

TEST_CASE("max_pool3d block maxima") {
    Tensor<double> c = Tensor<double>::full({1, 1, 4, 4, 4}, 2.5);
    Tensor<double> pooled = max_pool3d(c);
    CHECK(pooled.shape() == Shape{1, 1, 2, 2, 2});
    for (int64_t i = 0; i < pooled.size(); ++i) CHECK(pooled.data()[i] == 2.5);

    Tensor<double> blk({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(max_pool3d(blk).item() == 8.0);

    Rng rng(13);
    Tensor<double> x = Tensor<double>::uniform({1, 1, 4, 4, 4}, rng, -1, 1);
    CHECK(bitwise_equal(max_pool3d(x), ref::max_pool3d(x)));

    Tensor<double> odd({1, 1, 3, 4, 4});
    CHECK_THROWS_AS(max_pool3d(odd), ValidationError);
}

TEST_CASE("upsample_trilinear cell-centered hand values") {
    Tensor<double> c = Tensor<double>::full({1, 1, 2, 2, 2}, 3.25);
    Tensor<double> up = upsample_trilinear2(c);
    CHECK(up.shape() == Shape{1, 1, 4, 4, 4});
    for (int64_t i = 0; i < up.size(); ++i) CHECK(up.data()[i] == doctest::Approx(3.25));

    // 1D slice [0,1] along the vertical axis -> [0, 0.25, 0.75, 1]
    Tensor<double> line({1, 1, 1, 1, 2}, {0.0, 1.0});
    // minimum extents for the other axes: replicate values so interpolation
    // along them is constant
    Tensor<double> grid({1, 1, 2, 2, 2});
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j)
            for (int64_t k = 0; k < 2; ++k) grid.data()[(i * 2 + j) * 2 + k] = line.data()[k];
    Tensor<double> up2 = upsample_trilinear2(grid);
    const double expect[4] = {0.0, 0.25, 0.75, 1.0};
    for (int64_t k = 0; k < 4; ++k) CHECK(up2.data()[k] == doctest::Approx(expect[k]).epsilon(1e-14));
}

TEST_CASE("backward gradients: sum and quadratic") {
    Rng rng(17);
    Tensor<double> x0 = Tensor<double>::uniform({3, 4}, rng, -1, 1);
    {
        Tape<double> tape;
        Tensor<double> x = tape.leaf(x0);
        tape.backward(sum_all(x));
        Tensor<double> g = tape.grad(x);
        for (int64_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 1.0);
    }
    {
        Tape<double> tape;
        Tensor<double> x = tape.leaf(x0);
        tape.backward(sum_all(hadamard(x, x)));
        Tensor<double> g = tape.grad(x);
        for (int64_t i = 0; i < g.size(); ++i)
            CHECK(g.data()[i] == doctest::Approx(2.0 * x0.data()[i]).epsilon(1e-12));
    }
    {
        // non-scalar loss rejected; detached tensors get no gradient
        Tape<double> tape;
        Tensor<double> x = tape.leaf(x0);
        CHECK_THROWS_AS(tape.backward(scale(x, 2.0)), ValidationError);
        Tensor<double> detached = x0; // never registered
        Tensor<double> loss = sum_all(add(x, detached));
        tape.backward(loss);
        CHECK(tape.has_grad(x));
        CHECK(!detached.on_tape());
    }
}

TEST_CASE("finite differences: composite conv layer") {
    Rng rng(23);
    Tensor<double> in = Tensor<double>::uniform({2, 3, 6, 6}, rng, -1, 1);
    Tensor<double> k0 = Tensor<double>::uniform({4, 3, 3, 3}, rng, -0.5, 0.5);
    Tensor<double> target = Tensor<double>::uniform({2, 4, 6, 6}, rng, -1, 1);
    Pad2d circ{PadMode::Circular, PadMode::Circular};

    // gradient with respect to the kernel through conv + ELU + MSE
    fd_check(
        k0,
        [&](const Tensor<double>& k) { return mse(elu(conv2d_grouped(in, k, 1, circ)), target); },
        20, rng);

    // gradient with respect to the input
    fd_check(
        in,
        [&](const Tensor<double>& x) { return mse(elu(conv2d_grouped(x, k0, 1, circ)), target); },
        20, rng);
}

TEST_CASE("finite differences: pool, upsample, bias, pointwise") {
    Rng rng(29);
    Tensor<double> x0 = Tensor<double>::uniform({1, 2, 4, 4, 4}, rng, -1, 1);
    fd_check(x0, [&](const Tensor<double>& x) { return sum_all(hadamard(max_pool3d(x), max_pool3d(x))); }, 20,
             rng);
    fd_check(x0, [&](const Tensor<double>& x) {
        Tensor<double> u = upsample_trilinear2(x);
        return sum_all(hadamard(u, u));
    }, 20, rng);
    Tensor<double> b0 = Tensor<double>::uniform({2}, rng, -1, 1);
    std::vector<int> map{0, 1};
    fd_check(b0, [&](const Tensor<double>& b) {
        Tensor<double> y = add_bias(x0, b, map);
        return sum_all(hadamard(sigmoid(y), tanh_op(y)));
    }, 20, rng);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Adam<double> opt({1e-3, 0.9, 0.999, 1e-8});
    Tensor<double> w = Tensor<double>::full({3}, 0.7);
    std::vector<Tensor<double>*> params{&w};
    CHECK(opt.step(params, {Tensor<double>::zeros({3})}));
    for (int64_t i = 0; i < 3; ++i) CHECK(w.data()[i] == 0.7);
}

TEST_CASE("adam: first step is approximately -lr*sign(g)") {
    const double lr = 1e-3;
    Adam<double> opt({lr, 0.9, 0.999, 1e-8});
    Tensor<double> w = Tensor<double>::zeros({2});
    Tensor<double> g({2}, {0.5, -0.25});
    std::vector<Tensor<double>*> params{&w};
    CHECK(opt.step(params, {g}));
    CHECK(w.data()[0] == doctest::Approx(-lr).epsilon(1e-6));
    CHECK(w.data()[1] == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("adam: rejects non-finite gradients without advancing") {
    Adam<double> opt({1e-3, 0.9, 0.999, 1e-8});
    Tensor<double> w = Tensor<double>::full({2}, 1.0);
    Tensor<double> bad({2}, {1.0, std::nan("")});
    std::vector<Tensor<double>*> params{&w};
    CHECK(!opt.step(params, {bad}));
    CHECK(opt.step_count() == 0);
    CHECK(opt.incidents() == 1);
    CHECK(w.data()[0] == 1.0);
}

TEST_CASE("adam: quadratic bowl converges") {
    Adam<double> opt({1e-2, 0.9, 0.999, 1e-8});
    Tensor<double> w({4}, {0.5, -0.5, 0.5, -0.5}); // ||w0|| = 1
    std::vector<Tensor<double>*> params{&w};
    for (int step = 0; step < 200; ++step) {
        Tape<double> tape;
        Tensor<double> wt = tape.leaf(w);
        tape.backward(sum_all(hadamard(wt, wt)));
        opt.step(params, {tape.grad(wt)});
    }
    double norm = 0.0;
    for (int64_t i = 0; i < 4; ++i) norm += w.data()[i] * w.data()[i];
    CHECK(std::sqrt(norm) < 1e-3);
}

TEST_SUITE_END();
