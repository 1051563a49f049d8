// Benchmark comparing the OpenMP kernels against the serial reference
// implementations, plus end-to-end model timings. Run with
// EQSUR_THREADS=N to control the worker count.

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "eqsur/cae.hpp"
#include "eqsur/ref.hpp"
#include "eqsur/solver.hpp"

using namespace eqsur;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return best;
}

void bench_conv(const char* name, int64_t b, int64_t cin, int64_t cout, int64_t n, int64_t k,
                int groups) {
    Rng rng(1);
    Tensor<float> in = Tensor<float>::uniform({b, cin, n, n}, rng, -1, 1);
    Tensor<float> kw = Tensor<float>::uniform({cout, cin / groups, k, k}, rng, -1, 1);
    Pad2d pad{PadMode::Circular, PadMode::Circular};
    const double flops = 2.0 * b * cout * (cin / groups) * n * n * k * k;

    const double t_fast = time_best_of(3, [&] { conv2d_grouped(in, kw, groups, pad); });
    const double t_ref = time_best_of(1, [&] { ref::conv2d_grouped(in, kw, groups, pad); });
    std::printf("%-28s  omp %7.1f ms (%6.2f GF/s)   serial %8.1f ms   speedup %5.2fx\n", name,
                1e3 * t_fast, flops / t_fast * 1e-9, 1e3 * t_ref, t_ref / t_fast);
}

} // namespace

int main() {
    if (const char* env = std::getenv("EQSUR_THREADS")) set_max_threads(std::atoi(env));
    std::printf("threads: %d\n\n", max_threads());

    std::printf("-- grouped 2D convolution (fast path vs naive serial loops) --\n");
    bench_conv("desk L1 (16 grp, 24x24)", 16, 16 * 5 * 4, 16 * 16, 24, 5, 16);
    bench_conv("desk L5 (4 grp, 6x6)", 16, 4 * 5 * 32, 4 * 64, 6, 5, 4);
    bench_conv("plain 64x64 k3 (32x32)", 8, 64, 64, 32, 3, 1);

    std::printf("\n-- height-dependent 3D convolution --\n");
    {
        Rng rng(2);
        typename Conv3dLayer<float>::Spec spec;
        spec.variant = Conv3dLayer<float>::Variant::SteerableHeightDependent;
        spec.in_type = FieldType::rb_input();
        spec.out_type = FieldType::regular(2);
        spec.k = 5;
        spec.taps = 5;
        spec.n1 = spec.n2 = 24;
        spec.n3 = 16;
        Conv3dLayer<float> layer(spec, rng);
        Tensor<float> x = Tensor<float>::uniform({8, 4, 24, 24, 16}, rng, -1, 1);
        const double t_fast = time_best_of(3, [&] { layer.forward(x); });
        const double t_ref = time_best_of(
            1, [&] { ref::conv3d_height_dependent(x, layer.expanded_bank(), 16, 16, 5); });
        std::printf("grouped-2D realization %7.1f ms   naive 5-loop %8.1f ms   speedup %5.2fx\n",
                    1e3 * t_fast, 1e3 * t_ref, t_ref / t_fast);
    }

    std::printf("\n-- desk CAE forward / training step --\n");
    {
        Rng rng(3);
        CAEConfig cfg = CAEConfig::desk();
        CAE<float> cae(cfg, rng);
        Tensor<float> x = Tensor<float>::uniform({8, 4, 24, 24, 16}, rng, -1, 1);
        const double t_fwd = time_best_of(2, [&] { cae.decode(cae.encode(x)); });
        const double t_step = time_best_of(2, [&] {
            Tape<float> tape;
            cae.bind(&tape);
            Tensor<float> loss = mse(cae.decode(cae.encode(x, true, nullptr), true, nullptr), x);
            tape.backward(loss);
            cae.bind(nullptr);
        });
        std::printf("batch-8 forward %7.1f ms   forward+backward %7.1f ms\n", 1e3 * t_fwd,
                    1e3 * t_step);
    }

    std::printf("\n-- solver step (24x24x16) --\n");
    {
        solver::SolverConfig cfg;
        Rng rng(4);
        solver::SimState s = solver::initial_state(cfg, rng);
        const double t = time_best_of(3, [&] { solver::step(cfg, &s, cfg.dt); });
        std::printf("one RK2 step + projection %7.2f ms\n", 1e3 * t);
    }
    return 0;
}
