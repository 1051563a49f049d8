#include <cmath>

#include "eqsur/ops.hpp"

namespace eqsur {

namespace {

template <typename T>
Tape<T>* common_tape(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.tape && b.tape && a.tape != b.tape)
        throw ValidationError("operands live on different tapes");
    return a.tape ? a.tape : b.tape;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ValidationError(std::string(op) + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void accumulate(Tape<T>& tape, int node, int64_t size, const std::vector<T>& g) {
    if (node < 0) return;
    auto& buf = tape.grad_buffer(node, size);
    for (int64_t i = 0; i < size; ++i) buf[i] += g[i];
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 1 << 15)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

    Tape<T>* tape = common_tape(a, b);
    if (!tape) return out;
    int na = a.tape ? a.node : -1, nb = b.tape ? b.node : -1;
    return tape->record(std::move(out), [na, nb, n](const std::vector<T>& g, Tape<T>& tp) {
        accumulate(tp, na, n, g);
        accumulate(tp, nb, n, g);
    }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 1 << 15)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];

    Tape<T>* tape = common_tape(a, b);
    if (!tape) return out;
    int na = a.tape ? a.node : -1, nb = b.tape ? b.node : -1;
    return tape->record(std::move(out), [na, nb, n](const std::vector<T>& g, Tape<T>& tp) {
        accumulate(tp, na, n, g);
        if (nb >= 0) {
            auto& buf = tp.grad_buffer(nb, n);
            for (int64_t i = 0; i < n; ++i) buf[i] -= g[i];
        }
    }, "sub");
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "hadamard");
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 1 << 15)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

    Tape<T>* tape = common_tape(a, b);
    if (!tape) return out;
    int na = a.tape ? a.node : -1, nb = b.tape ? b.node : -1;
    Tensor<T> av = a.detached(), bv = b.detached();
    return tape->record(std::move(out), [na, nb, n, av, bv](const std::vector<T>& g, Tape<T>& tp) {
        if (na >= 0) {
            auto& buf = tp.grad_buffer(na, n);
            const T* pb2 = bv.data();
            for (int64_t i = 0; i < n; ++i) buf[i] += g[i] * pb2[i];
        }
        if (nb >= 0) {
            auto& buf = tp.grad_buffer(nb, n);
            const T* pa2 = av.data();
            for (int64_t i = 0; i < n; ++i) buf[i] += g[i] * pa2[i];
        }
    }, "hadamard");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    const int64_t n = a.size();
    const T tc = static_cast<T>(c);
#pragma omp parallel for schedule(static) if (n > 1 << 15)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * tc;
    if (!a.tape) return out;
    int na = a.node;
    return a.tape->record(std::move(out), [na, n, tc](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(na, n);
        for (int64_t i = 0; i < n; ++i) buf[i] += g[i] * tc;
    }, "scale");
}

namespace {

/// Shared scaffolding for pointwise nonlinearities: forward map plus the
/// derivative expressed in terms of the saved output value (cheaper than
/// re-evaluating the transcendental in the backward pass).
template <typename T, typename F, typename DF>
Tensor<T> unary_pointwise(const Tensor<T>& x, F f, DF df_from_y) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n > 1 << 15)
    for (int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
    if (!x.tape) return out;
    int nx = x.node;
    Tensor<T> yv = out; // shares the output buffer
    return x.tape->record(std::move(out),
                          [nx, n, yv, df_from_y](const std::vector<T>& g, Tape<T>& tp) {
                              auto& buf = tp.grad_buffer(nx, n);
                              const T* py = yv.data();
                              for (int64_t i = 0; i < n; ++i) buf[i] += g[i] * df_from_y(py[i]);
                          }, "pointwise");
}

} // namespace

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
    return unary_pointwise(
        x, [](T v) { return v > T(0) ? v : static_cast<T>(std::exp(static_cast<double>(v)) - 1.0); },
        [](T y) { return y > T(0) ? T(1) : y + T(1); }); // e^x = y + 1 below zero
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_pointwise(
        x, [](T v) { return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); },
        [](T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
    return unary_pointwise(x, [](T v) { return static_cast<T>(std::tanh(static_cast<double>(v))); },
                           [](T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    // Ordered serial reduction: bit-identical at any thread count.
    double acc = 0.0;
    const T* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(px[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    if (!x.tape) return out;
    int nx = x.node;
    int64_t n = x.size();
    return x.tape->record(std::move(out), [nx, n](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nx, n);
        for (int64_t i = 0; i < n; ++i) buf[i] += g[0];
    }, "sum");
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
    Tensor<T> d = sub(pred, target);
    return scale(sum_all(hadamard(d, d)), 1.0 / static_cast<double>(pred.size()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    Tensor<T> out = x.with_shape(std::move(shape));
    if (!x.tape) return out;
    const int nx = x.node;
    const int64_t n = x.size();
    return x.tape->record(std::move(out), [nx, n](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nx, n);
        for (int64_t i = 0; i < n; ++i) buf[i] += g[i];
    }, "reshape");
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias,
                   const std::vector<int>& bias_of_channel) {
    if (x.rank() < 2) throw ValidationError("add_bias: rank must be >= 2");
    const int64_t B = x.extent(0);
    const int64_t C = x.extent(1);
    if (C != static_cast<int64_t>(bias_of_channel.size()))
        throw ValidationError("add_bias: channel map size mismatch");
    int64_t spatial = 1;
    for (int a = 2; a < x.rank(); ++a) spatial *= x.extent(a);

    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pb = bias.data();
    T* po = out.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
            const T bv = pb[bias_of_channel[c]];
            const T* src = px + (b * C + c) * spatial;
            T* dst = po + (b * C + c) * spatial;
            for (int64_t s = 0; s < spatial; ++s) dst[s] = src[s] + bv;
        }
    }

    Tape<T>* tape = common_tape(x, bias);
    if (!tape) return out;
    int nx = x.tape ? x.node : -1, nb = bias.tape ? bias.node : -1;
    int64_t nbias = bias.size();
    int64_t n = x.size();
    auto map = bias_of_channel;
    return tape->record(std::move(out), [=](const std::vector<T>& g, Tape<T>& tp) {
        if (nx >= 0) {
            auto& buf = tp.grad_buffer(nx, n);
            for (int64_t i = 0; i < n; ++i) buf[i] += g[i];
        }
        if (nb >= 0) {
            auto& buf = tp.grad_buffer(nb, nbias);
            // fixed accumulation order over (b, c, s)
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    double acc = 0.0;
                    const T* gp = g.data() + (b * C + c) * spatial;
                    for (int64_t s = 0; s < spatial; ++s) acc += static_cast<double>(gp[s]);
                    buf[map[c]] += static_cast<T>(acc);
                }
        }
    }, "add_bias");
}

template <typename T>
Tensor<T> apply_plan(const Tensor<T>& x, std::shared_ptr<const LinearPlan> plan) {
    if (x.rank() < 1) throw ValidationError("apply_plan: rank must be >= 1");
    int64_t per_sample = 1;
    for (int a = 1; a < x.rank(); ++a) per_sample *= x.extent(a);
    if (per_sample != plan->in_size)
        throw ValidationError("apply_plan: plan expects sample size " +
                              std::to_string(plan->in_size) + ", got " +
                              std::to_string(per_sample) + " from " + shape_str(x.shape()));
    const int64_t B = x.extent(0);
    Shape out_shape;
    out_shape.push_back(B * plan->out_per_in);
    for (int64_t e : plan->out_shape_tail) out_shape.push_back(e);
    Tensor<T> out(out_shape);
    const T* px = x.data();
    T* po = out.data();
    const int64_t os = plan->out_size;
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        const T* src = px + b * plan->in_size;
        T* dst = po + b * os;
        for (int64_t r = 0; r < os; ++r) {
            double acc = 0.0;
            for (int64_t e = plan->row_ptr[r]; e < plan->row_ptr[r + 1]; ++e)
                acc += plan->w[e] * static_cast<double>(src[plan->col[e]]);
            dst[r] = static_cast<T>(acc);
        }
    }
    if (!x.tape) return out;
    int nx = x.node;
    int64_t in_total = x.size();
    return x.tape->record(std::move(out), [nx, B, plan, in_total](const std::vector<T>& g,
                                                                  Tape<T>& tp) {
        const LinearPlan& tr = plan->transposed();
        auto& buf = tp.grad_buffer(nx, in_total);
#pragma omp parallel for schedule(static)
        for (int64_t b = 0; b < B; ++b) {
            const T* gsrc = g.data() + b * plan->out_size;
            T* gdst = buf.data() + b * plan->in_size;
            for (int64_t r = 0; r < tr.out_size; ++r) {
                double acc = 0.0;
                for (int64_t e = tr.row_ptr[r]; e < tr.row_ptr[r + 1]; ++e)
                    acc += tr.w[e] * static_cast<double>(gsrc[tr.col[e]]);
                gdst[r] += static_cast<T>(acc);
            }
        }
    }, "apply_plan");
}

template <typename T>
Tensor<T> pad_field(const Tensor<T>& x, int pad1, int pad2, int pad3) {
    const int r = x.rank();
    if (r != 4 && r != 5) throw ValidationError("pad_field: expected rank 4 or 5");
    const int64_t N1 = x.extent(2);
    const int64_t N2 = x.extent(3);
    const int64_t N3 = (r == 5) ? x.extent(4) : 1;
    if (pad1 > N1 || pad2 > N2 || pad3 > N3)
        throw ValidationError("pad_field: pad width exceeds extent");
    const int64_t C = x.extent(1);
    const int64_t M1 = N1 + 2 * pad1, M2 = N2 + 2 * pad2, M3 = N3 + 2 * pad3;

    auto plan = std::make_shared<LinearPlan>();
    plan->in_size = C * N1 * N2 * N3;
    plan->out_size = C * M1 * M2 * M3;
    plan->out_shape_tail = (r == 5) ? Shape{C, M1, M2, M3} : Shape{C, M1, M2};
    plan->row_ptr.push_back(0);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < M1; ++i)
            for (int64_t j = 0; j < M2; ++j)
                for (int64_t k = 0; k < M3; ++k) {
                    int64_t si = (i - pad1 + N1) % N1; // circular
                    int64_t sj = (j - pad2 + N2) % N2;
                    int64_t sk = k - pad3;             // zero outside
                    if (sk >= 0 && sk < N3)
                        plan->add_row_entry(((c * N1 + si) * N2 + sj) * N3 + sk, 1.0);
                    plan->close_row();
                }
    return apply_plan(x, plan);
}

#define EQSUR_INSTANTIATE(T)                                                                 \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> scale(const Tensor<T>&, double);                                      \
    template Tensor<T> elu(const Tensor<T>&);                                                \
    template Tensor<T> sigmoid(const Tensor<T>&);                                            \
    template Tensor<T> tanh_op(const Tensor<T>&);                                            \
    template Tensor<T> sum_all(const Tensor<T>&);                                            \
    template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&, const std::vector<int>&); \
    template Tensor<T> apply_plan(const Tensor<T>&, std::shared_ptr<const LinearPlan>);      \
    template Tensor<T> pad_field(const Tensor<T>&, int, int, int);

EQSUR_INSTANTIATE(float)
EQSUR_INSTANTIATE(double)
#undef EQSUR_INSTANTIATE

} // namespace eqsur
