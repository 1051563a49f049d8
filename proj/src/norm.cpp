#include <cmath>

#include "eqsur/ops.hpp"

namespace eqsur {

template <typename T>
Tensor<T> batch_norm_fields(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            const std::vector<int>& field_of_channel, int num_fields,
                            bool training, BatchNormStats* running, double momentum,
                            double eps) {
    if (x.rank() < 2) throw ValidationError("batch_norm_fields: rank must be >= 2");
    const int64_t B = x.extent(0), C = x.extent(1);
    if (C != static_cast<int64_t>(field_of_channel.size()))
        throw ValidationError("batch_norm_fields: channel map size mismatch");
    if (gamma.size() != num_fields || beta.size() != num_fields)
        throw ValidationError("batch_norm_fields: gamma/beta must have one entry per field");
    int64_t spatial = 1;
    for (int a = 2; a < x.rank(); ++a) spatial *= x.extent(a);

    // Per-field statistics pooled over batch, spatial positions and the
    // channels of the field: permuting a field's channels cannot change them.
    std::vector<double> mean(num_fields, 0.0), var(num_fields, 0.0);
    std::vector<int64_t> count(num_fields, 0);
    const T* px = x.data();
    if (training || !running || !running->initialized) {
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const int f = field_of_channel[c];
                const T* src = px + (b * C + c) * spatial;
                double acc = 0.0;
                for (int64_t s = 0; s < spatial; ++s) acc += static_cast<double>(src[s]);
                mean[f] += acc;
                count[f] += spatial;
            }
        for (int f = 0; f < num_fields; ++f) mean[f] /= static_cast<double>(count[f]);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const int f = field_of_channel[c];
                const T* src = px + (b * C + c) * spatial;
                double acc = 0.0;
                for (int64_t s = 0; s < spatial; ++s) {
                    const double d = static_cast<double>(src[s]) - mean[f];
                    acc += d * d;
                }
                var[f] += acc;
            }
        for (int f = 0; f < num_fields; ++f) var[f] /= static_cast<double>(count[f]);
    }

    if (training && running) {
        if (!running->initialized) {
            running->mean = mean;
            running->var = var;
            running->initialized = true;
        } else {
            for (int f = 0; f < num_fields; ++f) {
                running->mean[f] = momentum * running->mean[f] + (1.0 - momentum) * mean[f];
                running->var[f] = momentum * running->var[f] + (1.0 - momentum) * var[f];
            }
        }
    }
    const std::vector<double>& use_mean = (!training && running && running->initialized)
                                              ? running->mean
                                              : mean;
    const std::vector<double>& use_var = (!training && running && running->initialized)
                                             ? running->var
                                             : var;

    std::vector<double> inv_std(num_fields);
    for (int f = 0; f < num_fields; ++f) inv_std[f] = 1.0 / std::sqrt(use_var[f] + eps);

    Tensor<T> out(x.shape());
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    T* po = out.data();
    T* ph = xhat->data();
    const T* pg = gamma.data();
    const T* pb = beta.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const int f = field_of_channel[c];
            const double m = use_mean[f], is = inv_std[f];
            const double gm = static_cast<double>(pg[f]), bt = static_cast<double>(pb[f]);
            const T* src = px + (b * C + c) * spatial;
            T* h = ph + (b * C + c) * spatial;
            T* dst = po + (b * C + c) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
                const double hh = (static_cast<double>(src[s]) - m) * is;
                h[s] = static_cast<T>(hh);
                dst[s] = static_cast<T>(gm * hh + bt);
            }
        }

    Tape<T>* tape = x.tape ? x.tape : (gamma.tape ? gamma.tape : beta.tape);
    if (!tape) return out;
    const int nx = x.tape ? x.node : -1;
    const int ng = gamma.tape ? gamma.node : -1;
    const int nb = beta.tape ? beta.node : -1;
    const int64_t xsize = x.size();
    Tensor<T> gv = gamma.detached();
    auto fmap = field_of_channel;
    auto istd = inv_std;
    std::vector<int64_t> cnt(num_fields, 0);
    for (int64_t c = 0; c < C; ++c) cnt[fmap[c]] += B * spatial;
    return tape->record(std::move(out), [=](const std::vector<T>& g, Tape<T>& tp) {
        // per-field sums needed by the batch statistics' gradient
        std::vector<double> sum_g(num_fields, 0.0), sum_gh(num_fields, 0.0);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const int f = fmap[c];
                const T* gp = g.data() + (b * C + c) * spatial;
                const T* hp = xhat->data() + (b * C + c) * spatial;
                double a0 = 0.0, a1 = 0.0;
                for (int64_t s = 0; s < spatial; ++s) {
                    a0 += static_cast<double>(gp[s]);
                    a1 += static_cast<double>(gp[s]) * static_cast<double>(hp[s]);
                }
                sum_g[f] += a0;
                sum_gh[f] += a1;
            }
        if (ng >= 0) {
            auto& buf = tp.grad_buffer(ng, num_fields);
            for (int f = 0; f < num_fields; ++f) buf[f] += static_cast<T>(sum_gh[f]);
        }
        if (nb >= 0) {
            auto& buf = tp.grad_buffer(nb, num_fields);
            for (int f = 0; f < num_fields; ++f) buf[f] += static_cast<T>(sum_g[f]);
        }
        if (nx >= 0) {
            auto& buf = tp.grad_buffer(nx, xsize);
            if (training) {
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        const int f = fmap[c];
                        const double gm = static_cast<double>(gv.data()[f]);
                        const double mg = sum_g[f] / static_cast<double>(cnt[f]);
                        const double mgh = sum_gh[f] / static_cast<double>(cnt[f]);
                        const T* gp = g.data() + (b * C + c) * spatial;
                        const T* hp = xhat->data() + (b * C + c) * spatial;
                        T* dst = buf.data() + (b * C + c) * spatial;
                        for (int64_t s = 0; s < spatial; ++s)
                            dst[s] += static_cast<T>(gm * istd[f] *
                                                     (static_cast<double>(gp[s]) - mg -
                                                      static_cast<double>(hp[s]) * mgh));
                    }
            } else {
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        const int f = fmap[c];
                        const double gm = static_cast<double>(gv.data()[f]);
                        const T* gp = g.data() + (b * C + c) * spatial;
                        T* dst = buf.data() + (b * C + c) * spatial;
                        for (int64_t s = 0; s < spatial; ++s)
                            dst[s] += static_cast<T>(gm * istd[f] * static_cast<double>(gp[s]));
                    }
            }
        }
    }, "batch_norm");
}

template <typename T>
Tensor<T> dropout_fields(const Tensor<T>& x, double rate,
                         const std::vector<int>& field_of_channel, int num_fields, Rng& rng,
                         bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw ValidationError("dropout_fields: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const int64_t B = x.extent(0), C = x.extent(1);
    if (C != static_cast<int64_t>(field_of_channel.size()))
        throw ValidationError("dropout_fields: channel map size mismatch");
    int64_t spatial = 1;
    for (int a = 2; a < x.rank(); ++a) spatial *= x.extent(a);

    // one Bernoulli draw per (sample, field): zeroing whole fields commutes
    // with both the channel permutation and the spatial grid action
    auto mask = std::make_shared<std::vector<T>>(B * num_fields);
    const double keep = 1.0 - rate;
    for (int64_t b = 0; b < B; ++b)
        for (int f = 0; f < num_fields; ++f)
            (*mask)[b * num_fields + f] = rng.bernoulli(keep) ? static_cast<T>(1.0 / keep) : T(0);

    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T m = (*mask)[b * num_fields + field_of_channel[c]];
            const T* src = px + (b * C + c) * spatial;
            T* dst = po + (b * C + c) * spatial;
            for (int64_t s = 0; s < spatial; ++s) dst[s] = src[s] * m;
        }

    if (!x.tape) return out;
    const int nx = x.node;
    const int64_t xsize = x.size();
    auto fmap = field_of_channel;
    return x.tape->record(std::move(out), [=](const std::vector<T>& g, Tape<T>& tp) {
        auto& buf = tp.grad_buffer(nx, xsize);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T m = (*mask)[b * num_fields + fmap[c]];
                const T* gp = g.data() + (b * C + c) * spatial;
                T* dst = buf.data() + (b * C + c) * spatial;
                for (int64_t s = 0; s < spatial; ++s) dst[s] += gp[s] * m;
            }
    }, "dropout");
}

#define EQSUR_INSTANTIATE(T)                                                            \
    template Tensor<T> batch_norm_fields(const Tensor<T>&, const Tensor<T>&,           \
                                         const Tensor<T>&, const std::vector<int>&,    \
                                         int, bool, BatchNormStats*, double, double);  \
    template Tensor<T> dropout_fields(const Tensor<T>&, double, const std::vector<int>&, \
                                      int, Rng&, bool);

EQSUR_INSTANTIATE(float)
EQSUR_INSTANTIATE(double)
#undef EQSUR_INSTANTIATE

} // namespace eqsur
