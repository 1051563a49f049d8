#include <cmath>
#include <cstdio>

#include "eqsur/adam.hpp"

namespace eqsur {

template <typename T>
bool Adam<T>::step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads) {
    if (params.size() != grads.size())
        throw ValidationError("adam_step: parameter/gradient count mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->size(), 0.0);
            v_[i].assign(params[i]->size(), 0.0);
        }
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i]->size())
            throw ValidationError("adam_step: gradient shape mismatch at parameter " +
                                  std::to_string(i));
        for (int64_t j = 0; j < grads[i].size(); ++j)
            if (!std::isfinite(static_cast<double>(grads[i].data()[j]))) {
                ++incidents_;
                std::fprintf(stderr,
                             "[adam] non-finite gradient in parameter %zu; step %lld rejected "
                             "(incident %d)\n",
                             i, static_cast<long long>(t_ + 1), incidents_);
                return false;
            }
    }

    ++t_;
    const double lr = cfg_.lr * lr_mult_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor<T>& old = *params[i];
        Tensor<T> updated(old.shape());
        const T* pw = old.data();
        const T* pg = grads[i].data();
        T* pu = updated.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        const int64_t n = old.size();
        for (int64_t j = 0; j < n; ++j) {
            const double g = static_cast<double>(pg[j]);
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            pu[j] = static_cast<T>(static_cast<double>(pw[j]) -
                                   lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        *params[i] = updated;
    }
    return true;
}

template class Adam<float>;
template class Adam<double>;

} // namespace eqsur
