#include <map>
#include <mutex>

#include "eqsur/fft.hpp"

namespace eqsur {

Dft::Dft(int n) : n_(n), w_(static_cast<size_t>(n) * n) {
    const double two_pi = 6.283185307179586476925286766559;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            const double a = -two_pi * static_cast<double>((static_cast<long long>(j) * k) % n) /
                             static_cast<double>(n);
            w_[static_cast<size_t>(j) * n + k] = {std::cos(a), std::sin(a)};
        }
}

void Dft::forward(const std::complex<double>* in, std::complex<double>* out) const {
    for (int j = 0; j < n_; ++j) {
        std::complex<double> acc = 0.0;
        const std::complex<double>* row = w_.data() + static_cast<size_t>(j) * n_;
        for (int k = 0; k < n_; ++k) acc += in[k] * row[k];
        out[j] = acc;
    }
}

void Dft::inverse(const std::complex<double>* in, std::complex<double>* out) const {
    for (int j = 0; j < n_; ++j) {
        std::complex<double> acc = 0.0;
        const std::complex<double>* row = w_.data() + static_cast<size_t>(j) * n_;
        for (int k = 0; k < n_; ++k) acc += in[k] * std::conj(row[k]);
        out[j] = acc / static_cast<double>(n_);
    }
}

const Dft& dft_plan(int n) {
    static std::map<int, Dft> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, Dft(n)).first;
    return it->second;
}

} // namespace eqsur
