#pragma once

#include <complex>
#include <vector>

namespace eqsur {

/// Plain table-based DFT (sizes here are <= 48, so O(n^2) with a cached
/// twiddle table is simpler than a mixed-radix FFT and exactly
/// deterministic).
class Dft {
public:
    explicit Dft(int n);
    int size() const { return n_; }

    /// out[j] = sum_k in[k] * exp(-2*pi*i*j*k/n) (forward), or the inverse
    /// with the 1/n factor applied.
    void forward(const std::complex<double>* in, std::complex<double>* out) const;
    void inverse(const std::complex<double>* in, std::complex<double>* out) const;

private:
    int n_;
    std::vector<std::complex<double>> w_; // w_[j*n+k] = exp(-2 pi i j k / n)
};

/// Cached DFT plans by size.
const Dft& dft_plan(int n);

} // namespace eqsur
