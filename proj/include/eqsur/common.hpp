#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace eqsur {

/// Validation failure (bad shapes, bad arguments, mismatched digests).
/// The CLI maps this to exit code 1.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure (divergence, NaN, solver residual above tolerance).
/// The CLI maps this to exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Portable deterministic RNG (splitmix64 core). std:: distributions are
/// implementation-defined, so every stochastic component in the project
/// draws from this generator instead.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (cached pair for determinism).
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    /// Integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    /// Derive an independent stream (e.g. one per simulation).
    Rng fork(uint64_t stream) const {
        Rng r(state_ ^ (0x3c79ac492ba7b653ull * (stream + 1)));
        r.next_u64();
        return r;
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Worker-thread cap. The CLI reads EQSUR_THREADS (default 1 for
/// deterministic runs); kernels give every parallel iteration a disjoint
/// output range, so results are bitwise identical at any thread count.
void set_max_threads(int n);
int max_threads();

/// FNV-1a digest used for config/file lineage tracking.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a(const std::string& s);
std::string digest_hex(uint64_t d);

} // namespace eqsur
