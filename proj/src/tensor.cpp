#include "eqsur/tensor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eqsur {

// ---------------------------------------------------------------------------
// common
// ---------------------------------------------------------------------------

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

namespace {
int g_max_threads = 0; // 0 = leave OpenMP default
}

void set_max_threads(int n) {
    g_max_threads = n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() {
#ifdef _OPENMP
    if (g_max_threads > 0) return g_max_threads;
    return omp_get_max_threads();
#else
    return 1;
#endif
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string digest_hex(uint64_t d) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
    return std::string(buf);
}

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(data))) {
    if (static_cast<int64_t>(data_->size()) != numel(shape_))
        throw ValidationError("tensor data length " + std::to_string(data_->size()) +
                              " does not match shape " + shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::normal(Shape shape, Rng& rng, T stddev) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.normal() * stddev);
    return t;
}

template <typename T>
int64_t Tensor<T>::extent(int axis) const {
    int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw ValidationError("axis out of range for shape " + shape_str(shape_));
    return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1)
        throw ValidationError("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
}

template <typename T>
T Tensor<T>::max_abs() const {
    T m = 0;
    for (const T& v : *data_) m = std::max(m, static_cast<T>(std::abs(v)));
    return m;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Tape<T>::leaf(const Tensor<T>& value) {
    Tensor<T> out = value;
    out.tape = this;
    out.node = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{value.size(), true, nullptr});
    leaves_.push_back(out.node);
    return out;
}

template <typename T>
Tensor<T> Tape<T>::record(Tensor<T> value, BackwardFn backward, const char* op) {
    value.tape = this;
    value.node = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{value.size(), false, std::move(backward), op});
    return value;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
        throw ValidationError("backward() requires a scalar loss, got " +
                              shape_str(loss.shape()));
    if (loss.tape != this || loss.node < 0)
        throw ValidationError("backward() loss is not on this tape");
    static const bool profile = std::getenv("EQSUR_PROFILE_TAPE") != nullptr;
    grads_.assign(nodes_.size(), {});
    grad_buffer(loss.node, 1)[0] = T(1);
    std::map<std::string, double> acc;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (grads_[i].empty() || !nodes_[i].backward) continue;
        if (profile) {
            auto t0 = std::chrono::steady_clock::now();
            nodes_[i].backward(grads_[i], *this);
            acc[nodes_[i].op] +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            nodes_[i].backward(grads_[i], *this);
        }
    }
    if (profile) {
        std::fprintf(stderr, "[tape] backward profile:\n");
        for (const auto& [op, t] : acc)
            std::fprintf(stderr, "[tape]   %-18s %8.1f ms\n", op.c_str(), 1e3 * t);
    }
}

template <typename T>
bool Tape<T>::has_grad(const Tensor<T>& t) const {
    return t.tape == this && grad_present(t.node);
}

template <typename T>
Tensor<T> Tape<T>::grad(const Tensor<T>& t) const {
    if (t.tape != this || t.node < 0)
        throw ValidationError("grad() of a tensor that is not on this tape");
    if (!grad_present(t.node)) return Tensor<T>::zeros(t.shape());
    return Tensor<T>(t.shape(), grads_[t.node]);
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(int n, int64_t size) {
    if (n < 0 || n >= static_cast<int>(nodes_.size()))
        throw ValidationError("grad_buffer: node out of range");
    if (grads_[n].empty()) grads_[n].assign(size, T(0));
    return grads_[n];
}

// ---------------------------------------------------------------------------
// LinearPlan transpose
// ---------------------------------------------------------------------------

const LinearPlan& LinearPlan::transposed() const {
    if (transpose_) return *transpose_;
    auto t = std::make_shared<LinearPlan>();
    t->in_size = out_size;
    t->out_size = in_size;
    t->out_per_in = 1; // backward collapses the stacked samples again
    t->row_ptr.assign(in_size + 1, 0);
    // count entries per input element
    for (size_t e = 0; e < col.size(); ++e) t->row_ptr[col[e] + 1]++;
    for (int64_t i = 0; i < in_size; ++i) t->row_ptr[i + 1] += t->row_ptr[i];
    t->col.resize(col.size());
    t->w.resize(col.size());
    std::vector<int64_t> cursor(t->row_ptr.begin(), t->row_ptr.end() - 1);
    for (int64_t r = 0; r < out_size; ++r) {
        for (int64_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
            int64_t pos = cursor[col[e]]++;
            t->col[pos] = static_cast<int32_t>(r);
            t->w[pos] = w[e];
        }
    }
    transpose_ = std::move(t);
    return *transpose_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

} // namespace eqsur
