#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dattn/errors.hpp"
#include "dattn/parallel.hpp"

namespace dattn {

/// Dense row-major tensor over float or double. Rank >= 1; zero-sized
/// dimensions are allowed so that empty token blocks (N = 0) and empty
/// reductions have a representation.
template <typename T>
struct Tensor {
    static_assert(std::is_floating_point_v<T>, "Tensor element must be float or double");

    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        if (shape.empty()) throw ShapeError("rank-0 tensor not allowed; scalars are shape [1]");
        data.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape.empty()) throw ShapeError("rank-0 tensor not allowed; scalars are shape [1]");
        if (numel_of(shape) != data.size())
            throw ShapeError("tensor data size does not match shape product");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    T& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    const T& at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
};

/// Same data, new shape (product must match).
template <typename T>
Tensor<T> reshape(Tensor<T> t, std::vector<std::size_t> s) {
    if (s.empty()) throw ShapeError("rank-0 tensor not allowed");
    if (Tensor<T>::numel_of(s) != t.data.size())
        throw ShapeError("reshape product mismatch");
    t.shape = std::move(s);
    return t;
}

/// Counter-based splitmix64 generator: the same seed yields the same bit
/// stream on every platform, unlike std:: distributions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * next_double();
    }

  private:
    std::uint64_t state_;
};

template <typename T>
Tensor<T> random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Centered uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; the usual
/// well-conditioned init for square projection matrices.
template <typename T>
Tensor<T> random_linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return random_uniform<T>({fan_in, fan_out}, rng, -bound, bound);
}

namespace detail {

inline void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

} // namespace detail

/// C = A * B for 2-D tensors. Fixed k-ascending summation per output element,
/// so results are identical for any thread count.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2, "matmul expects 2-D tensors");
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(a.shape[1]) +
                         " vs " + std::to_string(b.shape[0]));
    const std::int64_t m = static_cast<std::int64_t>(a.shape[0]);
    const std::int64_t kk = static_cast<std::int64_t>(a.shape[1]);
    const std::int64_t n = static_cast<std::int64_t>(b.shape[1]);
    Tensor<T> c({a.shape[0], b.shape[1]});

    const int nt = detail::threads_for(m);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        T* crow = c.data.data() + i * n;
        const T* arow = a.data.data() + i * kk;
        for (std::int64_t p = 0; p < kk; ++p) {
            const T av = arow[p];
            const T* brow = b.data.data() + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require(a.rank() == 2, "transpose expects a 2-D tensor");
    const std::size_t m = a.shape[0], n = a.shape[1];
    Tensor<T> t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data[j * m + i] = a.data[i * n + j];
    return t;
}

/// Softmax over the last dimension with max-subtraction. Masked entries may
/// be -inf (they get weight 0); NaN or +inf input is a numeric error.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    detail::require(x.rank() >= 1, "softmax expects rank >= 1");
    const std::int64_t last = static_cast<std::int64_t>(x.shape.back());
    detail::require(last >= 1, "softmax last dimension must be >= 1");
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / last;
    Tensor<T> y = x;

    bool bad = false;
    const int nt = detail::threads_for(rows);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1) reduction(|| : bad)
    for (std::int64_t r = 0; r < rows; ++r) {
        T* row = y.data.data() + r * last;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t j = 0; j < last; ++j) {
            if (std::isnan(row[j]) || row[j] == std::numeric_limits<T>::infinity()) bad = true;
            if (row[j] > mx) mx = row[j];
        }
        if (mx == -std::numeric_limits<T>::infinity()) {
            bad = true; // fully masked row cannot be normalized
            continue;
        }
        T sum = 0;
        for (std::int64_t j = 0; j < last; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::int64_t j = 0; j < last; ++j) row[j] *= inv;
    }
    if (bad) throw NumericError("softmax input must be free of NaN/+inf with at least one finite entry per row");
    return y;
}

/// log(sum(exp(x))) over the last dimension, max-subtracted. An empty last
/// dimension reduces to -inf (log of an empty sum), which downstream
/// sigmoid(S_V - S_T) maps to exactly 0.
template <typename T>
Tensor<T> logsumexp_lastdim(const Tensor<T>& x) {
    detail::require(x.rank() >= 1, "logsumexp expects rank >= 1");
    const std::int64_t last = static_cast<std::int64_t>(x.shape.back());
    std::vector<std::size_t> out_shape(x.shape.begin(), x.shape.end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor<T> y(out_shape);

    const std::int64_t rows = static_cast<std::int64_t>(y.size());
    if (last == 0) {
        for (T& v : y.data) v = -std::numeric_limits<T>::infinity();
        return y;
    }
    const int nt = detail::threads_for(rows);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = x.data.data() + r * last;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t j = 0; j < last; ++j)
            if (row[j] > mx) mx = row[j];
        if (mx == -std::numeric_limits<T>::infinity()) {
            y.data[r] = mx; // all entries masked
            continue;
        }
        T sum = 0;
        for (std::int64_t j = 0; j < last; ++j) sum += std::exp(row[j] - mx);
        y.data[r] = mx + std::log(sum);
    }
    return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "add expects equal shapes");
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "sub expects equal shapes");
    Tensor<T> c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> c = a;
    for (T& v : c.data) v *= s;
    return c;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape == b.shape, "max_abs_diff expects equal shapes");
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
        if (d > m) m = d;
    }
    return m;
}

template <typename T>
double max_abs(const Tensor<T>& a) {
    double m = 0;
    for (const T& v : a.data) {
        const double d = std::abs(static_cast<double>(v));
        if (d > m) m = d;
    }
    return m;
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
    for (const T& v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Identity matrix, shape [n, n].
template <typename T>
Tensor<T> identity(std::size_t n) {
    Tensor<T> t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = T(1);
    return t;
}

/// Rows of `a` on top of rows of `b`; either may have zero rows.
template <typename T>
Tensor<T> vstack(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2, "vstack expects 2-D tensors");
    detail::require(a.shape[1] == b.shape[1], "vstack column counts disagree");
    Tensor<T> c({a.shape[0] + b.shape[0], a.shape[1]});
    std::copy(a.data.begin(), a.data.end(), c.data.begin());
    std::copy(b.data.begin(), b.data.end(), c.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return c;
}

/// Rows [begin, end) of a 2-D tensor.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    detail::require(a.rank() == 2, "take_rows expects a 2-D tensor");
    detail::require(begin <= end && end <= a.shape[0], "take_rows range out of bounds");
    const std::size_t cols = a.shape[1];
    Tensor<T> c({end - begin, cols});
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
              a.data.begin() + static_cast<std::ptrdiff_t>(end * cols), c.data.begin());
    return c;
}

/// Numerically stable logistic sigmoid; sigmoid(-inf) is exactly 0.
template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

} // namespace dattn
