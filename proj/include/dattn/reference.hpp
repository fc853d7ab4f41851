#pragma once

// Plain serial implementations of the data-parallel kernels. These are the
// reference the OpenMP kernels are tested against (results must be
// bit-identical: the parallel loops keep the same per-element summation
// order) and the baseline for the kernel benchmark.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dattn/posenc.hpp"
#include "dattn/tensor.hpp"

namespace dattn::ref {

/// Naive triple loop, dot product per output element.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2, "matmul expects 2-D tensors");
    if (a.shape[1] != b.shape[0]) throw ShapeError("matmul inner dimensions disagree");
    const std::size_t m = a.shape[0], kk = a.shape[1], n = b.shape[1];
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = 0;
            for (std::size_t p = 0; p < kk; ++p) acc += a.data[i * kk + p] * b.data[p * n + j];
            c.data[i * n + j] = acc;
        }
    }
    return c;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    detail::require(x.rank() >= 1 && x.shape.back() >= 1, "softmax needs last dim >= 1");
    const std::size_t last = x.shape.back();
    const std::size_t rows = x.size() / last;
    Tensor<T> y = x;
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = y.data.data() + r * last;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < last; ++j)
            if (row[j] > mx) mx = row[j];
        T sum = 0;
        for (std::size_t j = 0; j < last; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < last; ++j) row[j] *= inv;
    }
    return y;
}

template <typename T>
Tensor<T> logsumexp_lastdim(const Tensor<T>& x) {
    detail::require(x.rank() >= 1, "logsumexp expects rank >= 1");
    const std::size_t last = x.shape.back();
    std::vector<std::size_t> out_shape(x.shape.begin(), x.shape.end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor<T> y(out_shape);
    if (last == 0) {
        for (T& v : y.data) v = -std::numeric_limits<T>::infinity();
        return y;
    }
    for (std::size_t r = 0; r < y.size(); ++r) {
        const T* row = x.data.data() + r * last;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < last; ++j)
            if (row[j] > mx) mx = row[j];
        if (mx == -std::numeric_limits<T>::infinity()) {
            y.data[r] = mx;
            continue;
        }
        T sum = 0;
        for (std::size_t j = 0; j < last; ++j) sum += std::exp(row[j] - mx);
        y.data[r] = mx + std::log(sum);
    }
    return y;
}

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::span<const std::int64_t> positions,
                     const RopeParams& params) {
    detail::require(x.rank() == 3, "rope_apply expects [tokens, heads, head_dim]");
    const std::size_t tokens = x.shape[0], heads = x.shape[1], hd = x.shape[2];
    if (static_cast<std::int64_t>(hd) != params.head_dim || hd % 2 != 0)
        throw ConfigError("rope head_dim must be even and match the tensor");
    if (positions.size() != tokens) throw ShapeError("rope position list length mismatch");
    Tensor<T> y = x;
    for (std::size_t t = 0; t < tokens; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
            T* v = y.data.data() + (t * heads + h) * hd;
            for (std::size_t i = 0; i < hd / 2; ++i) {
                const double angle = static_cast<double>(positions[t]) *
                                     std::pow(params.base, -2.0 * static_cast<double>(i) /
                                                               static_cast<double>(hd));
                const T c = static_cast<T>(std::cos(angle));
                const T s = static_cast<T>(std::sin(angle));
                const T x0 = v[2 * i], x1 = v[2 * i + 1];
                v[2 * i] = x0 * c - x1 * s;
                v[2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }
    return y;
}

} // namespace dattn::ref
