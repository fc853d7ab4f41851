#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dattn/tensor.hpp"

namespace dattn {

enum class PositionMode { kBiased, kDebiased };

/// Per-token rotary position IDs for one mixed [visual, textual] sequence.
///
/// Biased keeps the concatenated-sequence numbering: visual tokens at
/// [0..N-1], textual at [N..N+M-1]. Debiased pins every visual token to the
/// shared position P0 = 0, so a textual query is rotated the same distance
/// from every visual key; textual tokens keep their concatenated indices.
struct PositionAssignment {
    std::vector<std::int64_t> visual_positions;
    std::vector<std::int64_t> textual_positions;
    PositionMode mode = PositionMode::kBiased;
};

PositionAssignment assign_positions(std::int64_t n_visual, std::int64_t n_textual,
                                    PositionMode mode);

struct RopeParams {
    std::int64_t head_dim = 0; // must be even: dimensions rotate in pairs
    double base = 10000.0;
};

/// Rotary encoding: dimension pair (2i, 2i+1) of each head is rotated by
/// angle pos * base^(-2i/head_dim). Pure rotation, so pair norms are
/// preserved and q.k inner products depend only on position differences.
/// `x` has shape [tokens, heads, head_dim].
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::span<const std::int64_t> positions,
                     const RopeParams& params) {
    detail::require(x.rank() == 3, "rope_apply expects [tokens, heads, head_dim]");
    const std::int64_t tokens = static_cast<std::int64_t>(x.shape[0]);
    const std::int64_t heads = static_cast<std::int64_t>(x.shape[1]);
    const std::int64_t hd = static_cast<std::int64_t>(x.shape[2]);
    if (hd != params.head_dim || hd % 2 != 0 || hd <= 0)
        throw ConfigError("rope head_dim must be a positive even number matching the tensor");
    if (static_cast<std::int64_t>(positions.size()) != tokens)
        throw ShapeError("rope position list length must equal token count");

    // Angles in double for both element types; both attention routes share
    // this path so the choice cannot break their agreement.
    std::vector<double> inv_freq(static_cast<std::size_t>(hd / 2));
    for (std::int64_t i = 0; i < hd / 2; ++i)
        inv_freq[static_cast<std::size_t>(i)] =
            std::pow(params.base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));

    Tensor<T> y = x;
    const int nt = detail::threads_for(tokens);
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1)
    for (std::int64_t t = 0; t < tokens; ++t) {
        const double pos = static_cast<double>(positions[static_cast<std::size_t>(t)]);
        for (std::int64_t h = 0; h < heads; ++h) {
            T* v = y.data.data() + (t * heads + h) * hd;
            for (std::int64_t i = 0; i < hd / 2; ++i) {
                const double angle = pos * inv_freq[static_cast<std::size_t>(i)];
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

} // namespace dattn
