#pragma once

// Minimal pre-norm decoder stack (RMSNorm -> attention -> residual ->
// RMSNorm -> GELU MLP -> residual) so alpha_V maps can be recorded across
// layers and heads, and multi-layer equivalence between the decomposed and
// monolithic attention paths can be tested.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dattn/attention.hpp"

namespace dattn {

template <typename T>
struct DecoderLayer {
    AttentionWeights<T> attn;
    Tensor<T> mlp_w1;     // d_model x 4*d_model
    Tensor<T> mlp_w2;     // 4*d_model x d_model
    Tensor<T> norm1_gain; // d_model
    Tensor<T> norm2_gain; // d_model
};

template <typename T>
DecoderLayer<T> make_decoder_layer(const AttentionConfig& cfg, Rng& rng) {
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    DecoderLayer<T> layer;
    layer.attn = make_attention_weights<T>(cfg, rng);
    layer.mlp_w1 = random_linear_weight<T>(d, 4 * d, rng);
    layer.mlp_w2 = random_linear_weight<T>(4 * d, d, rng);
    layer.norm1_gain = Tensor<T>({d});
    layer.norm2_gain = Tensor<T>({d});
    for (T& v : layer.norm1_gain.data) v = T(1);
    for (T& v : layer.norm2_gain.data) v = T(1);
    return layer;
}

/// Row-wise RMS normalization: y = x * gain / rms(x). With gain 1 the output
/// row RMS is 1 (up to the 1e-12 guard epsilon).
template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gain) {
    detail::require(x.rank() == 2 && gain.rank() == 1 && gain.shape[0] == x.shape[1],
                    "rmsnorm: gain length must match row width");
    const std::size_t rows = x.shape[0], d = x.shape[1];
    Tensor<T> y = x;
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0;
        const T* row = x.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j)
            ss += static_cast<double>(row[j]) * static_cast<double>(row[j]);
        const double inv_rms = 1.0 / std::sqrt(ss / static_cast<double>(d) + 1e-12);
        T* dst = y.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j)
            dst[j] = static_cast<T>(static_cast<double>(row[j]) * inv_rms) * gain.data[j];
    }
    return y;
}

/// Exact (erf-based) GELU, applied elementwise.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.data)
        v = static_cast<T>(0.5 * static_cast<double>(v) *
                           (1.0 + std::erf(static_cast<double>(v) / std::sqrt(2.0))));
    return y;
}

enum class AttentionPath { kDecomposed, kOracle };

/// One pre-norm residual layer applied blockwise to the visual and textual
/// streams: x + Attn(norm(x)), then + MLP(norm(.)). When `alpha_out` is
/// given and the merge is AlphaWeighting, the per-token/head alpha_V of this
/// layer is stored there.
template <typename T>
MixedSequence<T> layer_forward(const MixedSequence<T>& seq, const DecoderLayer<T>& layer,
                               const AttentionConfig& cfg,
                               AttentionPath path = AttentionPath::kDecomposed,
                               Tensor<T>* alpha_out = nullptr) {
    MixedSequence<T> normed = seq;
    normed.visual = rmsnorm(seq.visual, layer.norm1_gain);
    normed.textual = rmsnorm(seq.textual, layer.norm1_gain);

    AttentionOutput<T> attn = path == AttentionPath::kOracle
                                  ? causal_self_attention_oracle(normed, layer.attn, cfg)
                                  : decomposed_attention(normed, layer.attn, cfg);
    if (alpha_out) {
        if (attn.alpha_v)
            *alpha_out = *attn.alpha_v;
        else
            *alpha_out = Tensor<T>({static_cast<std::size_t>(seq.n_textual()),
                                    static_cast<std::size_t>(cfg.n_heads)});
    }

    MixedSequence<T> h = seq;
    h.visual = add(seq.visual, attn.visual_out);
    h.textual = add(seq.textual, attn.textual_out);

    MixedSequence<T> out = h;
    out.visual = add(h.visual, matmul(gelu(matmul(rmsnorm(h.visual, layer.norm2_gain),
                                                  layer.mlp_w1)),
                                      layer.mlp_w2));
    out.textual = add(h.textual, matmul(gelu(matmul(rmsnorm(h.textual, layer.norm2_gain),
                                                    layer.mlp_w1)),
                                        layer.mlp_w2));
    return out;
}

/// Per-layer, per-head, per-textual-token alpha_V captured during a stack
/// forward pass. Values are stored unsorted; sorting heads by their mean is
/// a presentation transform applied on export.
struct AlphaRecord {
    std::int64_t layers = 0;
    std::int64_t heads = 0;
    std::int64_t tokens = 0;
    std::vector<double> alpha; // [(layer*heads + head)*tokens + token]

    double at(std::int64_t l, std::int64_t h, std::int64_t t) const {
        return alpha[static_cast<std::size_t>((l * heads + h) * tokens + t)];
    }

    /// Mean over tokens, indexed [layer*heads + head].
    std::vector<double> head_means() const {
        std::vector<double> m(static_cast<std::size_t>(layers * heads), 0.0);
        if (tokens == 0) return m;
        for (std::int64_t l = 0; l < layers; ++l)
            for (std::int64_t h = 0; h < heads; ++h) {
                double s = 0;
                for (std::int64_t t = 0; t < tokens; ++t) s += at(l, h, t);
                m[static_cast<std::size_t>(l * heads + h)] = s / static_cast<double>(tokens);
            }
        return m;
    }
};

template <typename T>
struct StackResult {
    MixedSequence<T> seq;
    AlphaRecord record;
};

/// Sequential layer_forward over the stack. With `record` set and the
/// AlphaWeighting merge, alpha_V is captured per layer/head/token.
template <typename T>
StackResult<T> stack_forward(const MixedSequence<T>& seq, std::span<const DecoderLayer<T>> layers,
                             const AttentionConfig& cfg, bool record,
                             AttentionPath path = AttentionPath::kDecomposed) {
    if (layers.empty()) throw ConfigError("stack_forward needs at least one layer");

    StackResult<T> r;
    r.seq = seq;
    const std::int64_t m = seq.n_textual();
    if (record) {
        r.record.layers = static_cast<std::int64_t>(layers.size());
        r.record.heads = cfg.n_heads;
        r.record.tokens = m;
        r.record.alpha.assign(static_cast<std::size_t>(r.record.layers * cfg.n_heads * m), 0.0);
    }

    for (std::size_t li = 0; li < layers.size(); ++li) {
        Tensor<T> alpha;
        r.seq = layer_forward(r.seq, layers[li], cfg, path, record ? &alpha : nullptr);
        if (record) {
            // alpha arrives [token, head]; the record is head-major.
            for (std::int64_t h = 0; h < cfg.n_heads; ++h)
                for (std::int64_t t = 0; t < m; ++t)
                    r.record.alpha[static_cast<std::size_t>(
                        (static_cast<std::int64_t>(li) * cfg.n_heads + h) * m + t)] =
                        static_cast<double>(alpha.data[static_cast<std::size_t>(t * cfg.n_heads + h)]);
        }
    }
    return r;
}

} // namespace dattn
