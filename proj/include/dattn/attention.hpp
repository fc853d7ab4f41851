#pragma once

// Causal self-attention over a mixed [visual, textual] token sequence and
// its exact decomposition into V2V self-attention, T2V cross-attention and
// T2T self-attention, merged per head with the analytic alpha weights
//   alpha_V = sigmoid(S_V - S_T),  alpha_T = 1 - alpha_V,
// where S_V / S_T are the log-sum-exp of a textual query's scaled logits
// against visual / (causally masked) textual keys. The decomposed path
// reproduces the monolithic one, while allowing debiased visual positions in
// T2V and an O(N) diagonalized V2V that skips q/k and softmax entirely.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dattn/posenc.hpp"
#include "dattn/tensor.hpp"

namespace dattn {

enum class V2VMode { kFull, kDiagonal };
enum class MergeStrategy { kAlphaWeighting, kCascade, kTanhGate, kSigmoidGate };

struct AttentionConfig {
    std::int64_t d_model = 0;
    std::int64_t n_heads = 0;
    RopeParams rope; // rope.head_dim must equal d_model / n_heads
    PositionMode position_mode = PositionMode::kBiased;
    V2VMode v2v_mode = V2VMode::kFull;
    MergeStrategy merge = MergeStrategy::kAlphaWeighting;

    std::int64_t head_dim() const { return n_heads > 0 ? d_model / n_heads : 0; }

    void validate() const {
        if (d_model <= 0 || n_heads <= 0)
            throw ConfigError("d_model and n_heads must be positive");
        if (d_model % n_heads != 0)
            throw ConfigError("d_model (" + std::to_string(d_model) +
                              ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
        if (head_dim() % 2 != 0)
            throw ConfigError("head_dim (" + std::to_string(head_dim()) +
                              ") must be even for rotary encoding");
        if (rope.head_dim != head_dim())
            throw ConfigError("rope.head_dim must equal d_model / n_heads");
        if (rope.base <= 0.0) throw ConfigError("rope base must be positive");
    }
};

/// Convenience constructor that fills in rope.head_dim.
inline AttentionConfig make_config(std::int64_t d_model, std::int64_t n_heads,
                                   PositionMode pos = PositionMode::kBiased,
                                   V2VMode v2v = V2VMode::kFull,
                                   MergeStrategy merge = MergeStrategy::kAlphaWeighting,
                                   double rope_base = 10000.0) {
    AttentionConfig cfg;
    cfg.d_model = d_model;
    cfg.n_heads = n_heads;
    cfg.rope = RopeParams{n_heads > 0 ? d_model / n_heads : 0, rope_base};
    cfg.position_mode = pos;
    cfg.v2v_mode = v2v;
    cfg.merge = merge;
    cfg.validate();
    return cfg;
}

template <typename T>
struct ProjectionSet {
    Tensor<T> w_q, w_k, w_v, w_o; // each d_model x d_model
};

template <typename T>
struct AttentionWeights {
    ProjectionSet<T> proj;
    // Cascade carries a second, decoupled cross-attention block.
    std::optional<ProjectionSet<T>> cascade_cross;
    T gate_tanh = T(0);    // TanhGate scalar, tanh(0) = 0: visual path starts silent
    T gate_sigmoid = T(0); // SigmoidGate scalar, sigmoid(0) = 0.5: balanced blend

    std::int64_t parameter_count(MergeStrategy merge) const {
        const std::int64_t d = static_cast<std::int64_t>(proj.w_q.shape[0]);
        std::int64_t n = 4 * d * d;
        switch (merge) {
        case MergeStrategy::kCascade: n += 4 * d * d; break;
        case MergeStrategy::kTanhGate:
        case MergeStrategy::kSigmoidGate: n += 1; break;
        case MergeStrategy::kAlphaWeighting: break;
        }
        return n;
    }
};

template <typename T>
AttentionWeights<T> make_attention_weights(const AttentionConfig& cfg, Rng& rng) {
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    AttentionWeights<T> w;
    w.proj.w_q = random_linear_weight<T>(d, d, rng);
    w.proj.w_k = random_linear_weight<T>(d, d, rng);
    w.proj.w_v = random_linear_weight<T>(d, d, rng);
    w.proj.w_o = random_linear_weight<T>(d, d, rng);
    if (cfg.merge == MergeStrategy::kCascade) {
        ProjectionSet<T> x;
        x.w_q = random_linear_weight<T>(d, d, rng);
        x.w_k = random_linear_weight<T>(d, d, rng);
        x.w_v = random_linear_weight<T>(d, d, rng);
        x.w_o = random_linear_weight<T>(d, d, rng);
        w.cascade_cross = std::move(x);
    }
    return w;
}

/// N visual tokens followed by M textual tokens (N >= 0, M >= 1).
template <typename T>
struct MixedSequence {
    Tensor<T> visual;  // N x d_model (N may be 0)
    Tensor<T> textual; // M x d_model
    PositionAssignment positions;

    std::int64_t n_visual() const { return static_cast<std::int64_t>(visual.shape[0]); }
    std::int64_t n_textual() const { return static_cast<std::int64_t>(textual.shape[0]); }
};

template <typename T>
MixedSequence<T> make_random_sequence(std::int64_t n_visual, std::int64_t n_textual,
                                      std::int64_t d_model, PositionMode mode, Rng& rng) {
    MixedSequence<T> seq;
    seq.visual = random_uniform<T>({static_cast<std::size_t>(n_visual),
                                    static_cast<std::size_t>(d_model)},
                                   rng, -1.0, 1.0);
    seq.textual = random_uniform<T>({static_cast<std::size_t>(n_textual),
                                     static_cast<std::size_t>(d_model)},
                                    rng, -1.0, 1.0);
    seq.positions = assign_positions(n_visual, n_textual, mode);
    return seq;
}

template <typename T>
struct AttentionOutput {
    Tensor<T> visual_out;              // N x d_model
    Tensor<T> textual_out;             // M x d_model
    std::optional<Tensor<T>> alpha_v;  // M x n_heads, AlphaWeighting only
    std::optional<Tensor<T>> s_v, s_t; // M x n_heads diagnostics (when computed)
};

/// Per-head logits/probabilities captured for verification and the demo.
/// Shapes [heads, n_query, n_key]; masked logits are -inf, masked probs 0.
template <typename T>
struct AttnTrace {
    Tensor<T> logits;
    Tensor<T> probs;
};

namespace detail {

/// x (n x d_model) * w, viewed as [n, heads, head_dim]. Head h occupies the
/// contiguous column block [h*head_dim, (h+1)*head_dim).
template <typename T>
Tensor<T> project_heads(const Tensor<T>& x, const Tensor<T>& w, std::int64_t n_heads) {
    Tensor<T> y = matmul(x, w);
    const std::size_t n = y.shape[0], d = y.shape[1];
    return reshape(std::move(y), {n, static_cast<std::size_t>(n_heads),
                                  d / static_cast<std::size_t>(n_heads)});
}

/// Scaled-dot-product attention over pre-projected (and pre-rotated) heads.
/// q: [nq, H, Dh], k/v: [nk, H, Dh]. With `causal`, query i sees keys
/// j <= i (row i of the softmax is over keys 0..i); otherwise all keys.
/// out[i,h,:] = sum_j softmax_j(q.k/sqrt(Dh)) v[j,h,:]
/// lse[i,h]   = logsumexp_j of the scaled (masked) logits.
template <typename T>
void attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal,
            Tensor<T>* out, Tensor<T>* lse, AttnTrace<T>* trace) {
    const std::int64_t nq = static_cast<std::int64_t>(q.shape[0]);
    const std::int64_t heads = static_cast<std::int64_t>(q.shape[1]);
    const std::int64_t hd = static_cast<std::int64_t>(q.shape[2]);
    const std::int64_t nk = static_cast<std::int64_t>(k.shape[0]);
    require(k.shape == v.shape && k.shape[1] == q.shape[1] && k.shape[2] == q.shape[2],
            "attend: q/k/v head shapes disagree");
    require(!causal || nq == nk, "attend: causal mask requires nq == nk");
    require(nk >= 1, "attend: needs at least one key");

    const T inv_sqrt_hd = T(1) / std::sqrt(static_cast<T>(hd));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    *out = Tensor<T>({static_cast<std::size_t>(nq), static_cast<std::size_t>(heads),
                      static_cast<std::size_t>(hd)});
    if (lse)
        *lse = Tensor<T>({static_cast<std::size_t>(nq), static_cast<std::size_t>(heads)});
    if (trace) {
        trace->logits = Tensor<T>({static_cast<std::size_t>(heads), static_cast<std::size_t>(nq),
                                   static_cast<std::size_t>(nk)});
        for (T& x : trace->logits.data) x = neg_inf;
        trace->probs = Tensor<T>({static_cast<std::size_t>(heads), static_cast<std::size_t>(nq),
                                  static_cast<std::size_t>(nk)});
    }

    const int nt = threads_for(heads * nq);
#pragma omp parallel num_threads(nt) if (nt > 1)
    {
        std::vector<T> row(static_cast<std::size_t>(nk));
#pragma omp for collapse(2) schedule(static)
        for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < nq; ++i) {
                const std::int64_t limit = causal ? i + 1 : nk;
                const T* qrow = q.data.data() + (i * heads + h) * hd;

                T mx = neg_inf;
                for (std::int64_t j = 0; j < limit; ++j) {
                    const T* krow = k.data.data() + (j * heads + h) * hd;
                    T dot = 0;
                    for (std::int64_t d = 0; d < hd; ++d) dot += qrow[d] * krow[d];
                    const T l = dot * inv_sqrt_hd;
                    row[static_cast<std::size_t>(j)] = l;
                    if (l > mx) mx = l;
                }

                T denom = 0;
                for (std::int64_t j = 0; j < limit; ++j) {
                    const T e = std::exp(row[static_cast<std::size_t>(j)] - mx);
                    if (trace)
                        trace->logits.data[(h * nq + i) * nk + j] = row[static_cast<std::size_t>(j)];
                    row[static_cast<std::size_t>(j)] = e;
                    denom += e;
                }

                T* orow = out->data.data() + (i * heads + h) * hd;
                for (std::int64_t j = 0; j < limit; ++j) {
                    const T wgt = row[static_cast<std::size_t>(j)];
                    const T* vrow = v.data.data() + (j * heads + h) * hd;
                    for (std::int64_t d = 0; d < hd; ++d) orow[d] += wgt * vrow[d];
                }
                const T inv_denom = T(1) / denom;
                for (std::int64_t d = 0; d < hd; ++d) orow[d] *= inv_denom;

                if (lse) lse->data[i * heads + h] = mx + std::log(denom);
                if (trace)
                    for (std::int64_t j = 0; j < limit; ++j)
                        trace->probs.data[(h * nq + i) * nk + j] =
                            row[static_cast<std::size_t>(j)] * inv_denom;
            }
        }
    }
}

/// Heads merged as gate*xa + (1-gate)*sa, concatenated and projected by w_o.
/// alpha_merge and the sigmoid-gate ablation are both instances of this.
template <typename T>
Tensor<T> merge_gated(const Tensor<T>& xa_out, const Tensor<T>& sa_out, const Tensor<T>& gate,
                      const Tensor<T>& w_o) {
    require(xa_out.shape == sa_out.shape && xa_out.rank() == 3, "merge: head shapes disagree");
    const std::size_t m = xa_out.shape[0], heads = xa_out.shape[1], hd = xa_out.shape[2];
    require(gate.rank() == 2 && gate.shape[0] == m && gate.shape[1] == heads,
            "merge: gate must be [tokens, heads]");

    Tensor<T> merged({m, heads, hd});
    for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
            const T g = gate.data[t * heads + h];
            const T* xa = xa_out.data.data() + (t * heads + h) * hd;
            const T* sa = sa_out.data.data() + (t * heads + h) * hd;
            T* dst = merged.data.data() + (t * heads + h) * hd;
            for (std::size_t d = 0; d < hd; ++d) dst[d] = g * xa[d] + (T(1) - g) * sa[d];
        }
    }
    return matmul(reshape(std::move(merged), {m, heads * hd}), w_o);
}

} // namespace detail

/// The unsplit baseline: standard multi-head causal self-attention over the
/// concatenated [V, T] sequence with rotary positions and 1/sqrt(head_dim)
/// logit scaling. Rejects Debiased/Diagonal configs: it is the reference the
/// decomposed path is validated against, so it stays unmodified.
template <typename T>
AttentionOutput<T> causal_self_attention_oracle(const MixedSequence<T>& seq,
                                                const AttentionWeights<T>& w,
                                                const AttentionConfig& cfg,
                                                AttnTrace<T>* trace = nullptr) {
    cfg.validate();
    if (cfg.position_mode != PositionMode::kBiased)
        throw ConfigError("oracle attention requires Biased positions");
    if (cfg.v2v_mode != V2VMode::kFull)
        throw ConfigError("oracle attention requires Full v2v mode");
    if (seq.n_textual() < 1) throw ShapeError("sequence needs at least one textual token");

    const std::size_t n = static_cast<std::size_t>(seq.n_visual());
    const std::size_t m = static_cast<std::size_t>(seq.n_textual());

    Tensor<T> x = vstack(seq.visual, seq.textual);
    std::vector<std::int64_t> pos = seq.positions.visual_positions;
    pos.insert(pos.end(), seq.positions.textual_positions.begin(),
               seq.positions.textual_positions.end());

    Tensor<T> q = rope_apply(detail::project_heads(x, w.proj.w_q, cfg.n_heads), pos, cfg.rope);
    Tensor<T> k = rope_apply(detail::project_heads(x, w.proj.w_k, cfg.n_heads), pos, cfg.rope);
    Tensor<T> v = detail::project_heads(x, w.proj.w_v, cfg.n_heads);

    Tensor<T> heads_out;
    detail::attend<T>(q, k, v, /*causal=*/true, &heads_out, nullptr, trace);
    Tensor<T> y = matmul(reshape(std::move(heads_out), {n + m, static_cast<std::size_t>(cfg.d_model)}),
                         w.proj.w_o);

    AttentionOutput<T> out;
    out.visual_out = take_rows(y, 0, n);
    out.textual_out = take_rows(y, n, n + m);
    return out;
}

/// V2V self-attention. Full: causal attention among the visual tokens at
/// their assigned positions. Diagonal: each visual token attends only to
/// itself, which collapses the block to w_o(w_v(V)) -- no q/k projections,
/// no softmax, cost linear in N.
template <typename T>
Tensor<T> v2v_self_attention(const Tensor<T>& visual, const AttentionWeights<T>& w,
                             std::span<const std::int64_t> positions, const AttentionConfig& cfg) {
    cfg.validate();
    const std::size_t n = visual.shape[0];
    if (n == 0)
        return Tensor<T>({0, static_cast<std::size_t>(cfg.d_model)});

    if (cfg.v2v_mode == V2VMode::kDiagonal)
        return matmul(matmul(visual, w.proj.w_v), w.proj.w_o);

    Tensor<T> q = rope_apply(detail::project_heads(visual, w.proj.w_q, cfg.n_heads), positions,
                             cfg.rope);
    Tensor<T> k = rope_apply(detail::project_heads(visual, w.proj.w_k, cfg.n_heads), positions,
                             cfg.rope);
    Tensor<T> v = detail::project_heads(visual, w.proj.w_v, cfg.n_heads);
    Tensor<T> heads_out;
    detail::attend<T>(q, k, v, /*causal=*/true, &heads_out, nullptr, nullptr);
    return matmul(reshape(std::move(heads_out), {n, static_cast<std::size_t>(cfg.d_model)}),
                  w.proj.w_o);
}

template <typename T>
struct SubAttention {
    Tensor<T> out; // M x heads x head_dim, pre-w_o
    Tensor<T> lse; // M x heads: S_V for t2v, S_T for t2t
};

/// T2V cross-attention: every textual query sees all N visual keys (no
/// mask). Returns pre-w_o head outputs and S_V = logsumexp of the scaled
/// logits. N = 0 degenerates to zero output and S_V = -inf, making
/// alpha_V = sigmoid(S_V - S_T) exactly 0.
template <typename T>
SubAttention<T> t2v_cross_attention(const Tensor<T>& textual, const Tensor<T>& visual,
                                    const AttentionWeights<T>& w, const PositionAssignment& pos,
                                    const AttentionConfig& cfg, AttnTrace<T>* trace = nullptr) {
    cfg.validate();
    const std::size_t m = textual.shape[0];
    const std::size_t n = visual.shape[0];
    const std::size_t heads = static_cast<std::size_t>(cfg.n_heads);
    const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());

    SubAttention<T> r;
    if (n == 0) {
        r.out = Tensor<T>({m, heads, hd});
        r.lse = Tensor<T>({m, heads});
        for (T& v : r.lse.data) v = -std::numeric_limits<T>::infinity();
        if (trace) {
            trace->logits = Tensor<T>({heads, m, 0});
            trace->probs = Tensor<T>({heads, m, 0});
        }
        return r;
    }

    Tensor<T> q = rope_apply(detail::project_heads(textual, w.proj.w_q, cfg.n_heads),
                             pos.textual_positions, cfg.rope);
    Tensor<T> k = rope_apply(detail::project_heads(visual, w.proj.w_k, cfg.n_heads),
                             pos.visual_positions, cfg.rope);
    Tensor<T> v = detail::project_heads(visual, w.proj.w_v, cfg.n_heads);
    detail::attend<T>(q, k, v, /*causal=*/false, &r.out, &r.lse, trace);
    return r;
}

/// T2T self-attention: causal among textual tokens (token i sees tokens
/// 0..i). Returns pre-w_o head outputs and S_T, which is always finite.
template <typename T>
SubAttention<T> t2t_self_attention(const Tensor<T>& textual, const AttentionWeights<T>& w,
                                   std::span<const std::int64_t> positions,
                                   const AttentionConfig& cfg, AttnTrace<T>* trace = nullptr) {
    cfg.validate();
    if (textual.shape[0] < 1) throw ShapeError("t2t needs at least one textual token");
    Tensor<T> q = rope_apply(detail::project_heads(textual, w.proj.w_q, cfg.n_heads), positions,
                             cfg.rope);
    Tensor<T> k = rope_apply(detail::project_heads(textual, w.proj.w_k, cfg.n_heads), positions,
                             cfg.rope);
    Tensor<T> v = detail::project_heads(textual, w.proj.w_v, cfg.n_heads);
    SubAttention<T> r;
    detail::attend<T>(q, k, v, /*causal=*/true, &r.out, &r.lse, trace);
    return r;
}

template <typename T>
struct MergeResult {
    Tensor<T> textual_out; // M x d_model
    Tensor<T> alpha_v;     // M x heads
};

/// The alpha-weighting merge: per token and head,
///   merged = sigmoid(S_V - S_T) * xa + (1 - sigmoid(S_V - S_T)) * sa,
/// heads concatenated, then one w_o projection. Merging happens before w_o;
/// projecting the two branches separately would break the equivalence with
/// the unsplit softmax.
template <typename T>
MergeResult<T> alpha_merge(const Tensor<T>& xa_out, const Tensor<T>& sa_out, const Tensor<T>& s_v,
                           const Tensor<T>& s_t, const Tensor<T>& w_o) {
    detail::require(s_v.shape == s_t.shape && s_v.rank() == 2, "alpha_merge: lse shapes disagree");
    const std::size_t m = s_v.shape[0], heads = s_v.shape[1];

    for (const T& v : s_t.data)
        if (!std::isfinite(v)) throw NumericError("S_T must be finite (causal row includes self)");
    for (const T& v : s_v.data)
        if (std::isnan(v) || v == std::numeric_limits<T>::infinity())
            throw NumericError("S_V must be finite or -inf");

    MergeResult<T> r;
    r.alpha_v = Tensor<T>({m, heads});
    for (std::size_t i = 0; i < m * heads; ++i)
        r.alpha_v.data[i] = sigmoid(s_v.data[i] - s_t.data[i]);
    r.textual_out = detail::merge_gated(xa_out, sa_out, r.alpha_v, w_o);
    return r;
}

/// Tanh-gate ablation: merged = tanh(g) * xa + sa (the textual branch is not
/// down-weighted), then w_o.
template <typename T>
Tensor<T> merge_tanh(const Tensor<T>& xa_out, const Tensor<T>& sa_out, T gate_g,
                     const Tensor<T>& w_o) {
    detail::require(xa_out.shape == sa_out.shape && xa_out.rank() == 3,
                    "merge: head shapes disagree");
    const std::size_t m = xa_out.shape[0], heads = xa_out.shape[1], hd = xa_out.shape[2];
    const T g = std::tanh(gate_g);
    Tensor<T> merged({m, heads, hd});
    for (std::size_t i = 0; i < merged.data.size(); ++i)
        merged.data[i] = g * xa_out.data[i] + sa_out.data[i];
    return matmul(reshape(std::move(merged), {m, heads * hd}), w_o);
}

/// Sigmoid-gate ablation: same form as alpha-weighting but with one learned
/// scalar gate instead of the analytic per-token/head alpha.
template <typename T>
Tensor<T> merge_sigmoid(const Tensor<T>& xa_out, const Tensor<T>& sa_out, T gate_s,
                        const Tensor<T>& w_o) {
    const std::size_t m = xa_out.shape[0], heads = xa_out.shape[1];
    Tensor<T> gate({m, heads});
    const T g = sigmoid(gate_s);
    for (T& v : gate.data) v = g;
    return detail::merge_gated(xa_out, sa_out, gate, w_o);
}

/// Cascade ablation: the cross-attention is decoupled into its own block
/// with its own q/k/v/o weights and residual, applied after the T2T block:
///   t1 = t + w_o(sa_out);  out = t1 + XA_block(t1, V).
/// Unlike the gated merges, the residual adds are part of the block
/// structure, and no alpha is computed.
template <typename T>
Tensor<T> merge_cascade(const Tensor<T>& textual, const Tensor<T>& visual,
                        const Tensor<T>& sa_out, const PositionAssignment& pos,
                        const AttentionWeights<T>& w, const AttentionConfig& cfg) {
    if (!w.cascade_cross)
        throw ConfigError("Cascade merge needs the decoupled cross-attention weights");
    const std::size_t m = textual.shape[0];
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);

    Tensor<T> sa_flat = sa_out;
    Tensor<T> t1 = add(textual, matmul(reshape(std::move(sa_flat), {m, d}), w.proj.w_o));
    if (visual.shape[0] == 0) return t1;

    const ProjectionSet<T>& x = *w.cascade_cross;
    Tensor<T> q = rope_apply(detail::project_heads(t1, x.w_q, cfg.n_heads), pos.textual_positions,
                             cfg.rope);
    Tensor<T> k = rope_apply(detail::project_heads(visual, x.w_k, cfg.n_heads),
                             pos.visual_positions, cfg.rope);
    Tensor<T> v = detail::project_heads(visual, x.w_v, cfg.n_heads);
    Tensor<T> heads_out;
    detail::attend<T>(q, k, v, /*causal=*/false, &heads_out, nullptr, nullptr);
    return add(t1, matmul(reshape(std::move(heads_out), {m, d}), x.w_o));
}

/// Decomposed attention over a mixed sequence: V2V for the visual rows, the
/// selected merge of T2V/T2T for the textual rows. With (Biased, Full,
/// AlphaWeighting) this reproduces causal_self_attention_oracle; Debiased
/// positions change only the rotary positions fed to visual keys, and
/// Diagonal V2V changes only the visual rows.
template <typename T>
AttentionOutput<T> decomposed_attention(const MixedSequence<T>& seq, const AttentionWeights<T>& w,
                                        const AttentionConfig& cfg) {
    cfg.validate();
    if (seq.n_textual() < 1) throw ShapeError("sequence needs at least one textual token");
    if (seq.positions.visual_positions.size() != static_cast<std::size_t>(seq.n_visual()) ||
        seq.positions.textual_positions.size() != static_cast<std::size_t>(seq.n_textual()))
        throw ShapeError("position list lengths must match token counts");

    AttentionOutput<T> out;
    out.visual_out = v2v_self_attention(seq.visual, w, seq.positions.visual_positions, cfg);

    SubAttention<T> t2t = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);

    switch (cfg.merge) {
    case MergeStrategy::kAlphaWeighting: {
        SubAttention<T> t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
        MergeResult<T> merged = alpha_merge(t2v.out, t2t.out, t2v.lse, t2t.lse, w.proj.w_o);
        out.textual_out = std::move(merged.textual_out);
        out.alpha_v = std::move(merged.alpha_v);
        out.s_v = std::move(t2v.lse);
        out.s_t = std::move(t2t.lse);
        break;
    }
    case MergeStrategy::kTanhGate: {
        SubAttention<T> t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
        out.textual_out = merge_tanh(t2v.out, t2t.out, w.gate_tanh, w.proj.w_o);
        out.s_v = std::move(t2v.lse);
        out.s_t = std::move(t2t.lse);
        break;
    }
    case MergeStrategy::kSigmoidGate: {
        SubAttention<T> t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
        out.textual_out = merge_sigmoid(t2v.out, t2t.out, w.gate_sigmoid, w.proj.w_o);
        out.s_v = std::move(t2v.lse);
        out.s_t = std::move(t2t.lse);
        break;
    }
    case MergeStrategy::kCascade: {
        out.textual_out =
            merge_cascade(seq.textual, seq.visual, t2t.out, seq.positions, w, cfg);
        out.s_t = std::move(t2t.lse);
        break;
    }
    }
    return out;
}

} // namespace dattn
