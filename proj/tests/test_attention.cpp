#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dattn/attention.hpp"
#include "test_oracles.hpp"

using namespace dattn;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

MixedSequence<double> textual_only_sequence(const Tensor<double>& tokens,
                                            std::vector<std::int64_t> positions) {
    MixedSequence<double> seq;
    seq.visual = Tensor<double>({0, tokens.shape[1]});
    seq.textual = tokens;
    seq.positions.mode = PositionMode::kBiased;
    seq.positions.textual_positions = std::move(positions);
    return seq;
}

} // namespace

TEST_CASE("config validation") {
    CHECK_THROWS_AS(make_config(30, 4), ConfigError);  // not divisible
    CHECK_THROWS_AS(make_config(6, 2), ConfigError);   // odd head_dim
    CHECK_THROWS_AS(make_config(0, 1), ConfigError);
    CHECK_NOTHROW(make_config(32, 4));
    AttentionConfig cfg = make_config(32, 2);
    cfg.rope.head_dim = 8; // must match d_model / n_heads
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("oracle matches the independent dense reference") {
    const AttentionConfig cfg = make_config(32, 2);
    Rng rng(42);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(8, 8, 32, PositionMode::kBiased, rng);

    const auto out = causal_self_attention_oracle(seq, w, cfg);
    const auto ref = testref::dense_causal_reference(seq, w, cfg);

    const std::size_t d = 32;
    double worst = 0;
    for (std::size_t i = 0; i < 8 * d; ++i)
        worst = std::max(worst, std::abs(out.visual_out.data[i] - ref[i]));
    for (std::size_t i = 0; i < 8 * d; ++i)
        worst = std::max(worst, std::abs(out.textual_out.data[i] - ref[8 * d + i]));
    CHECK(worst <= 1e-12);
}

TEST_CASE("oracle single-token sequence is w_o(w_v(token))") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(4);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(0, 1, 16, PositionMode::kBiased, rng);

    const auto out = causal_self_attention_oracle(seq, w, cfg);
    const auto expected = matmul(matmul(seq.textual, w.proj.w_v), w.proj.w_o);
    CHECK(max_abs_diff(out.textual_out, expected) == 0.0); // singleton softmax is exactly 1
}

TEST_CASE("oracle softmax rows sum to one and the future is exactly zero") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(8);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(5, 4, 16, PositionMode::kBiased, rng);

    AttnTrace<double> trace;
    causal_self_attention_oracle(seq, w, cfg, &trace);
    const std::size_t L = 9;
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < L; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < L; ++j) {
                const double p = trace.probs.at3(h, i, j);
                sum += p;
                if (j > i) {
                    CHECK(p == 0.0);
                    CHECK(trace.logits.at3(h, i, j) == -kInf);
                }
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
}

TEST_CASE("oracle rejects modified configurations") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(1);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(2, 2, 16, PositionMode::kBiased, rng);

    AttentionConfig debiased = cfg;
    debiased.position_mode = PositionMode::kDebiased;
    CHECK_THROWS_AS(causal_self_attention_oracle(seq, w, debiased), ConfigError);

    AttentionConfig diag = cfg;
    diag.v2v_mode = V2VMode::kDiagonal;
    CHECK_THROWS_AS(causal_self_attention_oracle(seq, w, diag), ConfigError);
}

TEST_CASE("diagonal v2v equals full for a single visual token") {
    Rng rng(2);
    const AttentionConfig full = make_config(16, 2);
    const AttentionConfig diag = make_config(16, 2, PositionMode::kBiased, V2VMode::kDiagonal);
    const auto w = make_attention_weights<double>(full, rng);
    const auto visual = random_uniform<double>({1, 16}, rng, -1, 1);
    const std::vector<std::int64_t> pos{0};

    const auto a = v2v_self_attention(visual, w, pos, full);
    const auto b = v2v_self_attention(visual, w, pos, diag);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("diagonal v2v equals explicit identity-matrix substitution") {
    for (std::int64_t n : {1, 3, 7, 16}) {
        const AttentionConfig diag =
            make_config(24, 3, PositionMode::kBiased, V2VMode::kDiagonal);
        Rng rng(static_cast<std::uint64_t>(n));
        const auto w = make_attention_weights<double>(diag, rng);
        const auto visual =
            random_uniform<double>({static_cast<std::size_t>(n), 24}, rng, -1, 1);
        const std::vector<std::int64_t> pos(static_cast<std::size_t>(n), 0);

        const auto out = v2v_self_attention(visual, w, pos, diag);
        const auto subst = testref::v2v_identity_substitution(visual, w, diag);
        CHECK(max_abs_diff(out, subst) == 0.0); // exactly, not just within tolerance
    }
}

TEST_CASE("full v2v matches the oracle restricted to a visual-only sequence") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(3);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto visual = random_uniform<double>({4, 16}, rng, -1, 1);
    const std::vector<std::int64_t> pos{0, 1, 2, 3};

    const auto v2v = v2v_self_attention(visual, w, pos, cfg);
    const auto restricted = causal_self_attention_oracle(
        textual_only_sequence(visual, {0, 1, 2, 3}), w, cfg);
    CHECK(max_abs_diff(v2v, restricted.textual_out) == 0.0);
}

TEST_CASE("t2v with no visual tokens yields zeros and -inf S_V") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(5);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(0, 3, 16, PositionMode::kBiased, rng);

    const auto r = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
    CHECK(max_abs(r.out) == 0.0);
    for (double v : r.lse.data) CHECK(v == -kInf);
}

TEST_CASE("t2v with one visual token copies its value") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(6);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(1, 2, 16, PositionMode::kBiased, rng);

    const auto r = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
    const auto value = detail::project_heads(seq.visual, w.proj.w_v, 2);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t d = 0; d < 8; ++d)
                CHECK(r.out.at3(t, h, d) == value.at3(0, h, d)); // softmax weight is exactly 1

    // S_V equals the single scaled logit
    const auto q = rope_apply(detail::project_heads(seq.textual, w.proj.w_q, 2),
                              seq.positions.textual_positions, cfg.rope);
    const auto k = rope_apply(detail::project_heads(seq.visual, w.proj.w_k, 2),
                              seq.positions.visual_positions, cfg.rope);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t h = 0; h < 2; ++h) {
            double dot = 0;
            for (std::size_t d = 0; d < 8; ++d) dot += q.at3(t, h, d) * k.at3(0, h, d);
            CHECK(std::abs(r.lse.at2(t, h) - dot / std::sqrt(8.0)) <= 1e-15);
        }
}

TEST_CASE("t2v S_V matches logsumexp of the oracle's visual logit columns") {
    const AttentionConfig cfg = make_config(32, 2);
    Rng rng(11);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(8, 4, 32, PositionMode::kBiased, rng);

    AttnTrace<double> trace;
    causal_self_attention_oracle(seq, w, cfg, &trace);
    const auto r = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);

    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t h = 0; h < 2; ++h) {
            std::vector<double> visual_logits;
            for (std::size_t j = 0; j < 8; ++j)
                visual_logits.push_back(trace.logits.at3(h, 8 + t, j));
            CHECK(std::abs(r.lse.at2(t, h) - testref::logsumexp_highprec(visual_logits)) <= 1e-12);
        }
}

TEST_CASE("t2t single token attends to itself") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(7);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(0, 1, 16, PositionMode::kBiased, rng);

    const auto r = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);
    const auto value = detail::project_heads(seq.textual, w.proj.w_v, 2);
    CHECK(max_abs_diff(r.out, value) == 0.0);

    const auto q = rope_apply(detail::project_heads(seq.textual, w.proj.w_q, 2),
                              seq.positions.textual_positions, cfg.rope);
    const auto k = rope_apply(detail::project_heads(seq.textual, w.proj.w_k, 2),
                              seq.positions.textual_positions, cfg.rope);
    for (std::size_t h = 0; h < 2; ++h) {
        double dot = 0;
        for (std::size_t d = 0; d < 8; ++d) dot += q.at3(0, h, d) * k.at3(0, h, d);
        CHECK(std::abs(r.lse.at2(0, h) - dot / std::sqrt(8.0)) <= 1e-15);
    }
}

TEST_CASE("t2t mask: rows sum to one, future entries exactly zero") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(9);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(0, 6, 16, PositionMode::kBiased, rng);

    AttnTrace<double> trace;
    t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg, &trace);
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < 6; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < 6; ++j) {
                sum += trace.probs.at3(h, i, j);
                if (j > i) CHECK(trace.probs.at3(h, i, j) == 0.0);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
}

TEST_CASE("t2t matches the oracle on a textual-only sequence at offset positions") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(5);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto tokens = random_uniform<double>({6, 16}, rng, -1, 1);
    const std::vector<std::int64_t> offset{8, 9, 10, 11, 12, 13}; // [N..N+M-1] for N=8

    const auto r = t2t_self_attention(tokens, w, offset, cfg);
    Tensor<double> projected = matmul(reshape(Tensor<double>(r.out), {6, 16}), w.proj.w_o);

    const auto restricted = causal_self_attention_oracle(
        textual_only_sequence(tokens, offset), w, cfg);
    CHECK(max_abs_diff(projected, restricted.textual_out) == 0.0);
}

TEST_CASE("alpha_merge gives exactly 0.5 when S_V equals S_T") {
    Rng rng(10);
    const auto xa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    Tensor<double> lse({2, 2}, {0.3, -1.2, 4.0, 0.0});
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    const auto r = alpha_merge(xa, sa, lse, lse, w_o);
    for (double a : r.alpha_v.data) CHECK(a == 0.5);
}

TEST_CASE("alpha_merge with -inf S_V reduces to pure T2T") {
    Rng rng(12);
    const auto xa = random_uniform<double>({3, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({3, 2, 4}, rng, -1, 1);
    Tensor<double> s_v({3, 2});
    for (double& v : s_v.data) v = -kInf;
    const auto s_t = random_uniform<double>({3, 2}, rng, -1, 1);
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    const auto r = alpha_merge(xa, sa, s_v, s_t, w_o);
    CHECK(max_abs(r.alpha_v) == 0.0); // sigmoid(-inf) is exactly 0
    const auto pure_t2t = matmul(reshape(Tensor<double>(sa), {3, 8}), w_o);
    CHECK(max_abs_diff(r.textual_out, pure_t2t) == 0.0);
}

TEST_CASE("alpha_merge rejects non-finite S_T") {
    Tensor<double> xa({1, 1, 2}), sa({1, 1, 2});
    Tensor<double> s_v({1, 1}, {0.0});
    Tensor<double> bad({1, 1}, {std::nan("")});
    Tensor<double> w_o({2, 2});
    CHECK_THROWS_AS(alpha_merge(xa, sa, s_v, bad, w_o), NumericError);
    Tensor<double> inf_t({1, 1}, {kInf});
    CHECK_THROWS_AS(alpha_merge(xa, sa, s_v, inf_t, w_o), NumericError);
    Tensor<double> nan_v({1, 1}, {std::nan("")});
    Tensor<double> ok_t({1, 1}, {0.0});
    CHECK_THROWS_AS(alpha_merge(xa, sa, nan_v, ok_t, w_o), NumericError);
}

TEST_CASE("alpha-merged sub-attentions reproduce the oracle's textual rows") {
    const AttentionConfig cfg = make_config(32, 2);
    Rng rng(42);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(8, 8, 32, PositionMode::kBiased, rng);

    const auto t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
    const auto t2t = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);
    const auto merged = alpha_merge(t2v.out, t2t.out, t2v.lse, t2t.lse, w.proj.w_o);

    const auto oracle = causal_self_attention_oracle(seq, w, cfg);
    CHECK(max_abs_diff(merged.textual_out, oracle.textual_out) <= 1e-10);
}

TEST_CASE("tanh gate at zero nulls the visual contribution") {
    Rng rng(13);
    const auto xa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    const auto gated = merge_tanh(xa, sa, 0.0, w_o);
    const auto t2t_only = matmul(reshape(Tensor<double>(sa), {2, 8}), w_o);
    CHECK(max_abs_diff(gated, t2t_only) == 0.0);
}

TEST_CASE("tanh gate saturates at one") {
    CHECK(std::tanh(40.0) == 1.0);
    Rng rng(14);
    const auto xa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    const auto saturated = merge_tanh(xa, sa, 40.0, w_o);
    const auto unit = matmul(reshape(add(xa, sa), {2, 8}), w_o);
    CHECK(max_abs_diff(saturated, unit) == 0.0);
}

TEST_CASE("tanh gate matches direct formula evaluation") {
    Rng rng(13);
    const auto xa = random_uniform<double>({3, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({3, 2, 4}, rng, -1, 1);
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    const auto out = merge_tanh(xa, sa, 0.5, w_o);
    Tensor<double> expect({3, 8});
    const double g = std::tanh(0.5);
    for (std::size_t i = 0; i < expect.size(); ++i)
        expect.data[i] = g * xa.data[i] + sa.data[i];
    expect = testref::naive_matmul(expect, w_o);
    CHECK(max_abs_diff(out, expect) <= 1e-15);
}

TEST_CASE("sigmoid gate blends and saturates") {
    Rng rng(15);
    const auto xa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto sa = random_uniform<double>({2, 2, 4}, rng, -1, 1);
    const auto w_o = random_uniform<double>({8, 8}, rng, -1, 1);

    // sigmoid(0) = 0.5 exactly: equal blend
    const auto blend = merge_sigmoid(xa, sa, 0.0, w_o);
    Tensor<double> expect({2, 8});
    for (std::size_t i = 0; i < expect.size(); ++i)
        expect.data[i] = 0.5 * xa.data[i] + 0.5 * sa.data[i];
    CHECK(max_abs_diff(blend, testref::naive_matmul(expect, w_o)) <= 1e-15);

    // gate -> -inf: pure T2T
    const auto pure = merge_sigmoid(xa, sa, -kInf, w_o);
    const auto t2t_only = matmul(reshape(Tensor<double>(sa), {2, 8}), w_o);
    CHECK(max_abs_diff(pure, t2t_only) == 0.0);
}

TEST_CASE("sigmoid gate reduces to alpha weighting with analytic gates") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(16);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(4, 3, 16, PositionMode::kBiased, rng);

    const auto t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
    const auto t2t = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);

    // Feed the per-token/head gate sigmoid(S_V - S_T) through the gated-merge
    // form the sigmoid ablation uses.
    Tensor<double> gate({3, 2});
    for (std::size_t i = 0; i < gate.size(); ++i)
        gate.data[i] = sigmoid(t2v.lse.data[i] - t2t.lse.data[i]);
    const auto gated = detail::merge_gated(t2v.out, t2t.out, gate, w.proj.w_o);

    const auto merged = alpha_merge(t2v.out, t2t.out, t2v.lse, t2t.lse, w.proj.w_o);
    CHECK(max_abs_diff(gated, merged.textual_out) == 0.0);
}

TEST_CASE("cascade with a zero output projection is the T2T-only path") {
    const AttentionConfig cfg =
        make_config(16, 2, PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kCascade);
    Rng rng(17);
    auto w = make_attention_weights<double>(cfg, rng);
    for (double& v : w.cascade_cross->w_o.data) v = 0.0;
    const auto seq = make_random_sequence<double>(3, 2, 16, PositionMode::kBiased, rng);

    const auto t2t = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);
    const auto out = merge_cascade(seq.textual, seq.visual, t2t.out, seq.positions, w, cfg);

    const auto t2t_block =
        add(seq.textual, matmul(reshape(Tensor<double>(t2t.out), {2, 16}), w.proj.w_o));
    CHECK(max_abs_diff(out, t2t_block) == 0.0);
}

TEST_CASE("cascade carries exactly one extra attention block of parameters") {
    const AttentionConfig cascade_cfg =
        make_config(32, 2, PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kCascade);
    Rng rng(18);
    const auto w = make_attention_weights<double>(cascade_cfg, rng);

    const std::int64_t alpha_params = w.parameter_count(MergeStrategy::kAlphaWeighting);
    const std::int64_t cascade_params = w.parameter_count(MergeStrategy::kCascade);
    CHECK(alpha_params == 4 * 32 * 32);
    CHECK(cascade_params - alpha_params == 4 * 32 * 32); // one block's worth
    CHECK(cascade_params > alpha_params);
    CHECK(w.parameter_count(MergeStrategy::kTanhGate) == alpha_params + 1);
    CHECK(w.parameter_count(MergeStrategy::kSigmoidGate) == alpha_params + 1);
}

TEST_CASE("cascade matches the step-by-step two-block composition") {
    const AttentionConfig cfg =
        make_config(16, 2, PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kCascade);
    Rng rng(9);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(2, 2, 16, PositionMode::kBiased, rng);

    const auto t2t = t2t_self_attention(seq.textual, w, seq.positions.textual_positions, cfg);
    const auto out = merge_cascade(seq.textual, seq.visual, t2t.out, seq.positions, w, cfg);

    // hand composition through the independent dense reference
    const std::size_t d = 16;
    std::vector<double> textual(seq.textual.data.begin(), seq.textual.data.end());
    std::vector<double> visual(seq.visual.data.begin(), seq.visual.data.end());

    const auto sa_block = testref::dense_attention(
        textual, 2, seq.positions.textual_positions, textual, 2,
        seq.positions.textual_positions, d, 2, testref::copy_weights(w.proj),
        /*causal=*/true, cfg.rope.base);
    std::vector<double> t1(textual);
    for (std::size_t i = 0; i < t1.size(); ++i) t1[i] += sa_block[i];

    const auto xa_block = testref::dense_attention(
        t1, 2, seq.positions.textual_positions, visual, 2, seq.positions.visual_positions, d, 2,
        testref::copy_weights(*w.cascade_cross), /*causal=*/false, cfg.rope.base);
    std::vector<double> t2(t1);
    for (std::size_t i = 0; i < t2.size(); ++i) t2[i] += xa_block[i];

    CHECK(testref::max_diff_tensor_vec(out, t2) <= 1e-12);
}

TEST_CASE("decomposed attention equals the oracle across sizes and seeds") {
    for (std::int64_t heads : {1, 2, 4}) {
        for (const auto& [n, m] : std::vector<std::pair<std::int64_t, std::int64_t>>{
                 {0, 1}, {1, 1}, {2, 8}, {8, 2}, {8, 8}, {64, 16}}) {
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                const AttentionConfig cfg = make_config(32, heads);
                Rng rng(seed);
                const auto w = make_attention_weights<double>(cfg, rng);
                const auto seq =
                    make_random_sequence<double>(n, m, 32, PositionMode::kBiased, rng);

                const auto oracle = causal_self_attention_oracle(seq, w, cfg);
                const auto dec = decomposed_attention(seq, w, cfg);
                CHECK(max_abs_diff(oracle.visual_out, dec.visual_out) <= 1e-10);
                CHECK(max_abs_diff(oracle.textual_out, dec.textual_out) <= 1e-10);
            }
        }
    }
}

TEST_CASE("decomposed attention equals the oracle in f32") {
    const AttentionConfig cfg = make_config(32, 2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto w = make_attention_weights<float>(cfg, rng);
        const auto seq = make_random_sequence<float>(8, 8, 32, PositionMode::kBiased, rng);
        const auto oracle = causal_self_attention_oracle(seq, w, cfg);
        const auto dec = decomposed_attention(seq, w, cfg);
        CHECK(max_abs_diff(oracle.textual_out, dec.textual_out) <= 1e-4);
        CHECK(max_abs_diff(oracle.visual_out, dec.visual_out) <= 1e-4);
    }
}

TEST_CASE("alpha identities hold on the decomposed path") {
    const AttentionConfig cfg = make_config(32, 4);
    Rng rng(20);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(8, 8, 32, PositionMode::kBiased, rng);

    AttnTrace<double> trace;
    causal_self_attention_oracle(seq, w, cfg, &trace);
    const auto dec = decomposed_attention(seq, w, cfg);
    REQUIRE(dec.alpha_v.has_value());

    for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t h = 0; h < 4; ++h) {
            const double alpha = dec.alpha_v->at2(t, h);
            CHECK(alpha >= 0.0);
            CHECK(alpha <= 1.0);
            const double alpha_t = 1.0 - alpha;
            CHECK(std::abs(alpha + alpha_t - 1.0) <= 1e-16);

            // alpha_V recomputed from the oracle's raw softmax masses
            double visual_mass = 0;
            for (std::size_t j = 0; j < 8; ++j) visual_mass += trace.probs.at3(h, 8 + t, j);
            CHECK(std::abs(alpha - visual_mass) <= 1e-10);
        }
}

TEST_CASE("debiased positions give content-identical visual tokens equal weight") {
    const AttentionConfig cfg =
        make_config(16, 2, PositionMode::kDebiased, V2VMode::kFull);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Rng rng(seed);
        const auto w = make_attention_weights<double>(cfg, rng);
        auto seq = make_random_sequence<double>(4, 3, 16, PositionMode::kDebiased, rng);
        for (std::size_t j = 0; j < 16; ++j) seq.visual.data[2 * 16 + j] = seq.visual.data[j];

        AttnTrace<double> trace;
        t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg, &trace);
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t t = 0; t < 3; ++t)
                CHECK(trace.probs.at3(h, t, 0) == trace.probs.at3(h, t, 2));

        // biased positions break the tie
        auto biased_seq = seq;
        biased_seq.positions = assign_positions(4, 3, PositionMode::kBiased);
        const AttentionConfig biased_cfg = make_config(16, 2);
        AttnTrace<double> biased_trace;
        t2v_cross_attention(biased_seq.textual, biased_seq.visual, w, biased_seq.positions,
                            biased_cfg, &biased_trace);
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t t = 0; t < 3; ++t)
                CHECK(std::abs(biased_trace.probs.at3(h, t, 0) -
                               biased_trace.probs.at3(h, t, 2)) > 1e-6);
    }
}

TEST_CASE("diagonal config with one visual token equals the full config") {
    Rng rng(22);
    const AttentionConfig full = make_config(16, 2);
    const AttentionConfig diag = make_config(16, 2, PositionMode::kBiased, V2VMode::kDiagonal);
    const auto w = make_attention_weights<double>(full, rng);
    const auto seq = make_random_sequence<double>(1, 4, 16, PositionMode::kBiased, rng);

    const auto a = decomposed_attention(seq, w, full);
    const auto b = decomposed_attention(seq, w, diag);
    CHECK(max_abs_diff(a.visual_out, b.visual_out) == 0.0);
    CHECK(max_abs_diff(a.textual_out, b.textual_out) == 0.0);
}

TEST_CASE("causality: future textual tokens cannot influence earlier outputs") {
    const AttentionConfig cfg = make_config(16, 2);
    Rng rng(23);
    const auto w = make_attention_weights<double>(cfg, rng);
    const auto seq = make_random_sequence<double>(4, 5, 16, PositionMode::kBiased, rng);

    auto bumped = seq;
    for (std::size_t j = 0; j < 16; ++j) bumped.textual.data[3 * 16 + j] += 2.0;

    for (const bool use_oracle : {false, true}) {
        const auto out = use_oracle ? causal_self_attention_oracle(seq, w, cfg)
                                    : decomposed_attention(seq, w, cfg);
        const auto out2 = use_oracle ? causal_self_attention_oracle(bumped, w, cfg)
                                     : decomposed_attention(bumped, w, cfg);
        // tokens 0..2 are unchanged, token 3 differs
        CHECK(max_abs_diff(take_rows(out.textual_out, 0, 3),
                           take_rows(out2.textual_out, 0, 3)) == 0.0);
        CHECK(max_abs_diff(take_rows(out.textual_out, 3, 4),
                           take_rows(out2.textual_out, 3, 4)) > 0.0);
        // visual rows never see textual tokens
        CHECK(max_abs_diff(out.visual_out, out2.visual_out) == 0.0);
    }
}
