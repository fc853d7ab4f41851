#pragma once

// Verification and benchmarking engine: oracle-equivalence sweeps,
// finite-difference gradient checks, Full-vs-Diagonal V2V scaling timings,
// and alpha-map CSV export. Report JSON is deterministic given (grid, seeds,
// precision); floats are serialized with 17 significant digits.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dattn/model.hpp"

namespace dattn {

struct CaseInfo {
    std::string kind;
    std::int64_t n = 0;
    std::int64_t m = 0;
    std::int64_t heads = 0;
    std::uint64_t seed = 0;
    std::string position = "biased";
    std::string v2v = "full";
    std::string merge = "alpha";
};

struct CaseResult {
    CaseInfo info;
    double max_abs_diff = 0.0;
    double tol = 0.0;
    bool pass = false; // pass <=> max_abs_diff <= tol
};

struct VerifyReport {
    std::string label;
    std::string precision; // "f32" or "f64"
    double tolerance = 0.0;
    std::vector<CaseResult> cases;
    std::optional<double> fd_truncation; // gradient check diagnostic

    std::int64_t passed() const {
        std::int64_t p = 0;
        for (const CaseResult& c : cases) p += c.pass ? 1 : 0;
        return p;
    }
    std::int64_t total() const { return static_cast<std::int64_t>(cases.size()); }
    bool all_pass() const { return passed() == total(); }
};

struct SweepGrid {
    std::vector<std::int64_t> n_visual = {0, 1, 2, 8, 64};
    std::vector<std::int64_t> n_textual = {1, 2, 8, 64};
    std::vector<std::int64_t> heads = {1, 2, 4};
    std::int64_t d_model = 32;
    std::vector<std::uint64_t> seeds; // defaults to 0..19 via default_sweep_grid()
    bool variant_checks = true;       // shape/range/mask checks on non-exact configs
};

SweepGrid default_sweep_grid(std::size_t n_seeds = 20);

struct GradCheckSpec {
    std::int64_t n = 4;
    std::int64_t m = 4;
    std::int64_t d_model = 16;
    std::int64_t heads = 2;
    std::uint64_t seed = 0;
};

struct BenchConfig {
    std::vector<std::int64_t> v_grid = {256, 512, 1024, 2048, 4096};
    std::vector<V2VMode> modes = {V2VMode::kFull, V2VMode::kDiagonal};
    std::int64_t m = 16;
    std::int64_t d_model = 32;
    std::int64_t n_heads = 2;
    int repeats = 9;
    int warmups = 3;
    std::uint64_t seed = 0;
    std::uint64_t mem_cap_bytes = 4ull << 30;
    double min_sample_sec = 0.02; // each timed sample is stretched to at least this
    bool time_forward = true;     // also time the full decomposed forward
};

struct BenchEntry {
    std::int64_t v = 0;
    std::string mode; // "full" or "diag"
    bool oom = false;
    double v2v_sec = 0.0;     // median seconds per v2v_self_attention call
    double forward_sec = 0.0; // median seconds per decomposed_attention call
    std::int64_t iters_v2v = 0;
    std::int64_t iters_forward = 0;
};

struct BenchReport {
    std::string precision;
    std::int64_t m = 0;
    std::int64_t d_model = 0;
    std::int64_t n_heads = 0;
    int repeats = 0;
    int warmups = 0;
    std::uint64_t mem_cap_bytes = 0;
    std::vector<BenchEntry> entries;
    // log-log slope of the v2v sub-path over |V|; needs >= 4 grid points
    std::optional<double> exponent_full;
    std::optional<double> exponent_diag;
    std::string note;

    const BenchEntry* find(std::int64_t v, const std::string& mode) const {
        for (const BenchEntry& e : entries)
            if (e.v == v && e.mode == mode) return &e;
        return nullptr;
    }
};

// --- non-template helpers (src/harness.cpp) ---

/// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// printf %.17g; non-finite values become "null".
std::string format_g17(double v);

std::string to_json(const VerifyReport& report);
std::string to_json(const BenchReport& report);

/// Working-set estimate used for the deterministic memory cap (replacing
/// GPU out-of-memory probing): inputs, projections, weights and the per-row
/// logit buffer.
std::uint64_t bench_case_bytes(std::size_t elem_size, std::int64_t v, std::int64_t m,
                               std::int64_t d_model, V2VMode mode);

/// Head order for one layer: descending mean alpha, original index on ties.
std::vector<std::int64_t> heads_by_mean(const AlphaRecord& record, std::int64_t layer);

/// Writes `path` with rows layer,head,token,alpha and a sibling
/// (alpha_mean_path) with rows layer,head,alpha_mean, heads sorted by mean
/// within each layer.
void export_alpha_csv(const AlphaRecord& record, const std::string& path);
std::string alpha_mean_path(const std::string& path);

namespace detail {
const char* precision_name(float);
const char* precision_name(double);
double eps_of(float);
double eps_of(double);
} // namespace detail

/// Oracle-equivalence sweep. Exact cases run (Biased, Full, AlphaWeighting)
/// against the monolithic oracle at `tol`; alpha identities and the
/// oracle-mass consistency check run alongside; non-exact configs are
/// checked for shape/range/mask invariants only.
template <typename T>
VerifyReport run_equivalence_sweep(const SweepGrid& grid, double tol);

/// Central finite differences of sum(textual_out) with respect to every
/// input-token entry, computed through both attention paths and compared
/// entrywise. fd_truncation reports |FD(h) - FD(h/2)| on a few coordinates.
template <typename T>
VerifyReport run_gradient_check(const GradCheckSpec& spec, double step, double tol);

/// Timings of the V2V sub-path and the full decomposed forward for Full vs
/// Diagonal V2V over the |V| grid, single-threaded, median of `repeats`
/// after `warmups`. Cases whose estimated working set exceeds the memory
/// cap are recorded as OOM data points, not errors.
template <typename T>
BenchReport run_scaling_bench(const BenchConfig& cfg);

// --- template implementations ---

namespace detail {

inline const char* merge_name(MergeStrategy m) {
    switch (m) {
    case MergeStrategy::kAlphaWeighting: return "alpha";
    case MergeStrategy::kCascade: return "cascade";
    case MergeStrategy::kTanhGate: return "tanh";
    case MergeStrategy::kSigmoidGate: return "sigmoid";
    }
    return "?";
}

inline const char* position_name(PositionMode p) {
    return p == PositionMode::kBiased ? "biased" : "debiased";
}

inline const char* v2v_name(V2VMode v) {
    return v == V2VMode::kFull ? "full" : "diag";
}

template <typename T>
CaseInfo case_info(const char* kind, std::int64_t n, std::int64_t m, std::int64_t heads,
                   std::uint64_t seed, const AttentionConfig& cfg) {
    CaseInfo info;
    info.kind = kind;
    info.n = n;
    info.m = m;
    info.heads = heads;
    info.seed = seed;
    info.position = position_name(cfg.position_mode);
    info.v2v = v2v_name(cfg.v2v_mode);
    info.merge = merge_name(cfg.merge);
    return info;
}

inline CaseResult make_result(CaseInfo info, double diff, double tol) {
    return CaseResult{std::move(info), diff, tol, diff <= tol};
}

/// Max violation of alpha in [0,1] and alpha_V + alpha_T = 1.
template <typename T>
double alpha_identity_violation(const Tensor<T>& alpha) {
    double worst = 0.0;
    for (const T& a : alpha.data) {
        const double ad = static_cast<double>(a);
        worst = std::max(worst, std::max(-ad, ad - 1.0));
        const T at = T(1) - a;
        worst = std::max(worst, std::abs(static_cast<double>(a + at) - 1.0));
    }
    return worst;
}

/// Sum of the visual columns of the oracle's softmax rows for textual
/// queries, i.e. alpha_V in its raw mass form. Shape [m, heads].
template <typename T>
Tensor<T> oracle_visual_mass(const AttnTrace<T>& trace, std::int64_t n, std::int64_t m) {
    const std::int64_t heads = static_cast<std::int64_t>(trace.probs.shape[0]);
    const std::int64_t total = static_cast<std::int64_t>(trace.probs.shape[1]);
    Tensor<T> mass({static_cast<std::size_t>(m), static_cast<std::size_t>(heads)});
    for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t t = 0; t < m; ++t) {
            T s = 0;
            const T* row = trace.probs.data.data() + (h * total + n + t) * total;
            for (std::int64_t j = 0; j < n; ++j) s += row[j];
            mass.data[static_cast<std::size_t>(t * heads + h)] = s;
        }
    return mass;
}

/// Invariant checks on a non-exact config: output shapes, finiteness, alpha
/// range, and causal/blockwise independence (textual token i unaffected by
/// textual tokens after it; visual rows unaffected by any textual token).
/// Returns the number of violated checks.
template <typename T>
double variant_violations(const MixedSequence<T>& seq, const AttentionWeights<T>& w,
                          const AttentionConfig& cfg) {
    double bad = 0.0;
    const std::size_t n = static_cast<std::size_t>(seq.n_visual());
    const std::size_t m = static_cast<std::size_t>(seq.n_textual());
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);

    AttentionOutput<T> out = decomposed_attention(seq, w, cfg);
    if (out.visual_out.shape != std::vector<std::size_t>{n, d}) bad += 1;
    if (out.textual_out.shape != std::vector<std::size_t>{m, d}) bad += 1;
    if (!all_finite(out.visual_out) || !all_finite(out.textual_out)) bad += 1;
    if (cfg.merge == MergeStrategy::kAlphaWeighting) {
        if (!out.alpha_v) {
            bad += 1;
        } else if (alpha_identity_violation(*out.alpha_v) > 8 * eps_of(T{})) {
            bad += 1;
        }
    } else if (out.alpha_v) {
        bad += 1;
    }

    // Causality: change the last textual token, earlier rows must not move.
    if (m >= 2) {
        MixedSequence<T> bumped = seq;
        for (std::size_t j = 0; j < d; ++j) bumped.textual.data[(m - 1) * d + j] += T(1);
        AttentionOutput<T> out2 = decomposed_attention(bumped, w, cfg);
        if (max_abs_diff(take_rows(out.textual_out, 0, m - 1),
                         take_rows(out2.textual_out, 0, m - 1)) != 0.0)
            bad += 1;
        if (n > 0 && max_abs_diff(out.visual_out, out2.visual_out) != 0.0) bad += 1;
    }
    return bad;
}

} // namespace detail

template <typename T>
VerifyReport run_equivalence_sweep(const SweepGrid& grid, double tol) {
    VerifyReport report;
    report.label = "equivalence_sweep";
    report.precision = detail::precision_name(T{});
    report.tolerance = tol;
    const double alpha_tol = 8 * detail::eps_of(T{});

    for (std::int64_t heads : grid.heads) {
        for (std::int64_t n : grid.n_visual) {
            for (std::int64_t m : grid.n_textual) {
                for (std::uint64_t seed : grid.seeds) {
                    const AttentionConfig cfg = make_config(grid.d_model, heads);
                    Rng rng(seed);
                    const AttentionWeights<T> w = make_attention_weights<T>(cfg, rng);
                    const MixedSequence<T> seq =
                        make_random_sequence<T>(n, m, grid.d_model, PositionMode::kBiased, rng);

                    AttnTrace<T> trace;
                    const AttentionOutput<T> oracle =
                        causal_self_attention_oracle(seq, w, cfg, &trace);
                    const AttentionOutput<T> dec = decomposed_attention(seq, w, cfg);

                    const double diff = std::max(max_abs_diff(oracle.visual_out, dec.visual_out),
                                                 max_abs_diff(oracle.textual_out, dec.textual_out));
                    report.cases.push_back(detail::make_result(
                        detail::case_info<T>("oracle_match", n, m, heads, seed, cfg), diff, tol));

                    report.cases.push_back(detail::make_result(
                        detail::case_info<T>("alpha_identity", n, m, heads, seed, cfg),
                        detail::alpha_identity_violation(*dec.alpha_v), alpha_tol));

                    const Tensor<T> mass = detail::oracle_visual_mass(trace, n, m);
                    report.cases.push_back(detail::make_result(
                        detail::case_info<T>("alpha_consistency", n, m, heads, seed, cfg),
                        max_abs_diff(mass, *dec.alpha_v), tol));

                    if (n == 0) {
                        report.cases.push_back(detail::make_result(
                            detail::case_info<T>("alpha_zero_no_visual", n, m, heads, seed, cfg),
                            max_abs(*dec.alpha_v), 0.0));
                    }
                }
            }
        }
    }

    if (grid.variant_checks) {
        struct Variant {
            PositionMode pos;
            V2VMode v2v;
            MergeStrategy merge;
        };
        const Variant variants[] = {
            {PositionMode::kDebiased, V2VMode::kFull, MergeStrategy::kAlphaWeighting},
            {PositionMode::kBiased, V2VMode::kDiagonal, MergeStrategy::kAlphaWeighting},
            {PositionMode::kDebiased, V2VMode::kDiagonal, MergeStrategy::kAlphaWeighting},
            {PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kTanhGate},
            {PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kSigmoidGate},
            {PositionMode::kBiased, V2VMode::kFull, MergeStrategy::kCascade},
        };
        const std::int64_t vh = grid.heads.empty() ? 2 : grid.heads.back();
        for (std::uint64_t seed : grid.seeds) {
            for (const Variant& v : variants) {
                const AttentionConfig cfg =
                    make_config(grid.d_model, vh, v.pos, v.v2v, v.merge);
                Rng rng(seed);
                AttentionWeights<T> w = make_attention_weights<T>(cfg, rng);
                w.gate_tanh = T(0.3);
                const MixedSequence<T> seq =
                    make_random_sequence<T>(8, 8, grid.d_model, v.pos, rng);
                report.cases.push_back(detail::make_result(
                    detail::case_info<T>("variant_invariants", 8, 8, vh, seed, cfg),
                    detail::variant_violations(seq, w, cfg), 0.0));
            }

            // Diagonal V2V with a single visual token is Full-mode attention.
            const AttentionConfig full_cfg = make_config(grid.d_model, vh);
            const AttentionConfig diag_cfg =
                make_config(grid.d_model, vh, PositionMode::kBiased, V2VMode::kDiagonal);
            Rng rng(seed);
            const AttentionWeights<T> w = make_attention_weights<T>(full_cfg, rng);
            const MixedSequence<T> seq =
                make_random_sequence<T>(1, 2, grid.d_model, PositionMode::kBiased, rng);
            const AttentionOutput<T> a = decomposed_attention(seq, w, full_cfg);
            const AttentionOutput<T> b = decomposed_attention(seq, w, diag_cfg);
            report.cases.push_back(detail::make_result(
                detail::case_info<T>("diag_singleton_equals_full", 1, 2, vh, seed, diag_cfg),
                std::max(max_abs_diff(a.visual_out, b.visual_out),
                         max_abs_diff(a.textual_out, b.textual_out)),
                0.0));
        }
    }
    return report;
}

template <typename T>
VerifyReport run_gradient_check(const GradCheckSpec& spec, double step, double tol) {
    static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>);
    VerifyReport report;
    report.label = "gradient_check";
    report.precision = detail::precision_name(T{});
    report.tolerance = tol;

    const AttentionConfig cfg = make_config(spec.d_model, spec.heads);
    Rng rng(spec.seed);
    const AttentionWeights<T> w = make_attention_weights<T>(cfg, rng);
    const MixedSequence<T> base =
        make_random_sequence<T>(spec.n, spec.m, spec.d_model, PositionMode::kBiased, rng);

    const auto loss = [&](const MixedSequence<T>& s, AttentionPath path) {
        const AttentionOutput<T> out = path == AttentionPath::kOracle
                                           ? causal_self_attention_oracle(s, w, cfg)
                                           : decomposed_attention(s, w, cfg);
        double sum = 0;
        for (const T& v : out.textual_out.data) sum += static_cast<double>(v);
        return sum;
    };

    // Central difference for coordinate `idx` of the chosen stream.
    const auto fd = [&](bool visual, std::size_t idx, AttentionPath path, double h) {
        MixedSequence<T> s = base;
        T& slot = visual ? s.visual.data[idx] : s.textual.data[idx];
        const T orig = slot;
        slot = orig + static_cast<T>(h);
        const double up = loss(s, path);
        slot = orig - static_cast<T>(h);
        const double down = loss(s, path);
        return (up - down) / (2.0 * h);
    };

    double trunc = 0.0;
    for (const bool visual : {true, false}) {
        const std::size_t count = visual ? base.visual.size() : base.textual.size();
        double worst = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double g_oracle = fd(visual, i, AttentionPath::kOracle, step);
            const double g_dec = fd(visual, i, AttentionPath::kDecomposed, step);
            worst = std::max(worst, std::abs(g_oracle - g_dec));
            if (i < 4) // step-halving estimate of the discretization error
                trunc = std::max(trunc,
                                 std::abs(g_oracle - fd(visual, i, AttentionPath::kOracle, step / 2)));
        }
        CaseInfo info = detail::case_info<T>(visual ? "grad_visual" : "grad_textual", spec.n,
                                             spec.m, spec.heads, spec.seed, cfg);
        report.cases.push_back(detail::make_result(std::move(info), worst, tol));
    }
    report.fd_truncation = trunc;
    return report;
}

namespace detail {

template <typename F>
double time_median_sec(F&& call, int repeats, std::int64_t iters) {
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::int64_t i = 0; i < iters; ++i) call();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count() /
                          static_cast<double>(iters));
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

template <typename F>
std::int64_t calibrate_iters(F&& call, double min_sample_sec) {
    const auto t0 = std::chrono::steady_clock::now();
    call();
    const auto t1 = std::chrono::steady_clock::now();
    const double once = std::max(1e-9, std::chrono::duration<double>(t1 - t0).count());
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(min_sample_sec / once));
}

} // namespace detail

template <typename T>
BenchReport run_scaling_bench(const BenchConfig& bc) {
    BenchReport report;
    report.precision = detail::precision_name(T{});
    report.m = bc.m;
    report.d_model = bc.d_model;
    report.n_heads = bc.n_heads;
    report.repeats = bc.repeats;
    report.warmups = bc.warmups;
    report.mem_cap_bytes = bc.mem_cap_bytes;

    // Timed forwards are strictly sequential and single-threaded so the
    // fitted exponents reflect kernel cost.
    ThreadLimitGuard guard(1);

    double sink = 0.0;
    for (const V2VMode mode : bc.modes) {
        for (const std::int64_t v : bc.v_grid) {
            BenchEntry entry;
            entry.v = v;
            entry.mode = detail::v2v_name(mode);

            if (bench_case_bytes(sizeof(T), v, bc.m, bc.d_model, mode) > bc.mem_cap_bytes) {
                entry.oom = true;
                report.entries.push_back(entry);
                continue;
            }

            const AttentionConfig cfg =
                make_config(bc.d_model, bc.n_heads, PositionMode::kBiased, mode);
            Rng rng(bc.seed);
            const AttentionWeights<T> w = make_attention_weights<T>(cfg, rng);
            const MixedSequence<T> seq =
                make_random_sequence<T>(v, bc.m, bc.d_model, PositionMode::kBiased, rng);

            const auto v2v_call = [&] {
                Tensor<T> out =
                    v2v_self_attention(seq.visual, w, seq.positions.visual_positions, cfg);
                sink += static_cast<double>(out.data.back());
            };
            for (int i = 0; i < bc.warmups; ++i) v2v_call();
            entry.iters_v2v = detail::calibrate_iters(v2v_call, bc.min_sample_sec);
            entry.v2v_sec = detail::time_median_sec(v2v_call, bc.repeats, entry.iters_v2v);

            if (bc.time_forward) {
                const auto fwd_call = [&] {
                    AttentionOutput<T> out = decomposed_attention(seq, w, cfg);
                    sink += static_cast<double>(out.textual_out.data.back());
                };
                for (int i = 0; i < bc.warmups; ++i) fwd_call();
                entry.iters_forward = detail::calibrate_iters(fwd_call, bc.min_sample_sec);
                entry.forward_sec =
                    detail::time_median_sec(fwd_call, bc.repeats, entry.iters_forward);
            }
            report.entries.push_back(entry);
        }
    }
    // Keep the accumulated outputs observable so the timed calls cannot be
    // optimized away.
    volatile double keep = sink;
    (void)keep;

    bool fit_missing = false;
    for (const V2VMode mode : bc.modes) {
        std::vector<double> xs, ys;
        for (const BenchEntry& e : report.entries)
            if (!e.oom && e.mode == detail::v2v_name(mode)) {
                xs.push_back(static_cast<double>(e.v));
                ys.push_back(e.v2v_sec);
            }
        if (xs.size() >= 4) {
            const double slope = fit_loglog_slope(xs, ys);
            if (mode == V2VMode::kFull)
                report.exponent_full = slope;
            else
                report.exponent_diag = slope;
        } else {
            fit_missing = true;
        }
    }
    if (fit_missing) report.note = "exponent fit needs >= 4 non-OOM grid points";
    return report;
}

} // namespace dattn
