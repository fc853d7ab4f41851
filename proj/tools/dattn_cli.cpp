// Command-line front end: verification sweeps, scaling benchmarks, alpha-map
// export and a small worked demo. Exit codes: 0 success, 1 verification
// failure, 2 usage/config error. All randomness flows from --seed.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dattn/harness.hpp"

namespace {

using namespace dattn;

struct CommonArgs {
    std::string precision; // empty = subcommand default (f64; bench uses f32)
    std::uint64_t seed = 0;
    std::string out;
    int threads = 0;
};

struct VerifyArgs {
    std::size_t seeds = 20;
    double tol = -1.0; // < 0 = precision default (1e-10 f64, 1e-4 f32)
    std::int64_t d_model = 32;
    std::int64_t heads = 0; // 0 = grid {1,2,4}
    double grad_step = 1e-4;
    double grad_tol = 1e-6;
};

struct BenchArgs {
    std::string v_grid = "256,512,1024,2048,4096";
    std::string modes = "full,diag";
    std::int64_t m = 16;
    std::int64_t d_model = 32;
    std::int64_t heads = 2;
    int repeats = 9;
    int warmups = 3;
    std::uint64_t mem_cap = 4ull << 30;
};

struct AlphaArgs {
    std::int64_t layers = 4;
    std::int64_t heads = 4;
    std::int64_t n = 16;
    std::int64_t m = 8;
    std::int64_t d_model = 0; // 0 = 8 * heads
    std::string position = "biased";
    std::string v2v = "full";
};

struct DemoArgs {
    std::int64_t n = 3;
    std::int64_t m = 2;
    std::int64_t d_model = 8;
    std::int64_t heads = 2;
    std::string position = "biased";
    std::string v2v = "full";
    std::string merge = "alpha";
    double gate = 0.0;
};

// Only the output directory may come from the environment; everything else
// is flags.
std::string resolve_out(const std::string& path) {
    if (path.empty() || path.front() == '/') return path;
    const char* dir = std::getenv("DATTN_OUT_DIR");
    if (!dir || !*dir) return path;
    std::string d(dir);
    if (d.back() != '/') d += '/';
    return d + path;
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << contents;
}

PositionMode parse_position(const std::string& s) {
    if (s == "biased") return PositionMode::kBiased;
    if (s == "debiased") return PositionMode::kDebiased;
    throw ConfigError("unknown position mode '" + s + "' (biased|debiased)");
}

V2VMode parse_v2v(const std::string& s) {
    if (s == "full") return V2VMode::kFull;
    if (s == "diag") return V2VMode::kDiagonal;
    throw ConfigError("unknown v2v mode '" + s + "' (full|diag)");
}

MergeStrategy parse_merge(const std::string& s) {
    if (s == "alpha") return MergeStrategy::kAlphaWeighting;
    if (s == "cascade") return MergeStrategy::kCascade;
    if (s == "tanh") return MergeStrategy::kTanhGate;
    if (s == "sigmoid") return MergeStrategy::kSigmoidGate;
    throw ConfigError("unknown merge strategy '" + s + "' (alpha|cascade|tanh|sigmoid)");
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoll(item));
    }
    if (out.empty()) throw ConfigError("empty integer list '" + s + "'");
    return out;
}

template <typename T>
int run_verify(const CommonArgs& common, const VerifyArgs& args) {
    const double tol = args.tol >= 0 ? args.tol : (std::is_same_v<T, double> ? 1e-10 : 1e-4);

    SweepGrid grid = default_sweep_grid(args.seeds);
    grid.d_model = args.d_model;
    if (args.heads != 0) grid.heads = {args.heads};
    for (std::int64_t h : grid.heads) make_config(grid.d_model, h); // fail fast on bad dims
    grid.seeds.clear();
    grid.seeds.resize(args.seeds);
    for (std::size_t i = 0; i < args.seeds; ++i)
        grid.seeds[i] = common.seed + static_cast<std::uint64_t>(i);

    const VerifyReport sweep = run_equivalence_sweep<T>(grid, tol);

    // The gradient check always runs in f64: f32 forward rounding divided by
    // the small step would swamp the 1e-6 comparison with noise.
    GradCheckSpec gspec;
    gspec.seed = common.seed;
    make_config(gspec.d_model, gspec.heads);
    const VerifyReport grad = run_gradient_check<double>(gspec, args.grad_step, args.grad_tol);

    const bool all_pass = sweep.all_pass() && grad.all_pass();
    std::string json = "{\"precision\":\"" + sweep.precision + "\"";
    json += ",\"sweep\":" + to_json(sweep);
    json.pop_back(); // inner reports end with a newline
    json += ",\"gradient_check\":" + to_json(grad);
    json.pop_back();
    json += std::string(",\"all_pass\":") + (all_pass ? "true" : "false") + "}\n";

    const std::string out = resolve_out(common.out.empty() ? "verify_report.json" : common.out);
    write_file(out, json);

    std::printf("equivalence sweep: %lld/%lld cases passed (tol %s, %s)\n",
                static_cast<long long>(sweep.passed()), static_cast<long long>(sweep.total()),
                format_g17(tol).c_str(), sweep.precision.c_str());
    std::printf("gradient check:    %lld/%lld cases passed (step %s, tol %s)\n",
                static_cast<long long>(grad.passed()), static_cast<long long>(grad.total()),
                format_g17(args.grad_step).c_str(), format_g17(args.grad_tol).c_str());
    std::printf("report written to %s\n", out.c_str());
    if (!all_pass) {
        for (const CaseResult& c : sweep.cases)
            if (!c.pass)
                std::printf("FAIL %s n=%lld m=%lld heads=%lld seed=%llu diff=%s tol=%s\n",
                            c.info.kind.c_str(), static_cast<long long>(c.info.n),
                            static_cast<long long>(c.info.m),
                            static_cast<long long>(c.info.heads),
                            static_cast<unsigned long long>(c.info.seed),
                            format_g17(c.max_abs_diff).c_str(), format_g17(c.tol).c_str());
    }
    return all_pass ? 0 : 1;
}

template <typename T>
int run_bench(const CommonArgs& common, const BenchArgs& args) {
    BenchConfig bc;
    bc.v_grid = parse_int_list(args.v_grid);
    bc.modes.clear();
    {
        std::stringstream ss(args.modes);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) bc.modes.push_back(parse_v2v(item));
    }
    if (bc.modes.empty()) throw ConfigError("no benchmark modes selected");
    bc.m = args.m;
    bc.d_model = args.d_model;
    bc.n_heads = args.heads;
    bc.repeats = args.repeats;
    bc.warmups = args.warmups;
    bc.seed = common.seed;
    bc.mem_cap_bytes = args.mem_cap;
    make_config(bc.d_model, bc.n_heads); // fail fast on bad dims

    if (bc.v_grid.size() < 4)
        std::printf("warning: %zu grid point(s); exponent fit needs at least 4\n",
                    bc.v_grid.size());

    const BenchReport report = run_scaling_bench<T>(bc);

    std::printf("%8s  %5s  %14s  %14s  %8s\n", "|V|", "mode", "v2v sec/call", "fwd sec/call",
                "iters");
    for (const BenchEntry& e : report.entries) {
        if (e.oom) {
            std::printf("%8lld  %5s  %14s  %14s  %8s\n", static_cast<long long>(e.v),
                        e.mode.c_str(), "OOM", "OOM", "-");
            continue;
        }
        std::printf("%8lld  %5s  %14.6e  %14.6e  %8lld\n", static_cast<long long>(e.v),
                    e.mode.c_str(), e.v2v_sec, e.forward_sec,
                    static_cast<long long>(e.iters_v2v));
    }
    if (report.exponent_full)
        std::printf("v2v full     log-log exponent: %.3f\n", *report.exponent_full);
    if (report.exponent_diag)
        std::printf("v2v diagonal log-log exponent: %.3f\n", *report.exponent_diag);
    if (!report.note.empty()) std::printf("note: %s\n", report.note.c_str());
    for (const BenchEntry& e : report.entries) {
        if (e.mode != "full" || e.oom) continue;
        const BenchEntry* d = report.find(e.v, "diag");
        if (d && !d->oom && d->v2v_sec > 0)
            std::printf("|V|=%lld v2v speedup full/diag: %.2fx\n", static_cast<long long>(e.v),
                        e.v2v_sec / d->v2v_sec);
    }

    const std::string out = resolve_out(common.out.empty() ? "bench_report.json" : common.out);
    write_file(out, to_json(report));
    std::printf("report written to %s\n", out.c_str());
    return 0;
}

template <typename T>
int run_alpha(const CommonArgs& common, const AlphaArgs& args) {
    const std::int64_t d_model = args.d_model != 0 ? args.d_model : 8 * args.heads;
    const AttentionConfig cfg = make_config(d_model, args.heads, parse_position(args.position),
                                            parse_v2v(args.v2v));
    Rng rng(common.seed);
    std::vector<DecoderLayer<T>> layers;
    layers.reserve(static_cast<std::size_t>(args.layers));
    for (std::int64_t i = 0; i < args.layers; ++i)
        layers.push_back(make_decoder_layer<T>(cfg, rng));
    const MixedSequence<T> seq =
        make_random_sequence<T>(args.n, args.m, d_model, cfg.position_mode, rng);

    const StackResult<T> result =
        stack_forward<T>(seq, std::span<const DecoderLayer<T>>(layers), cfg, /*record=*/true);

    const std::string out = resolve_out(common.out.empty() ? "alpha.csv" : common.out);
    export_alpha_csv(result.record, out);
    std::printf("recorded alpha_V for %lld layers x %lld heads x %lld textual tokens\n",
                static_cast<long long>(result.record.layers),
                static_cast<long long>(result.record.heads),
                static_cast<long long>(result.record.tokens));
    std::printf("per-token values: %s\nper-head means (sorted): %s\n", out.c_str(),
                alpha_mean_path(out).c_str());
    return 0;
}

template <typename T>
void print_rows(const char* name, const Tensor<T>& t, std::size_t max_cols = 8) {
    const std::size_t rows = t.shape[0], cols = t.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
        std::printf("  %s[%zu]:", name, r);
        for (std::size_t c = 0; c < std::min(cols, max_cols); ++c)
            std::printf(" % .6f", static_cast<double>(t.at2(r, c)));
        if (cols > max_cols) std::printf(" ...");
        std::printf("\n");
    }
}

template <typename T>
int run_demo(const CommonArgs& common, const DemoArgs& args) {
    AttentionConfig cfg = make_config(args.d_model, args.heads, parse_position(args.position),
                                      parse_v2v(args.v2v), parse_merge(args.merge));
    Rng rng(common.seed);
    AttentionWeights<T> w = make_attention_weights<T>(cfg, rng);
    w.gate_tanh = static_cast<T>(args.gate);
    w.gate_sigmoid = static_cast<T>(args.gate);

    MixedSequence<T> seq =
        make_random_sequence<T>(args.n, args.m, args.d_model, cfg.position_mode, rng);
    // Duplicate visual content so the positional-bias story is visible.
    const std::size_t d = static_cast<std::size_t>(args.d_model);
    if (args.n >= 3)
        for (std::size_t j = 0; j < d; ++j) seq.visual.data[2 * d + j] = seq.visual.data[j];

    std::printf("mixed sequence: %lld visual + %lld textual tokens, d_model=%lld, %lld heads\n",
                static_cast<long long>(args.n), static_cast<long long>(args.m),
                static_cast<long long>(args.d_model), static_cast<long long>(args.heads));
    std::printf("config: position=%s v2v=%s merge=%s\n\n", args.position.c_str(),
                args.v2v.c_str(), args.merge.c_str());

    if (args.n > 0) {
        AttnTrace<T> t2v_trace;
        t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg, &t2v_trace);
        std::printf("t2v scaled logits per (head, textual token) over the %lld visual keys:\n",
                    static_cast<long long>(args.n));
        for (std::size_t h = 0; h < t2v_trace.logits.shape[0]; ++h)
            for (std::size_t t = 0; t < t2v_trace.logits.shape[1]; ++t) {
                std::printf("  head %zu token %zu:", h, t);
                for (std::size_t j = 0; j < t2v_trace.logits.shape[2]; ++j)
                    std::printf(" % .6f", static_cast<double>(t2v_trace.logits.at3(h, t, j)));
                std::printf("\n");
            }
        if (args.n >= 3) {
            if (cfg.position_mode == PositionMode::kDebiased)
                std::printf("visual keys 0 and 2 carry identical content: with debiased "
                            "positions their logits match exactly in every row above.\n");
            else
                std::printf("visual keys 0 and 2 carry identical content: with biased "
                            "positions their logits differ (distance to the query differs).\n");
        }
        std::printf("\n");
    }

    const AttentionOutput<T> dec = decomposed_attention(seq, w, cfg);
    if (dec.s_v && dec.s_t && dec.alpha_v) {
        std::printf("S_V / S_T / alpha_V per (textual token, head):\n");
        for (std::size_t t = 0; t < dec.s_v->shape[0]; ++t)
            for (std::size_t h = 0; h < dec.s_v->shape[1]; ++h)
                std::printf("  token %zu head %zu: S_V=% .6f  S_T=% .6f  alpha_V=%.6f\n", t, h,
                            static_cast<double>(dec.s_v->at2(t, h)),
                            static_cast<double>(dec.s_t->at2(t, h)),
                            static_cast<double>(dec.alpha_v->at2(t, h)));
        std::printf("\n");
    }

    if (cfg.merge == MergeStrategy::kTanhGate) {
        SubAttention<T> t2v = t2v_cross_attention(seq.textual, seq.visual, w, seq.positions, cfg);
        const double contrib = max_abs(t2v.out) * std::abs(std::tanh(args.gate));
        std::printf("tanh gate g=%s: max |visual contribution| = %s\n",
                    format_g17(args.gate).c_str(), format_g17(contrib).c_str());
    }

    // The monolithic baseline always runs with biased concatenated positions
    // and full V2V; that is the thing the decomposition is measured against.
    MixedSequence<T> baseline_seq = seq;
    baseline_seq.positions = assign_positions(args.n, args.m, PositionMode::kBiased);
    const AttentionConfig oracle_cfg = make_config(args.d_model, args.heads);
    const AttentionOutput<T> oracle = causal_self_attention_oracle(baseline_seq, w, oracle_cfg);

    std::printf("textual rows, decomposed vs monolithic baseline:\n");
    print_rows("decomposed", dec.textual_out);
    print_rows("baseline  ", oracle.textual_out);

    const double diff = std::max(max_abs_diff(dec.visual_out, oracle.visual_out),
                                 max_abs_diff(dec.textual_out, oracle.textual_out));
    const bool exact_config = cfg.position_mode == PositionMode::kBiased &&
                              cfg.v2v_mode == V2VMode::kFull &&
                              cfg.merge == MergeStrategy::kAlphaWeighting;
    if (!exact_config)
        std::printf("\nthis configuration intentionally deviates from the monolithic "
                    "baseline; the difference below is expected.\n");
    std::printf("max |decomposed - baseline| = %s\n", format_g17(diff).c_str());
    const std::string out = resolve_out(common.out);
    if (!out.empty()) {
        std::printf("(demo writes no files; ignoring --out %s)\n", out.c_str());
    }
    return 0;
}

template <typename T>
int dispatch(const CLI::App& app, const CommonArgs& common, const VerifyArgs& vargs,
             const BenchArgs& bargs, const AlphaArgs& aargs, const DemoArgs& dargs) {
    if (app.got_subcommand("verify")) return run_verify<T>(common, vargs);
    if (app.got_subcommand("bench")) return run_bench<T>(common, bargs);
    if (app.got_subcommand("alpha")) return run_alpha<T>(common, aargs);
    if (app.got_subcommand("demo")) return run_demo<T>(common, dargs);
    throw ConfigError("no subcommand given");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decomposed-attention kernels: verification, benchmarks, alpha maps"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--precision", common.precision, "f32 or f64 (default f64; bench uses f32)");
    app.add_option("--seed", common.seed, "base RNG seed (all randomness flows from it)");
    app.add_option("--out", common.out, "output path (relative paths honor DATTN_OUT_DIR)");
    app.add_option("--threads", common.threads, "kernel thread cap, 0 = hardware default");

    VerifyArgs vargs;
    CLI::App* verify = app.add_subcommand("verify", "oracle-equivalence sweep + gradient check");
    verify->fallthrough(); // --seed/--precision/--out may follow the subcommand
    verify->add_option("--seeds", vargs.seeds, "number of seeds in the sweep");
    verify->add_option("--tol", vargs.tol, "exactness tolerance (default 1e-10 f64, 1e-4 f32)");
    verify->add_option("--d-model", vargs.d_model, "embedding width");
    verify->add_option("--heads", vargs.heads, "head count (0 = grid {1,2,4})");
    verify->add_option("--grad-step", vargs.grad_step, "finite-difference step");
    verify->add_option("--grad-tol", vargs.grad_tol, "gradient match tolerance");

    BenchArgs bargs;
    CLI::App* bench = app.add_subcommand("bench", "Full vs Diagonal V2V scaling timings");
    bench->fallthrough(); // --seed/--precision/--out may follow the subcommand
    bench->add_option("--v-grid", bargs.v_grid, "comma-separated |V| grid");
    bench->add_option("--modes", bargs.modes, "comma-separated subset of full,diag");
    bench->add_option("--m", bargs.m, "fixed textual token count");
    bench->add_option("--d-model", bargs.d_model, "embedding width");
    bench->add_option("--heads", bargs.heads, "head count");
    bench->add_option("--repeats", bargs.repeats, "timed repeats (median)");
    bench->add_option("--warmups", bargs.warmups, "discarded warmup runs");
    bench->add_option("--mem-cap", bargs.mem_cap, "working-set byte budget per case");

    AlphaArgs aargs;
    CLI::App* alpha = app.add_subcommand("alpha", "record alpha_V over a decoder stack to CSV");
    alpha->fallthrough(); // --seed/--precision/--out may follow the subcommand
    alpha->add_option("--layers", aargs.layers, "decoder layers");
    alpha->add_option("--heads", aargs.heads, "head count");
    alpha->add_option("--n", aargs.n, "visual tokens");
    alpha->add_option("--m", aargs.m, "textual tokens");
    alpha->add_option("--d-model", aargs.d_model, "embedding width (0 = 8*heads)");
    alpha->add_option("--position", aargs.position, "biased|debiased");
    alpha->add_option("--v2v", aargs.v2v, "full|diag");

    DemoArgs dargs;
    CLI::App* demo = app.add_subcommand("demo", "worked example vs the monolithic baseline");
    demo->fallthrough(); // --seed/--precision/--out may follow the subcommand
    demo->add_option("--n", dargs.n, "visual tokens");
    demo->add_option("--m", dargs.m, "textual tokens");
    demo->add_option("--d-model", dargs.d_model, "embedding width");
    demo->add_option("--heads", dargs.heads, "head count");
    demo->add_option("--position", dargs.position, "biased|debiased");
    demo->add_option("--v2v", dargs.v2v, "full|diag");
    demo->add_option("--merge", dargs.merge, "alpha|cascade|tanh|sigmoid");
    demo->add_option("--gate", dargs.gate, "gate value for tanh/sigmoid merges");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        dattn::set_max_threads(common.threads);
        std::string precision = common.precision;
        if (precision.empty()) precision = app.got_subcommand("bench") ? "f32" : "f64";
        if (precision == "f64")
            return dispatch<double>(app, common, vargs, bargs, aargs, dargs);
        if (precision == "f32")
            return dispatch<float>(app, common, vargs, bargs, aargs, dargs);
        throw dattn::ConfigError("unknown precision '" + precision + "' (f32|f64)");
    } catch (const dattn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
