// Compares the OpenMP kernels against the plain serial reference
// implementations: bitwise-equality check first, then wall-clock timings at
// 1..N threads. The kernels keep a fixed per-element summation order, so the
// speedup comes without any change in results.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "dattn/attention.hpp"
#include "dattn/reference.hpp"

using namespace dattn;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_sec(F&& f, int iters) {
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) f();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / iters;
}

template <typename F>
int pick_iters(F&& f) {
    const double once = std::max(1e-9, time_sec(f, 1));
    return static_cast<int>(std::max(1.0, 0.05 / once));
}

struct Row {
    std::string name;
    double ref_sec;
    double omp1_sec;
    double ompn_sec;
};

void print_row(const Row& r, int threads) {
    std::printf("%-26s %12.4e %12.4e %12.4e %8.2fx %8.2fx\n", r.name.c_str(), r.ref_sec,
                r.omp1_sec, r.ompn_sec, r.ref_sec / r.omp1_sec, r.ref_sec / r.ompn_sec);
    (void)threads;
}

} // namespace

int main(int argc, char** argv) {
    int threads = hardware_threads();
    std::size_t size = 512;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc) threads = std::atoi(argv[++i]);
        if (std::strcmp(argv[i], "--size") == 0 && i + 1 < argc)
            size = static_cast<std::size_t>(std::atoll(argv[++i]));
    }

    Rng rng(0);
    const auto a = random_uniform<float>({size, size}, rng, -1, 1);
    const auto b = random_uniform<float>({size, size}, rng, -1, 1);
    const auto rows = random_uniform<float>({size, 4 * size}, rng, -5, 5);

    const AttentionConfig cfg = make_config(64, 4);
    Rng wrng(1);
    const auto w = make_attention_weights<float>(cfg, wrng);
    const auto seq = make_random_sequence<float>(static_cast<std::int64_t>(size * 2), 16, 64,
                                                 PositionMode::kBiased, wrng);

    // Equality gate: the parallel kernels must reproduce the serial
    // reference bit for bit before any timing is reported.
    {
        ThreadLimitGuard guard(threads);
        if (max_abs_diff(matmul(a, b), ref::matmul(a, b)) != 0.0 ||
            max_abs_diff(softmax_lastdim(rows), ref::softmax_lastdim(rows)) != 0.0) {
            std::fprintf(stderr, "kernels do not match the serial reference\n");
            return 1;
        }
    }
    std::printf("kernels match the serial reference bitwise (threads=%d)\n\n", threads);

    std::printf("%-26s %12s %12s %12s %8s %8s\n", "kernel", "ref sec", "omp(1) sec",
                ("omp(" + std::to_string(threads) + ") sec").c_str(), "x1", "xN");

    const auto bench = [&](const std::string& name, auto&& ref_call, auto&& omp_call) {
        Row r{name, 0, 0, 0};
        {
            ThreadLimitGuard guard(1);
            const int iters = pick_iters(ref_call);
            r.ref_sec = time_sec(ref_call, iters);
            r.omp1_sec = time_sec(omp_call, iters);
        }
        {
            ThreadLimitGuard guard(threads);
            const int iters = pick_iters(omp_call);
            r.ompn_sec = time_sec(omp_call, iters);
        }
        print_row(r, threads);
    };

    double sink = 0;
    bench(
        "matmul " + std::to_string(size) + "^2",
        [&] { sink += ref::matmul(a, b).data.back(); },
        [&] { sink += matmul(a, b).data.back(); });
    bench(
        "softmax " + std::to_string(size) + "x" + std::to_string(4 * size),
        [&] { sink += ref::softmax_lastdim(rows).data.back(); },
        [&] { sink += softmax_lastdim(rows).data.back(); });
    bench(
        "rope " + std::to_string(size * 2) + " tokens",
        [&] {
            auto q = detail::project_heads(seq.visual, w.proj.w_q, cfg.n_heads);
            sink += ref::rope_apply(q, seq.positions.visual_positions, cfg.rope).data.back();
        },
        [&] {
            auto q = detail::project_heads(seq.visual, w.proj.w_q, cfg.n_heads);
            sink += rope_apply(q, seq.positions.visual_positions, cfg.rope).data.back();
        });
    bench(
        "decomposed fwd |V|=" + std::to_string(size * 2),
        [&] {
            ThreadLimitGuard guard(1);
            sink += decomposed_attention(seq, w, cfg).textual_out.data.back();
        },
        [&] { sink += decomposed_attention(seq, w, cfg).textual_out.data.back(); });

    volatile double keep = sink;
    (void)keep;
    return 0;
}
