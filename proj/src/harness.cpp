#include "dattn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace dattn {

SweepGrid default_sweep_grid(std::size_t n_seeds) {
    SweepGrid grid;
    grid.seeds.resize(n_seeds);
    std::iota(grid.seeds.begin(), grid.seeds.end(), 0);
    return grid;
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("slope fit needs >= 2 points");
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= 0 || y[i] <= 0) throw NumericError("slope fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

std::string format_g17(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {
const char* precision_name(float) { return "f32"; }
const char* precision_name(double) { return "f64"; }
double eps_of(float) { return static_cast<double>(std::numeric_limits<float>::epsilon()); }
double eps_of(double) { return std::numeric_limits<double>::epsilon(); }
} // namespace detail

namespace {

void append_case(std::string& out, const CaseResult& c) {
    out += "{\"case\":{\"kind\":\"";
    out += c.info.kind;
    out += "\",\"n\":" + std::to_string(c.info.n);
    out += ",\"m\":" + std::to_string(c.info.m);
    out += ",\"heads\":" + std::to_string(c.info.heads);
    out += ",\"seed\":" + std::to_string(c.info.seed);
    out += ",\"position\":\"" + c.info.position + "\"";
    out += ",\"v2v\":\"" + c.info.v2v + "\"";
    out += ",\"merge\":\"" + c.info.merge + "\"}";
    out += ",\"max_abs_diff\":" + format_g17(c.max_abs_diff);
    out += ",\"tol\":" + format_g17(c.tol);
    out += std::string(",\"pass\":") + (c.pass ? "true" : "false") + "}";
}

} // namespace

std::string to_json(const VerifyReport& report) {
    std::string out = "{\"label\":\"" + report.label + "\"";
    out += ",\"precision\":\"" + report.precision + "\"";
    out += ",\"tolerance\":" + format_g17(report.tolerance);
    out += ",\"cases\":[";
    for (std::size_t i = 0; i < report.cases.size(); ++i) {
        if (i) out += ",";
        append_case(out, report.cases[i]);
    }
    out += "]";
    if (report.fd_truncation)
        out += ",\"fd_truncation\":" + format_g17(*report.fd_truncation);
    out += ",\"passed\":" + std::to_string(report.passed());
    out += ",\"total\":" + std::to_string(report.total());
    out += std::string(",\"all_pass\":") + (report.all_pass() ? "true" : "false") + "}\n";
    return out;
}

std::string to_json(const BenchReport& report) {
    std::string out = "{\"precision\":\"" + report.precision + "\"";
    out += ",\"m\":" + std::to_string(report.m);
    out += ",\"d_model\":" + std::to_string(report.d_model);
    out += ",\"n_heads\":" + std::to_string(report.n_heads);
    out += ",\"repeats\":" + std::to_string(report.repeats);
    out += ",\"warmups\":" + std::to_string(report.warmups);
    out += ",\"mem_cap_bytes\":" + std::to_string(report.mem_cap_bytes);
    out += ",\"entries\":[";
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const BenchEntry& e = report.entries[i];
        if (i) out += ",";
        out += "{\"v\":" + std::to_string(e.v);
        out += ",\"mode\":\"" + e.mode + "\"";
        out += std::string(",\"oom\":") + (e.oom ? "true" : "false");
        out += ",\"v2v_sec\":" + format_g17(e.v2v_sec);
        out += ",\"forward_sec\":" + format_g17(e.forward_sec);
        out += ",\"iters_v2v\":" + std::to_string(e.iters_v2v);
        out += ",\"iters_forward\":" + std::to_string(e.iters_forward) + "}";
    }
    out += "]";
    out += ",\"exponent_full\":" +
           (report.exponent_full ? format_g17(*report.exponent_full) : std::string("null"));
    out += ",\"exponent_diag\":" +
           (report.exponent_diag ? format_g17(*report.exponent_diag) : std::string("null"));
    out += ",\"ratio_v2v\":[";
    bool first = true;
    for (const BenchEntry& e : report.entries) {
        if (e.mode != "full" || e.oom) continue;
        const BenchEntry* d = report.find(e.v, "diag");
        if (!d || d->oom || d->v2v_sec <= 0) continue;
        if (!first) out += ",";
        first = false;
        out += "{\"v\":" + std::to_string(e.v);
        out += ",\"ratio\":" + format_g17(e.v2v_sec / d->v2v_sec) + "}";
    }
    out += "]";
    out += ",\"note\":\"" + report.note + "\"}\n";
    return out;
}

std::uint64_t bench_case_bytes(std::size_t elem_size, std::int64_t v, std::int64_t m,
                               std::int64_t d_model, V2VMode mode) {
    const std::uint64_t vd = static_cast<std::uint64_t>(v) * static_cast<std::uint64_t>(d_model);
    const std::uint64_t md = static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(d_model);
    const std::uint64_t weights = 4ull * static_cast<std::uint64_t>(d_model * d_model);
    // inputs + outputs + q/k/v head buffers + one logit row; Diagonal skips
    // q/k and the row.
    std::uint64_t elems = 2 * (vd + md) + weights;
    if (mode == V2VMode::kFull)
        elems += 4 * vd + static_cast<std::uint64_t>(v);
    else
        elems += vd;
    return elems * elem_size;
}

std::vector<std::int64_t> heads_by_mean(const AlphaRecord& record, std::int64_t layer) {
    const std::vector<double> means = record.head_means();
    std::vector<std::int64_t> order(static_cast<std::size_t>(record.heads));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return means[static_cast<std::size_t>(layer * record.heads + a)] >
               means[static_cast<std::size_t>(layer * record.heads + b)];
    });
    return order;
}

std::string alpha_mean_path(const std::string& path) {
    const std::size_t slash = path.find_last_of('/');
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + "_mean";
    return path.substr(0, dot) + "_mean" + path.substr(dot);
}

void export_alpha_csv(const AlphaRecord& record, const std::string& path) {
    std::ofstream full(path, std::ios::binary);
    if (!full) throw Error("cannot open " + path + " for writing");
    full << "layer,head,token,alpha\n";
    for (std::int64_t l = 0; l < record.layers; ++l)
        for (std::int64_t h = 0; h < record.heads; ++h)
            for (std::int64_t t = 0; t < record.tokens; ++t)
                full << l << "," << h << "," << t << "," << format_g17(record.at(l, h, t))
                     << "\n";

    const std::vector<double> means = record.head_means();
    std::ofstream mean(alpha_mean_path(path), std::ios::binary);
    if (!mean) throw Error("cannot open " + alpha_mean_path(path) + " for writing");
    mean << "layer,head,alpha_mean\n";
    for (std::int64_t l = 0; l < record.layers; ++l)
        for (std::int64_t h : heads_by_mean(record, l))
            mean << l << "," << h << ","
                 << format_g17(means[static_cast<std::size_t>(l * record.heads + h)]) << "\n";
}

} // namespace dattn
