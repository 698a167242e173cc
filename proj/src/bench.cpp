// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <sstream>

#include "gfocal/blocks.hpp"
#include "gfocal/harness.hpp"

namespace gfocal {

namespace {

template <typename F>
double best_time(std::size_t repeats, F&& body) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

}  // namespace

std::vector<BenchRow> run_bench(const std::vector<std::size_t>& sizes, const BenchOptions& options) {
    std::vector<BenchRow> rows;
    for (std::size_t n : sizes) {
        if (n == 0) fail(ErrorKind::Usage, "bench sizes must be positive");
        Rng rng(derive_seed(options.seed, n));
        const std::size_t c = options.channels;
        Tensor q({n, c}), k({n, c}), v({n, c});
        for (Tensor* t : {&q, &k, &v})
            for (double& x : t->storage()) x = rng.normal();
        BenchRow row;
        row.points = n;
        row.exact_seconds = best_time(options.repeats, [&] {
            Tape tape(DType::f64);
            (void)exact_attention(tape.constant(q), tape.constant(k), tape.constant(v));
        });
        row.nystrom_seconds = best_time(options.repeats, [&] {
            Tape tape(DType::f64);
            (void)nystrom_attention_qkv(tape.constant(q), tape.constant(k), tape.constant(v), options.landmarks);
        });
        rows.push_back(row);
    }
    return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%8s  %14s  %14s\n", "N", "exact_seconds", "nystrom_seconds");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%8zu  %14.6e  %14.6e\n", r.points, r.exact_seconds, r.nystrom_seconds);
        os << buf;
    }
    return os.str();
}

}  // namespace gfocal
