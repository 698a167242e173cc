// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: gfocal_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gfocal/harness.hpp"
#include "gfocal/ops.hpp"
#include "../oracles.hpp"
#include "../test_util.hpp"

namespace fs = std::filesystem;
using namespace gfocal;
using gfocal::testing::random_tensor;
using gfocal::testing::smooth_sequence;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor nystrom(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t landmarks) {
    Tape tape;
    return nystrom_attention_qkv(tape.constant(q), tape.constant(k), tape.constant(v), landmarks).value();
}

Outcome gradient_integrity() {
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckReport rep = run_gradcheck(GradCheckOptions{});
    const double secs = seconds_since(t0);
    std::size_t checked = 0;
    for (const auto& e : rep.entries) checked += e.checked;
    Outcome o;
    o.pass = rep.passed() && rep.worst() < 1e-4 && secs < 120.0;
    o.detail = fmt("worst_rel_err=%.3e over %.0f entries, %.1f s", rep.worst(), static_cast<double>(checked), secs);
    if (!rep.passed()) {
        o.detail += " offenders:";
        for (const auto& n : rep.offenders()) o.detail += " " + n;
    }
    return o;
}

Outcome nystrom_exactness() {
    Rng rng(21);
    double worst = 0.0;
    for (std::size_t n : {2u, 8u, 16u, 32u}) {
        const Tensor q = random_tensor({n, 8}, rng), k = random_tensor({n, 8}, rng), v = random_tensor({n, 8}, rng);
        worst = std::max(worst, max_abs_diff(nystrom(q, k, v, n), oracle::exact_attention(q, k, v)));
    }
    return {worst < 1e-8, fmt("max_abs_diff=%.3e at L_lm=N in {2,8,16,32}", worst)};
}

Outcome nystrom_trend() {
    const std::size_t n = 32;
    std::vector<double> means;
    for (std::size_t lm : {2u, 4u, 8u, 16u}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(derive_seed(1000, seed));
            const Tensor q = smooth_sequence(n, 8, rng), k = smooth_sequence(n, 8, rng),
                         v = smooth_sequence(n, 8, rng);
            Tensor d = nystrom(q, k, v, lm);
            const Tensor e = oracle::exact_attention(q, k, v);
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] -= e[i];
            total += frobenius_norm(d);
        }
        means.push_back(total / 20.0);
    }
    bool ok = true;
    for (std::size_t i = 1; i < means.size(); ++i) ok = ok && means[i] <= means[i - 1];
    char buf[256];
    std::snprintf(buf, sizeof buf, "smooth inputs, mean ||err||_F at L_lm=2,4,8,16: %.4g %.4g %.4g %.4g", means[0], means[1], means[2],
                  means[3]);
    return {ok, buf};
}

Outcome integral_operator() {
    Rng rng(41);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        FocalLayerParams p = FocalLayerParams::make("f", GeometryKind::point_cloud, 16, 8, rng, DType::f64);
        const Tensor x = random_tensor({100, 16}, rng, -2.0, 2.0);
        Tape tape;
        const Tensor y = physics_attention(tape, tape.constant(x), p, Geometry::point_cloud()).value();
        worst = std::max(worst, max_abs_diff(y, oracle::physics_attention(x, p)));
    }
    return {worst < 1e-10, fmt("max_abs_diff=%.3e over 5 draws, N=100, L=8", worst)};
}

Outcome slice_algebra() {
    Rng rng(51);
    double row_err = 0.0, const_err = 0.0;
    bool one_hot_exact = true;
    for (int trial = 0; trial < 5; ++trial) {
        FocalLayerParams p = FocalLayerParams::make("f", GeometryKind::point_cloud, 8, 8, rng, DType::f64);
        Tape tape;
        Var w = slice_weights(tape, tape.constant(random_tensor({64, 8}, rng, -4.0, 4.0)), p.slice_map,
                              Geometry::point_cloud());
        for (std::size_t i = 0; i < 64; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 8; ++j) s += w.value().at(i, j);
            row_err = std::max(row_err, std::abs(s - 1.0));
        }
        const double c = rng.uniform(-3.0, 3.0);
        const Tensor y = deslice(tape.constant(Tensor::full({8, 5}, c)), w).value();
        for (double v : y.storage()) const_err = std::max(const_err, std::abs(v - c));

        // One point per slice; identity attention between aggregate and deslice.
        const Tensor x = random_tensor({8, 5}, rng);
        Tensor hot({8, 8});
        const auto perm = rng.permutation(8);
        for (std::size_t i = 0; i < 8; ++i) hot.at(i, perm[i]) = 1.0;
        Var tokens = aggregate_tokens(tape.constant(x), tape.constant(hot), 0.0);
        Var attended = matmul(tape.constant(Tensor::identity(8)), tokens);
        one_hot_exact = one_hot_exact && deslice(attended, tape.constant(hot)).value().identical(x);
    }
    const bool ok = row_err <= 1e-6 && const_err <= 1e-6 && one_hot_exact;
    return {ok, fmt("row_sum_err=%.2e const_deslice_err=%.2e one_hot_exact=", row_err, const_err) +
                    (one_hot_exact ? "yes" : "no")};
}

Outcome position_encoder() {
    Rng rng(61);
    double worst = 0.0;
    for (std::size_t dim : {1u, 2u, 3u}) {
        const ReferenceGrid g = build_reference_grid(4, dim);
        const Tensor coords = random_tensor({50, dim}, rng, 0.0, 1.0);
        worst = std::max(worst, max_abs_diff(grid_distances(coords, g), oracle::distances(coords, g.points)));
    }
    const ReferenceGrid r2 = build_reference_grid(2, 2);
    const bool corners = r2.points.identical(Tensor::matrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1}));
    return {worst <= 1e-12 && corners,
            fmt("distance max_abs_diff=%.2e, R=2 corners ", worst) + (corners ? "exact" : "WRONG")};
}

double manufactured_error(std::size_t n) {
    const double pi = std::numbers::pi, h = 1.0 / static_cast<double>(n - 1);
    Tensor f({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) f.at(i, j) = 2.0 * pi * pi * std::sin(pi * i * h) * std::sin(pi * j * h);
    const Tensor u = darcy_solve(Tensor::full({n, n}, 1.0), f);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            err = std::max(err, std::abs(u.at(i, j) - std::sin(pi * i * h) * std::sin(pi * j * h)));
    return err;
}

Outcome darcy_oracle() {
    const double e16 = manufactured_error(16), e32 = manufactured_error(32), e64 = manufactured_error(64);
    const double r1 = e16 / e32, r2 = e32 / e64;
    double worst_res = 0.0;
    for (std::size_t n : {16u, 32u}) {
        const SampleSet s = generate_darcy(8, n, 71);
        const Tensor f = Tensor::full({n, n}, 1.0);
        for (std::size_t k = 0; k < s.count(); ++k)
            worst_res = std::max(worst_res, darcy_residual(s.sample_inputs(k).reshaped({n, n}), f,
                                                           s.sample_outputs(k).reshaped({n, n})));
    }
    const bool ok = r1 >= 3.5 && r1 <= 4.5 && r2 >= 3.5 && r2 <= 4.5 && worst_res < 1e-8;
    return {ok, fmt("error ratios %.3f %.3f, worst residual %.2e", r1, r2, worst_res)};
}

Outcome desk_training(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const SampleSet train_set = generate_darcy(64, 16, 1);
    const SampleSet held = generate_darcy(16, 16, 2);
    RunConfig cfg = RunConfig::parse(
        "preset = darcy\n"
        "global_depth = 2\nfocal_depth = 1\nchannels = 32\nslice_num = 8\n"
        "loss = rl2+0.1*grad\nepochs = 100\nbatch_size = 4\nlr = 1e-3\nseed = 0\n"
        "train_data = unused\n",
        false);
    cfg.out_dir = (work / "desk_training").string();
    const TrainResult r = train(cfg, train_set, &held, nullptr);
    const double secs = seconds_since(t0);
    const double first = r.epochs.front().train_rl2;
    const double baseline = constant_mean_baseline(train_set, held);
    const bool ok = r.final_train_rl2 < 0.5 * first && *r.final_eval_rl2 < 0.9 * baseline && secs < 600.0;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "train rl2 epoch1=%.4f final=%.4f (ratio %.3f); held-out rl2=%.4f vs baseline %.4f (ratio %.3f); "
                  "%.0f s",
                  first, r.final_train_rl2, r.final_train_rl2 / first, *r.final_eval_rl2, baseline,
                  *r.final_eval_rl2 / baseline, secs);
    return {ok, buf};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0, sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Outcome metrics_exactness() {
    Rng rng(91);
    const Tensor u = random_tensor({40, 3}, rng);
    const double same = relative_l2({u, u, std::nullopt});
    const double zero = relative_l2({u, Tensor({40, 3}), std::nullopt});

    std::vector<double> a(12), rev(12);
    for (std::size_t i = 0; i < 12; ++i) {
        a[i] = rng.normal();
        rev[i] = -3.0 * a[i];
    }
    const double rho_same = spearman_rho(a, a), rho_rev = spearman_rho(a, rev);
    const std::vector<double> ta{1, 2, 2, 3, 5, 5, 5, 0}, tb{2, 1, 4, 3, 7, 6, 6, 6};
    const double tied_err = std::abs(spearman_rho(ta, tb) - pearson(average_ranks(ta), average_ranks(tb)));

    const std::size_t b = 512;
    const double r = 0.75, v = 1.5, area = 2.0;
    SurfaceSample s;
    s.points = Tensor({b, 2});
    s.normals = Tensor({b, 2});
    s.shear = Tensor({b, 2});
    s.pressure = Tensor({b});
    s.measure = Tensor::full({b}, 2.0 * std::numbers::pi * r / static_cast<double>(b));
    for (std::size_t i = 0; i < b; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(b);
        s.points.at(i, 0) = r * std::cos(t);
        s.points.at(i, 1) = r * std::sin(t);
        s.normals.at(i, 0) = std::cos(t);
        s.normals.at(i, 1) = std::sin(t);
        s.pressure[i] = std::cos(t);
    }
    s.inlet_speed = v;
    s.reference_area = area;
    s.direction = {-1.0, 0.0};
    const double expected = -2.0 * std::numbers::pi * r / (v * v * area);
    const double coef_err = std::abs(force_coefficient(s) - expected);

    const bool ok = same == 0.0 && zero == 1.0 && rho_same == 1.0 && rho_rev == -1.0 && tied_err < 1e-12 &&
                    coef_err < 1e-3;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "rl2(u,u)=%g rl2(u,0)=%g rho=%g/%g tied |rho-oracle|=%.1e circle |C-C*|=%.2e", same, zero, rho_same,
                  rho_rev, tied_err, coef_err);
    return {ok, buf};
}

Outcome reproducibility(const fs::path& work) {
    std::vector<std::string> differing;
    const auto same = [&](const std::string& what, const auto& x, const auto& y) {
        if (!(x == y)) differing.push_back(what);
    };
    same("darcy dataset", generate_darcy(3, 16, 5).to_bundle().serialize(),
         generate_darcy(3, 16, 5).to_bundle().serialize());
    same("pointcloud dataset", generate_pointcloud(3, 64, 5).to_bundle().serialize(),
         generate_pointcloud(3, 64, 5).to_bundle().serialize());

    const SampleSet data = generate_darcy(4, 8, 6);
    const SampleSet held = generate_darcy(2, 8, 7);
    std::string logs[2], ckpts[2], reports[2];
    for (int run = 0; run < 2; ++run) {
        RunConfig cfg = RunConfig::parse("preset = tiny\nepochs = 3\nbatch_size = 2\nseed = 9\n", false);
        cfg.checkpoint_every = 2;
        const fs::path dir = work / ("repro" + std::to_string(run));
        fs::remove_all(dir);
        cfg.out_dir = dir.string();
        const TrainResult r = train(cfg, data, &held, nullptr);
        logs[run] = slurp(dir / "train_log.txt");
        ckpts[run] = slurp(dir / "checkpoint.gftb") + slurp(dir / "checkpoint_epoch0002.gftb");
        GFocalModel m = model_from_checkpoint(read_checkpoint(r.checkpoint));
        reports[run] = evaluate(held.to_bundle(), held, predict_dataset(m, held), nullptr).to_text();
    }
    same("train log", logs[0], logs[1]);
    same("checkpoints", ckpts[0], ckpts[1]);
    same("eval report", reports[0], reports[1]);
    GradCheckOptions gopt;
    gopt.include_model = false;
    same("check-grad report", run_gradcheck(gopt).to_text(), run_gradcheck(gopt).to_text());

    Outcome o;
    o.pass = differing.empty();
    o.detail = o.pass ? "datasets, train logs, checkpoints, eval and check-grad reports bit-identical" : "differs:";
    for (const auto& d : differing) o.detail += " " + d;
    return o;
}

Outcome format_round_trip(const fs::path& work) {
    Rng rng(111);
    std::size_t bundles = 0, entries = 0, zero_len = 0, rank0 = 0, failures = 0;
    for (int trial = 0; trial < 40; ++trial) {
        TensorBundle b;
        const std::size_t count = rng.below(7);
        for (std::size_t e = 0; e < count; ++e) {
            const std::size_t rank = rng.below(5);
            Shape dims(rank);
            for (auto& d : dims) d = rng.below(4);  // zero extents included
            Tensor t(dims);
            for (double& x : t.storage()) x = rng.normal() * std::pow(10.0, rng.uniform(-5, 5));
            const DType storage = rng.below(2) == 0 ? DType::f32 : DType::f64;
            b.put("entry/" + std::to_string(e) + "_" + std::to_string(rng.below(1000)), t, storage);
            ++entries;
            zero_len += t.numel() == 0;
            rank0 += rank == 0;
        }
        const fs::path path = work / "roundtrip.gftb";
        b.write_file(path);
        const auto bytes = b.serialize();
        const TensorBundle back = TensorBundle::read_file(path);
        if (read_bytes(path) != bytes || back.serialize() != bytes) ++failures;
        ++bundles;
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu bundles, %zu entries (%zu zero-length, %zu rank-0), %zu mismatches", bundles,
                  entries, zero_len, rank0, failures);
    return {failures == 0 && zero_len > 0 && rank0 > 0, buf};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = fs::temp_directory_path() / "gfocal_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient integrity", gradient_integrity},
        {"nystrom exactness", nystrom_exactness},
        {"nystrom convergence trend", nystrom_trend},
        {"integral-operator equivalence", integral_operator},
        {"slice algebra", slice_algebra},
        {"position encoder", position_encoder},
        {"darcy oracle", darcy_oracle},
        {"desk-scale learning", [&] { return desk_training(work); }},
        {"metrics exactness", metrics_exactness},
        {"reproducibility", [&] { return reproducibility(work); }},
        {"format round-trip", [&] { return format_round_trip(work); }},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const std::size_t id = i + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %2zu (%s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
