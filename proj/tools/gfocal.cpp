// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

// gfocal: dataset generation, training, evaluation, gradient checks and timing.
//
// Exit codes: 0 success, 1 usage/config error, 2 data/format/I/O error,
// 3 numeric or solver failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gfocal/harness.hpp"

namespace {

using namespace gfocal;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage:
        case ErrorKind::Config:
            return 1;
        case ErrorKind::Numeric:
        case ErrorKind::Solver:
            return 3;
        default:
            return 2;
    }
}

/// --seed beats GFOCAL_SEED, which beats the fallback (config file or 0).
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("GFOCAL_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0' || env[0] == '-') fail(ErrorKind::Usage, std::string("GFOCAL_SEED is not an integer: ") + env);
        return v;
    }
    return fallback;
}

SampleSet load_samples(const std::string& path, TensorBundle* raw = nullptr) {
    TensorBundle b = TensorBundle::read_file(path);
    SampleSet s = SampleSet::from_bundle(b);
    normalize_coordinates(s);
    if (raw != nullptr) *raw = std::move(b);
    return s;
}

struct Options {
    std::optional<std::uint64_t> seed;

    std::string task, out;
    std::size_t count = 0, size = 0;

    std::string config;
    bool quiet = false;

    std::string checkpoint, predictions, data, metric = "auto", report;

    std::string corrupt_op;
    bool ops_only = false;

    std::vector<std::size_t> sizes{256, 512, 1024, 2048};
    std::size_t repeats = 3, landmarks = 32, channels = 32;
};

int cmd_gen_data(const Options& o) {
    if (o.task != "darcy" && o.task != "pointcloud")
        fail(ErrorKind::Usage, "unknown task '" + o.task + "' (tasks: darcy, pointcloud)");
    if (o.count < 1) fail(ErrorKind::Usage, "--count must be >= 1");
    const std::uint64_t seed = resolve_seed(o.seed, 0);
    const SampleSet set = o.task == "darcy" ? generate_darcy(o.count, o.size, seed)
                                            : generate_pointcloud(o.count, o.size, seed);
    set.to_bundle().write_file(o.out);
    std::cout << "wrote " << set.count() << " " << o.task << " samples (" << set.points() << " points) to " << o.out
              << '\n';
    return 0;
}

int cmd_train(const Options& o) {
    RunConfig cfg = RunConfig::load(o.config);
    cfg.seed = resolve_seed(o.seed, cfg.seed);
    const SampleSet train_set = load_samples(cfg.train_data);
    std::optional<SampleSet> eval_set;
    if (!cfg.eval_data.empty()) eval_set = load_samples(cfg.eval_data);
    const TrainResult r = train(cfg, train_set, eval_set ? &*eval_set : nullptr, o.quiet ? nullptr : &std::cout);
    std::cout << "final train_rl2=" << r.final_train_rl2;
    if (r.final_eval_rl2) std::cout << " eval_rl2=" << *r.final_eval_rl2;
    std::cout << "\ncheckpoint " << r.checkpoint.string() << '\n';
    return 0;
}

int cmd_eval(const Options& o) {
    if (o.checkpoint.empty() == o.predictions.empty())
        fail(ErrorKind::Usage, "give exactly one of --checkpoint or --predictions");
    if (o.metric != "auto" && o.metric != "coefficient")
        fail(ErrorKind::Usage, "--metric must be auto or coefficient");
    TensorBundle raw;
    const SampleSet data = load_samples(o.data, &raw);
    Tensor predictions;
    std::optional<TensorBundle> pred_bundle;
    if (!o.checkpoint.empty()) {
        GFocalModel model = model_from_checkpoint(read_checkpoint(o.checkpoint));
        if (model.config.geometry_kind != data.geometry.kind)
            fail(ErrorKind::Config, std::string("checkpoint expects ") + to_string(model.config.geometry_kind) +
                                        " data, dataset is " + to_string(data.geometry.kind));
        predictions = predict_dataset(model, data);
    } else {
        pred_bundle = TensorBundle::read_file(o.predictions);
        predictions = pred_bundle->tensor("predictions");
    }
    const MetricsReport rep =
        evaluate(raw, data, predictions, pred_bundle ? &*pred_bundle : nullptr,
                 o.metric == "coefficient" ? MetricRequest::coefficient : MetricRequest::automatic);
    const std::string text = rep.to_text();
    std::cout << text;
    if (!o.report.empty()) {
        std::ofstream out(o.report, std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write report '" + o.report + "'");
        out << text;
    }
    return 0;
}

int cmd_check_grad(const Options& o) {
    GradCheckOptions opt;
    opt.seed = resolve_seed(o.seed, 0);
    opt.include_model = !o.ops_only;
    set_corrupted_backward(o.corrupt_op);
    const GradCheckReport rep = run_gradcheck(opt);
    set_corrupted_backward("");
    std::cout << rep.to_text();
    if (!rep.passed()) {
        std::cerr << "gradient check failed:";
        for (const auto& name : rep.offenders()) std::cerr << ' ' << name;
        std::cerr << '\n';
        return 3;
    }
    return 0;
}

int cmd_bench(const Options& o) {
    BenchOptions opt;
    opt.seed = resolve_seed(o.seed, 0);
    opt.repeats = o.repeats;
    opt.landmarks = o.landmarks;
    opt.channels = o.channels;
    std::cout << bench_table(run_bench(o.sizes, opt));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GFocal neural operator"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--seed", o.seed, "Random seed (overrides GFOCAL_SEED and config files)");

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset bundle");
    gen->add_option("--task", o.task, "darcy | pointcloud")->required();
    gen->add_option("--count", o.count, "Number of samples")->required();
    gen->add_option("--size", o.size, "Grid side (darcy) or point count (pointcloud)")->required();
    gen->add_option("--out", o.out, "Output bundle path")->required();
    gen->add_option("--seed", o.seed, "Random seed");

    auto* tr = app.add_subcommand("train", "Train a model from a key=value config");
    tr->add_option("--config", o.config, "Run config path")->required();
    tr->add_option("--seed", o.seed, "Random seed");
    tr->add_flag("--quiet", o.quiet, "Do not echo per-epoch records");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or a predictions bundle");
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint bundle");
    ev->add_option("--predictions", o.predictions, "Bundle with a 'predictions' [S x N x F] entry");
    ev->add_option("--data", o.data, "Dataset bundle")->required();
    ev->add_option("--metric", o.metric, "auto | coefficient");
    ev->add_option("--report", o.report, "Also write the report to this path");
    ev->add_option("--seed", o.seed, "Random seed");

    auto* cg = app.add_subcommand("check-grad", "Finite-difference gradient check on the tiny configuration");
    cg->add_option("--corrupt-op", o.corrupt_op, "Test fixture: perturb this op's backward rule");
    cg->add_flag("--ops-only", o.ops_only, "Skip the end-to-end model check");
    cg->add_option("--seed", o.seed, "Random seed");

    auto* be = app.add_subcommand("bench", "Forward timing of exact vs Nystrom attention");
    be->add_option("--sizes", o.sizes, "Point counts")->delimiter(',');
    be->add_option("--repeats", o.repeats, "Best-of repeats");
    be->add_option("--landmarks", o.landmarks, "Nystrom landmarks");
    be->add_option("--channels", o.channels, "Feature width");
    be->add_option("--seed", o.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (tr->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        if (cg->parsed()) return cmd_check_grad(o);
        if (be->parsed()) return cmd_bench(o);
    } catch (const Error& e) {
        std::cerr << "gfocal: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "gfocal: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
