// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end checks of the gfocal executable: exit codes and file side effects.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gfocal/bundle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using gfocal::testing::scratch_dir;

namespace {

struct CliRun {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" GFOCAL_CLI_PATH "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, UsageErrors) {
    const auto dir = scratch_dir("cli_usage");
    EXPECT_EQ(run_cli("", dir).code, 1);
    EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
    EXPECT_EQ(run_cli("gen-data --task darcy --count 2", dir).code, 1);
    EXPECT_EQ(run_cli("gen-data --task nope --count 2 --size 8 --out x.gftb", dir).code, 1);
    EXPECT_EQ(run_cli("gen-data --task darcy --count 2 --size 8 --out x.gftb", dir, "GFOCAL_SEED=abc").code, 1);
    EXPECT_FALSE(fs::exists(dir / "x.gftb"));
}

TEST(Cli, CountZeroWritesNothing) {
    const auto dir = scratch_dir("cli_count0");
    const CliRun r = run_cli("gen-data --task darcy --count 0 --size 16 --out d.gftb", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(dir / "d.gftb"));
}

TEST(Cli, GenDataWritesBundleDeterministically) {
    const auto dir = scratch_dir("cli_gen");
    ASSERT_EQ(run_cli("gen-data --task darcy --count 2 --size 8 --seed 3 --out a.gftb", dir).code, 0);
    ASSERT_EQ(run_cli("--seed 3 gen-data --task darcy --count 2 --size 8 --out b.gftb", dir).code, 0);
    ASSERT_EQ(run_cli("gen-data --task darcy --count 2 --size 8 --out c.gftb", dir, "GFOCAL_SEED=3").code, 0);
    ASSERT_EQ(run_cli("gen-data --task darcy --count 2 --size 8 --seed 4 --out d.gftb", dir, "GFOCAL_SEED=3").code, 0);
    const auto a = gfocal::read_bytes(dir / "a.gftb");
    ASSERT_GE(a.size(), 4u);
    EXPECT_EQ(std::string(a.begin(), a.begin() + 4), "GFTB");
    EXPECT_EQ(a, gfocal::read_bytes(dir / "b.gftb"));
    EXPECT_EQ(a, gfocal::read_bytes(dir / "c.gftb"));
    EXPECT_NE(a, gfocal::read_bytes(dir / "d.gftb"));
}

TEST(Cli, DataErrorsExitTwo) {
    const auto dir = scratch_dir("cli_data");
    write(dir / "junk.gftb", "not a bundle");
    write(dir / "run.cfg", "preset = tiny\ntrain_data = junk.gftb\nepochs = 1\n");
    EXPECT_EQ(run_cli("train --config run.cfg", dir).code, 2);
    write(dir / "missing.cfg", "preset = tiny\ntrain_data = nowhere.gftb\n");
    EXPECT_EQ(run_cli("train --config missing.cfg", dir).code, 2);
    EXPECT_EQ(run_cli("train --config no_such.cfg", dir).code, 2);
}

TEST(Cli, ConfigErrorsExitOne) {
    const auto dir = scratch_dir("cli_config");
    ASSERT_EQ(run_cli("gen-data --task pointcloud --count 2 --size 16 --out p.gftb", dir).code, 0);
    write(dir / "bad.cfg", "preset = tiny\ntrain_data = p.gftb\nwat = 3\n");
    EXPECT_EQ(run_cli("train --config bad.cfg", dir).code, 1);
    write(dir / "grad.cfg", "preset = tiny\ntrain_data = p.gftb\nloss = rl2+0.1*grad\n");
    EXPECT_EQ(run_cli("train --config grad.cfg", dir).code, 1);
}

TEST(Cli, TrainEvalRoundTrip) {
    const auto dir = scratch_dir("cli_train");
    ASSERT_EQ(run_cli("gen-data --task darcy --count 4 --size 8 --seed 1 --out train.gftb", dir).code, 0);
    write(dir / "run.cfg", "preset = tiny\ntrain_data = train.gftb\nepochs = 2\nbatch_size = 2\nout_dir = out\n");
    const CliRun t = run_cli("train --config run.cfg --quiet", dir);
    ASSERT_EQ(t.code, 0) << t.err;
    const std::string log = slurp(dir / "out" / "train_log.txt");
    EXPECT_NE(log.find("epoch=2 "), std::string::npos);
    const CliRun e = run_cli("eval --checkpoint out/checkpoint.gftb --data train.gftb --report rep.txt", dir);
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("relative_l2="), std::string::npos);
    EXPECT_EQ(slurp(dir / "rep.txt"), e.out);
    EXPECT_EQ(run_cli("eval --checkpoint out/checkpoint.gftb --data train.gftb --metric coefficient", dir).code, 2);
    EXPECT_EQ(run_cli("eval --data train.gftb", dir).code, 1);

    // Same config and seed: identical log and checkpoint bytes.
    write(dir / "run2.cfg", "preset = tiny\ntrain_data = train.gftb\nepochs = 2\nbatch_size = 2\nout_dir = out2\n");
    ASSERT_EQ(run_cli("train --config run2.cfg --quiet", dir).code, 0);
    EXPECT_EQ(log, slurp(dir / "out2" / "train_log.txt"));
    EXPECT_EQ(gfocal::read_bytes(dir / "out" / "checkpoint.gftb"), gfocal::read_bytes(dir / "out2" / "checkpoint.gftb"));
}

TEST(Cli, CheckGradAndCorruption) {
    const auto dir = scratch_dir("cli_gradcheck");
    const CliRun a = run_cli("check-grad", dir);
    EXPECT_EQ(a.code, 0) << a.out;
    EXPECT_NE(a.out.find("result=pass"), std::string::npos);
    EXPECT_EQ(a.out, run_cli("check-grad", dir).out);
    const CliRun c = run_cli("check-grad --ops-only --corrupt-op softmax_rows", dir);
    EXPECT_EQ(c.code, 3);
    EXPECT_NE(c.err.find("op:softmax_rows"), std::string::npos) << c.err;
}

TEST(Cli, BenchRows) {
    const auto dir = scratch_dir("cli_bench");
    const CliRun r = run_cli("bench --sizes 32,64 --repeats 1", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    int rows = 0;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::istringstream row(line);
        double n, exact, nys;
        ASSERT_TRUE(row >> n >> exact >> nys) << line;
        EXPECT_GT(exact, 0.0);
        EXPECT_GT(nys, 0.0);
        ++rows;
    }
    EXPECT_EQ(rows, 2);
}
