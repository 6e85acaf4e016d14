// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/config.hpp>
#include <reflsurf/io.hpp>

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace reflsurf;

namespace {

const std::string kBinary = REFLSURF_CLI;

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string &args) {
    const std::string cmd = kBinary + " " + args + " 2>&1";
    Result r;
    FILE *p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<fs::path> &scratchDirs() {
    static std::vector<fs::path> dirs;
    return dirs;
}

struct ScratchCleanup : ::testing::Environment {
    void TearDown() override {
        for (const auto &d : scratchDirs()) fs::remove_all(d);
    }
};

const auto *const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("reflsurf_cli_" + std::to_string(getpid()) + "_" + name);
    fs::remove_all(p);
    scratchDirs().push_back(p);
    fs::create_directories(p);
    return p;
}

// One tiny diffuse_box bundle shared by the tests that need data.
const fs::path &boxBundle() {
    static const fs::path dir = [] {
        const fs::path d = scratch("box") / "bundle";
        const Result r = run("synth --name diffuse_box --out " + d.string() +
                             " --width 16 --height 16 --views 4 --test-views 2");
        EXPECT_EQ(r.code, 0) << r.out;
        return d;
    }();
    return dir;
}

const std::string kQuick = " --threads 1 --log-every 0 --set env_grid=4 --set env_samples_per_cell=2"
                           " --set densify_start=1000000 --set chunk_size=64";

std::vector<std::string> dataRows(const fs::path &csv) {
    std::istringstream in(readFile(csv.string()));
    std::vector<std::string> rows;
    std::string line;
    for (int i = 0; std::getline(in, line); ++i)
        if (i >= 2) rows.push_back(line);
    return rows;
}

double column(const std::string &row, int col) {
    std::istringstream s(row);
    std::string f;
    for (int i = 0; i <= col; ++i) std::getline(s, f, ',');
    return std::stod(f);
}

} // namespace

TEST(Cli, SynthIsDeterministic) {
    const fs::path a = scratch("synth_a"), b = scratch("synth_b");
    ASSERT_EQ(run("synth --name mirror_wall --out " + a.string() + " --width 8 --height 8 --views 2 --test-views 1").code,
              0);
    ASSERT_EQ(run("synth --name mirror_wall --out " + b.string() + " --width 8 --height 8 --views 2 --test-views 1").code,
              0);
    for (const char *f : {"base.ply", "env.ply", "cameras.txt", "bundle.txt", "images/train_000.pfm"})
        EXPECT_EQ(readFile((a / f).string()), readFile((b / f).string())) << f;
}

TEST(Cli, UnknownSceneIsConfigError) {
    const Result r = run("synth --name teapot --out " + scratch("teapot").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("teapot"), std::string::npos);
}

TEST(Cli, MissingArgumentsAreConfigErrors) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("train --out /tmp/x").code, 2);
    EXPECT_EQ(run("render --out /tmp/x --chunk 0 --scene /nonexistent").code, 2);
}

TEST(Cli, HelpListsEveryConfigKey) {
    const Result r = run("train --help");
    EXPECT_EQ(r.code, 0);
    for (const auto &k : configKeys()) {
        EXPECT_NE(r.out.find(k.name + " (default " + k.defaultValue + ")"), std::string::npos) << k.name;
        EXPECT_NE(r.out.find(k.help), std::string::npos) << k.name;
    }
}

TEST(Cli, BadConfigNamesTheKey) {
    const fs::path d = scratch("badcfg");
    const std::string scene = boxBundle().string();
    Result r = run("train --scene " + scene + " --out " + (d / "o").string() + " --set lambda_norm=-1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("lambda_norm"), std::string::npos) << r.out;

    r = run("train --scene " + scene + " --out " + (d / "o").string() + " --set no_such_key=1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("no_such_key"), std::string::npos) << r.out;

    std::ofstream(d / "cfg.txt") << "total_steps = 10\ntotal_steps = 20\n";
    r = run("train --scene " + scene + " --out " + (d / "o").string() + " --config " + (d / "cfg.txt").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("total_steps"), std::string::npos) << r.out;

    std::ofstream(d / "cfg2.txt") << "lambda_mono = banana\n";
    r = run("train --scene " + scene + " --out " + (d / "o").string() + " --config " + (d / "cfg2.txt").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("lambda_mono"), std::string::npos) << r.out;

    r = run("train --scene " + scene + " --out " + (d / "o").string() + " --config " + (d / "absent.txt").string());
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, PrintConfigRoundTrips) {
    const Result r = run("train --scene x --out y --print-config --set lambda_norm=0.25 --seed 7");
    ASSERT_EQ(r.code, 0) << r.out;
    const TrainConfig cfg = parseConfig(r.out);
    EXPECT_EQ(getConfigValue(cfg, "lambda_norm"), "0.25");
    EXPECT_EQ(getConfigValue(cfg, "seed"), "7");
}

TEST(Cli, MissingBundleIsDataError) {
    const fs::path d = scratch("nobundle");
    EXPECT_EQ(run("train --scene " + (d / "absent").string() + " --out " + (d / "o").string()).code, 3);
}

TEST(Cli, DivergenceIsNumericalError) {
    const fs::path d = scratch("diverge");
    const Result r = run("train --scene " + boxBundle().string() + " --out " + d.string() + kQuick +
                         " --set total_steps=5 --set bootstrap_steps=4 --set lr_sh_dc=1e308 --set lr_sh_rest=1e308");
    EXPECT_EQ(r.code, 4) << r.out;
}

TEST(Cli, TrainImprovesAndWritesOutputs) {
    const fs::path d = scratch("train");
    const Result r = run("train --scene " + boxBundle().string() + " --out " + d.string() + kQuick +
                         " --set total_steps=60 --set bootstrap_steps=40 --checkpoint-every 30");
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char *f : {"base.ply", "env.ply", "config.txt", "metrics.csv", "test_metrics.csv",
                          "checkpoints/step_00000030/state.bin", "checkpoints/step_00000060/base.ply"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    const std::string csv = readFile((d / "metrics.csv").string());
    EXPECT_EQ(csv.rfind("# schema: reflsurf-train-metrics/1\n", 0), 0u);
    const auto rows = dataRows(d / "metrics.csv");
    ASSERT_EQ(rows.size(), 60u);
    EXPECT_EQ(column(rows[0], 2), 0.0);
    EXPECT_EQ(column(rows[59], 2), 1.0);
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 4; ++i) {
        early += column(rows[i], 11);
        late += column(rows[36 + i], 11);
    }
    EXPECT_GT(late, early + 4.0 * 3.0);
    const auto test = dataRows(d / "test_metrics.csv");
    EXPECT_EQ(test.size(), 2u);
}

TEST(Cli, ResumeReproducesUninterruptedRun) {
    const fs::path full = scratch("resume_full"), part = scratch("resume_part");
    const std::string base = "train --scene " + boxBundle().string() + kQuick +
                             " --set total_steps=30 --set bootstrap_steps=15 --checkpoint-every 0";
    ASSERT_EQ(run(base + " --out " + full.string()).code, 0);
    ASSERT_EQ(run(base + " --out " + part.string() + " --stop-after 12").code, 0);
    EXPECT_FALSE(fs::exists(part / "base.ply"));
    ASSERT_EQ(run(base + " --out " + part.string() + " --resume").code, 0);
    EXPECT_EQ(readFile((full / "metrics.csv").string()), readFile((part / "metrics.csv").string()));
    EXPECT_EQ(readFile((full / "base.ply").string()), readFile((part / "base.ply").string()));
    EXPECT_EQ(readFile((full / "env.ply").string()), readFile((part / "env.ply").string()));
}

TEST(Cli, RenderIsThreadInvariantAndDumpsGbuffer) {
    const fs::path a = scratch("render_a"), b = scratch("render_b");
    const std::string scene = " --scene " + boxBundle().string();
    ASSERT_EQ(run("render" + scene + " --out " + a.string() + " --threads 1 --dump-gbuffer").code, 0);
    ASSERT_EQ(run("render" + scene + " --out " + b.string() + " --threads 3 --chunk 4").code, 0);
    for (int i = 0; i < 4; ++i) {
        const std::string f = "view_00" + std::to_string(i) + ".png";
        EXPECT_EQ(readFile((a / f).string()), readFile((b / f).string())) << f;
    }
    for (const char *f : {"view_000_beta.png", "view_000_normal.png", "view_000_normal.pfm", "view_000_depth.pfm",
                          "view_000_base.png", "view_000_ref.png"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
    // diffuse_box blend weights are ~6e-6, below one PNG step.
    const Image beta = loadPng((a / "view_000_beta.png").string());
    for (double v : beta.data) EXPECT_EQ(v, 0.0);
}

TEST(Cli, RenderMissingCamerasIsDataError) {
    const fs::path d = scratch("render_nocam");
    const Result r = run("render --base " + (boxBundle() / "base.ply").string() + " --cameras " +
                         (d / "absent.txt").string() + " --out " + d.string());
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("absent.txt"), std::string::npos) << r.out;
}

TEST(Cli, EvalIdenticalAndMismatched) {
    const fs::path r = scratch("eval_r"), g = scratch("eval_g");
    ASSERT_EQ(run("render --scene " + boxBundle().string() + " --out " + r.string() + " --threads 1").code, 0);
    for (const auto &e : fs::directory_iterator(r)) fs::copy_file(e.path(), g / e.path().filename());
    const fs::path csv = scratch("eval_csv") / "report.csv";
    const Result ok = run("eval --renders " + r.string() + " --gt " + g.string() + " --csv " + csv.string());
    ASSERT_EQ(ok.code, 0) << ok.out;
    const auto rows = dataRows(csv);
    ASSERT_EQ(rows.size(), 5u);
    for (const auto &row : rows) {
        EXPECT_EQ(column(row, 1), 99.0);
        EXPECT_EQ(column(row, 2), 1.0);
    }
    fs::remove(g / "view_003.png");
    EXPECT_EQ(run("eval --renders " + r.string() + " --gt " + g.string()).code, 3);
}

TEST(Cli, BenchAgreesAcrossChunkSizes) {
    const fs::path csv = scratch("bench") / "bench.csv";
    const Result r = run("bench --scene " + boxBundle().string() + " --k 1,16 --floors 0.001 --rays 512 --csv " +
                         csv.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = dataRows(csv);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto &row : rows) EXPECT_LE(column(row, 6), 1e-6);
}

TEST(Cli, BenchHandlesEmptyScene) {
    const fs::path d = scratch("bench_empty");
    saveGaussians((d / "base.ply").string(), GaussianSet(SetKind::Base));
    EXPECT_EQ(run("bench --scene " + d.string() + " --k 1,4").code, 0);
}
