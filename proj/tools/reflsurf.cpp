// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// reflsurf command-line driver: train, render, eval, bench, synth.
//
#include <reflsurf/checkpoint.hpp>
#include <reflsurf/config.hpp>
#include <reflsurf/io.hpp>
#include <reflsurf/metrics.hpp>
#include <reflsurf/synth.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdarg>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace reflsurf;

namespace {

constexpr int kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4;
constexpr const char *kMetricsSchema = "# schema: reflsurf-train-metrics/1";
constexpr const char *kEvalSchema = "# schema: reflsurf-eval/1";
constexpr const char *kBenchSchema = "# schema: reflsurf-bench/1";

// Config problems that are not tied to a file key.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

__attribute__((format(printf, 1, 2))) void log(const char *fmt, ...) {
    va_list args;
    va_start(args, fmt);
    std::vfprintf(stderr, fmt, args);
    va_end(args);
    std::fputc('\n', stderr);
}

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string indexedName(const std::string &prefix, std::size_t i, const std::string &suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%03zu%s", prefix.c_str(), i, suffix.c_str());
    return buf;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string scene, config, out;
    std::vector<std::string> overrides;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    int checkpointEvery = 1000;
    int stopAfter = -1;
    int logEvery = 100;
    bool resume = false;
    bool printConfig = false;
};

std::string metricsHeader() {
    return "step,view,joint,total,rgb,l1,ssim,normal,mono,extra,mono_skipped,psnr,base_count,env_count,"
           "clones,splits,pruned";
}

std::string metricsRow(const StepMetrics &m) {
    std::ostringstream s;
    s << m.step << ',' << m.view << ',' << (m.joint ? 1 : 0) << ',' << num(m.total) << ',' << num(m.rgb)
      << ',' << num(m.l1) << ',' << num(m.ssim) << ',' << num(m.normal) << ',' << num(m.mono) << ','
      << num(m.extra) << ',' << (m.monoSkipped ? 1 : 0) << ',' << num(m.psnr) << ',' << m.baseCount << ','
      << m.envCount << ',' << m.clones << ',' << m.splits << ',' << m.pruned;
    return s.str();
}

TrainConfig buildConfig(const TrainArgs &a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        if (!fs::exists(a.config)) throw UsageError("config file " + a.config + " does not exist");
        cfg = loadConfig(a.config);
    }
    for (const auto &kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, "override must be key=value");
        setConfigValue(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed) cfg.schedule.seed = *a.seed;
    cfg.compose.threads = a.threads;
    validateConfig(cfg);
    return cfg;
}

// Keeps the rows of an earlier run that precede `step`.
std::string metricsPrefix(const std::string &path, int step) {
    if (!fs::exists(path)) return std::string(kMetricsSchema) + "\n" + metricsHeader() + "\n";
    std::istringstream in(readFile(path));
    std::string line, out;
    int lineNo = 0;
    while (std::getline(in, line)) {
        if (lineNo++ < 2) {
            out += line + "\n";
            continue;
        }
        int s = 0;
        std::from_chars(line.data(), line.data() + line.size(), s);
        if (s < step) out += line + "\n";
    }
    return out;
}

int cmdTrain(const TrainArgs &a) {
    const TrainConfig cfg = buildConfig(a);
    if (a.printConfig) {
        std::cout << formatConfig(cfg);
        return kExitOk;
    }
    const SceneBundle bundle = loadBundle(a.scene);
    TrainData data;
    data.cameras = bundle.cameras;
    data.images = bundle.images;
    data.monoNormals = bundle.monoNormals;
    data.points = bundle.points;
    try {
        data.validate();
    } catch (const ContractError &e) {
        throw IoError(a.scene, e.what());
    }
    if (data.points.size() < 4) throw IoError(a.scene, "bundle needs at least four sparse points");

    Scene scene;
    scene.base = initBaseSet(data.points, bundle.pointColors, cfg.schedule.initialBlend, cfg.schedule.seed);
    Trainer trainer(std::move(scene), std::move(data), cfg);

    fs::create_directories(a.out);
    const fs::path out(a.out);
    const std::string ckptRoot = (out / "checkpoints").string();
    const std::string configText = formatConfig(cfg);
    writeFileAtomic((out / "config.txt").string(), configText);
    if (a.resume) {
        if (const auto latest = latestCheckpoint(ckptRoot)) {
            loadCheckpoint(*latest, trainer);
            log("resumed from %s at step %d", latest->c_str(), trainer.state().step);
        } else {
            log("no checkpoint under %s, starting fresh", ckptRoot.c_str());
        }
    }
    const std::string csvPath = (out / "metrics.csv").string();
    std::string csv = metricsPrefix(csvPath, trainer.state().step);
    writeFileAtomic(csvPath, csv);
    std::ofstream rows(csvPath, std::ios::app);

    int ran = 0;
    while (!trainer.done()) {
        if (a.stopAfter >= 0 && ran >= a.stopAfter) break;
        const StepMetrics m = trainer.step();
        ++ran;
        rows << metricsRow(m) << '\n';
        if (a.logEvery > 0 && (m.step + 1) % a.logEvery == 0)
            log("step %d  loss %.5f  psnr %.2f  base %zu  env %zu%s", m.step + 1, m.total, m.psnr, m.baseCount,
                m.envCount, m.monoSkipped ? "  (mono skipped)" : "");
        if (a.checkpointEvery > 0 && trainer.state().step % a.checkpointEvery == 0) {
            rows.flush();
            saveCheckpoint(ckptRoot, trainer, configText);
        }
    }
    rows.close();
    saveCheckpoint(ckptRoot, trainer, configText);
    if (!trainer.done()) {
        log("stopped at step %d", trainer.state().step);
        return kExitOk;
    }
    saveGaussians((out / "base.ply").string(), trainer.scene().base);
    saveGaussians((out / "env.ply").string(), trainer.scene().env);

    if (!bundle.testCameras.empty()) {
        trainer.scene().refresh();
        ComposeOptions co = cfg.compose;
        co.reflection = trainer.joint();
        std::string report = std::string(kEvalSchema) + "\nimage,psnr,ssim\n";
        double sum = 0.0;
        for (std::size_t i = 0; i < bundle.testCameras.size(); ++i) {
            const Image img = composeFrame(trainer.scene(), bundle.testCameras[i], co).color;
            const ImageMetrics mm = compareImages(img, bundle.testImages[i]);
            report += indexedName("test_", i, "") + "," + num(mm.psnr) + "," + num(mm.ssim) + "\n";
            sum += mm.psnr;
        }
        writeFileAtomic((out / "test_metrics.csv").string(), report);
        log("held-out mean psnr %.3f over %zu views", sum / static_cast<double>(bundle.testCameras.size()),
            bundle.testCameras.size());
    }
    return kExitOk;
}

// ------------------------------------------------------------------ render

struct RenderArgs {
    std::string scene, base, env, cameras, out;
    bool dumpGbuffer = false;
    bool noReflection = false;
    int threads = 0;
    int chunk = kDefaultChunk;
};

Scene loadScene(const std::string &dir, const std::string &basePath, const std::string &envPath) {
    Scene s;
    const std::string base = !basePath.empty() ? basePath : (fs::path(dir) / "base.ply").string();
    s.base = loadGaussians(base);
    std::string env = envPath;
    if (env.empty() && !dir.empty() && fs::exists(fs::path(dir) / "env.ply")) env = (fs::path(dir) / "env.ply").string();
    if (!env.empty()) s.env = loadGaussians(env);
    if (s.base.kind != SetKind::Base) throw IoError(base, "expected a base set");
    if (s.env.kind != SetKind::Env) throw IoError(env, "expected an env set");
    s.refresh();
    return s;
}

int cmdRender(const RenderArgs &a) {
    if (a.scene.empty() && a.base.empty()) throw UsageError("render needs --scene or --base");
    if (a.chunk < 1 || a.chunk > kMaxChunk) throw ConfigError("chunk", "must be in [1, 256]");
    const std::string camPath = !a.cameras.empty() ? a.cameras : (fs::path(a.scene) / "cameras.txt").string();
    const std::vector<CameraModel> cams = loadCameras(camPath);
    const Scene scene = loadScene(a.scene, a.base, a.env);
    ComposeOptions co;
    co.threads = a.threads;
    co.reflection = !a.noReflection;
    co.trace.chunkSize = a.chunk;
    fs::create_directories(a.out);
    const fs::path out(a.out);
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const ComposedFrame f = composeFrame(scene, cams[i], co);
        savePng((out / indexedName("view_", i, ".png")).string(), f.color);
        if (!a.dumpGbuffer) continue;
        const GBuffer &g = f.gbuffer;
        Image beta(cams[i].width, cams[i].height, 1), depth(cams[i].width, cams[i].height, 1);
        for (std::size_t p = 0; p < g.size(); ++p) {
            beta.data[p] = g.blend[p];
            depth.data[p] = g.surfaceDepth(p);
        }
        savePng((out / indexedName("view_", i, "_beta.png")).string(), beta);
        savePng((out / indexedName("view_", i, "_normal.png")).string(),
                normalsToImage(g.normal, cams[i].width, cams[i].height, true));
        savePfm((out / indexedName("view_", i, "_normal.pfm")).string(),
                normalsToImage(g.normal, cams[i].width, cams[i].height, false));
        savePfm((out / indexedName("view_", i, "_depth.pfm")).string(), depth);
        savePng((out / indexedName("view_", i, "_base.png")).string(), g.baseColor);
        savePng((out / indexedName("view_", i, "_ref.png")).string(), f.reflection);
    }
    log("rendered %zu views to %s", cams.size(), a.out.c_str());
    return kExitOk;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::string renders, gt, csv;
};

std::vector<fs::path> imagesIn(const std::string &dir) {
    if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir)) {
        const std::string ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".pfm")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

int cmdEval(const EvalArgs &a) {
    const auto renders = imagesIn(a.renders), gts = imagesIn(a.gt);
    if (renders.size() != gts.size())
        throw IoError(a.renders, std::to_string(renders.size()) + " renders but " + std::to_string(gts.size()) +
                                    " ground-truth images in " + a.gt);
    std::string csv = std::string(kEvalSchema) + "\nimage,psnr,ssim\n";
    double sp = 0.0, ss = 0.0;
    std::printf("%-32s %10s %10s\n", "image", "PSNR", "SSIM");
    for (std::size_t i = 0; i < renders.size(); ++i) {
        const Image r = loadImage(renders[i].string()), g = loadImage(gts[i].string());
        if (!r.sameShape(g)) throw IoError(renders[i].string(), "size differs from " + gts[i].string());
        const ImageMetrics m = compareImages(r, g);
        csv += renders[i].filename().string() + "," + num(m.psnr) + "," + num(m.ssim) + "\n";
        std::printf("%-32s %10.4f %10.6f\n", renders[i].filename().string().c_str(), m.psnr, m.ssim);
        sp += m.psnr;
        ss += m.ssim;
    }
    const double n = std::max<double>(1.0, static_cast<double>(renders.size()));
    csv += "mean," + num(sp / n) + "," + num(ss / n) + "\n";
    std::printf("%-32s %10.4f %10.6f\n", "mean", sp / n, ss / n);
    if (!a.csv.empty()) writeFileAtomic(a.csv, csv);
    return kExitOk;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    std::string scene, out;
    std::vector<int> ks{1, 16};
    std::vector<double> floors{0.0, 0.9};
    long rays = 20000;
    int threads = 1;
};

int cmdBench(const BenchArgs &a) {
    const Scene scene = loadScene(a.scene, "", "");
    const std::string camPath = (fs::path(a.scene) / "cameras.txt").string();
    const std::vector<CameraModel> cams = fs::exists(camPath) ? loadCameras(camPath) : std::vector<CameraModel>{};
    for (int k : a.ks)
        if (k < 1 || k > kMaxChunk) throw ConfigError("k", "chunk sizes must be in [1, 256]");
    std::string csv = std::string(kBenchSchema) + "\nk,blend_floor,rays,seconds,rays_per_second,reflected_rays,max_diff\n";
    std::printf("%6s %12s %10s %12s %14s %10s\n", "k", "blend_floor", "rays", "seconds", "rays/s", "max_diff");
    int status = kExitOk;
    for (double floor : a.floors) {
        std::vector<Image> reference;
        for (std::size_t ki = 0; ki < a.ks.size(); ++ki) {
            ComposeOptions co;
            co.threads = a.threads;
            co.trace.chunkSize = a.ks[ki];
            co.blendFloor = floor;
            long traced = 0, reflected = 0;
            double maxDiff = 0.0;
            std::vector<Image> frames;
            const auto t0 = std::chrono::steady_clock::now();
            for (std::size_t c = 0; !cams.empty() && traced < a.rays; c = (c + 1) % cams.size()) {
                const ComposedFrame f = composeFrame(scene, cams[c], co);
                traced += static_cast<long>(cams[c].pixelCount());
                for (const auto &r : f.reflected) reflected += r.active ? 1 : 0;
                if (frames.size() < cams.size()) frames.push_back(f.color);
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (ki == 0) reference = frames;
            for (std::size_t i = 0; i < frames.size(); ++i)
                for (std::size_t p = 0; p < frames[i].data.size(); ++p)
                    maxDiff = std::max(maxDiff, std::abs(frames[i].data[p] - reference[i].data[p]));
            if (maxDiff > 1e-6) status = kExitNumeric;
            const double rate = secs > 0.0 ? static_cast<double>(traced) / secs : 0.0;
            csv += std::to_string(a.ks[ki]) + "," + num(floor) + "," + std::to_string(traced) + "," + num(secs) +
                   "," + num(rate) + "," + std::to_string(reflected) + "," + num(maxDiff) + "\n";
            std::printf("%6d %12.3f %10ld %12.4f %14.1f %10.2e\n", a.ks[ki], floor, traced, secs, rate, maxDiff);
        }
    }
    if (cams.empty()) log("no cameras in %s: nothing to trace", a.scene.c_str());
    if (!a.out.empty()) writeFileAtomic(a.out, csv);
    if (status != kExitOk) log("outputs differ across k beyond 1e-6");
    return status;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    std::string name, out;
    SyntheticOptions opts;
};

int cmdSynth(SynthArgs a) {
    const auto names = syntheticNames();
    if (std::find(names.begin(), names.end(), a.name) == names.end())
        throw ConfigError("name", "unknown synthetic scene '" + a.name + "'");
    const SceneBundle b = makeSynthetic(a.name, a.opts);
    saveBundle(a.out, b);
    log("wrote %s (%zu base, %zu env surfels, %zu views) to %s", a.name.c_str(), b.base.size(), b.env.size(),
        b.cameras.size(), a.out.c_str());
    return kExitOk;
}

std::string configKeyHelp() {
    std::string s = "Config keys (flat `key = value` file, or --set key=value):\n";
    for (const auto &k : configKeys()) {
        s += "  " + k.name + " (default " + k.defaultValue + ")\n      " + k.help + "\n";
    }
    return s;
}

template <class F> int guarded(F &&f) {
    try {
        return f();
    } catch (const ConfigError &e) {
        log("config error: %s", e.what());
        return kExitConfig;
    } catch (const UsageError &e) {
        log("config error: %s", e.what());
        return kExitConfig;
    } catch (const IoError &e) {
        log("data error: %s", e.what());
        return kExitData;
    } catch (const NumericalError &e) {
        log("numerical failure: %s", e.what());
        return kExitNumeric;
    } catch (const ContractError &e) {
        log("data error: %s", e.what());
        return kExitData;
    } catch (const std::exception &e) {
        log("error: %s", e.what());
        return kExitData;
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Reflective surfel scenes: train, render, evaluate, benchmark, synthesize"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto *train = app.add_subcommand("train", "Optimize a scene bundle");
    train->add_option("--scene", ta.scene, "Scene bundle directory (bundle.txt)")->required();
    train->add_option("--config", ta.config, "Training config file (key = value)");
    train->add_option("--out", ta.out, "Output directory")->required();
    train->add_option("--set", ta.overrides, "Override a config key, key=value (repeatable)");
    train->add_option("--threads", ta.threads, "Worker threads, 0 = all cores (1 is bit-reproducible)");
    train->add_option("--seed", ta.seed, "Override the seed key");
    train->add_option("--checkpoint-every", ta.checkpointEvery, "Steps between checkpoints (0 = final only)");
    train->add_option("--stop-after", ta.stopAfter, "Stop after this many steps of this invocation");
    train->add_option("--log-every", ta.logEvery, "Steps between progress lines on stderr");
    train->add_flag("--resume", ta.resume, "Continue from the latest checkpoint under OUT/checkpoints");
    train->add_flag("--print-config", ta.printConfig, "Print the effective config and exit");
    train->footer(configKeyHelp());

    RenderArgs ra;
    auto *render = app.add_subcommand("render", "Render PNGs for a set of cameras");
    render->add_option("--scene", ra.scene, "Directory holding base.ply, optional env.ply and cameras.txt");
    render->add_option("--base", ra.base, "Base set PLY (overrides SCENE/base.ply)");
    render->add_option("--env", ra.env, "Env set PLY (overrides SCENE/env.ply)");
    render->add_option("--cameras", ra.cameras, "Camera file (overrides SCENE/cameras.txt)");
    render->add_option("--out", ra.out, "Output directory")->required();
    render->add_flag("--dump-gbuffer", ra.dumpGbuffer,
                     "Also write blend, normal, depth, base-color and reflection images");
    render->add_flag("--no-reflection", ra.noReflection, "Base pass only");
    render->add_option("--threads", ra.threads, "Worker threads, 0 = all cores");
    render->add_option("--chunk", ra.chunk, "k-buffer size per traversal round");

    EvalArgs ea;
    auto *eval = app.add_subcommand("eval", "PSNR and SSIM of renders against ground truth");
    eval->add_option("--renders", ea.renders, "Directory of rendered PNG/PFM images")->required();
    eval->add_option("--gt", ea.gt, "Directory of ground-truth images, matched by sorted name")->required();
    eval->add_option("--csv", ea.csv, "Write the per-image report here");

    BenchArgs ba;
    auto *bench = app.add_subcommand("bench", "Tracing throughput across chunk sizes and blend floors");
    bench->add_option("--scene", ba.scene, "Directory holding base.ply, optional env.ply and cameras.txt")->required();
    bench->add_option("--k", ba.ks, "Chunk sizes to compare")->delimiter(',');
    bench->add_option("--floors", ba.floors, "Reflection blend floors to compare")->delimiter(',');
    bench->add_option("--rays", ba.rays, "Camera rays per configuration");
    bench->add_option("--threads", ba.threads, "Worker threads");
    bench->add_option("--csv", ba.out, "Write the report here");

    SynthArgs sa;
    auto *synth = app.add_subcommand("synth", "Write a synthetic scene bundle");
    synth->add_option("--name", sa.name, "mirror_wall, sphere_probe or diffuse_box")->required();
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--seed", sa.opts.seed, "Generator seed");
    synth->add_option("--width", sa.opts.width, "Image width");
    synth->add_option("--height", sa.opts.height, "Image height");
    synth->add_option("--views", sa.opts.trainViews, "Training views");
    synth->add_option("--test-views", sa.opts.testViews, "Held-out views");
    synth->add_option("--threads", sa.opts.threads, "Worker threads for the ground-truth renders");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (train->parsed()) return guarded([&] { return cmdTrain(ta); });
    if (render->parsed()) return guarded([&] { return cmdRender(ra); });
    if (eval->parsed()) return guarded([&] { return cmdEval(ea); });
    if (bench->parsed()) return guarded([&] { return cmdBench(ba); });
    if (synth->parsed()) return guarded([&] { return cmdSynth(sa); });
    return kExitConfig;
}
