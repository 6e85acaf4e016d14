// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/config.hpp>
#include <reflsurf/io.hpp>

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

namespace reflsurf {

namespace {

std::string trim(const std::string &s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string show(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}
template <class I> std::string showInt(I v) { return std::to_string(v); }
std::string showBool(bool v) { return v ? "true" : "false"; }

double parseDouble(const std::string &key, const std::string &v) {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
    return out;
}
template <class I> I parseInt(const std::string &key, const std::string &v) {
    I out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return out;
}
bool parseBool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

struct Entry {
    const char *name;
    const char *help;
    std::function<std::string(const TrainConfig &)> get;
    std::function<void(TrainConfig &, const std::string &, const std::string &)> set;
};

#define REAL(key, field, help)                                                                     \
    Entry{key, help, [](const TrainConfig &c) { return show(c.field); },                           \
          [](TrainConfig &c, const std::string &k, const std::string &v) { c.field = parseDouble(k, v); }}
#define INT(key, field, type, help)                                                               \
    Entry{key, help, [](const TrainConfig &c) { return showInt(c.field); },                        \
          [](TrainConfig &c, const std::string &k, const std::string &v) { c.field = parseInt<type>(k, v); }}
#define BOOL(key, field, help)                                                                     \
    Entry{key, help, [](const TrainConfig &c) { return showBool(c.field); },                       \
          [](TrainConfig &c, const std::string &k, const std::string &v) { c.field = parseBool(k, v); }}

const std::vector<Entry> &entries() {
    static const std::vector<Entry> table = {
        REAL("lambda_norm", loss.lambdaNorm, "weight of the depth/normal consistency term"),
        REAL("lambda_mono", loss.lambdaMono, "weight of the monocular normal term"),
        REAL("lambda_extra", loss.lambdaExtra, "weight of the pluggable extra term"),
        REAL("l1_weight", loss.l1Weight, "L1 share of the color loss"),
        REAL("ssim_weight", loss.ssimWeight, "D-SSIM share of the color loss"),
        REAL("normal_alpha_floor", loss.normalAlphaFloor, "minimum alpha for normal-consistency pixels"),
        INT("total_steps", schedule.totalSteps, int, "number of optimization steps"),
        INT("bootstrap_steps", schedule.bootstrapSteps, int, "base-only steps before the env set joins"),
        BOOL("joint_optimization", schedule.jointOptimization, "create and train the env set after bootstrap"),
        INT("densify_interval", schedule.densifyInterval, int, "steps between densification events"),
        INT("densify_start", schedule.densifyStart, int, "first step that may densify"),
        INT("densify_stop", schedule.densifyStop, int, "last step that may densify"),
        REAL("densify_threshold", schedule.densifyThreshold, "mean depth-scaled positional gradient that triggers densification"),
        REAL("percent_dense", schedule.percentDense, "clone below, split above this fraction of the scene extent"),
        REAL("split_factor", schedule.splitFactor, "scale divisor for split children"),
        REAL("prune_opacity", schedule.pruneOpacity, "surfels below this opacity are removed"),
        INT("env_grid", schedule.envGrid, int, "env initialization grid resolution per axis"),
        INT("env_samples_per_cell", schedule.envSamplesPerCell, int, "env surfels sampled per grid cell"),
        REAL("env_quantile", schedule.envQuantile, "point quantile defining the env bounds"),
        INT("env_cap", schedule.envCap, std::size_t, "maximum env surfels kept after densification"),
        REAL("initial_blend", schedule.initialBlend, "blend weight of base surfels created from points"),
        REAL("lr_position_init", schedule.lr.positionInit, "initial position rate, times the scene extent"),
        REAL("lr_position_final", schedule.lr.positionFinal, "final position rate, times the scene extent"),
        REAL("lr_rotation", schedule.lr.rotation, "quaternion learning rate"),
        REAL("lr_scale", schedule.lr.scale, "log-scale learning rate"),
        REAL("lr_opacity", schedule.lr.opacity, "raw opacity learning rate"),
        REAL("lr_sh_dc", schedule.lr.shDc, "degree-0 SH learning rate"),
        REAL("lr_sh_rest", schedule.lr.shRest, "degree-1 and -2 SH learning rate"),
        REAL("lr_blend", schedule.lr.blend, "raw blend weight learning rate"),
        INT("seed", schedule.seed, std::uint64_t, "seed for view order, densification and env init"),
        INT("chunk_size", compose.trace.chunkSize, int, "k-buffer size per traversal round"),
        REAL("reflection_alpha_floor", compose.alphaFloor, "minimum base alpha for a reflected ray"),
        REAL("reflection_blend_floor", compose.blendFloor, "minimum blend weight for a reflected ray"),
        REAL("origin_offset", compose.originOffset, "reflected-ray origin offset; negative picks 1e-4 of the scene diagonal"),
    };
    return table;
}

#undef REAL
#undef INT
#undef BOOL

const Entry &find(const std::string &key) {
    for (const auto &e : entries())
        if (key == e.name) return e;
    throw ConfigError(key, "unknown key");
}

std::string firstWord(const std::string &s) {
    const auto end = s.find_first_of(" :");
    return s.substr(0, end);
}

} // namespace

std::vector<ConfigKeyInfo> configKeys() {
    const TrainConfig defaults;
    std::vector<ConfigKeyInfo> out;
    for (const auto &e : entries()) out.push_back({e.name, e.help, e.get(defaults)});
    return out;
}

void setConfigValue(TrainConfig &cfg, const std::string &key, const std::string &value) {
    find(key).set(cfg, key, value);
}

std::string getConfigValue(const TrainConfig &cfg, const std::string &key) { return find(key).get(cfg); }

void validateConfig(const TrainConfig &cfg) {
    try {
        cfg.loss.validate();
        cfg.schedule.validate();
        if (cfg.compose.trace.chunkSize < 1 || cfg.compose.trace.chunkSize > kMaxChunk)
            throw ContractError("chunk_size must be in [1, " + std::to_string(kMaxChunk) + "]");
    } catch (const ContractError &e) {
        throw ConfigError(firstWord(e.what()), e.what());
    }
}

TrainConfig parseConfig(const std::string &text, const std::string &name) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", name + ":" + std::to_string(lineNo) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(key, "given twice (" + name + ":" + std::to_string(lineNo) + ")");
        setConfigValue(cfg, key, value);
    }
    validateConfig(cfg);
    return cfg;
}

TrainConfig loadConfig(const std::string &path) { return parseConfig(readFile(path), path); }

std::string formatConfig(const TrainConfig &cfg) {
    std::string out;
    for (const auto &e : entries()) out += std::string(e.name) + " = " + e.get(cfg) + "\n";
    return out;
}

} // namespace reflsurf
