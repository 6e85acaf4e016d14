// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/checkpoint.hpp>
#include <reflsurf/io.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

namespace reflsurf {

namespace {

namespace fs = std::filesystem;

constexpr char kMagic[8] = {'R', 'S', 'S', 'T', 'A', 'T', 'E', '1'};

struct Writer {
    std::string out;
    template <class T> void pod(T v) { out.append(reinterpret_cast<const char *>(&v), sizeof(T)); }
    template <class T> void array(const std::vector<T> &v) {
        pod<std::uint64_t>(v.size());
        out.append(reinterpret_cast<const char *>(v.data()), v.size() * sizeof(T));
    }
};

struct Reader {
    const std::string &in;
    const std::string &name;
    std::size_t pos = 0;
    void need(std::size_t n) {
        if (in.size() - pos < n)
            throw IoError(name, "truncated optimizer state: need " + std::to_string(n) + " more bytes, have " +
                                    std::to_string(in.size() - pos),
                          pos);
    }
    template <class T> T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    template <class T> std::vector<T> array() {
        const auto n = pod<std::uint64_t>();
        if (n > (in.size() - pos) / sizeof(T)) need(n * sizeof(T));
        std::vector<T> v(n);
        std::memcpy(v.data(), in.data() + pos, n * sizeof(T));
        pos += n * sizeof(T);
        return v;
    }
};

void writeAdam(Writer &w, const AdamState &a) {
    w.pod<std::int32_t>(a.stride);
    w.pod<std::uint64_t>(a.steps);
    w.array(a.m);
    w.array(a.v);
}

AdamState readAdam(Reader &r) {
    AdamState a;
    a.stride = r.pod<std::int32_t>();
    a.steps = r.pod<std::uint64_t>();
    a.m = r.array<double>();
    a.v = r.array<double>();
    if (a.m.size() != a.v.size()) throw IoError(r.name, "Adam moment sizes differ", r.pos);
    return a;
}

void writeStats(Writer &w, const DensifyStats &s) {
    w.array(s.positional);
    w.array(s.views);
    w.array(s.weight);
}

DensifyStats readStats(Reader &r) {
    DensifyStats s;
    s.positional = r.array<double>();
    s.views = r.array<std::uint32_t>();
    s.weight = r.array<double>();
    if (s.views.size() != s.positional.size() || s.weight.size() != s.positional.size())
        throw IoError(r.name, "densification statistic sizes differ", r.pos);
    return s;
}

std::string stepName(int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08d", step);
    return buf;
}

} // namespace

std::string encodeTrainerState(const TrainerState &state) {
    static_assert(std::endian::native == std::endian::little, "sidecar is little-endian");
    Writer w;
    w.out.append(kMagic, sizeof(kMagic));
    w.pod<std::int64_t>(state.step);
    w.pod<std::uint8_t>(state.envInitialized ? 1 : 0);
    writeAdam(w, state.baseAdam);
    writeAdam(w, state.envAdam);
    writeStats(w, state.baseStats);
    writeStats(w, state.envStats);
    std::vector<std::int32_t> order(state.order.begin(), state.order.end());
    w.array(order);
    w.pod<std::uint64_t>(state.orderPos);
    std::ostringstream rng;
    rng << state.rng;
    const std::string text = rng.str();
    w.array(std::vector<char>(text.begin(), text.end()));
    return w.out;
}

TrainerState decodeTrainerState(const std::string &bytes, const std::string &name) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError(name, "not an optimizer state file", 0);
    Reader r{bytes, name, sizeof(kMagic)};
    TrainerState s;
    s.step = static_cast<int>(r.pod<std::int64_t>());
    s.envInitialized = r.pod<std::uint8_t>() != 0;
    s.baseAdam = readAdam(r);
    s.envAdam = readAdam(r);
    s.baseStats = readStats(r);
    s.envStats = readStats(r);
    const auto order = r.array<std::int32_t>();
    s.order.assign(order.begin(), order.end());
    s.orderPos = r.pod<std::uint64_t>();
    const auto text = r.array<char>();
    std::istringstream rng(std::string(text.begin(), text.end()));
    rng >> s.rng;
    if (!rng) throw IoError(name, "bad random engine state", r.pos);
    if (r.pos != bytes.size()) throw IoError(name, "trailing bytes after optimizer state", r.pos);
    return s;
}

std::string saveCheckpoint(const std::string &root, const Trainer &trainer, const std::string &configText) {
    const fs::path final = fs::path(root) / stepName(trainer.state().step);
    const fs::path tmp = fs::path(root) / (stepName(trainer.state().step) + ".tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    saveGaussians((tmp / "base.ply").string(), trainer.scene().base);
    saveGaussians((tmp / "env.ply").string(), trainer.scene().env);
    writeFileAtomic((tmp / "state.bin").string(), encodeTrainerState(trainer.state()));
    if (!configText.empty()) writeFileAtomic((tmp / "config.txt").string(), configText);
    fs::remove_all(final);
    fs::rename(tmp, final);
    return final.string();
}

void loadCheckpoint(const std::string &dir, Trainer &trainer) {
    const fs::path d(dir);
    GaussianSet base = loadGaussians((d / "base.ply").string());
    GaussianSet env = loadGaussians((d / "env.ply").string());
    const std::string statePath = (d / "state.bin").string();
    TrainerState state = decodeTrainerState(readFile(statePath), statePath);
    if (base.kind != SetKind::Base || env.kind != SetKind::Env)
        throw IoError(dir, "checkpoint sets have the wrong kinds");
    auto matches = [](const AdamState &a, const DensifyStats &s, const GaussianSet &set) {
        return a.size() == set.size() && a.stride == AdamState::kBaseStride - (set.hasBlend() ? 0 : 1) &&
               s.size() == set.size();
    };
    if (!matches(state.baseAdam, state.baseStats, base) || !matches(state.envAdam, state.envStats, env))
        throw IoError(statePath, "optimizer state does not match the checkpoint sets");
    for (int v : state.order)
        if (v < 0 || static_cast<std::size_t>(v) >= trainer.data().cameras.size())
            throw IoError(statePath, "view order refers to camera " + std::to_string(v) + " which does not exist");
    trainer.scene().base = std::move(base);
    trainer.scene().env = std::move(env);
    trainer.scene().refresh();
    trainer.state() = std::move(state);
}

std::optional<std::string> latestCheckpoint(const std::string &root) {
    if (!fs::is_directory(root)) return std::nullopt;
    std::optional<fs::path> best;
    for (const auto &e : fs::directory_iterator(root)) {
        const std::string n = e.path().filename().string();
        if (!e.is_directory() || n.rfind("step_", 0) != 0 || n.ends_with(".tmp")) continue;
        if (!fs::exists(e.path() / "state.bin")) continue;
        if (!best || n > best->filename().string()) best = e.path();
    }
    if (!best) return std::nullopt;
    return best->string();
}

} // namespace reflsurf
