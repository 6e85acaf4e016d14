// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/metrics.hpp>
#include <reflsurf/optim.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reflsurf {

namespace {

constexpr int kCenter = 0, kRotation = 3, kScale = 7, kOpacity = 9, kSh = 10,
              kBlend = 10 + kShCoeffCount;

void requireNonNegative(double v, const char *name) {
    if (!(v >= 0.0)) throw ContractError(std::string(name) + " must be >= 0");
}

Vec4 uniformQuaternion(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q / q.norm();
}

} // namespace

void LossConfig::validate() const {
    requireNonNegative(lambdaNorm, "lambda_norm");
    requireNonNegative(lambdaMono, "lambda_mono");
    requireNonNegative(lambdaExtra, "lambda_extra");
    requireNonNegative(l1Weight, "l1_weight");
    requireNonNegative(ssimWeight, "ssim_weight");
    requireNonNegative(normalAlphaFloor, "normal_alpha_floor");
}

void TrainSchedule::validate() const {
    if (totalSteps <= 0) throw ContractError("total_steps must be > 0");
    if (bootstrapSteps < 0 || bootstrapSteps >= totalSteps)
        throw ContractError("bootstrap_steps must be in [0, total_steps)");
    if (densifyInterval <= 0) throw ContractError("densify_interval must be > 0");
    requireNonNegative(densifyThreshold, "densify_threshold");
    if (!(splitFactor > 0.0)) throw ContractError("split_factor must be > 0");
    requireNonNegative(pruneOpacity, "prune_opacity");
    if (envGrid <= 0) throw ContractError("env_grid must be > 0");
    if (envSamplesPerCell <= 0) throw ContractError("env_samples_per_cell must be > 0");
    if (!(envQuantile > 0.5 && envQuantile <= 1.0))
        throw ContractError("env_quantile must be in (0.5, 1]");
    if (!(initialBlend > 0.0 && initialBlend < 1.0))
        throw ContractError("initial_blend must be in (0, 1)");
    requireNonNegative(lr.positionInit, "lr_position_init");
    requireNonNegative(lr.positionFinal, "lr_position_final");
    requireNonNegative(lr.rotation, "lr_rotation");
    requireNonNegative(lr.scale, "lr_scale");
    requireNonNegative(lr.opacity, "lr_opacity");
    requireNonNegative(lr.shDc, "lr_sh_dc");
    requireNonNegative(lr.shRest, "lr_sh_rest");
    requireNonNegative(lr.blend, "lr_blend");
}

void AdamState::reset(const GaussianSet &set) {
    stride = kBaseStride - (set.hasBlend() ? 0 : 1);
    m.assign(set.size() * static_cast<std::size_t>(stride), 0.0);
    v = m;
    steps = 0;
}

double positionLearningRate(const LearningRates &lr, double extent, int step, int totalSteps) {
    if (lr.positionInit <= 0.0 || lr.positionFinal <= 0.0) return lr.positionInit * extent;
    const double t = std::clamp(static_cast<double>(step) / std::max(1, totalSteps), 0.0, 1.0);
    return extent * std::exp((1.0 - t) * std::log(lr.positionInit) + t * std::log(lr.positionFinal));
}

void adamStep(GaussianSet &set, const GradStore &grads, AdamState &state, const LearningRates &lr,
              double positionLr) {
    if (grads.size() != set.size() || state.size() != set.size())
        throw ContractError("adamStep: state does not match the set");
    ++state.steps;
    const double t = static_cast<double>(state.steps);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    const auto stride = static_cast<std::size_t>(state.stride);
    auto update = [&](std::size_t slot, double &param, double g, double rate) {
        double &m = state.m[slot];
        double &v = state.v[slot];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
        param -= rate * (m / c1) / (std::sqrt(v / c2) + kAdamEpsilon);
    };
    for (std::size_t i = 0; i < set.size(); ++i) {
        const std::size_t base = i * stride;
        for (int k = 0; k < 3; ++k)
            update(base + kCenter + k, set.centers[i][k], grads.dCenter[i][k], positionLr);
        for (int k = 0; k < 4; ++k)
            update(base + kRotation + k, set.rotations[i][k], grads.dRotation[i][k], lr.rotation);
        for (int k = 0; k < 2; ++k)
            update(base + kScale + k, set.logScales[i][k], grads.dLogScales[i][k], lr.scale);
        update(base + kOpacity, set.rawOpacity[i], grads.dRawOpacity[i], lr.opacity);
        for (int k = 0; k < kShCoeffCount; ++k) {
            const double rate = k % kShBasisCount == 0 ? lr.shDc : lr.shRest;
            update(base + kSh + static_cast<std::size_t>(k), set.sh[i][static_cast<std::size_t>(k)],
                   grads.dSh[i][static_cast<std::size_t>(k)], rate);
        }
        if (set.hasBlend()) update(base + kBlend, set.rawBlend[i], grads.dRawBlend[i], lr.blend);
        const double qn = set.rotations[i].norm();
        if (qn > 0.0) set.rotations[i] /= qn;
    }
    set.touch();
}

Aabb quantileBounds(const std::vector<Vec3> &points, double quantile) {
    if (points.size() < 2) throw ContractError("quantileBounds: need at least two points");
    Aabb box;
    std::vector<double> axis(points.size());
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < points.size(); ++i) axis[i] = points[i][a];
        std::sort(axis.begin(), axis.end());
        auto at = [&](double q) {
            const double pos = q * static_cast<double>(axis.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, axis.size() - 1);
            return axis[lo] + (pos - static_cast<double>(lo)) * (axis[hi] - axis[lo]);
        };
        box.lo[a] = at(1.0 - quantile);
        box.hi[a] = at(quantile);
    }
    const Vec3 ext = box.extent();
    const double pad = 1e-3 * std::max(ext.maxCoeff(), 1.0);
    for (int a = 0; a < 3; ++a) {
        if (ext[a] > 0.0) continue;
        box.lo[a] -= 0.5 * pad;
        box.hi[a] += 0.5 * pad;
    }
    return box;
}

GaussianSet initEnvSet(const std::vector<Vec3> &points, const EnvInitOptions &opts) {
    if (opts.grid <= 0 || opts.samplesPerCell <= 0)
        throw ContractError("initEnvSet: grid and samples per cell must be positive");
    const Aabb box = quantileBounds(points, opts.quantile);
    const int n = opts.grid;
    const Vec3 cell = box.extent() / n;
    const double scale = 0.5 * cell.mean();
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GaussianSet set(SetKind::Env);
    set.reserve(static_cast<std::size_t>(n) * n * n * static_cast<std::size_t>(opts.samplesPerCell));
    Gaussian2D g;
    g.logScales = Vec2::Constant(std::log(scale));
    g.rawOpacity = logit(0.1);
    g.sh.fill(0.0);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (int k = 0; k < opts.samplesPerCell; ++k) {
                    const Vec3 local(x + unit(rng), y + unit(rng), z + unit(rng));
                    g.center = box.lo + cell.cwiseProduct(local);
                    g.rotation = uniformQuaternion(rng);
                    set.push_back(g);
                }
    return set;
}

GaussianSet initBaseSet(const std::vector<Vec3> &points, const std::vector<Vec3> &colors,
                        double initialBlend, std::uint64_t seed) {
    if (points.size() < 4) throw ContractError("initBaseSet: need at least four points");
    if (!colors.empty() && colors.size() != points.size())
        throw ContractError("initBaseSet: color count differs from point count");
    constexpr std::size_t kNeighbours = 8;
    std::mt19937_64 rng(seed);
    GaussianSet set(SetKind::Base);
    set.reserve(points.size());
    std::vector<std::pair<double, std::size_t>> dist(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < points.size(); ++j)
            dist[j] = {(points[j] - points[i]).squaredNorm(), j};
        const std::size_t k = std::min(kNeighbours + 1, points.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        Vec3 mean = Vec3::Zero();
        for (std::size_t j = 0; j < k; ++j) mean += points[dist[j].second];
        mean /= static_cast<double>(k);
        Mat3 cov = Mat3::Zero();
        for (std::size_t j = 0; j < k; ++j) {
            const Vec3 d = points[dist[j].second] - mean;
            cov += d * d.transpose();
        }
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3 normal = eig.eigenvectors().col(0).normalized();
        // random in-plane orientation
        const Eigen::Quaterniond align = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal);
        std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
        const Eigen::Quaterniond q = align * Eigen::Quaterniond(Eigen::AngleAxisd(angle(rng), Vec3::UnitZ()));
        double meanSq = 0.0;
        const std::size_t nn = std::min<std::size_t>(3, k - 1);
        for (std::size_t j = 1; j <= nn; ++j) meanSq += dist[j].first;
        meanSq /= static_cast<double>(std::max<std::size_t>(nn, 1));

        Gaussian2D g;
        g.center = points[i];
        g.rotation = Vec4(q.w(), q.x(), q.y(), q.z()).normalized();
        g.logScales = Vec2::Constant(std::log(std::max(std::sqrt(meanSq), 1e-7)));
        g.rawOpacity = logit(0.1);
        g.sh.fill(0.0);
        const Vec3 c = colors.empty() ? Vec3::Constant(0.5) : colors[i];
        for (int ch = 0; ch < 3; ++ch) g.sh[static_cast<std::size_t>(ch * kShBasisCount)] = (c[ch] - 0.5) / kShC0;
        g.rawBlend = logit(initialBlend);
        set.push_back(g);
    }
    return set;
}

void DensifyStats::reset(std::size_t n) {
    positional.assign(n, 0.0);
    views.assign(n, 0);
    weight.assign(n, 0.0);
}

void DensifyStats::accumulate(const GradStore &step) {
    if (step.size() != size()) throw ContractError("DensifyStats: size mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
        positional[i] += step.positionalNorm[i];
        views[i] += step.hitCount[i] > 0 ? 1u : 0u;
        weight[i] += step.weight[i];
    }
}

DensifyReport densifyAndPrune(GaussianSet &set, const DensifyStats &stats,
                              const DensifyParams &params, std::mt19937_64 &rng) {
    if (stats.size() != set.size()) throw ContractError("densifyAndPrune: statistics size mismatch");
    DensifyReport report;
    const std::size_t n = set.size();
    GaussianSet out(set.kind);
    out.reserve(n);
    std::vector<double> weight;
    std::vector<Gaussian2D> clones, children;
    std::vector<double> cloneWeight, childWeight;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = stats.views[i] > 0 ? stats.positional[i] / stats.views[i] : 0.0;
        const Gaussian2D g = set.get(i);
        if (!(mean > 0.0 && mean >= params.threshold)) {
            out.push_back(g);
            report.source.push_back(static_cast<std::int64_t>(i));
            weight.push_back(stats.weight[i]);
            continue;
        }
        if (g.scales().maxCoeff() <= params.cloneMaxScale) {
            out.push_back(g);
            report.source.push_back(static_cast<std::int64_t>(i));
            weight.push_back(stats.weight[i]);
            clones.push_back(g);
            cloneWeight.push_back(stats.weight[i]);
            ++report.clones;
            continue;
        }
        const Mat3 R = rotationMatrix(g.rotation);
        const Vec2 s = g.scales();
        for (int c = 0; c < 2; ++c) {
            Gaussian2D child = g;
            child.center = g.center + R.col(0) * (s.x() * normal(rng)) + R.col(1) * (s.y() * normal(rng));
            child.logScales = g.logScales.array() - std::log(params.splitFactor);
            children.push_back(child);
            childWeight.push_back(stats.weight[i]);
        }
        ++report.splits;
    }
    for (std::size_t i = 0; i < clones.size(); ++i) {
        out.push_back(clones[i]);
        report.source.push_back(-1);
        weight.push_back(cloneWeight[i]);
    }
    for (std::size_t i = 0; i < children.size(); ++i) {
        out.push_back(children[i]);
        report.source.push_back(-1);
        weight.push_back(childWeight[i]);
    }

    std::vector<char> keep(out.size(), 1);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.opacity(i) < params.pruneOpacity) keep[i] = 0;
    if (params.cap > 0) {
        std::vector<std::size_t> alive;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (keep[i]) alive.push_back(i);
        if (alive.size() > params.cap) {
            std::stable_sort(alive.begin(), alive.end(),
                             [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
            for (std::size_t j = params.cap; j < alive.size(); ++j) keep[alive[j]] = 0;
        }
    }
    std::vector<std::int64_t> source;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (keep[i]) source.push_back(report.source[i]);
        else ++report.pruned;
    }
    out.compact(keep);
    report.source = std::move(source);
    set = std::move(out);
    set.touch();
    return report;
}

void remapAdam(AdamState &state, const std::vector<std::int64_t> &source) {
    const auto stride = static_cast<std::size_t>(state.stride);
    std::vector<double> m(source.size() * stride, 0.0), v(m.size(), 0.0);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] < 0) continue;
        const auto from = static_cast<std::size_t>(source[i]) * stride;
        std::copy_n(state.m.begin() + static_cast<std::ptrdiff_t>(from), stride,
                    m.begin() + static_cast<std::ptrdiff_t>(i * stride));
        std::copy_n(state.v.begin() + static_cast<std::ptrdiff_t>(from), stride,
                    v.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    state.m = std::move(m);
    state.v = std::move(v);
}

void TrainData::validate() const {
    if (cameras.empty()) throw ContractError("training data has no cameras");
    if (cameras.size() != images.size())
        throw ContractError("camera count (" + std::to_string(cameras.size()) +
                            ") differs from image count (" + std::to_string(images.size()) + ")");
    if (!monoNormals.empty() && monoNormals.size() != cameras.size())
        throw ContractError("mono normal map count differs from camera count");
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        cameras[i].validate(1e-3);
        if (images[i].width != cameras[i].width || images[i].height != cameras[i].height ||
            images[i].channels != 3)
            throw ContractError("image " + std::to_string(i) + " does not match its camera");
        if (!monoNormals.empty() && !monoNormals[i].empty() &&
            monoNormals[i].size() != cameras[i].pixelCount())
            throw ContractError("mono normal map " + std::to_string(i) + " does not match its camera");
    }
}

double cameraExtent(const std::vector<CameraModel> &cameras) {
    if (cameras.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto &c : cameras) mean += c.center();
    mean /= static_cast<double>(cameras.size());
    double radius = 0.0;
    for (const auto &c : cameras) radius = std::max(radius, (c.center() - mean).norm());
    return 1.1 * (radius > 0.0 ? radius : 1.0);
}

Trainer::Trainer(Scene scene, TrainData data, TrainConfig cfg)
    : scene_(std::move(scene)), data_(std::move(data)), cfg_(std::move(cfg)) {
    cfg_.loss.validate();
    cfg_.schedule.validate();
    data_.validate();
    if (scene_.base.kind != SetKind::Base || scene_.env.kind != SetKind::Env)
        throw ContractError("Trainer: scene sets have the wrong kinds");
    extent_ = cameraExtent(data_.cameras);
    state_.rng.seed(cfg_.schedule.seed);
    state_.baseAdam.reset(scene_.base);
    state_.envAdam.reset(scene_.env);
    state_.baseStats.reset(scene_.base.size());
    state_.envStats.reset(scene_.env.size());
    scene_.refresh();
}

int Trainer::nextView() {
    if (state_.orderPos >= state_.order.size()) {
        state_.order.resize(data_.cameras.size());
        std::iota(state_.order.begin(), state_.order.end(), 0);
        std::shuffle(state_.order.begin(), state_.order.end(), state_.rng);
        state_.orderPos = 0;
    }
    return state_.order[state_.orderPos++];
}

StepMetrics Trainer::step() {
    const TrainSchedule &sch = cfg_.schedule;
    const LossConfig &lc = cfg_.loss;
    const int s = state_.step;
    if (!state_.envInitialized && s >= sch.bootstrapSteps && sch.jointOptimization) {
        if (scene_.env.empty()) {
            EnvInitOptions eo;
            eo.grid = sch.envGrid;
            eo.samplesPerCell = sch.envSamplesPerCell;
            eo.quantile = sch.envQuantile;
            eo.seed = sch.seed ^ 0x9e3779b97f4a7c15ULL;
            scene_.env = initEnvSet(data_.points, eo);
        }
        state_.envAdam.reset(scene_.env);
        state_.envStats.reset(scene_.env.size());
        state_.envInitialized = true;
    }

    StepMetrics m;
    m.step = s;
    m.joint = state_.envInitialized;
    m.view = nextView();
    const CameraModel &cam = data_.cameras[static_cast<std::size_t>(m.view)];
    const Image &gt = data_.images[static_cast<std::size_t>(m.view)];

    scene_.refresh();
    ComposeOptions co = cfg_.compose;
    co.reflection = state_.envInitialized;
    const ComposedFrame frame = composeFrame(scene_, cam, co);

    const RgbLoss rgb = lossRgb(frame.color, gt, lc.l1Weight, lc.ssimWeight);
    m.rgb = rgb.value;
    m.l1 = rgb.l1;
    m.ssim = rgb.ssim;
    m.psnr = psnr(frame.color, gt);
    FrameGrad fg;
    fg.color = rgb.grad;
    const std::size_t np = cam.pixelCount();
    auto addNormal = [&](const std::vector<Vec3> &g, double w) {
        if (fg.normal.empty()) fg.normal.assign(np, Vec3::Zero());
        for (std::size_t i = 0; i < np; ++i) fg.normal[i] += w * g[i];
    };
    auto addDepth = [&](const std::vector<double> &g, double w) {
        if (fg.surfaceDepth.empty()) fg.surfaceDepth.assign(np, 0.0);
        for (std::size_t i = 0; i < np; ++i) fg.surfaceDepth[i] += w * g[i];
    };
    if (lc.lambdaNorm > 0.0) {
        std::vector<double> sd(np);
        for (std::size_t i = 0; i < np; ++i) sd[i] = frame.gbuffer.surfaceDepth(i);
        const NormalLoss nl = lossNormalConsistency(cam, frame.gbuffer.normal, sd,
                                                    frame.gbuffer.alpha, lc.normalAlphaFloor);
        m.normal = nl.value;
        addNormal(nl.dNormal, lc.lambdaNorm);
        addDepth(nl.dSurfaceDepth, lc.lambdaNorm);
    }
    if (lc.lambdaMono > 0.0) {
        const bool have = !data_.monoNormals.empty() &&
                          !data_.monoNormals[static_cast<std::size_t>(m.view)].empty();
        if (have) {
            const NormalLoss ml =
                lossMonoNormal(frame.gbuffer.normal, data_.monoNormals[static_cast<std::size_t>(m.view)]);
            m.mono = ml.value;
            addNormal(ml.dNormal, lc.lambdaMono);
        } else {
            m.monoSkipped = true;
        }
    }
    if (extraLoss && lc.lambdaExtra > 0.0) {
        FrameGrad eg(frame);
        m.extra = extraLoss(frame, m.view, eg);
        for (std::size_t i = 0; i < fg.color.data.size() && i < eg.color.data.size(); ++i)
            fg.color.data[i] += lc.lambdaExtra * eg.color.data[i];
        if (!eg.normal.empty()) addNormal(eg.normal, lc.lambdaExtra);
        if (!eg.surfaceDepth.empty()) addDepth(eg.surfaceDepth, lc.lambdaExtra);
    }
    m.total = m.rgb + lc.lambdaNorm * m.normal + lc.lambdaMono * m.mono + lc.lambdaExtra * m.extra;
    if (!std::isfinite(m.total)) throw NumericalError(s, "non-finite loss");

    GradStore bg(scene_.base), eg(scene_.env);
    backwardFrame(scene_, frame, fg, bg, eg, co);
    auto finite = [](const GradStore &g) {
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!g.dCenter[i].allFinite() || !g.dRotation[i].allFinite() ||
                !g.dLogScales[i].allFinite() || !std::isfinite(g.dRawOpacity[i]))
                return false;
        return true;
    };
    if (!finite(bg) || !finite(eg)) throw NumericalError(s, "non-finite gradient");

    state_.baseStats.accumulate(bg);
    const double posLr = positionLearningRate(sch.lr, extent_, s, sch.totalSteps);
    adamStep(scene_.base, bg, state_.baseAdam, sch.lr, posLr);
    if (state_.envInitialized) {
        state_.envStats.accumulate(eg);
        adamStep(scene_.env, eg, state_.envAdam, sch.lr, posLr);
    }

    const int done = s + 1;
    if (done >= sch.densifyStart && done <= sch.densifyStop && done % sch.densifyInterval == 0) {
        DensifyParams dp;
        dp.threshold = sch.densifyThreshold;
        dp.cloneMaxScale = sch.percentDense * extent_;
        dp.splitFactor = sch.splitFactor;
        dp.pruneOpacity = sch.pruneOpacity;
        const DensifyReport rb = densifyAndPrune(scene_.base, state_.baseStats, dp, state_.rng);
        remapAdam(state_.baseAdam, rb.source);
        state_.baseStats.reset(scene_.base.size());
        m.clones += rb.clones;
        m.splits += rb.splits;
        m.pruned += rb.pruned;
        if (state_.envInitialized) {
            dp.cap = sch.envCap;
            const DensifyReport re = densifyAndPrune(scene_.env, state_.envStats, dp, state_.rng);
            remapAdam(state_.envAdam, re.source);
            state_.envStats.reset(scene_.env.size());
            m.clones += re.clones;
            m.splits += re.splits;
            m.pruned += re.pruned;
        }
    }
    if (normalPropagation) normalPropagation(scene_, s);
    if (colorSabotage) colorSabotage(scene_, s);

    state_.step = done;
    m.baseCount = scene_.base.size();
    m.envCount = scene_.env.size();
    return m;
}

} // namespace reflsurf
