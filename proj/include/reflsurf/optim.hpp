// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Joint optimization of the base and environment sets.
//
#pragma once

#include <reflsurf/compose.hpp>
#include <reflsurf/loss.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflsurf {

struct LossConfig {
    double lambdaNorm = 0.04;
    double lambdaMono = 0.01;
    double lambdaExtra = 0.01; // weight of the pluggable extra term
    double l1Weight = 0.8;
    double ssimWeight = 0.2;
    double normalAlphaFloor = 0.1;

    void validate() const;
};

/// Per-class Adam learning rates. Positions are scaled by the scene extent
/// and decay exponentially from positionInit to positionFinal.
struct LearningRates {
    double positionInit = 1.6e-4;
    double positionFinal = 1.6e-6;
    double rotation = 1e-3;
    double scale = 5e-3;
    double opacity = 0.05;
    double shDc = 2.5e-3;
    double shRest = 2.5e-3 / 20.0;
    double blend = 1e-2;
};

struct TrainSchedule {
    int totalSteps = 30000;
    int bootstrapSteps = 3000;
    bool jointOptimization = true; // false keeps the env pass off after bootstrap

    int densifyInterval = 100;
    int densifyStart = 500;
    int densifyStop = 15000;
    double densifyThreshold = 2e-4;
    double percentDense = 0.01; // clone below, split above this fraction of the extent
    double splitFactor = 1.6;
    double pruneOpacity = 0.005;

    int envGrid = 32;
    int envSamplesPerCell = 5;
    double envQuantile = 0.995;
    std::size_t envCap = 630000;

    double initialBlend = 0.1; // sigma(raw blend) of base surfels created from points
    LearningRates lr;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adam moments for every raw parameter of a set, laid out per surfel.
struct AdamState {
    static constexpr int kBaseStride = 3 + 4 + 2 + 1 + kShCoeffCount + 1;
    int stride = kBaseStride;
    std::vector<double> m, v;
    std::uint64_t steps = 0;

    void reset(const GaussianSet &set);
    std::size_t size() const { return stride == 0 ? 0 : m.size() / static_cast<std::size_t>(stride); }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-15;

/// One Adam step over all parameters of `set`, then quaternion
/// renormalization. `positionLr` is the already scaled position rate.
void adamStep(GaussianSet &set, const GradStore &grads, AdamState &state, const LearningRates &lr,
              double positionLr);

/// Exponential interpolation of the position learning rate at `step`.
double positionLearningRate(const LearningRates &lr, double extent, int step, int totalSteps);

struct EnvInitOptions {
    int grid = 32;
    int samplesPerCell = 5;
    double quantile = 0.995;
    std::uint64_t seed = 0;
};

/// Bounds of the points per axis between the (1 - q) and q quantiles, with
/// zero-extent axes inflated by 1e-3 of the largest extent.
Aabb quantileBounds(const std::vector<Vec3> &points, double quantile);

/// grid^3 cells of the quantile bounds, samplesPerCell surfels per cell at
/// uniform positions, random orientation, scale half the mean cell edge,
/// opacity 0.1, zero SH.
GaussianSet initEnvSet(const std::vector<Vec3> &points, const EnvInitOptions &opts = {});

/// One surfel per point: normal from the PCA of its nearest neighbours, scale
/// from the mean neighbour distance, opacity 0.1, the given color.
GaussianSet initBaseSet(const std::vector<Vec3> &points, const std::vector<Vec3> &colors,
                        double initialBlend, std::uint64_t seed = 0);

/// Statistics gathered between densification events.
struct DensifyStats {
    std::vector<double> positional; // sum over hits of |dL/dp| * t / 2
    std::vector<std::uint32_t> views; // steps in which the surfel was hit
    std::vector<double> weight;       // sum of T * alpha

    void reset(std::size_t n);
    std::size_t size() const { return positional.size(); }
    /// Adds one step's statistics from a backward pass.
    void accumulate(const GradStore &step);
};

struct DensifyParams {
    double threshold = 2e-4;
    double cloneMaxScale = 0.0; // absolute; surfels at or below are cloned, above are split
    double splitFactor = 1.6;
    double pruneOpacity = 0.005;
    std::size_t cap = 0; // 0 for unlimited
};

struct DensifyReport {
    std::size_t clones = 0;
    std::size_t splits = 0; // each split replaces one surfel by two
    std::size_t pruned = 0; // opacity pruning plus cap truncation
    /// For each surfel of the result, the index it was copied from when it
    /// is an unchanged survivor, -1 when it is new.
    std::vector<std::int64_t> source;
};

/// Clones or splits surfels whose mean statistic over visible steps exceeds
/// the threshold, prunes low-opacity ones, then truncates to the cap by
/// accumulated weight. |set'| = |set| + clones + splits - pruned.
DensifyReport densifyAndPrune(GaussianSet &set, const DensifyStats &stats,
                              const DensifyParams &params, std::mt19937_64 &rng);

/// Reorders Adam moments after densification: survivors keep theirs, new
/// surfels start at zero.
void remapAdam(AdamState &state, const std::vector<std::int64_t> &source);

struct TrainData {
    std::vector<CameraModel> cameras;
    std::vector<Image> images;
    std::vector<std::vector<Vec3>> monoNormals; // per view, empty when absent
    std::vector<Vec3> points;

    void validate() const;
};

struct TrainConfig {
    LossConfig loss;
    TrainSchedule schedule;
    ComposeOptions compose;
};

struct StepMetrics {
    int step = 0;
    int view = 0;
    bool joint = false;
    double total = 0.0;
    double rgb = 0.0, l1 = 0.0, ssim = 0.0;
    double normal = 0.0, mono = 0.0, extra = 0.0;
    bool monoSkipped = false;
    double psnr = 0.0;
    std::size_t baseCount = 0, envCount = 0;
    std::size_t clones = 0, splits = 0, pruned = 0;
};

/// Raised when the loss or a gradient becomes non-finite.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(int step, const std::string &what)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

/// Everything the trainer mutates, so a checkpoint can restore a run exactly.
struct TrainerState {
    int step = 0;
    bool envInitialized = false;
    AdamState baseAdam, envAdam;
    DensifyStats baseStats, envStats;
    std::vector<int> order; // current pass over the views
    std::size_t orderPos = 0;
    std::mt19937_64 rng;
};

class Trainer {
  public:
    Trainer(Scene scene, TrainData data, TrainConfig cfg);

    StepMetrics step();
    bool done() const { return state_.step >= cfg_.schedule.totalSteps; }
    bool joint() const { return state_.envInitialized; }

    Scene &scene() { return scene_; }
    const Scene &scene() const { return scene_; }
    TrainerState &state() { return state_; }
    const TrainerState &state() const { return state_; }
    const TrainConfig &config() const { return cfg_; }
    const TrainData &data() const { return data_; }
    double extent() const { return extent_; }

    /// Extra loss term: returns its value and writes its unweighted gradient.
    std::function<double(const ComposedFrame &, int view, FrameGrad &)> extraLoss;
    /// Named extension points, no-ops unless set.
    std::function<void(Scene &, int step)> normalPropagation;
    std::function<void(Scene &, int step)> colorSabotage;

  private:
    int nextView();

    Scene scene_;
    TrainData data_;
    TrainConfig cfg_;
    TrainerState state_;
    double extent_ = 1.0;
};

/// Radius of the camera centers around their mean, times 1.1.
double cameraExtent(const std::vector<CameraModel> &cameras);

} // namespace reflsurf
