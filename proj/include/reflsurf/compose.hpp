// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Two-pass reflective rendering: a base pass producing a G-buffer, an
// environment pass along reflected rays, and the final per-pixel blend.
//
#pragma once

#include <reflsurf/camera.hpp>
#include <reflsurf/grad.hpp>

#include <optional>
#include <vector>

namespace reflsurf {

/// Base and environment sets with their acceleration structures.
struct Scene {
    GaussianSet base{SetKind::Base};
    GaussianSet env{SetKind::Env};
    Bvh baseBvh, envBvh;

    /// Rebuilds whichever BVH no longer matches its set.
    void refresh();
    /// 1e-4 of the base set's bounding-box diagonal.
    double defaultOriginOffset() const;
};

struct ComposeOptions {
    TraceOptions trace;
    double alphaFloor = 0.01;  // reflected rays only where alpha exceeds this
    double blendFloor = 0.001; // ... and the blend weight exceeds this
    double originOffset = -1.0; // negative: Scene::defaultOriginOffset()
    bool reflection = true;     // false: base pass only, final color = c_base
    int threads = 1;
};

struct GBuffer {
    int width = 0, height = 0;
    std::vector<Vec3> position;  // composited sum of w * x
    std::vector<Vec3> rawNormal; // composited sum of w * n
    std::vector<Vec3> normal;    // rawNormal renormalized; zero where alpha is 0
    std::vector<double> depth;   // composited sum of w * t
    std::vector<double> alpha;
    std::vector<double> blend;
    Image baseColor;

    GBuffer() = default;
    GBuffer(int w, int h);
    std::size_t size() const { return alpha.size(); }
    /// position / alpha, the expected hit point given a hit.
    Vec3 surfacePoint(std::size_t i) const;
    /// depth / alpha, zero where alpha is 0.
    double surfaceDepth(std::size_t i) const;
};

struct ReflectedRay {
    bool active = false;
    Ray ray;
    RaySample sample;
};

struct ComposedFrame {
    CameraModel camera;
    Image color;      // (1 - beta) * c_base + beta * c_ref, or c_base without reflection
    Image reflection; // c_ref
    GBuffer gbuffer;
    std::vector<Ray> cameraRays;
    std::vector<RaySample> baseSamples;
    std::vector<ReflectedRay> reflected;
    double originOffset = 0.0;
    bool reflectionEnabled = true;
    std::uint64_t baseGeneration = 0, envGeneration = 0;
};

/// d - 2 (d.n) n. Both inputs must be unit within 1e-6; a zero normal
/// (background) returns no reflection.
std::optional<Vec3> reflectDirection(const Vec3 &d, const Vec3 &n);

GBuffer renderBase(const Bvh &bvh, const GaussianSet &base, const CameraModel &camera,
                   const ComposeOptions &opts = {});

struct ReflectionPass {
    Image color;
    std::vector<ReflectedRay> rays;
};
/// Traces the environment set along rays reflected at every G-buffer pixel
/// that passes the alpha and blend floors; other pixels stay black.
ReflectionPass renderReflection(const Bvh &envBvh, const GaussianSet &env, const GBuffer &gbuf,
                                const CameraModel &camera, double originOffset,
                                const ComposeOptions &opts = {});

ComposedFrame composeFrame(const Scene &scene, const CameraModel &camera,
                           const ComposeOptions &opts = {});

/// Upstream gradients of a frame. `normal` is with respect to the
/// renormalized G-buffer normal and `surfaceDepth` with respect to
/// GBuffer::surfaceDepth; either may be left empty.
struct FrameGrad {
    Image color;
    std::vector<Vec3> normal;
    std::vector<double> surfaceDepth;

    FrameGrad() = default;
    FrameGrad(int w, int h) : color(w, h, 3) {}
    explicit FrameGrad(const ComposedFrame &f) : color(f.color.width, f.color.height, 3) {}
};

/// Accumulates into baseGrads and envGrads (sized to the scene's sets).
/// Rejects a frame whose sets have changed since composeFrame.
void backwardFrame(const Scene &scene, const ComposedFrame &frame, const FrameGrad &grad,
                   GradStore &baseGrads, GradStore &envGrads, const ComposeOptions &opts = {});

} // namespace reflsurf
