// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/compose.hpp>
#include <reflsurf/parallel.hpp>

#include <cmath>

namespace reflsurf {

void Scene::refresh() {
    if (baseBvh.generation != base.generation() || (baseBvh.empty() && !base.empty()))
        baseBvh = buildBvh(base);
    if (envBvh.generation != env.generation() || (envBvh.empty() && !env.empty()))
        envBvh = buildBvh(env);
}

double Scene::defaultOriginOffset() const {
    if (baseBvh.empty()) return 0.0;
    return 1e-4 * baseBvh.bounds().extent().norm();
}

GBuffer::GBuffer(int w, int h)
    : width(w), height(h), position(static_cast<std::size_t>(w) * h, Vec3::Zero()),
      rawNormal(position), normal(position), depth(position.size(), 0.0),
      alpha(position.size(), 0.0), blend(position.size(), 0.0), baseColor(w, h, 3) {}

Vec3 GBuffer::surfacePoint(std::size_t i) const {
    return alpha[i] > 0.0 ? Vec3(position[i] / alpha[i]) : Vec3::Zero();
}

double GBuffer::surfaceDepth(std::size_t i) const {
    return alpha[i] > 0.0 ? depth[i] / alpha[i] : 0.0;
}

std::optional<Vec3> reflectDirection(const Vec3 &d, const Vec3 &n) {
    if (n.isZero(0.0)) return std::nullopt;
    if (std::abs(d.norm() - 1.0) > 1e-6 || std::abs(n.norm() - 1.0) > 1e-6)
        throw ContractError("reflectDirection: inputs must be unit vectors");
    return d - 2.0 * d.dot(n) * n;
}

namespace {

void storeSample(GBuffer &g, std::size_t i, const RaySample &s) {
    g.position[i] = s.position;
    g.rawNormal[i] = s.normal;
    const double len = s.normal.norm();
    g.normal[i] = len > 0.0 ? Vec3(s.normal / len) : Vec3::Zero();
    g.depth[i] = s.depth;
    g.alpha[i] = s.alpha;
    g.blend[i] = s.blend;
    g.baseColor.setRgb(i, s.color);
}

GBuffer baseFromSamples(const CameraModel &cam, const std::vector<RaySample> &samples) {
    GBuffer g(cam.width, cam.height);
    for (std::size_t i = 0; i < samples.size(); ++i) storeSample(g, i, samples[i]);
    return g;
}

bool spawnsReflection(const GBuffer &g, std::size_t i, const ComposeOptions &opts) {
    return g.alpha[i] > opts.alphaFloor && g.blend[i] > opts.blendFloor &&
           !g.normal[i].isZero(0.0);
}

} // namespace

GBuffer renderBase(const Bvh &bvh, const GaussianSet &base, const CameraModel &camera,
                   const ComposeOptions &opts) {
    camera.validate(1e-6);
    const std::vector<Ray> rays = cameraRays(camera);
    return baseFromSamples(camera, renderRays(bvh, base, rays, opts.trace, opts.threads));
}

ReflectionPass renderReflection(const Bvh &envBvh, const GaussianSet &env, const GBuffer &gbuf,
                                const CameraModel &camera, double originOffset,
                                const ComposeOptions &opts) {
    checkSnapshot(envBvh, env);
    ReflectionPass pass;
    pass.color = Image(gbuf.width, gbuf.height, 3);
    pass.rays.resize(gbuf.size());
    const int workers = resolveThreads(opts.threads);
    parallelRanges(gbuf.size(), workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            if (!spawnsReflection(gbuf, i, opts)) continue;
            const int x = static_cast<int>(i % static_cast<std::size_t>(gbuf.width));
            const int y = static_cast<int>(i / static_cast<std::size_t>(gbuf.width));
            const Ray cam = pixelRay(camera, x, y);
            const Vec3 &n = gbuf.normal[i];
            ReflectedRay &r = pass.rays[i];
            r.active = true;
            r.ray.origin = gbuf.surfacePoint(i) + originOffset * n;
            r.ray.direction = *reflectDirection(cam.direction, n);
            r.sample = integrateRay(envBvh, env, r.ray, opts.trace);
            pass.color.setRgb(i, r.sample.color);
        }
    });
    return pass;
}

ComposedFrame composeFrame(const Scene &scene, const CameraModel &camera,
                           const ComposeOptions &opts) {
    camera.validate(1e-6);
    checkSnapshot(scene.baseBvh, scene.base);
    ComposedFrame f;
    f.camera = camera;
    f.baseGeneration = scene.base.generation();
    f.envGeneration = scene.env.generation();
    f.reflectionEnabled = opts.reflection;
    f.originOffset = opts.originOffset >= 0.0 ? opts.originOffset : scene.defaultOriginOffset();
    f.cameraRays = cameraRays(camera);
    f.baseSamples = renderRays(scene.baseBvh, scene.base, f.cameraRays, opts.trace, opts.threads);
    f.gbuffer = baseFromSamples(camera, f.baseSamples);
    if (opts.reflection) {
        ReflectionPass pass =
            renderReflection(scene.envBvh, scene.env, f.gbuffer, camera, f.originOffset, opts);
        f.reflection = std::move(pass.color);
        f.reflected = std::move(pass.rays);
    } else {
        f.reflection = Image(camera.width, camera.height, 3);
        f.reflected.resize(camera.pixelCount());
    }
    if (!opts.reflection) {
        f.color = f.gbuffer.baseColor;
        return f;
    }
    f.color = Image(camera.width, camera.height, 3);
    for (std::size_t i = 0; i < camera.pixelCount(); ++i) {
        const double beta = f.gbuffer.blend[i];
        f.color.setRgb(i, (1.0 - beta) * f.gbuffer.baseColor.rgb(i) + beta * f.reflection.rgb(i));
    }
    return f;
}

void backwardFrame(const Scene &scene, const ComposedFrame &frame, const FrameGrad &grad,
                   GradStore &baseGrads, GradStore &envGrads, const ComposeOptions &opts) {
    if (frame.baseGeneration != scene.base.generation() ||
        frame.envGeneration != scene.env.generation())
        throw ContractError("backwardFrame: frame is stale");
    checkSnapshot(scene.baseBvh, scene.base);
    checkSnapshot(scene.envBvh, scene.env);
    const std::size_t n = frame.camera.pixelCount();
    if (!grad.color.data.empty() && (grad.color.pixelCount() != n || grad.color.channels != 3))
        throw ContractError("backwardFrame: color gradient shape mismatch");
    if (!grad.normal.empty() && grad.normal.size() != n)
        throw ContractError("backwardFrame: normal gradient size mismatch");
    if (!grad.surfaceDepth.empty() && grad.surfaceDepth.size() != n)
        throw ContractError("backwardFrame: depth gradient size mismatch");
    if (baseGrads.size() != scene.base.size() || envGrads.size() != scene.env.size())
        throw ContractError("backwardFrame: GradStore size mismatch");

    const GBuffer &g = frame.gbuffer;
    const int workers = resolveThreads(opts.threads);
    std::vector<GradStore> baseLocal(static_cast<std::size_t>(workers));
    std::vector<GradStore> envLocal(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        baseLocal[static_cast<std::size_t>(w)].reset(scene.base.size(), scene.base.hasBlend());
        envLocal[static_cast<std::size_t>(w)].reset(scene.env.size(), scene.env.hasBlend());
    }

    parallelRanges(n, workers, [&](std::size_t b, std::size_t e, int w) {
        GradStore &bg = baseLocal[static_cast<std::size_t>(w)];
        GradStore &eg = envLocal[static_cast<std::size_t>(w)];
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 gc = grad.color.data.empty() ? Vec3::Zero() : grad.color.rgb(i);
            const double beta = g.blend[i];
            const double alpha = g.alpha[i];
            SampleGrad sb;
            if (frame.reflectionEnabled) {
                sb.color = (1.0 - beta) * gc;
                sb.blend = gc.dot(frame.reflection.rgb(i) - g.baseColor.rgb(i));
            } else {
                sb.color = gc;
            }
            Vec3 dUnitNormal = grad.normal.empty() ? Vec3::Zero() : grad.normal[i];

            const ReflectedRay &r = frame.reflected[i];
            if (frame.reflectionEnabled && r.active) {
                SampleGrad se;
                se.color = beta * gc;
                const RayGrad rg =
                    backwardRay(scene.envBvh, scene.env, r.ray, se, eg, opts.trace, &r.sample);
                // origin = position / alpha + offset * n
                sb.position += rg.dOrigin / alpha;
                sb.alpha -= rg.dOrigin.dot(g.position[i]) / (alpha * alpha);
                dUnitNormal += frame.originOffset * rg.dOrigin;
                // direction = d - 2 (d.n) n
                const Vec3 &d = frame.cameraRays[i].direction;
                const Vec3 &nh = g.normal[i];
                dUnitNormal -= 2.0 * (d.dot(nh) * rg.dDirection + d * nh.dot(rg.dDirection));
            }
            const double len = g.rawNormal[i].norm();
            if (len > 0.0) {
                const Vec3 &nh = g.normal[i];
                sb.normal = (dUnitNormal - nh * nh.dot(dUnitNormal)) / len;
            }
            if (!grad.surfaceDepth.empty() && alpha > 0.0) {
                const double gs = grad.surfaceDepth[i];
                sb.depth += gs / alpha;
                sb.alpha -= gs * g.depth[i] / (alpha * alpha);
            }
            backwardRay(scene.baseBvh, scene.base, frame.cameraRays[i], sb, bg, opts.trace,
                        &frame.baseSamples[i]);
        }
    });
    for (int w = 0; w < workers; ++w) {
        baseGrads.add(baseLocal[static_cast<std::size_t>(w)]);
        envGrads.add(envLocal[static_cast<std::size_t>(w)]);
    }
}

} // namespace reflsurf
