// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/compose.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace reflsurf {
namespace {

using testing::closeRel;

Gaussian2D plate(const Vec3 &center, const Vec4 &q, double logScale, double rawOpacity,
                 const Vec3 &rgb, double rawBlend) {
    Gaussian2D g;
    g.center = center;
    g.rotation = q;
    g.logScales = Vec2(logScale, logScale);
    g.rawOpacity = rawOpacity;
    for (int c = 0; c < 3; ++c) g.sh[c * 9] = (rgb[c] - 0.5) / kShC0;
    g.rawBlend = rawBlend;
    return g;
}

const Vec4 kFacing(1, 0, 0, 0); // normal +z

// Mirror in the z = 0 plane, emitter wall at z = wallZ facing it, camera
// above looking down at the mirror.
Scene mirrorScene(double wallZ, int wallCells = 12) {
    Scene s;
    for (int i = -6; i <= 6; ++i)
        for (int j = -6; j <= 6; ++j)
            for (int layer = 0; layer < 2; ++layer)
                s.base.push_back(plate(Vec3(0.25 * i, 0.25 * j, 0.0), kFacing, std::log(0.2), 8.0,
                                       Vec3(0.2, 0.2, 0.2), 12.0));
    const double step = 4.0 / wallCells;
    for (int i = 0; i < wallCells; ++i)
        for (int j = 0; j < wallCells; ++j) {
            const double x = -2.0 + (i + 0.5) * step, y = -2.0 + (j + 0.5) * step;
            const Vec3 rgb(0.5 + 0.4 * std::sin(1.3 * x), 0.5 + 0.4 * std::cos(1.1 * y),
                           0.5 + 0.3 * std::sin(0.7 * (x + y)));
            Gaussian2D g = plate(Vec3(x, y, wallZ), kFacing, std::log(0.5 * step), 6.0, rgb, 0.0);
            g.rawBlend.reset();
            s.env.push_back(g);
        }
    s.refresh();
    return s;
}

double psnrOver(const Image &a, const Image &b, const std::vector<char> &mask) {
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.pixelCount(); ++i) {
        if (!mask[i]) continue;
        se += (a.rgb(i) - b.rgb(i)).squaredNorm();
        n += 3;
    }
    return n == 0 ? 0.0 : -10.0 * std::log10(se / static_cast<double>(n));
}

TEST(ReflectDirection, Examples) {
    EXPECT_NEAR((*reflectDirection(Vec3(0, 0, -1), Vec3(0, 0, 1)) - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
    const Vec3 d = Vec3(1, 0, -1) / std::sqrt(2.0);
    EXPECT_NEAR((*reflectDirection(d, Vec3(0, 0, 1)) - Vec3(1, 0, 1) / std::sqrt(2.0)).norm(), 0.0, 1e-15);
    EXPECT_FALSE(reflectDirection(d, Vec3::Zero()).has_value());
    EXPECT_THROW(reflectDirection(Vec3(0, 0, 2), Vec3(0, 0, 1)), ContractError);
}

TEST(ReflectDirection, ReflectionLaw) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 d = testing::randomUnit(rng), n = testing::randomUnit(rng);
        const Vec3 r = *reflectDirection(d, n);
        EXPECT_NEAR(r.norm(), 1.0, 1e-6);
        EXPECT_NEAR(r.dot(n), -d.dot(n), 1e-6);
    }
}

TEST(RenderBase, EmptySetIsZero) {
    Scene s;
    s.refresh();
    const CameraModel cam = lookAt(8, 6, 1.0, Vec3(0, 0, -3), Vec3::Zero());
    const GBuffer g = renderBase(s.baseBvh, s.base, cam);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(g.alpha[i], 0.0);
        EXPECT_EQ(g.normal[i], Vec3::Zero());
    }
}

TEST(RenderBase, WallSizedSurfel) {
    GaussianSet set;
    set.push_back(plate(Vec3(0, 0, 0), kFacing, std::log(50.0), 10.0, Vec3(0.3, 0.6, 0.9), 0.7));
    const Bvh bvh = buildBvh(set);
    const CameraModel cam = lookAt(16, 16, 0.5, Vec3(0, 0, 4), Vec3::Zero());
    const GBuffer g = renderBase(bvh, set, cam);
    const std::vector<Ray> rays = cameraRays(cam);
    const double alpha = g.alpha[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
        ASSERT_GT(g.alpha[i], 0.99);
        EXPECT_NEAR(g.blend[i] / g.alpha[i], sigmoid(0.7), 1e-12);
        EXPECT_NEAR((g.normal[i] - Vec3(0, 0, 1)).norm(), 0.0, 1e-12);
        EXPECT_NEAR(g.surfaceDepth(i) * cam.rotation.row(2).dot(rays[i].direction), 4.0, 1e-9);
    }
    EXPECT_GT(alpha, 0.99);
}

TEST(RenderBase, TwoStackedTranslucentBlends) {
    GaussianSet set;
    set.push_back(plate(Vec3(0, 0, 1), kFacing, 0.0, 0.2, Vec3(1, 1, 1), 0.4));
    set.push_back(plate(Vec3(0, 0, 0), kFacing, 0.0, -0.3, Vec3(1, 1, 1), -1.1));
    const Bvh bvh = buildBvh(set);
    CameraModel cam = lookAt(1, 1, 0.1, Vec3(0, 0, 5), Vec3::Zero());
    const GBuffer g = renderBase(bvh, set, cam);
    const double a1 = sigmoid(0.2), a2 = sigmoid(-0.3);
    EXPECT_NEAR(g.blend[0], a1 * sigmoid(0.4) + (1 - a1) * a2 * sigmoid(-1.1), 1e-12);
}

TEST(ComposeFrame, BlendExactnessAndDegenerateCases) {
    Scene s = mirrorScene(2.0);
    const CameraModel cam = lookAt(24, 24, 0.9, Vec3(0.3, -0.2, 3.0), Vec3::Zero());
    const ComposedFrame f = composeFrame(s, cam);
    for (std::size_t i = 0; i < cam.pixelCount(); ++i) {
        const double b = f.gbuffer.blend[i];
        const Vec3 expect = (1.0 - b) * f.gbuffer.baseColor.rgb(i) + b * f.reflection.rgb(i);
        ASSERT_EQ(f.color.rgb(i), expect);
        if (f.reflected[i].active) {
            const Vec3 n = f.gbuffer.normal[i];
            const Vec3 dr = f.reflected[i].ray.direction, dc = f.cameraRays[i].direction;
            EXPECT_NEAR(dr.norm(), 1.0, 1e-6);
            EXPECT_NEAR(dr.dot(n), -dc.dot(n), 1e-6);
        }
    }

    // beta = 0: final equals the base color
    Scene zero = s;
    for (auto &r : zero.base.rawBlend) r = -1000.0;
    zero.base.touch();
    zero.refresh();
    const ComposedFrame fz = composeFrame(zero, cam);
    EXPECT_EQ(fz.color.data, fz.gbuffer.baseColor.data);

    // no environment: c_ref black
    Scene noEnv = s;
    noEnv.env.clear();
    noEnv.refresh();
    const ComposedFrame fn = composeFrame(noEnv, cam);
    for (std::size_t i = 0; i < cam.pixelCount(); ++i) {
        EXPECT_EQ(fn.reflection.rgb(i), Vec3::Zero());
        EXPECT_EQ(fn.color.rgb(i), (1.0 - fn.gbuffer.blend[i]) * fn.gbuffer.baseColor.rgb(i));
    }

    // blend saturated: final is the reflection wherever the base is opaque
    Scene black = s;
    for (auto &sh : black.base.sh) {
        sh.fill(0.0);
        sh[0] = sh[9] = sh[18] = -0.5 / kShC0;
    }
    black.base.touch();
    black.refresh();
    const ComposedFrame fb = composeFrame(black, cam);
    for (std::size_t i = 0; i < cam.pixelCount(); ++i)
        if (fb.gbuffer.alpha[i] > 0.999999)
            EXPECT_NEAR((fb.color.rgb(i) - fb.reflection.rgb(i)).norm(), 0.0, 1e-5);
}

TEST(ComposeFrame, DeterministicAcrossRunsAndThreads) {
    const Scene s = mirrorScene(1.5);
    const CameraModel cam = lookAt(32, 24, 0.9, Vec3(0.5, 0.1, 2.5), Vec3::Zero());
    const ComposedFrame a = composeFrame(s, cam);
    const ComposedFrame b = composeFrame(s, cam);
    ComposeOptions mt;
    mt.threads = 4;
    const ComposedFrame c = composeFrame(s, cam, mt);
    EXPECT_EQ(a.color.data, b.color.data);
    EXPECT_EQ(a.color.data, c.color.data);
    EXPECT_EQ(a.gbuffer.depth, c.gbuffer.depth);
}

TEST(ComposeFrame, MirrorMatchesMirroredCamera) {
    for (double wallZ : {3.0, 1.0}) {
        const Scene s = mirrorScene(wallZ, 24);
        const CameraModel cam = lookAt(96, 96, 0.8, Vec3(0.2, 0.3, 4.0), Vec3(0, 0, 0));
        const ComposedFrame f = composeFrame(s, cam);
        const std::vector<Ray> mirrored = mirroredCameraRays(cam, Vec3::Zero(), Vec3(0, 0, 1));
        const auto ref = renderRays(s.envBvh, s.env, mirrored);
        Image refImg(cam.width, cam.height, 3);
        std::vector<char> mask(cam.pixelCount(), 0);
        int covered = 0;
        for (std::size_t i = 0; i < cam.pixelCount(); ++i) {
            refImg.setRgb(i, ref[i].color);
            mask[i] = f.reflected[i].active && f.gbuffer.alpha[i] > 0.99;
            covered += mask[i];
        }
        EXPECT_GT(covered, static_cast<int>(cam.pixelCount() / 4));
        EXPECT_GT(psnrOver(f.reflection, refImg, mask), 40.0) << "wall at z=" << wallZ;
    }
}

TEST(ComposeFrame, NearFieldShiftsReflection) {
    const CameraModel cam = lookAt(48, 48, 0.8, Vec3(0.6, 0.0, 3.0), Vec3::Zero());
    const ComposedFrame far = composeFrame(mirrorScene(3.0), cam);
    const ComposedFrame near = composeFrame(mirrorScene(0.7), cam);
    double diff = 0.0;
    for (std::size_t i = 0; i < cam.pixelCount(); ++i)
        diff += (far.reflection.rgb(i) - near.reflection.rgb(i)).norm();
    EXPECT_GT(diff / static_cast<double>(cam.pixelCount()), 1e-2);
}

TEST(BackwardFrame, ZeroGradAndNoBlendPaths) {
    Scene s = mirrorScene(2.0, 6);
    const CameraModel cam = lookAt(12, 12, 0.9, Vec3(0.3, -0.2, 3.0), Vec3::Zero());
    const ComposedFrame f = composeFrame(s, cam);
    GradStore bg(s.base), eg(s.env);
    backwardFrame(s, f, FrameGrad(f), bg, eg);
    EXPECT_TRUE(bg.gradientsAllZero());
    EXPECT_TRUE(eg.gradientsAllZero());

    for (auto &r : s.base.rawBlend) r = -1000.0;
    s.base.touch();
    s.refresh();
    const ComposedFrame f0 = composeFrame(s, cam);
    FrameGrad g(f0);
    std::fill(g.color.data.begin(), g.color.data.end(), 1.0);
    GradStore bg0(s.base), eg0(s.env);
    backwardFrame(s, f0, g, bg0, eg0);
    EXPECT_TRUE(eg0.gradientsAllZero());
    EXPECT_FALSE(bg0.gradientsAllZero());
}

TEST(BackwardFrame, RejectsStaleFrame) {
    Scene s = mirrorScene(2.0, 4);
    const CameraModel cam = lookAt(4, 4, 0.9, Vec3(0, 0, 3), Vec3::Zero());
    const ComposedFrame f = composeFrame(s, cam);
    s.env.touch();
    s.refresh();
    GradStore bg(s.base), eg(s.env);
    EXPECT_THROW(backwardFrame(s, f, FrameGrad(f), bg, eg), ContractError);
}

TEST(BackwardFrame, ReflectionDrivesBaseRotation) {
    Scene s = mirrorScene(2.0, 8);
    const CameraModel cam = lookAt(16, 16, 0.9, Vec3(0.3, -0.2, 3.0), Vec3::Zero());
    const ComposedFrame f = composeFrame(s, cam);
    // gradient flows only through c_ref
    FrameGrad g(f);
    for (std::size_t i = 0; i < cam.pixelCount(); ++i) g.color.setRgb(i, Vec3(1, -0.5, 0.25));
    GradStore bg(s.base), eg(s.env);
    backwardFrame(s, f, g, bg, eg);
    double rot = 0.0;
    for (const Vec4 &r : bg.dRotation) rot += r.norm();
    EXPECT_GT(rot, 1e-6);
    EXPECT_FALSE(eg.gradientsAllZero());
}

// End-to-end: scalar loss over final color, normal map and surface depth
// versus central differences over every raw parameter of both sets.
struct EndToEnd {
    Scene scene;
    CameraModel cam;
    ComposeOptions opts;
    Image wColor;
    std::vector<Vec3> wNormal;
    std::vector<double> wDepth;

    double loss() {
        scene.base.touch();
        scene.env.touch();
        scene.refresh();
        const ComposedFrame f = composeFrame(scene, cam, opts);
        double l = 0.0;
        for (std::size_t i = 0; i < f.color.data.size(); ++i) l += wColor.data[i] * f.color.data[i];
        for (std::size_t i = 0; i < cam.pixelCount(); ++i)
            l += wNormal[i].dot(f.gbuffer.normal[i]) + wDepth[i] * f.gbuffer.surfaceDepth(i);
        return l;
    }
};

TEST(BackwardFrame, MatchesEndToEndFiniteDifferences) {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    EndToEnd t;
    // tilted translucent-to-opaque reflective plates
    for (int i = 0; i < 6; ++i) {
        Vec4 q(1.0, 0.15 * u(rng), 0.15 * u(rng), 0.1 * u(rng));
        q.normalize();
        Gaussian2D g = plate(Vec3(0.5 * u(rng), 0.5 * u(rng), 0.1 * u(rng)), q,
                             std::log(0.5) + 0.2 * u(rng), 1.0 + u(rng),
                             Vec3(0.5 + 0.3 * u(rng), 0.5 + 0.3 * u(rng), 0.5), 1.0 + u(rng));
        for (int k = 1; k < 9; ++k) g.sh[k] = 0.1 * u(rng);
        t.scene.base.push_back(g);
    }
    for (int i = 0; i < 8; ++i) {
        Vec4 q(1.0, 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
        q.normalize();
        Gaussian2D g = plate(Vec3(0.8 * u(rng), 0.8 * u(rng), 1.5 + 0.3 * u(rng)), q,
                             std::log(0.6) + 0.2 * u(rng), 0.5 * u(rng),
                             Vec3(0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng)), 0.0);
        for (int k = 1; k < 9; ++k) g.sh[9 + k] = 0.1 * u(rng);
        g.rawBlend.reset();
        t.scene.env.push_back(g);
    }
    t.scene.refresh();
    t.cam = lookAt(10, 10, 0.8, Vec3(0.2, 0.1, 3.0), Vec3::Zero());
    t.opts.originOffset = 1e-4;
    t.wColor = Image(10, 10, 3);
    for (double &w : t.wColor.data) w = u(rng);
    t.wNormal.resize(100);
    t.wDepth.resize(100);
    for (std::size_t i = 0; i < 100; ++i) {
        t.wNormal[i] = 0.3 * Vec3(u(rng), u(rng), u(rng));
        t.wDepth[i] = 0.1 * u(rng);
    }

    const ComposedFrame f = composeFrame(t.scene, t.cam, t.opts);
    FrameGrad fg(f);
    fg.color = t.wColor;
    fg.normal = t.wNormal;
    fg.surfaceDepth = t.wDepth;
    GradStore bg(t.scene.base), eg(t.scene.env);
    backwardFrame(t.scene, f, fg, bg, eg, t.opts);

    int checked = 0, skipped = 0, rotationChecks = 0;
    auto check = [&](double analytic, double *param, const std::string &what) {
        const double h = 1e-5;
        const double fd = testing::centralDifference(param, h, [&] { return t.loss(); });
        const double fd2 = testing::centralDifference(param, 0.5 * h, [&] { return t.loss(); });
        // a pixel crossing a gating threshold or a proxy edge makes the
        // difference quotient step-size dependent; such probes are not
        // differentiable points and are skipped
        if (!closeRel(fd, fd2, 1e-4, 1e-6)) {
            ++skipped;
            return;
        }
        if (std::abs(fd) < 1e-5) return;
        ++checked;
        EXPECT_TRUE(closeRel(analytic, fd, 1e-3, 1e-6)) << what << ": analytic " << analytic
                                                        << " fd " << fd;
    };
    for (std::size_t i = 0; i < t.scene.base.size(); ++i) {
        const std::string id = " base " + std::to_string(i);
        for (int k = 0; k < 3; ++k) check(bg.dCenter[i][k], &t.scene.base.centers[i][k], "center" + id);
        for (int k = 0; k < 4; ++k) {
            const int before = checked;
            check(bg.dRotation[i][k], &t.scene.base.rotations[i][k], "rotation" + id);
            rotationChecks += checked - before;
        }
        for (int k = 0; k < 2; ++k) check(bg.dLogScales[i][k], &t.scene.base.logScales[i][k], "scale" + id);
        check(bg.dRawOpacity[i], &t.scene.base.rawOpacity[i], "opacity" + id);
        check(bg.dRawBlend[i], &t.scene.base.rawBlend[i], "blend" + id);
        for (int k : {0, 3, 9, 18}) check(bg.dSh[i][k], &t.scene.base.sh[i][k], "sh" + id);
    }
    for (std::size_t i = 0; i < t.scene.env.size(); ++i) {
        const std::string id = " env " + std::to_string(i);
        for (int k = 0; k < 3; ++k) check(eg.dCenter[i][k], &t.scene.env.centers[i][k], "center" + id);
        for (int k = 0; k < 4; ++k) check(eg.dRotation[i][k], &t.scene.env.rotations[i][k], "rotation" + id);
        for (int k = 0; k < 2; ++k) check(eg.dLogScales[i][k], &t.scene.env.logScales[i][k], "scale" + id);
        check(eg.dRawOpacity[i], &t.scene.env.rawOpacity[i], "opacity" + id);
        for (int k : {0, 10, 20}) check(eg.dSh[i][k], &t.scene.env.sh[i][k], "sh" + id);
    }
    RecordProperty("checked", checked);
    RecordProperty("skipped", skipped);
    EXPECT_GE(checked, 50);
    EXPECT_GE(rotationChecks, 10);
    EXPECT_LT(skipped, checked / 4);
}

} // namespace
} // namespace reflsurf
