// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/io.hpp>
#include <reflsurf/metrics.hpp>
#include <reflsurf/synth.hpp>

#include <gtest/gtest.h>

#include <filesystem>

namespace reflsurf {
namespace {

SyntheticOptions small(std::uint64_t seed = 7) {
    SyntheticOptions o;
    o.width = 24;
    o.height = 24;
    o.trainViews = 6;
    o.testViews = 2;
    o.seed = seed;
    return o;
}

TEST(Synthetic, SameSeedSameBundle) {
    for (const auto &name : syntheticNames()) {
        const SceneBundle a = makeSynthetic(name, small()), b = makeSynthetic(name, small());
        EXPECT_EQ(encodeGaussians(a.base), encodeGaussians(b.base)) << name;
        EXPECT_EQ(encodeGaussians(a.env), encodeGaussians(b.env)) << name;
        EXPECT_EQ(encodeCameras(a.cameras), encodeCameras(b.cameras)) << name;
        ASSERT_EQ(a.images.size(), b.images.size());
        for (std::size_t i = 0; i < a.images.size(); ++i) EXPECT_EQ(a.images[i].data, b.images[i].data);
        EXPECT_EQ(a.points, b.points);
    }
    const SceneBundle c = makeSynthetic("mirror_wall", small(8));
    EXPECT_NE(encodeCameras(c.cameras), encodeCameras(makeSynthetic("mirror_wall", small()).cameras));
}

TEST(Synthetic, UnknownNameIsRejected) {
    EXPECT_THROW(makeSynthetic("teapot", small()), ContractError);
}

TEST(Synthetic, DiffuseBoxHasNoReflection) {
    const SceneBundle b = makeSynthetic("diffuse_box", small());
    EXPECT_TRUE(b.env.empty());
    ASSERT_FALSE(b.base.empty());
    for (double raw : b.base.rawBlend) EXPECT_LE(raw, -10.0);
    EXPECT_EQ(b.images.size(), b.cameras.size());
    EXPECT_EQ(b.monoNormals.size(), b.cameras.size());
}

TEST(Synthetic, ViewsSeeTheirSubject) {
    for (const auto &name : syntheticNames()) {
        const SceneBundle b = makeSynthetic(name, small());
        for (const Image &img : b.images) {
            double sum = 0.0;
            for (double v : img.data) sum += v;
            EXPECT_GT(sum / static_cast<double>(img.data.size()), 0.05) << name;
        }
    }
}

TEST(Synthetic, MirrorWallMatchesMirroredCamera) {
    SyntheticOptions o = small();
    o.width = o.height = 96;
    o.renderImages = false;
    const SceneBundle b = makeSynthetic("mirror_wall", o);
    ASSERT_TRUE(b.mirror.has_value());
    Scene s;
    s.base = b.base;
    s.env = b.env;
    s.refresh();
    for (const CameraModel &cam : b.testCameras) {
        const ComposedFrame f = composeFrame(s, cam);
        std::vector<char> mask;
        const Image ref = mirrorReference(s, *b.mirror, cam, &mask);
        std::size_t covered = 0;
        for (char m : mask) covered += m != 0;
        EXPECT_GT(covered, cam.pixelCount() / 3);
        EXPECT_GT(psnrMasked(f.reflection, ref, mask), 40.0);
    }
}

TEST(Bundle, SaveLoadRoundTrip) {
    const auto dir = (std::filesystem::temp_directory_path() / "reflsurf_bundle_test").string();
    std::filesystem::remove_all(dir);
    const SceneBundle b = makeSynthetic("mirror_wall", small());
    saveBundle(dir, b);
    const SceneBundle back = loadBundle(dir);
    EXPECT_EQ(back.name, "mirror_wall");
    EXPECT_EQ(encodeGaussians(back.base), encodeGaussians(b.base));
    EXPECT_EQ(encodeGaussians(back.env), encodeGaussians(b.env));
    EXPECT_EQ(encodeCameras(back.cameras), encodeCameras(b.cameras));
    ASSERT_EQ(back.images.size(), b.images.size());
    for (std::size_t i = 0; i < b.images.size(); ++i)
        for (std::size_t k = 0; k < b.images[i].data.size(); ++k)
            ASSERT_EQ(back.images[i].data[k], static_cast<double>(static_cast<float>(b.images[i].data[k])));
    ASSERT_EQ(back.monoNormals.size(), b.monoNormals.size());
    EXPECT_EQ(back.testImages.size(), b.testImages.size());
    EXPECT_EQ(back.points, b.points);
    ASSERT_TRUE(back.mirror.has_value());
    EXPECT_EQ(back.mirror->halfExtent, b.mirror->halfExtent);

    std::filesystem::remove(std::filesystem::path(dir) / "images" / "train_002.pfm");
    try {
        loadBundle(dir);
        FAIL() << "expected IoError";
    } catch (const IoError &e) {
        EXPECT_NE(e.path().find("train_002.pfm"), std::string::npos) << e.what();
    }
}

} // namespace
} // namespace reflsurf
