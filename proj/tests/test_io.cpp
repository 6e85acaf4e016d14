// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/io.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

namespace reflsurf {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / "reflsurf_test_io";
    fs::create_directories(dir);
    return dir / name;
}

void expectBitEqual(const GaussianSet &a, const GaussianSet &b) {
    ASSERT_EQ(a.kind, b.kind);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.centers[i], b.centers[i]);
        EXPECT_EQ(a.rotations[i], b.rotations[i]);
        EXPECT_EQ(a.logScales[i], b.logScales[i]);
        EXPECT_EQ(a.rawOpacity[i], b.rawOpacity[i]);
        EXPECT_EQ(a.sh[i], b.sh[i]);
        if (a.hasBlend()) EXPECT_EQ(a.rawBlend[i], b.rawBlend[i]);
    }
}

TEST(Ply, RoundTripFuzzIsBitExact) {
    std::mt19937_64 rng(31);
    for (SetKind kind : {SetKind::Base, SetKind::Env}) {
        testing::RandomSceneOptions o;
        o.kind = kind;
        const GaussianSet set = testing::randomScene(rng, 1000, o);
        const auto path = scratch(std::string("fuzz_") + toString(kind) + ".ply").string();
        saveGaussians(path, set);
        expectBitEqual(set, loadGaussians(path));
    }
}

TEST(Ply, ExtremeValuesSurvive) {
    GaussianSet set(SetKind::Base);
    Gaussian2D g;
    g.center = Vec3(1e-300, -1e300, 5e-324);
    g.rotation = Vec4(1, 0, 0, 0);
    g.logScales = Vec2(-700, 700);
    g.rawOpacity = -0.0;
    g.rawBlend = 0.1;
    set.push_back(g);
    expectBitEqual(set, decodeGaussians(encodeGaussians(set)));
}

TEST(Ply, EmptySetRoundTrips) {
    const GaussianSet set(SetKind::Env);
    const GaussianSet back = decodeGaussians(encodeGaussians(set));
    EXPECT_EQ(back.kind, SetKind::Env);
    EXPECT_EQ(back.size(), 0u);
}

TEST(Ply, HeaderNamesPropertiesAndKind) {
    GaussianSet set(SetKind::Base);
    set.push_back(Gaussian2D{});
    set.rawBlend[0] = 0.0;
    const std::string bytes = encodeGaussians(set);
    EXPECT_NE(bytes.find("comment set_kind base\n"), std::string::npos);
    EXPECT_NE(bytes.find("property double f_rest_23\n"), std::string::npos);
    EXPECT_NE(bytes.find("property double raw_blend\n"), std::string::npos);
    GaussianSet env(SetKind::Env);
    env.push_back(Gaussian2D{});
    EXPECT_EQ(encodeGaussians(env).find("raw_blend"), std::string::npos);
}

TEST(Ply, FloatPropertiesAreAccepted) {
    std::string h = "ply\nformat binary_little_endian 1.0\ncomment set_kind env\nelement vertex 1\n";
    const char *names[] = {"x", "y", "z", "quat_w", "quat_x", "quat_y", "quat_z",
                           "log_scale_u", "log_scale_v", "raw_opacity"};
    for (const char *n : names) h += std::string("property float ") + n + "\n";
    for (int c = 0; c < 3; ++c) h += "property float f_dc_" + std::to_string(c) + "\n";
    for (int i = 0; i < 24; ++i) h += "property float f_rest_" + std::to_string(i) + "\n";
    h += "end_header\n";
    for (int i = 0; i < 37; ++i) {
        const float v = i == 3 ? 1.0f : 0.25f * static_cast<float>(i);
        h.append(reinterpret_cast<const char *>(&v), 4);
    }
    const GaussianSet set = decodeGaussians(h);
    ASSERT_EQ(set.size(), 1u);
    EXPECT_EQ(set.centers[0], Vec3(0.0, 0.25, 0.5));
    EXPECT_EQ(set.rotations[0][0], 1.0);
    EXPECT_EQ(set.sh[0][0], 2.5);  // f_dc_0
    EXPECT_EQ(set.sh[0][9], 2.75); // f_dc_1
    EXPECT_EQ(set.sh[0][1], 3.25); // f_rest_0
}

TEST(Ply, TruncatedPayloadNamesDeficit) {
    std::mt19937_64 rng(5);
    const std::string bytes = encodeGaussians(testing::randomScene(rng, 10));
    const std::string cut = bytes.substr(0, bytes.size() - 40 * 8 * 3 / 2);
    try {
        decodeGaussians(cut, "cut.ply");
        FAIL() << "expected IoError";
    } catch (const IoError &e) {
        EXPECT_NE(std::string(e.what()).find("deficit"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("declares 10"), std::string::npos) << e.what();
        ASSERT_TRUE(e.offset().has_value());
        EXPECT_EQ(*e.offset(), cut.size());
        EXPECT_EQ(e.path(), "cut.ply");
    }
}

TEST(Ply, NegativeCases) {
    std::mt19937_64 rng(6);
    const std::string good = encodeGaussians(testing::randomScene(rng, 2));
    auto expectError = [](const std::string &bytes, const std::string &needle) {
        try {
            decodeGaussians(bytes);
            ADD_FAILURE() << "expected IoError containing " << needle;
        } catch (const IoError &e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
            EXPECT_TRUE(e.offset().has_value());
        }
    };
    auto replaced = [&](const std::string &from, const std::string &to) {
        std::string s = good;
        s.replace(s.find(from), from.size(), to);
        return s;
    };
    expectError("plx\n", "not a PLY");
    expectError(replaced("set_kind base", "set_kind glass"), "unknown set_kind");
    expectError(replaced("binary_little_endian", "binary_big_endian"), "unsupported PLY format");
    expectError(replaced("property double raw_blend\n", ""), "missing property raw_blend");
    expectError(replaced("property double x", "property uchar x"), "unsupported property type");
    expectError(replaced("end_header", "end_headr"), "unexpected header line");
    expectError(good + "xx", "trailing bytes");
    expectError(good.substr(0, 30), "missing end_header");
    try {
        decodeGaussians(replaced("set_kind base", "set_kind glass"));
    } catch (const IoError &e) {
        EXPECT_EQ(*e.offset(), good.find("comment set_kind"));
    }
}

TEST(Ply, MissingFileIsIoError) {
    EXPECT_THROW(loadGaussians(scratch("does_not_exist.ply").string()), IoError);
}

TEST(Points, RoundTripWithAndWithoutColor) {
    const std::vector<Vec3> pts = {{1, 2, 3}, {-1e-7, 0.5, 9}};
    const std::vector<Vec3> cols = {{0.1, 0.2, 0.3}, {1, 0, 0}};
    const auto path = scratch("points.ply").string();
    savePoints(path, pts, cols);
    std::vector<Vec3> p, c;
    loadPoints(path, p, c);
    EXPECT_EQ(p, pts);
    EXPECT_EQ(c, cols);
    savePoints(path, pts);
    loadPoints(path, p, c);
    EXPECT_EQ(p, pts);
    EXPECT_TRUE(c.empty());
}

CameraModel sampleCamera(double angle) {
    return lookAt(40, 30, 0.9, Vec3(std::cos(angle) * 3.0, 1.0, std::sin(angle) * 3.0),
                  Vec3(0.1, 0.0, 0.2), Vec3(0, -1, 0));
}

TEST(Cameras, RoundTripIsExact) {
    std::vector<CameraModel> cams;
    for (int i = 0; i < 7; ++i) cams.push_back(sampleCamera(0.37 * i + 0.01));
    cams[3].cx = 1.0 / 3.0;
    const auto path = scratch("cameras.txt").string();
    saveCameras(path, cams);
    const auto back = loadCameras(path);
    ASSERT_EQ(back.size(), cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        EXPECT_EQ(back[i].width, cams[i].width);
        EXPECT_EQ(back[i].height, cams[i].height);
        EXPECT_EQ(back[i].fx, cams[i].fx);
        EXPECT_EQ(back[i].fy, cams[i].fy);
        EXPECT_EQ(back[i].cx, cams[i].cx);
        EXPECT_EQ(back[i].cy, cams[i].cy);
        EXPECT_EQ(back[i].rotation, cams[i].rotation);
        EXPECT_EQ(back[i].translation, cams[i].translation);
    }
}

TEST(Cameras, NonOrthonormalRotationNamesCamera) {
    std::vector<CameraModel> cams = {sampleCamera(0.2), sampleCamera(0.8)};
    cams[1].rotation(0, 0) += 0.01;
    try {
        decodeCameras(encodeCameras(cams), "cams.txt");
        FAIL() << "expected IoError";
    } catch (const IoError &e) {
        EXPECT_NE(std::string(e.what()).find("camera 1"), std::string::npos) << e.what();
    }
    // within tolerance
    cams[1] = sampleCamera(0.8);
    cams[1].rotation(0, 0) += 1e-5;
    EXPECT_NO_THROW(decodeCameras(encodeCameras(cams)));
}

TEST(Cameras, MalformedRecords) {
    const std::string good = encodeCameras({sampleCamera(0.5)});
    EXPECT_THROW(decodeCameras("cameras 1\n"), IoError);
    std::string bad = good;
    bad.replace(bad.find("count 1"), 7, "count 2");
    EXPECT_THROW(decodeCameras(bad), IoError);
    bad = good;
    bad.insert(bad.size() - 1, " 7");
    EXPECT_THROW(decodeCameras(bad), IoError);
    bad = good;
    bad.replace(bad.find("camera 0 40"), 11, "camera 0 4x");
    EXPECT_THROW(decodeCameras(bad), IoError);
}

Image gradientImage(int w, int h, int channels) {
    Image img(w, h, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(x, y, c) = std::fmod(0.013 * x + 0.029 * y + 0.31 * c, 1.0);
    return img;
}

TEST(Png, RoundTripQuantizesTo8Bit) {
    Image img = gradientImage(17, 9, 3);
    img.at(0, 0, 0) = -0.5;
    img.at(1, 0, 0) = 2.0;
    const auto path = scratch("img.png").string();
    savePng(path, img);
    const Image back = loadPng(path);
    ASSERT_EQ(back.width, 17);
    ASSERT_EQ(back.height, 9);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double expected = std::round(std::clamp(img.data[i], 0.0, 1.0) * 255.0) / 255.0;
        EXPECT_EQ(back.data[i], expected) << i;
    }
}

TEST(Png, RejectsSixteenBit) {
    const auto path = scratch("gray16.png").string();
    FILE *fp = std::fopen(path.c_str(), "wb");
    ASSERT_NE(fp, nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, 2, 1, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    unsigned char row[4] = {0x12, 0x34, 0xff, 0x00};
    png_write_row(png, row);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    try {
        loadPng(path);
        FAIL() << "expected IoError";
    } catch (const IoError &e) {
        EXPECT_NE(std::string(e.what()).find("bit depth 16"), std::string::npos) << e.what();
    }
}

TEST(Png, GarbageIsIoError) {
    const auto path = scratch("garbage.png").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "definitely not a png";
    }
    EXPECT_THROW(loadPng(path), IoError);
}

TEST(Pfm, RoundTripOfFloatValuesIsExact) {
    for (int channels : {1, 3}) {
        Image img = gradientImage(13, 7, channels);
        for (double &v : img.data) v = static_cast<float>(v * 37.0 - 4.0);
        const auto path = scratch("img" + std::to_string(channels) + ".pfm").string();
        savePfm(path, img);
        const Image back = loadPfm(path);
        ASSERT_EQ(back.channels, channels);
        EXPECT_EQ(back.data, img.data);
    }
}

TEST(Pfm, RowsAreStoredBottomUp) {
    Image img(2, 2, 1);
    img.at(0, 0) = 1.0; // top-left
    const auto path = scratch("order.pfm").string();
    savePfm(path, img);
    const std::string bytes = readFile(path);
    const std::string header = "Pf\n2 2\n-1.0\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    float first;
    std::memcpy(&first, bytes.data() + header.size() + 2 * 4, 4); // row 1 of file = top row
    EXPECT_EQ(first, 1.0f);
}

TEST(Pfm, TruncatedRasterIsIoError) {
    const auto path = scratch("short.pfm").string();
    savePfm(path, gradientImage(4, 4, 3));
    std::string bytes = readFile(path);
    writeFileAtomic(path, bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(loadPfm(path), IoError);
}

TEST(Normals, EncodeDecode) {
    const std::vector<Vec3> n = {Vec3(0, 0, 1), Vec3(0, 0, 0), Vec3(1, 1, 0).normalized()};
    const Image raw = normalsToImage(n, 3, 1, false);
    EXPECT_EQ(imageToNormals(raw, false), n);
    const auto back = imageToNormals(normalsToImage(n, 3, 1, true), true);
    EXPECT_NEAR((back[0] - n[0]).norm(), 0.0, 1e-12);
    EXPECT_EQ(back[1], Vec3::Zero());
    EXPECT_NEAR((back[2] - n[2]).norm(), 0.0, 1e-12);
}

TEST(Atomic, WriteReplacesAndLeavesNoTemporary) {
    const auto path = scratch("atomic.bin").string();
    writeFileAtomic(path, "one");
    writeFileAtomic(path, "two");
    EXPECT_EQ(readFile(path), "two");
    EXPECT_FALSE(fs::exists(path + ".tmp"));
}

} // namespace
} // namespace reflsurf
