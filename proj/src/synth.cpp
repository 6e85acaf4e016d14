// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/io.hpp>
#include <reflsurf/synth.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>

namespace reflsurf {

namespace {

namespace fs = std::filesystem;

Vec4 facing(const Vec3 &normal) {
    const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized());
    return Vec4(q.w(), q.x(), q.y(), q.z()).normalized();
}

Gaussian2D plate(const Vec3 &center, const Vec3 &normal, double scale, double rawOpacity,
                 const Vec3 &rgb, std::optional<double> rawBlend) {
    Gaussian2D g;
    g.center = center;
    g.rotation = facing(normal);
    g.logScales = Vec2::Constant(std::log(scale));
    g.rawOpacity = rawOpacity;
    g.sh.fill(0.0);
    for (int c = 0; c < 3; ++c) g.sh[static_cast<std::size_t>(c * kShBasisCount)] = (rgb[c] - 0.5) / kShC0;
    g.rawBlend = rawBlend;
    return g;
}

Vec3 wallTexture(double x, double y) {
    return Vec3(0.5 + 0.35 * std::sin(1.1 * x + 0.3), 0.5 + 0.35 * std::cos(0.9 * y),
                0.5 + 0.3 * std::sin(0.6 * (x + y)));
}

Vec3 hue(double h) {
    const Vec3 c(std::cos(2 * M_PI * h), std::cos(2 * M_PI * (h - 1.0 / 3)), std::cos(2 * M_PI * (h - 2.0 / 3)));
    return 0.5 * Vec3::Ones() + 0.4 * c;
}

// Seeded camera jitter shared by the scene builders.
struct Jitter {
    std::mt19937_64 rng;
    double operator()(double amount) {
        return std::uniform_real_distribution<double>(-amount, amount)(rng);
    }
};

void mirrorWall(SceneBundle &b, const SyntheticOptions &o, Jitter &jit) {
    constexpr double kWallZ = 3.0, kWallHalf = 3.5;
    for (int i = -4; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j)
            for (int layer = 0; layer < 2; ++layer)
                b.base.push_back(plate(Vec3(0.25 * i, 0.25 * j, 0.0), Vec3::UnitZ(), 0.2, 8.0,
                                       Vec3::Constant(0.2), 8.0));
    const int cells = 28;
    const double step = 2.0 * kWallHalf / cells;
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j < cells; ++j) {
            const double x = -kWallHalf + (i + 0.5) * step, y = -kWallHalf + (j + 0.5) * step;
            b.env.push_back(plate(Vec3(x, y, kWallZ), -Vec3::UnitZ(), 0.6 * step, 6.0,
                                  wallTexture(x, y), std::nullopt));
        }
    MirrorPlane m;
    m.halfExtent = 1.0;
    b.mirror = m;

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        b.points.emplace_back(u(jit.rng), u(jit.rng), 0.0);
        b.pointColors.push_back(Vec3::Constant(0.2));
    }
    for (int i = 0; i < 400; ++i) {
        const double x = kWallHalf * u(jit.rng), y = kWallHalf * u(jit.rng);
        b.points.emplace_back(x, y, kWallZ);
        b.pointColors.push_back(wallTexture(x, y));
    }
    const double fov = 60.0 * M_PI / 180.0;
    for (int i = 0; i < o.trainViews; ++i) {
        const double a = 2.0 * M_PI * i / std::max(1, o.trainViews) + jit(0.05);
        const double r = 0.5 + jit(0.1), h = 2.0 + jit(0.1);
        b.cameras.push_back(lookAt(o.width, o.height, fov, Vec3(r * std::cos(a), r * std::sin(a), h),
                                   Vec3(jit(0.05), jit(0.05), 0.0), Vec3(0, 1, 0)));
    }
    for (int i = 0; i < o.testViews; ++i) {
        const double a = 2.0 * M_PI * (i + 0.5) / std::max(1, o.testViews);
        b.testCameras.push_back(lookAt(o.width, o.height, fov,
                                       Vec3(0.45 * std::cos(a), 0.45 * std::sin(a), 2.05),
                                       Vec3::Zero(), Vec3(0, 1, 0)));
    }
}

void sphereProbe(SceneBundle &b, const SyntheticOptions &o, Jitter &jit) {
    constexpr double kRadius = 0.7, kRing = 2.5;
    const int n = 600;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rr = std::sqrt(1.0 - z * z);
        const Vec3 dir(rr * std::cos(golden * i), rr * std::sin(golden * i), z);
        b.base.push_back(plate(kRadius * dir, dir, 0.08, 8.0, Vec3::Constant(0.25), 8.0));
        b.points.push_back(kRadius * dir);
        b.pointColors.push_back(Vec3::Constant(0.25));
    }
    const int emitters = 12;
    for (int e = 0; e < emitters; ++e) {
        const double a = 2.0 * M_PI * e / emitters;
        const Vec3 out(std::cos(a), std::sin(a), 0.0);
        const Vec3 side(-std::sin(a), std::cos(a), 0.0);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 12; ++j) {
                const Vec3 p = kRing * out + side * (0.15 * (i - 2)) + Vec3(0, 0, 0.15 * (j - 5.5));
                b.env.push_back(plate(p, -out, 0.12, 6.0, hue(static_cast<double>(e) / emitters),
                                      std::nullopt));
                b.points.push_back(p);
                b.pointColors.push_back(hue(static_cast<double>(e) / emitters));
            }
    }
    const double fov = 45.0 * M_PI / 180.0;
    for (int i = 0; i < o.trainViews; ++i) {
        const double a = 2.0 * M_PI * i / std::max(1, o.trainViews) + jit(0.05);
        b.cameras.push_back(lookAt(o.width, o.height, fov,
                                   Vec3(2.0 * std::cos(a), 2.0 * std::sin(a), 0.6 + jit(0.2)),
                                   Vec3::Zero(), Vec3(0, 0, 1)));
    }
    for (int i = 0; i < o.testViews; ++i) {
        const double a = 2.0 * M_PI * (i + 0.5) / std::max(1, o.testViews);
        b.testCameras.push_back(lookAt(o.width, o.height, fov, Vec3(2.0 * std::cos(a), 2.0 * std::sin(a), 0.5),
                                       Vec3::Zero(), Vec3(0, 0, 1)));
    }
}

void diffuseBox(SceneBundle &b, const SyntheticOptions &o, Jitter &jit) {
    constexpr double kHalf = 2.0, kHeight = 2.0, kStep = 0.2;
    auto add = [&](const Vec3 &p, const Vec3 &n) {
        const Vec3 rgb(0.5 + 0.3 * std::sin(1.7 * p.x() + 0.5 * p.z()),
                       0.5 + 0.3 * std::sin(1.3 * p.y() + 0.9),
                       0.5 + 0.25 * std::cos(1.1 * (p.x() - p.y()) + p.z()));
        b.base.push_back(plate(p, n, 0.15, 8.0, rgb, -12.0));
        b.points.push_back(p);
        b.pointColors.push_back(rgb);
    };
    const int across = static_cast<int>(std::lround(2.0 * kHalf / kStep));
    const int up = static_cast<int>(std::lround(kHeight / kStep));
    for (int i = 0; i < across; ++i)
        for (int j = 0; j < across; ++j)
            add(Vec3(-kHalf + (i + 0.5) * kStep, -kHalf + (j + 0.5) * kStep, 0.0), Vec3::UnitZ());
    for (int i = 0; i < across; ++i)
        for (int j = 0; j < up; ++j) {
            const double s = -kHalf + (i + 0.5) * kStep, z = (j + 0.5) * kStep;
            add(Vec3(s, -kHalf, z), Vec3::UnitY());
            add(Vec3(s, kHalf, z), -Vec3::UnitY());
            add(Vec3(-kHalf, s, z), Vec3::UnitX());
            add(Vec3(kHalf, s, z), -Vec3::UnitX());
        }
    const double fov = 70.0 * M_PI / 180.0;
    for (int i = 0; i < o.trainViews; ++i) {
        const double a = 2.0 * M_PI * i / std::max(1, o.trainViews) + jit(0.05);
        b.cameras.push_back(lookAt(o.width, o.height, fov,
                                   Vec3(std::cos(a), std::sin(a), 1.0 + jit(0.1)),
                                   Vec3(-2.0 * std::cos(a), -2.0 * std::sin(a), 0.3), Vec3(0, 0, 1)));
    }
    for (int i = 0; i < o.testViews; ++i) {
        const double a = 2.0 * M_PI * (i + 0.5) / std::max(1, o.testViews);
        b.testCameras.push_back(lookAt(o.width, o.height, fov, Vec3(std::cos(a), std::sin(a), 1.0),
                                       Vec3(-2.0 * std::cos(a), -2.0 * std::sin(a), 0.3),
                                       Vec3(0, 0, 1)));
    }
}

std::string imageName(const char *prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.pfm", prefix, i);
    return buf;
}

} // namespace

bool MirrorPlane::hits(const Ray &ray, double margin) const {
    const double denom = normal.dot(ray.direction);
    if (std::abs(denom) < 1e-12) return false;
    const double t = normal.dot(center - ray.origin) / denom;
    if (t <= 0.0) return false;
    const Vec3 local = ray.origin + t * ray.direction - center;
    const Vec3 axisV = normal.cross(axisU);
    const double limit = halfExtent - margin;
    return std::abs(local.dot(axisU)) <= limit && std::abs(local.dot(axisV)) <= limit;
}

void SceneBundle::validate() const {
    if (cameras.size() != images.size())
        throw ContractError("bundle: camera count (" + std::to_string(cameras.size()) +
                            ") differs from image count (" + std::to_string(images.size()) + ")");
    if (testCameras.size() != testImages.size())
        throw ContractError("bundle: test camera count differs from test image count");
    if (!monoNormals.empty() && monoNormals.size() != cameras.size())
        throw ContractError("bundle: mono normal map count differs from camera count");
    if (!pointColors.empty() && pointColors.size() != points.size())
        throw ContractError("bundle: point color count differs from point count");
}

std::vector<std::string> syntheticNames() { return {"mirror_wall", "sphere_probe", "diffuse_box"}; }

std::vector<Image> renderViews(const Scene &scene, const std::vector<CameraModel> &cameras,
                               const ComposeOptions &opts) {
    std::vector<Image> out;
    out.reserve(cameras.size());
    for (const auto &cam : cameras) out.push_back(composeFrame(scene, cam, opts).color);
    return out;
}

SceneBundle makeSynthetic(const std::string &name, const SyntheticOptions &opts) {
    if (opts.width <= 0 || opts.height <= 0) throw ContractError("synthetic: image size must be positive");
    if (opts.trainViews < 0 || opts.testViews < 0) throw ContractError("synthetic: view counts must be >= 0");
    SceneBundle b;
    b.name = name;
    Jitter jit{std::mt19937_64(opts.seed)};
    if (name == "mirror_wall") mirrorWall(b, opts, jit);
    else if (name == "sphere_probe") sphereProbe(b, opts, jit);
    else if (name == "diffuse_box") diffuseBox(b, opts, jit);
    else throw ContractError("unknown synthetic scene '" + name + "'");
    if (!opts.renderImages) return b;

    Scene scene;
    scene.base = b.base;
    scene.env = b.env;
    scene.refresh();
    ComposeOptions co;
    co.threads = opts.threads;
    for (const auto &cam : b.cameras) {
        const ComposedFrame f = composeFrame(scene, cam, co);
        b.images.push_back(f.color);
        b.monoNormals.push_back(f.gbuffer.normal);
    }
    b.testImages = renderViews(scene, b.testCameras, co);
    return b;
}

Image mirrorReference(const Scene &scene, const MirrorPlane &mirror, const CameraModel &camera,
                      std::vector<char> *mask, double margin) {
    const std::vector<Ray> rays = cameraRays(camera);
    const std::vector<Ray> mirrored = mirroredCameraRays(camera, mirror.center, mirror.normal);
    const std::vector<RaySample> samples = renderRays(scene.envBvh, scene.env, mirrored);
    Image img(camera.width, camera.height, 3);
    if (mask) mask->assign(rays.size(), 0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
        if (!mirror.hits(rays[i], margin)) continue;
        img.setRgb(i, samples[i].color);
        if (mask) (*mask)[i] = 1;
    }
    return img;
}

void saveBundle(const std::string &dir, const SceneBundle &b) {
    b.validate();
    fs::create_directories(dir);
    const fs::path root(dir);
    std::ostringstream man;
    man << std::setprecision(17) << "reflsurf_bundle 1\n";
    man << "name " << b.name << "\n";
    saveGaussians((root / "base.ply").string(), b.base);
    man << "base base.ply\n";
    saveGaussians((root / "env.ply").string(), b.env);
    man << "env env.ply\n";
    saveCameras((root / "cameras.txt").string(), b.cameras);
    man << "cameras cameras.txt\n";
    if (!b.points.empty()) {
        savePoints((root / "points.ply").string(), b.points, b.pointColors);
        man << "points points.ply\n";
    }
    saveCameras((root / "test_cameras.txt").string(), b.testCameras);
    man << "test_cameras test_cameras.txt\n";
    for (std::size_t i = 0; i < b.images.size(); ++i) {
        const std::string rel = "images/" + imageName("train", i);
        savePfm((root / rel).string(), b.images[i]);
        man << "image " << i << " " << rel << "\n";
    }
    for (std::size_t i = 0; i < b.monoNormals.size(); ++i) {
        if (b.monoNormals[i].empty()) continue;
        const std::string rel = "mono/" + imageName("train", i);
        savePfm((root / rel).string(),
                normalsToImage(b.monoNormals[i], b.cameras[i].width, b.cameras[i].height, false));
        man << "mono " << i << " " << rel << "\n";
    }
    for (std::size_t i = 0; i < b.testImages.size(); ++i) {
        const std::string rel = "images/" + imageName("test", i);
        savePfm((root / rel).string(), b.testImages[i]);
        man << "test_image " << i << " " << rel << "\n";
    }
    if (b.mirror) {
        const MirrorPlane &m = *b.mirror;
        man << "mirror";
        for (const Vec3 *v : {&m.center, &m.normal, &m.axisU})
            for (int k = 0; k < 3; ++k) man << " " << (*v)[k];
        man << " " << m.halfExtent << "\n";
    }
    writeFileAtomic((root / "bundle.txt").string(), man.str());
}

SceneBundle loadBundle(const std::string &dir) {
    const fs::path root(dir);
    const std::string manifest = (root / "bundle.txt").string();
    const std::string text = readFile(manifest);
    SceneBundle b;
    std::istringstream in(text);
    std::string line;
    int lineNo = 0;
    std::uint64_t offset = 0;
    std::vector<std::string> images, testImages;
    std::vector<std::string> mono;
    auto resolve = [&](const std::string &rel) {
        const fs::path p = root / rel;
        if (!fs::exists(p)) throw IoError(p.string(), "referenced by " + manifest + " but missing");
        return p.string();
    };
    auto indexed = [&](std::vector<std::string> &list, std::istringstream &ls) {
        std::size_t i = 0;
        std::string rel;
        if (!(ls >> i >> rel)) throw IoError(manifest, "line " + std::to_string(lineNo) + ": expected index and path", offset);
        if (list.size() <= i) list.resize(i + 1);
        list[i] = resolve(rel);
    };
    while (std::getline(in, line)) {
        ++lineNo;
        const std::uint64_t at = offset;
        offset += line.size() + 1;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (lineNo == 1) {
            if (line != "reflsurf_bundle 1") throw IoError(manifest, "expected 'reflsurf_bundle 1'", 0);
            continue;
        }
        std::string rel;
        if (key == "name") ls >> b.name;
        else if (key == "base") { ls >> rel; b.base = loadGaussians(resolve(rel)); }
        else if (key == "env") { ls >> rel; b.env = loadGaussians(resolve(rel)); }
        else if (key == "cameras") { ls >> rel; b.cameras = loadCameras(resolve(rel)); }
        else if (key == "test_cameras") { ls >> rel; b.testCameras = loadCameras(resolve(rel)); }
        else if (key == "points") { ls >> rel; loadPoints(resolve(rel), b.points, b.pointColors); }
        else if (key == "image") indexed(images, ls);
        else if (key == "mono") indexed(mono, ls);
        else if (key == "test_image") indexed(testImages, ls);
        else if (key == "mirror") {
            MirrorPlane m;
            for (Vec3 *v : {&m.center, &m.normal, &m.axisU})
                for (int k = 0; k < 3; ++k) ls >> (*v)[k];
            ls >> m.halfExtent;
            if (!ls) throw IoError(manifest, "line " + std::to_string(lineNo) + ": bad mirror record", at);
            b.mirror = m;
        } else {
            throw IoError(manifest, "line " + std::to_string(lineNo) + ": unknown key '" + key + "'", at);
        }
    }
    if (b.base.kind != SetKind::Base) throw IoError(manifest, "base file holds an env set");
    if (b.env.kind != SetKind::Env) throw IoError(manifest, "env file holds a base set");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].empty()) throw IoError(manifest, "image " + std::to_string(i) + " is not listed");
        b.images.push_back(loadImage(images[i]));
    }
    for (std::size_t i = 0; i < testImages.size(); ++i) {
        if (testImages[i].empty()) throw IoError(manifest, "test image " + std::to_string(i) + " is not listed");
        b.testImages.push_back(loadImage(testImages[i]));
    }
    if (!mono.empty()) {
        b.monoNormals.resize(b.cameras.size());
        for (std::size_t i = 0; i < mono.size(); ++i)
            if (!mono[i].empty()) {
                if (i >= b.cameras.size()) throw IoError(manifest, "mono map " + std::to_string(i) + " has no camera");
                b.monoNormals[i] = imageToNormals(loadImage(mono[i]), mono[i].ends_with(".png"));
            }
    }
    try {
        b.validate();
        for (std::size_t i = 0; i < b.cameras.size(); ++i)
            if (b.images[i].width != b.cameras[i].width || b.images[i].height != b.cameras[i].height)
                throw ContractError("image " + std::to_string(i) + " does not match its camera");
    } catch (const ContractError &e) {
        throw IoError(manifest, e.what());
    }
    return b;
}

} // namespace reflsurf
