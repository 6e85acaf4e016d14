// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural test scenes and the on-disk scene bundle.
//
#pragma once

#include <reflsurf/compose.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reflsurf {

/// Finite planar mirror: the square of half-size `halfExtent` around `center`
/// in the plane with unit `normal`, sides along `axisU` and normal x axisU.
struct MirrorPlane {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    Vec3 axisU = Vec3::UnitX();
    double halfExtent = 1.0;

    /// True when `ray` hits the square at least `margin` (world units)
    /// inside its border.
    bool hits(const Ray &ray, double margin = 0.0) const;
};

struct SceneBundle {
    std::string name;
    GaussianSet base{SetKind::Base};
    GaussianSet env{SetKind::Env};
    std::vector<CameraModel> cameras;
    std::vector<Image> images;
    std::vector<std::vector<Vec3>> monoNormals; // empty, or one (possibly empty) map per camera
    std::vector<Vec3> points, pointColors;
    std::vector<CameraModel> testCameras;
    std::vector<Image> testImages;
    std::optional<MirrorPlane> mirror;

    void validate() const;
};

struct SyntheticOptions {
    int width = 64, height = 64;
    int trainViews = 24;
    int testViews = 4;
    std::uint64_t seed = 0;
    bool renderImages = true; // false leaves images and mono maps empty
    int threads = 1;
};

std::vector<std::string> syntheticNames();

/// mirror_wall, sphere_probe or diffuse_box. A pure function of (name, opts).
SceneBundle makeSynthetic(const std::string &name, const SyntheticOptions &opts = {});

/// Renders every camera of `cameras` through composeFrame on (base, env).
std::vector<Image> renderViews(const Scene &scene, const std::vector<CameraModel> &cameras,
                               const ComposeOptions &opts = {});

/// Environment set traced along the camera rays mirrored about `mirror`;
/// `mask` marks pixels whose camera ray lands inside the mirror at least
/// `margin` away from its border.
Image mirrorReference(const Scene &scene, const MirrorPlane &mirror, const CameraModel &camera,
                      std::vector<char> *mask = nullptr, double margin = 0.1);

/// Directory layout: a `bundle.txt` manifest next to PLY, camera and PFM files.
void saveBundle(const std::string &dir, const SceneBundle &bundle);
SceneBundle loadBundle(const std::string &dir);

} // namespace reflsurf
