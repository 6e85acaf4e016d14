// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole camera. Camera frame: +z forward, +x right, +y down. Poses are
// stored world-to-camera: p_cam = R * p_world + t.
//
#pragma once

#include <reflsurf/tracer.hpp>

#include <vector>

namespace reflsurf {

struct CameraModel {
    int width = 0, height = 0;
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 center() const { return -rotation.transpose() * translation; }
    std::size_t pixelCount() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    /// Throws ContractError unless sizes and focal lengths are positive and
    /// the rotation is orthonormal within `tolerance`.
    void validate(double tolerance = 1e-6) const;
};

/// Ray from the camera center through continuous pixel coordinates (px, py);
/// the center of pixel (i, j) is (i + 0.5, j + 0.5).
Ray generateCameraRay(const CameraModel &cam, double px, double py);
inline Ray pixelRay(const CameraModel &cam, int x, int y) {
    return generateCameraRay(cam, x + 0.5, y + 0.5);
}
std::vector<Ray> cameraRays(const CameraModel &cam);

/// Camera at `eye` looking at `target`; `up` fixes the roll (image y points
/// away from it).
CameraModel lookAt(int width, int height, double fovY, const Vec3 &eye, const Vec3 &target,
                   const Vec3 &up = Vec3(0, 1, 0));

/// Rays of `cam` mirrored about the plane through `point` with unit `normal`.
/// Pixel (i, j) of the result is the reflection of pixel (i, j)'s ray.
std::vector<Ray> mirroredCameraRays(const CameraModel &cam, const Vec3 &point, const Vec3 &normal);

} // namespace reflsurf
