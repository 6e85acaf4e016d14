// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/camera.hpp>

#include <cmath>
#include <string>

namespace reflsurf {

void CameraModel::validate(double tolerance) const {
    if (width <= 0 || height <= 0) throw ContractError("camera: image size must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("camera: focal lengths must be positive");
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= tolerance) || !(rotation.determinant() > 0.0))
        throw ContractError("camera: rotation is not orthonormal (error " + std::to_string(err) +
                            ")");
    if (!translation.allFinite()) throw ContractError("camera: translation is not finite");
}

Ray generateCameraRay(const CameraModel &cam, double px, double py) {
    const Vec3 dc((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
    const Vec3 d = cam.rotation.transpose() * dc;
    return Ray{cam.center(), d / d.norm(), 0.0};
}

std::vector<Ray> cameraRays(const CameraModel &cam) {
    std::vector<Ray> rays;
    rays.reserve(cam.pixelCount());
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) rays.push_back(pixelRay(cam, x, y));
    return rays;
}

CameraModel lookAt(int width, int height, double fovY, const Vec3 &eye, const Vec3 &target,
                   const Vec3 &up) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * fovY);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    const Vec3 z = (target - eye).normalized();
    Vec3 x = (-up).cross(z);
    if (x.norm() < 1e-12) x = z.unitOrthogonal();
    x.normalize();
    const Vec3 y = z.cross(x);
    cam.rotation.row(0) = x;
    cam.rotation.row(1) = y;
    cam.rotation.row(2) = z;
    cam.translation = -cam.rotation * eye;
    return cam;
}

std::vector<Ray> mirroredCameraRays(const CameraModel &cam, const Vec3 &point, const Vec3 &normal) {
    const Mat3 M = Mat3::Identity() - 2.0 * normal * normal.transpose();
    const Vec3 c = cam.center();
    const Vec3 mc = c - 2.0 * normal.dot(c - point) * normal;
    std::vector<Ray> rays = cameraRays(cam);
    for (Ray &r : rays) {
        r.origin = mc;
        r.direction = M * r.direction;
    }
    return rays;
}

} // namespace reflsurf
