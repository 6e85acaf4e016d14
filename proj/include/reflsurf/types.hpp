// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Dense row-major image of `channels` interleaved doubles per pixel.
struct Image {
    int width    = 0;
    int height   = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixelCount() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double &at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    Vec3 rgb(int x, int y) const {
        const std::size_t i = index(x, y);
        return {data[i], data[i + 1], data[i + 2]};
    }
    void setRgb(int x, int y, const Vec3 &v) {
        const std::size_t i = index(x, y);
        data[i]     = v.x();
        data[i + 1] = v.y();
        data[i + 2] = v.z();
    }
    Vec3 rgb(std::size_t pixel) const {
        const std::size_t i = pixel * static_cast<std::size_t>(channels);
        return {data[i], data[i + 1], data[i + 2]};
    }
    void setRgb(std::size_t pixel, const Vec3 &v) {
        const std::size_t i = pixel * static_cast<std::size_t>(channels);
        data[i]     = v.x();
        data[i + 1] = v.y();
        data[i + 2] = v.z();
    }
    bool sameShape(const Image &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Raised for invalid arguments to numerical routines (non-unit directions,
/// mismatched shapes, stale acceleration structures).
class ContractError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

} // namespace reflsurf
