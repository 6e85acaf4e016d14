// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Image losses with analytic gradients.
//
#pragma once

#include <reflsurf/camera.hpp>

#include <vector>

namespace reflsurf {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over pixels and channels, 11x11 Gaussian window (sigma 1.5),
/// zero padded to the input size, dynamic range 1. When `gradA` is given it
/// receives d(mean SSIM)/d(a).
double ssim(const Image &a, const Image &b, Image *gradA = nullptr);

struct RgbLoss {
    double value = 0.0;
    double l1 = 0.0;   // mean |render - gt|
    double ssim = 0.0; // mean SSIM
    Image grad;        // d value / d render
};

/// l1Weight * L1 + ssimWeight * (1 - SSIM) / 2.
RgbLoss lossRgb(const Image &render, const Image &gt, double l1Weight = 0.8,
                double ssimWeight = 0.2);

struct NormalLoss {
    double value = 0.0;
    std::size_t validPixels = 0;
    std::vector<Vec3> dNormal;         // per pixel
    std::vector<double> dSurfaceDepth; // per pixel; empty for the mono loss
};

/// Normals from depth: back-projects p = o + depth * d per pixel and takes
/// normalize((p[y+1] - p[y-1]) x (p[x+1] - p[x-1])), which faces the camera
/// for front-facing surfaces. `valid` marks interior pixels whose 4-neighbours
/// and self all exceed `alphaFloor`.
void depthNormals(const CameraModel &cam, const std::vector<double> &surfaceDepth,
                  const std::vector<double> &alpha, double alphaFloor, std::vector<Vec3> &normals,
                  std::vector<char> &valid);

/// Mean over valid pixels of 1 - n . N_d.
NormalLoss lossNormalConsistency(const CameraModel &cam, const std::vector<Vec3> &normal,
                                 const std::vector<double> &surfaceDepth,
                                 const std::vector<double> &alpha, double alphaFloor = 0.1);

/// Mean over pixels with a nonzero rendered normal, a nonzero reference and
/// (when given) a set mask of 1 - n . m.
NormalLoss lossMonoNormal(const std::vector<Vec3> &normal, const std::vector<Vec3> &mono,
                          const std::vector<char> *mask = nullptr);

} // namespace reflsurf
