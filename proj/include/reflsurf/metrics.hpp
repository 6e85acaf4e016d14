// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <reflsurf/loss.hpp>

namespace reflsurf {

inline constexpr double kPsnrCap = 99.0;

/// PSNR over the [0, 1] range, capped at 99 dB for identical images.
double psnr(const Image &a, const Image &b);

/// PSNR over the pixels where `mask` is nonzero.
double psnrMasked(const Image &a, const Image &b, const std::vector<char> &mask);

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};
ImageMetrics compareImages(const Image &a, const Image &b);

} // namespace reflsurf
