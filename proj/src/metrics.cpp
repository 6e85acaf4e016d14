// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/metrics.hpp>

#include <algorithm>
#include <cmath>

namespace reflsurf {

double psnr(const Image &a, const Image &b) {
    if (!a.sameShape(b) || a.data.empty()) throw ContractError("psnr: image dimensions differ");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnrMasked(const Image &a, const Image &b, const std::vector<char> &mask) {
    if (!a.sameShape(b) || mask.size() != a.pixelCount())
        throw ContractError("psnrMasked: image or mask dimensions differ");
    double se = 0.0;
    std::size_t n = 0;
    const auto ch = static_cast<std::size_t>(a.channels);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (std::size_t c = 0; c < ch; ++c) {
            const double d = a.data[p * ch + c] - b.data[p * ch + c];
            se += d * d;
        }
        n += ch;
    }
    if (n == 0) throw ContractError("psnrMasked: empty mask");
    if (se == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(se / static_cast<double>(n)));
}

ImageMetrics compareImages(const Image &a, const Image &b) {
    return {psnr(a, b), ssim(a, b)};
}

} // namespace reflsurf
