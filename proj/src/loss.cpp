// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/loss.hpp>

#include <array>
#include <cmath>

namespace reflsurf {

namespace {

std::array<double, kSsimWindow> gaussianWindow() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double &v : w) v /= sum;
    return w;
}

// Separable zero-padded same-size filtering of a single-channel plane.
void blur(const std::vector<double> &in, int w, int h, std::vector<double> &out) {
    static const auto k = gaussianWindow();
    const int r = kSsimWindow / 2;
    std::vector<double> tmp(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= w) continue;
                s += k[static_cast<std::size_t>(i + r)] * in[static_cast<std::size_t>(y * w + xx)];
            }
            tmp[static_cast<std::size_t>(y * w + x)] = s;
        }
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(yy * w + x)];
            }
            out[static_cast<std::size_t>(y * w + x)] = s;
        }
}

void checkShape(const Image &a, const Image &b, const char *who) {
    if (!a.sameShape(b) || a.data.empty())
        throw ContractError(std::string(who) + ": image dimensions differ");
}

} // namespace

double ssim(const Image &a, const Image &b, Image *gradA) {
    checkShape(a, b, "ssim");
    const int w = a.width, h = a.height;
    const std::size_t n = a.pixelCount();
    const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
    const double norm = 1.0 / static_cast<double>(n * static_cast<std::size_t>(a.channels));
    if (gradA) *gradA = Image(w, h, a.channels);

    double total = 0.0;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    std::vector<double> mx, my, exx, eyy, exy;
    std::vector<double> gMu(n), gExx(n), gExy(n), bMu, bExx, bExy;
    for (int c = 0; c < a.channels; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)];
            y[i] = b.data[i * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(c)];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        blur(x, w, h, mx);
        blur(y, w, h, my);
        blur(xx, w, h, exx);
        blur(yy, w, h, eyy);
        blur(xy, w, h, exy);
        for (std::size_t i = 0; i < n; ++i) {
            const double sxx = exx[i] - mx[i] * mx[i];
            const double syy = eyy[i] - my[i] * my[i];
            const double sxy = exy[i] - mx[i] * my[i];
            const double a1 = 2.0 * mx[i] * my[i] + c1, a2 = 2.0 * sxy + c2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + c1, b2 = sxx + syy + c2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (gradA) {
                gMu[i] = norm * s *
                         (2.0 * my[i] / a1 - 2.0 * my[i] / a2 - 2.0 * mx[i] / b1 + 2.0 * mx[i] / b2);
                gExx[i] = -norm * s / b2;
                gExy[i] = norm * 2.0 * s / a2;
            }
        }
        if (gradA) {
            blur(gMu, w, h, bMu);
            blur(gExx, w, h, bExx);
            blur(gExy, w, h, bExy);
            for (std::size_t i = 0; i < n; ++i)
                gradA->data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)] =
                    bMu[i] + 2.0 * x[i] * bExx[i] + y[i] * bExy[i];
        }
    }
    return total * norm;
}

RgbLoss lossRgb(const Image &render, const Image &gt, double l1Weight, double ssimWeight) {
    checkShape(render, gt, "lossRgb");
    RgbLoss out;
    const double inv = 1.0 / static_cast<double>(render.data.size());
    Image ssimGrad;
    out.ssim = ssim(render, gt, &ssimGrad);
    out.grad = Image(render.width, render.height, render.channels);
    for (std::size_t i = 0; i < render.data.size(); ++i) {
        const double diff = render.data[i] - gt.data[i];
        out.l1 += std::abs(diff);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        out.grad.data[i] = l1Weight * sign * inv - 0.5 * ssimWeight * ssimGrad.data[i];
    }
    out.l1 *= inv;
    out.value = l1Weight * out.l1 + ssimWeight * 0.5 * (1.0 - out.ssim);
    return out;
}

void depthNormals(const CameraModel &cam, const std::vector<double> &surfaceDepth,
                  const std::vector<double> &alpha, double alphaFloor, std::vector<Vec3> &normals,
                  std::vector<char> &valid) {
    const int w = cam.width, h = cam.height;
    const std::size_t n = cam.pixelCount();
    if (surfaceDepth.size() != n || alpha.size() != n)
        throw ContractError("depthNormals: map size does not match the camera");
    normals.assign(n, Vec3::Zero());
    valid.assign(n, 0);
    const std::vector<Ray> rays = cameraRays(cam);
    auto idx = [w](int x, int y) { return static_cast<std::size_t>(y * w + x); };
    auto point = [&](int x, int y) {
        const Ray &r = rays[idx(x, y)];
        return Vec3(r.origin + surfaceDepth[idx(x, y)] * r.direction);
    };
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            if (!(alpha[idx(x, y)] > alphaFloor && alpha[idx(x - 1, y)] > alphaFloor &&
                  alpha[idx(x + 1, y)] > alphaFloor && alpha[idx(x, y - 1)] > alphaFloor &&
                  alpha[idx(x, y + 1)] > alphaFloor))
                continue;
            const Vec3 c = (point(x, y + 1) - point(x, y - 1)).cross(point(x + 1, y) - point(x - 1, y));
            const double len = c.norm();
            if (!(len > 0.0)) continue;
            normals[idx(x, y)] = c / len;
            valid[idx(x, y)] = 1;
        }
}

NormalLoss lossNormalConsistency(const CameraModel &cam, const std::vector<Vec3> &normal,
                                 const std::vector<double> &surfaceDepth,
                                 const std::vector<double> &alpha, double alphaFloor) {
    const std::size_t n = cam.pixelCount();
    if (normal.size() != n) throw ContractError("lossNormalConsistency: normal map size mismatch");
    std::vector<Vec3> nd;
    std::vector<char> valid;
    depthNormals(cam, surfaceDepth, alpha, alphaFloor, nd, valid);
    NormalLoss out;
    out.dNormal.assign(n, Vec3::Zero());
    out.dSurfaceDepth.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.validPixels += valid[i] != 0;
    if (out.validPixels == 0) return out;
    const double inv = 1.0 / static_cast<double>(out.validPixels);

    const int w = cam.width;
    const std::vector<Ray> rays = cameraRays(cam);
    auto idx = [w](int x, int y) { return static_cast<std::size_t>(y * w + x); };
    auto point = [&](int x, int y) {
        const Ray &r = rays[idx(x, y)];
        return Vec3(r.origin + surfaceDepth[idx(x, y)] * r.direction);
    };
    std::vector<Vec3> dPoint(n, Vec3::Zero());
    for (int y = 1; y + 1 < cam.height; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const std::size_t i = idx(x, y);
            if (!valid[i]) continue;
            out.value += (1.0 - normal[i].dot(nd[i])) * inv;
            out.dNormal[i] = -nd[i] * inv;
            const Vec3 a = point(x, y + 1) - point(x, y - 1);
            const Vec3 b = point(x + 1, y) - point(x - 1, y);
            const Vec3 c = a.cross(b);
            const double len = c.norm();
            const Vec3 gN = -normal[i] * inv;
            const Vec3 gC = (gN - nd[i] * nd[i].dot(gN)) / len;
            const Vec3 gA = b.cross(gC);
            const Vec3 gB = gC.cross(a);
            dPoint[idx(x, y + 1)] += gA;
            dPoint[idx(x, y - 1)] -= gA;
            dPoint[idx(x + 1, y)] += gB;
            dPoint[idx(x - 1, y)] -= gB;
        }
    for (std::size_t i = 0; i < n; ++i) out.dSurfaceDepth[i] = rays[i].direction.dot(dPoint[i]);
    return out;
}

NormalLoss lossMonoNormal(const std::vector<Vec3> &normal, const std::vector<Vec3> &mono,
                          const std::vector<char> *mask) {
    if (normal.size() != mono.size() || (mask && mask->size() != normal.size()))
        throw ContractError("lossMonoNormal: map sizes differ");
    NormalLoss out;
    const std::size_t n = normal.size();
    out.dNormal.assign(n, Vec3::Zero());
    auto use = [&](std::size_t i) {
        return !normal[i].isZero(0.0) && !mono[i].isZero(0.0) && (!mask || (*mask)[i]);
    };
    for (std::size_t i = 0; i < n; ++i) out.validPixels += use(i);
    if (out.validPixels == 0) return out;
    const double inv = 1.0 / static_cast<double>(out.validPixels);
    for (std::size_t i = 0; i < n; ++i) {
        if (!use(i)) continue;
        out.value += (1.0 - normal[i].dot(mono[i])) * inv;
        out.dNormal[i] = -mono[i] * inv;
    }
    return out;
}

} // namespace reflsurf
