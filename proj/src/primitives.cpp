// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/primitives.hpp>

#include <atomic>
#include <algorithm>

namespace reflsurf {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                             -1.0925484305920792, 0.5462742152960396};

// d(basis_b)/d(dir) as rows.
std::array<Vec3, kShBasisCount> shBasisGrad(const Vec3 &d) {
    const double x = d.x(), y = d.y(), z = d.z();
    return {Vec3(0, 0, 0),
            Vec3(0, -kShC1, 0),
            Vec3(0, 0, kShC1),
            Vec3(-kShC1, 0, 0),
            kShC2[0] * Vec3(y, x, 0),
            kShC2[1] * Vec3(0, z, y),
            kShC2[2] * Vec3(-2 * x, -2 * y, 4 * z),
            kShC2[3] * Vec3(z, 0, x),
            kShC2[4] * Vec3(2 * x, -2 * y, 0)};
}

} // namespace

const char *toString(SetKind kind) { return kind == SetKind::Base ? "base" : "env"; }

std::uint64_t GaussianSet::nextGeneration() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void GaussianSet::reserve(std::size_t n) {
    centers.reserve(n);
    rotations.reserve(n);
    logScales.reserve(n);
    rawOpacity.reserve(n);
    sh.reserve(n);
    if (hasBlend()) rawBlend.reserve(n);
}

void GaussianSet::push_back(const Gaussian2D &g) {
    centers.push_back(g.center);
    rotations.push_back(g.rotation);
    logScales.push_back(g.logScales);
    rawOpacity.push_back(g.rawOpacity);
    sh.push_back(g.sh);
    if (hasBlend()) rawBlend.push_back(g.rawBlend.value_or(0.0));
    touch();
}

Gaussian2D GaussianSet::get(std::size_t i) const {
    Gaussian2D g;
    g.center     = centers[i];
    g.rotation   = rotations[i];
    g.logScales  = logScales[i];
    g.rawOpacity = rawOpacity[i];
    g.sh         = sh[i];
    if (hasBlend()) g.rawBlend = rawBlend[i];
    return g;
}

void GaussianSet::set(std::size_t i, const Gaussian2D &g) {
    centers[i]    = g.center;
    rotations[i]  = g.rotation;
    logScales[i]  = g.logScales;
    rawOpacity[i] = g.rawOpacity;
    sh[i]         = g.sh;
    if (hasBlend()) rawBlend[i] = g.rawBlend.value_or(0.0);
    touch();
}

void GaussianSet::compact(const std::vector<char> &keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!keep[i]) continue;
        centers[out]    = centers[i];
        rotations[out]  = rotations[i];
        logScales[out]  = logScales[i];
        rawOpacity[out] = rawOpacity[i];
        sh[out]         = sh[i];
        if (hasBlend()) rawBlend[out] = rawBlend[i];
        ++out;
    }
    centers.resize(out);
    rotations.resize(out);
    logScales.resize(out);
    rawOpacity.resize(out);
    sh.resize(out);
    if (hasBlend()) rawBlend.resize(out);
    touch();
}

void GaussianSet::clear() {
    centers.clear();
    rotations.clear();
    logScales.clear();
    rawOpacity.clear();
    sh.clear();
    rawBlend.clear();
    touch();
}

Mat3 rotationMatrix(const Vec4 &qRaw) {
    const Vec4 q = qRaw / qRaw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

Vec4 rotationMatrixBackward(const Vec4 &qRaw, const Mat3 &G) {
    const double len = qRaw.norm();
    const Vec4 q = qRaw / len;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 dq;
    dq[0] = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) +
                 x * G(2, 1));
    dq[1] = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) +
                 z * G(2, 0) + w * G(2, 1) - 2 * x * G(2, 2));
    dq[2] = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) -
                 w * G(2, 0) + z * G(2, 1) - 2 * y * G(2, 2));
    dq[3] = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) +
                 y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
    // through q / |q|
    return (dq - q * q.dot(dq)) / len;
}

TangentTransform buildTransform(const Gaussian2D &g) {
    const Mat3 R = rotationMatrix(g.rotation);
    const Vec2 s = g.scales();
    TangentTransform t;
    t.H.setZero();
    t.H.block<3, 1>(0, 0) = s.x() * R.col(0);
    t.H.block<3, 1>(0, 1) = s.y() * R.col(1);
    t.H.block<3, 1>(0, 3) = g.center;
    t.H(3, 3) = 1.0;
    return t;
}

Vec3 invertToLocal(const TangentTransform &t, const Vec3 &x) {
    const Vec3 cu = t.H.block<3, 1>(0, 0);
    const Vec3 cv = t.H.block<3, 1>(0, 1);
    const Vec3 rel = x - t.H.block<3, 1>(0, 3);
    const Vec3 n = cu.cross(cv).normalized();
    return {cu.dot(rel) / cu.squaredNorm(), cv.dot(rel) / cv.squaredNorm(), n.dot(rel)};
}

SurfelFrame surfelFrame(const GaussianSet &set, std::size_t i) {
    const Mat3 R = rotationMatrix(set.rotations[i]);
    SurfelFrame f;
    f.center = set.centers[i];
    f.tu = R.col(0);
    f.tv = R.col(1);
    f.normal = R.col(2);
    f.su = std::exp(set.logScales[i].x());
    f.sv = std::exp(set.logScales[i].y());
    return f;
}

TriangleProxy buildProxy(const SurfelFrame &f, std::uint32_t id) {
    const double r = kProxyExtent;
    const Vec3 a = r * f.su * f.tu;
    const Vec3 b = r * f.sv * f.tv;
    // (-r,-r), (r,-r), (r,r), (-r,r) mapped through H
    const Vec3 p0 = f.center - a - b;
    const Vec3 p1 = f.center + a - b;
    const Vec3 p2 = f.center + a + b;
    const Vec3 p3 = f.center - a + b;
    TriangleProxy proxy;
    proxy.tris[0] = {p0, p1, p2};
    proxy.tris[1] = {p0, p2, p3};
    proxy.primitiveId = id;
    return proxy;
}

TriangleProxy buildProxy(const Gaussian2D &g, std::uint32_t id) {
    const Mat3 R = rotationMatrix(g.rotation);
    SurfelFrame f;
    f.center = g.center;
    f.tu = R.col(0);
    f.tv = R.col(1);
    f.normal = R.col(2);
    f.su = std::exp(g.logScales.x());
    f.sv = std::exp(g.logScales.y());
    return buildProxy(f, id);
}

std::vector<TriangleProxy> buildProxies(const GaussianSet &set) {
    std::vector<TriangleProxy> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i)
        out.push_back(buildProxy(surfelFrame(set, i), static_cast<std::uint32_t>(i)));
    return out;
}

std::array<double, kShBasisCount> shBasis(const Vec3 &d) {
    const double x = d.x(), y = d.y(), z = d.z();
    return {kShC0,
            -kShC1 * y,
            kShC1 * z,
            -kShC1 * x,
            kShC2[0] * x * y,
            kShC2[1] * y * z,
            kShC2[2] * (2 * z * z - x * x - y * y),
            kShC2[3] * x * z,
            kShC2[4] * (x * x - y * y)};
}

Vec3 evalShUnchecked(const ShCoeffs &c, const Vec3 &dir) {
    const auto b = shBasis(dir);
    Vec3 out;
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.5;
        for (int k = 0; k < kShBasisCount; ++k) acc += c[ch * kShBasisCount + k] * b[k];
        out[ch] = std::max(acc, 0.0);
    }
    return out;
}

Vec3 evalSh(const ShCoeffs &c, const Vec3 &dir) {
    if (std::abs(dir.norm() - 1.0) > 1e-6)
        throw ContractError("evalSh: direction must be unit length");
    return evalShUnchecked(c, dir);
}

Vec3 evalShBackward(const ShCoeffs &c, const Vec3 &dir, const Vec3 &dColor, ShCoeffs &dCoeffs) {
    const auto b = shBasis(dir);
    const auto db = shBasisGrad(dir);
    Vec3 dDir = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.5;
        for (int k = 0; k < kShBasisCount; ++k) acc += c[ch * kShBasisCount + k] * b[k];
        if (acc < 0.0 || dColor[ch] == 0.0) continue;
        for (int k = 0; k < kShBasisCount; ++k) {
            dCoeffs[ch * kShBasisCount + k] += dColor[ch] * b[k];
            dDir += (dColor[ch] * c[ch * kShBasisCount + k]) * db[k];
        }
    }
    return dDir;
}

Vec3 surfelNormal(const Gaussian2D &g, const Vec3 &viewDir) {
    const Vec3 n = rotationMatrix(g.rotation).col(2);
    const double c = n.dot(viewDir);
    return c > 0.0 ? Vec3(-n) : n;
}

} // namespace reflsurf
