// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/grad.hpp>

#include "trace_kernel.hpp"

#include <algorithm>

namespace reflsurf {

void GradStore::reset(std::size_t n, bool withBlend) {
    dCenter.assign(n, Vec3::Zero());
    dRotation.assign(n, Vec4::Zero());
    dLogScales.assign(n, Vec2::Zero());
    dRawOpacity.assign(n, 0.0);
    dSh.assign(n, ShCoeffs{});
    dRawBlend.assign(withBlend ? n : 0, 0.0);
    positionalNorm.assign(n, 0.0);
    hitCount.assign(n, 0);
    weight.assign(n, 0.0);
}

void GradStore::zeroGradients() {
    std::fill(dCenter.begin(), dCenter.end(), Vec3::Zero());
    std::fill(dRotation.begin(), dRotation.end(), Vec4::Zero());
    std::fill(dLogScales.begin(), dLogScales.end(), Vec2::Zero());
    std::fill(dRawOpacity.begin(), dRawOpacity.end(), 0.0);
    std::fill(dSh.begin(), dSh.end(), ShCoeffs{});
    std::fill(dRawBlend.begin(), dRawBlend.end(), 0.0);
}

void GradStore::zeroStatistics() {
    std::fill(positionalNorm.begin(), positionalNorm.end(), 0.0);
    std::fill(hitCount.begin(), hitCount.end(), 0u);
    std::fill(weight.begin(), weight.end(), 0.0);
}

void GradStore::add(const GradStore &o) {
    if (o.size() != size() || o.dRawBlend.size() != dRawBlend.size())
        throw ContractError("GradStore::add: size mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
        dCenter[i] += o.dCenter[i];
        dRotation[i] += o.dRotation[i];
        dLogScales[i] += o.dLogScales[i];
        dRawOpacity[i] += o.dRawOpacity[i];
        for (int k = 0; k < kShCoeffCount; ++k) dSh[i][k] += o.dSh[i][k];
        positionalNorm[i] += o.positionalNorm[i];
        hitCount[i] += o.hitCount[i];
        weight[i] += o.weight[i];
    }
    for (std::size_t i = 0; i < dRawBlend.size(); ++i) dRawBlend[i] += o.dRawBlend[i];
}

bool GradStore::gradientsAllZero() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!dCenter[i].isZero(0.0) || !dRotation[i].isZero(0.0) || !dLogScales[i].isZero(0.0) ||
            dRawOpacity[i] != 0.0)
            return false;
        for (double v : dSh[i])
            if (v != 0.0) return false;
    }
    return std::all_of(dRawBlend.begin(), dRawBlend.end(), [](double v) { return v == 0.0; });
}

DepthGrads intersectionDepthGrads(const Vec3 &v1, const Vec3 &n, const Vec3 &o, const Vec3 &d) {
    DepthGrads g;
    const double denom = n.dot(d);
    if (std::abs(denom) <= 1e-9) return g;
    const double num = n.dot(v1 - o);
    g.dOrigin = -n / denom;
    g.dDirection = -n * (num / (denom * denom));
    return g;
}

void accumulateDensifyStats(GradStore &grads, std::uint32_t id, const Vec3 &positionGrad,
                            double tHit) {
    grads.positionalNorm[id] += positionGrad.norm() * tHit * 0.5;
    grads.hitCount[id] += 1;
}

RayGrad backwardRay(const Bvh &bvh, const GaussianSet &set, const Ray &ray,
                    const SampleGrad &g, GradStore &grads, const TraceOptions &opts,
                    const RaySample *forward) {
    checkSnapshot(bvh, set);
    if (grads.size() != set.size()) throw ContractError("backwardRay: GradStore size mismatch");
    RayGrad out;
    if (g.isZero()) return out;

    RaySample fwd;
    if (forward) {
        fwd = *forward;
    } else {
        fwd = integrateRay(bvh, set, ray, opts);
    }
    const double total = g.color.dot(fwd.color) + g.depth * fwd.depth + g.normal.dot(fwd.normal) +
                         g.position.dot(fwd.position) + g.blend * fwd.blend;
    const double Tfinal = fwd.transmittance;
    const Vec3 &o = ray.origin;
    const Vec3 &d = ray.direction;
    const bool withBlend = set.hasBlend();

    double prefix = 0.0;
    detail::walkRay(bvh, set, ray, opts, [&](const detail::HitEval &e, double Ti) {
        const std::uint32_t id = e.id;
        const SurfelFrame &f = e.frame;
        const double alpha = e.alpha;
        const double W = Ti * alpha;

        const Vec3 color = evalShUnchecked(set.sh[id], d);
        const Vec3 nFaced = e.normalSign * f.normal;
        const double beta = withBlend ? set.blend(id) : 0.0;

        const double wi = g.color.dot(color) + g.depth * e.t + g.normal.dot(nFaced) +
                          g.position.dot(e.x) + g.blend * beta;
        prefix += W * wi;
        const double oneMinus = 1.0 - alpha;
        const double dAlpha = Ti * wi - (total - prefix) / oneMinus + g.alpha * Tfinal / oneMinus;

        // features
        Vec3 dDir = evalShBackward(set.sh[id], d, W * g.color, grads.dSh[id]);
        if (withBlend) grads.dRawBlend[id] += W * g.blend * beta * (1.0 - beta);
        Vec3 dNormal = (W * e.normalSign) * g.normal;
        Vec3 dX = W * g.position;
        double dT = W * g.depth;

        // alpha = sigma * G
        const double dAlphaRaw = e.clamped ? 0.0 : dAlpha;
        const double dSigma = dAlphaRaw * e.gauss;
        grads.dRawOpacity[id] += dSigma * e.sigma * (1.0 - e.sigma);
        const double dG = dAlphaRaw * e.sigma;
        const double du = -dG * e.u * e.gauss;
        const double dv = -dG * e.v * e.gauss;

        const Vec3 rel = e.x - f.center;
        const Vec3 duDx = f.tu / f.su;
        const Vec3 dvDx = f.tv / f.sv;
        dX += du * duDx + dv * dvDx;
        const Vec3 dTu = (du / f.su) * rel;
        const Vec3 dTv = (dv / f.sv) * rel;
        grads.dLogScales[id] += Vec2(-du * e.u, -dv * e.v);
        Vec3 dCenter = -(du * duDx + dv * dvDx);

        // x = o + t d
        out.dOrigin += dX;
        dDir += e.t * dX;
        dT += dX.dot(d);

        // t = n.(p - o) / (n.d)
        const DepthGrads dg = intersectionDepthGrads(f.center, f.normal, o, d);
        out.dOrigin += dT * dg.dOrigin;
        dDir += dT * dg.dDirection;
        dCenter += (dT / e.ndotd) * f.normal;
        dNormal += (dT / e.ndotd) * (f.center - e.x);

        out.dDirection += dDir;
        grads.dCenter[id] += dCenter;

        Mat3 dR;
        dR.col(0) = dTu;
        dR.col(1) = dTv;
        dR.col(2) = dNormal;
        grads.dRotation[id] += rotationMatrixBackward(set.rotations[id], dR);

        accumulateDensifyStats(grads, id, dCenter, e.t);
        grads.weight[id] += W;
    });
    return out;
}

} // namespace reflsurf
