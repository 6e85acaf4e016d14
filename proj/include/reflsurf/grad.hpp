// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Analytic backward pass of integrateRay, replayed front to back by re-casting
// the ray, with gradients for every surfel parameter and for the ray itself.
//
#pragma once

#include <reflsurf/tracer.hpp>

#include <cstdint>
#include <vector>

namespace reflsurf {

/// Gradient accumulators mirroring the raw parameters of a GaussianSet, plus
/// per-surfel densification statistics.
struct GradStore {
    std::vector<Vec3> dCenter;
    std::vector<Vec4> dRotation;
    std::vector<Vec2> dLogScales;
    std::vector<double> dRawOpacity;
    std::vector<ShCoeffs> dSh;
    std::vector<double> dRawBlend; // empty unless the set carries blend weights

    std::vector<double> positionalNorm; // sum of |dL/dp| * t / 2 per hit
    std::vector<std::uint32_t> hitCount;
    std::vector<double> weight; // sum of T * alpha

    GradStore() = default;
    explicit GradStore(const GaussianSet &set) { reset(set.size(), set.hasBlend()); }

    std::size_t size() const { return dCenter.size(); }
    void reset(std::size_t n, bool withBlend);
    /// Clears parameter gradients, keeps densification statistics.
    void zeroGradients();
    void zeroStatistics();
    void add(const GradStore &other);
    bool gradientsAllZero() const;
};

struct RayGrad {
    Vec3 dOrigin = Vec3::Zero();
    Vec3 dDirection = Vec3::Zero();
};

/// Upstream dL/d(RaySample field).
struct SampleGrad {
    Vec3 color = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    Vec3 position = Vec3::Zero();
    double depth = 0.0;
    double blend = 0.0;
    double alpha = 0.0;

    bool isZero() const {
        return color.isZero(0.0) && normal.isZero(0.0) && position.isZero(0.0) && depth == 0.0 &&
               blend == 0.0 && alpha == 0.0;
    }
};

/// Accumulates parameter gradients into `grads` and returns dL/do, dL/dd.
/// `forward` may carry the matching integrateRay result; otherwise it is
/// recomputed first.
RayGrad backwardRay(const Bvh &bvh, const GaussianSet &set, const Ray &ray,
                    const SampleGrad &upstream, GradStore &grads, const TraceOptions &opts = {},
                    const RaySample *forward = nullptr);

/// Gradients of t = n.(v1 - o) / (n.d) with respect to the ray origin and the
/// direction vector. A grazing ray (|n.d| <= 1e-9) yields zeros.
struct DepthGrads {
    Vec3 dOrigin = Vec3::Zero();
    Vec3 dDirection = Vec3::Zero();
};
DepthGrads intersectionDepthGrads(const Vec3 &v1, const Vec3 &normal, const Vec3 &o, const Vec3 &d);

/// positionalNorm[id] += |positionGrad| * tHit / 2 and hitCount[id] += 1.
void accumulateDensifyStats(GradStore &grads, std::uint32_t id, const Vec3 &positionGrad,
                            double tHit);

} // namespace reflsurf
