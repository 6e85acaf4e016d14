// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Shared hit walk for the forward and backward passes. Both replay exactly
// the same chunk sequence, so the backward pass never stores more than one
// chunk per ray.
//
#pragma once

#include <reflsurf/tracer.hpp>

namespace reflsurf::detail {

struct HitEval {
    std::uint32_t id = 0;
    SurfelFrame frame;
    double t = 0.0;
    double ndotd = 0.0; // unflipped normal . direction
    Vec3 x = Vec3::Zero();
    double u = 0.0, v = 0.0;
    double gauss = 0.0;
    double sigma = 0.0;
    double alphaRaw = 0.0; // sigma * gauss
    double alpha = 0.0;    // clamped
    bool clamped = false;
    double normalSign = 1.0; // camera-facing flip
};

inline HitEval evaluateHit(const GaussianSet &set, const Ray &ray, const Hit &hit,
                           const TraceOptions &opts) {
    HitEval e;
    e.id = hit.id;
    e.frame = surfelFrame(set, hit.id);
    e.ndotd = e.frame.normal.dot(ray.direction);
    e.t = e.frame.normal.dot(e.frame.center - ray.origin) / e.ndotd;
    e.x = ray.origin + e.t * ray.direction;
    const Vec3 rel = e.x - e.frame.center;
    e.u = e.frame.tu.dot(rel) / e.frame.su;
    e.v = e.frame.tv.dot(rel) / e.frame.sv;
    e.gauss = gaussianValue(e.u, e.v);
    e.sigma = set.opacity(hit.id);
    e.alphaRaw = e.sigma * e.gauss;
    e.clamped = e.alphaRaw > opts.maxAlpha;
    e.alpha = e.clamped ? opts.maxAlpha : e.alphaRaw;
    e.normalSign = e.ndotd > 0.0 ? -1.0 : 1.0;
    return e;
}

/// Calls visit(const HitEval &, double transmittanceBefore) for every
/// integrated hit in front-to-back order. Returns the final transmittance.
template <class Visit>
double walkRay(const Bvh &bvh, const GaussianSet &set, const Ray &ray, const TraceOptions &opts,
               Visit &&visit) {
    double T = 1.0;
    if (bvh.empty()) return T;
    const int k = opts.chunkSize;
    HitCursor cursor;
    for (;;) {
        const HitBuffer chunk = nextChunk(bvh, ray, cursor, k);
        for (int i = 0; i < chunk.count; ++i) {
            const HitEval e = evaluateHit(set, ray, chunk[i], opts);
            const bool skip = e.alpha < opts.minAlpha;
            if (opts.log) opts.log->push_back({e.id, e.t, e.u, e.v, e.alpha, skip});
            if (skip) continue;
            visit(e, T);
            T *= 1.0 - e.alpha;
            if (T < opts.minTransmittance) return T;
        }
        if (chunk.count < k) break;
        cursor = {chunk[chunk.count - 1].t, chunk[chunk.count - 1].id};
    }
    return T;
}

} // namespace reflsurf::detail
