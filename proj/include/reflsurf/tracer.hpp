// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// BVH over surfel triangle proxies and chunked front-to-back integration of
// surfels along rays.
//
#pragma once

#include <reflsurf/primitives.hpp>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace reflsurf {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction{0.0, 0.0, 1.0};
    double tMin = 0.0;
};

/// Validates |direction| = 1 within 1e-6 and tMin >= 0.
Ray makeRay(const Vec3 &origin, const Vec3 &direction, double tMin = 0.0);

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3 &p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void extend(const Aabb &b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    bool valid() const { return (lo.array() <= hi.array()).all(); }
    bool contains(const Vec3 &p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    Vec3 extent() const { return hi - lo; }
    double halfArea() const {
        const Vec3 e = (hi - lo).cwiseMax(0.0);
        return e.x() * e.y() + e.y() * e.z() + e.z() * e.x();
    }
};

struct BvhNode {
    Aabb box;
    std::uint32_t first = 0; // leaf: first triangle slot; inner: left child index
    std::uint32_t count = 0; // leaf: triangle count; 0 marks an inner node
    bool isLeaf() const { return count > 0; }
};

struct BvhTriangle {
    Vec3 v0, e1, e2;
    std::uint32_t primitive = 0;
};

/// Plane of one surfel proxy, shared by both of its triangles so that the two
/// report the identical depth.
struct ProxyPlane {
    Vec3 point;
    Vec3 normal; // unit
};

/// Binned-SAH BVH over proxy triangles. `generation` ties it to the
/// GaussianSet snapshot it was built from (0 for free-standing geometry).
struct Bvh {
    std::vector<BvhNode> nodes;
    std::vector<BvhTriangle> triangles; // leaf order
    std::vector<ProxyPlane> planes;     // indexed by primitive id
    std::uint64_t generation = 0;

    bool empty() const { return nodes.empty(); }
    std::size_t primitiveCount() const { return planes.size(); }
    const Aabb &bounds() const { return nodes.front().box; }
};

inline constexpr int kMaxLeafTriangles = 4;
inline constexpr int kDefaultChunk = 16;
inline constexpr int kMaxChunk = 256;

/// Rejects an empty proxy collection.
Bvh buildBvh(std::span<const TriangleProxy> proxies, std::uint64_t generation = 0);

/// Builds the BVH of the set's current proxies. An empty set yields an empty
/// BVH bound to the set's generation, which renders as an empty scene.
Bvh buildBvh(const GaussianSet &set);

struct Hit {
    double t = 0.0;
    std::uint32_t id = 0;
};

inline bool hitLess(const Hit &a, const Hit &b) {
    return a.t < b.t || (a.t == b.t && a.id < b.id);
}

/// Position along a ray in (depth, primitive id) order; hits strictly after
/// the cursor are eligible for the next chunk.
struct HitCursor {
    double t = -std::numeric_limits<double>::infinity();
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
};

struct HitBuffer {
    std::array<Hit, kMaxChunk> entries;
    int count = 0;
    int capacity = kDefaultChunk;

    bool full() const { return count == capacity; }
    const Hit &operator[](int i) const { return entries[static_cast<std::size_t>(i)]; }
    const Hit *begin() const { return entries.data(); }
    const Hit *end() const { return entries.data() + count; }
};

/// The `k` nearest proxy hits after `after`, one per primitive, sorted by
/// (depth, id). A short buffer means the ray has no further hits.
HitBuffer nextChunk(const Bvh &bvh, const Ray &ray, const HitCursor &after, int k = kDefaultChunk);
HitBuffer nextChunk(const Bvh &bvh, const Ray &ray, double afterDepth, int k = kDefaultChunk);

/// One candidate visited during integration. Recorded for replay checks.
struct HitRecord {
    std::uint32_t id = 0;
    double t = 0.0;
    double u = 0.0, v = 0.0;
    double alpha = 0.0; // after clamping
    bool skipped = false;
};

struct TraceOptions {
    int chunkSize = kDefaultChunk;
    double minAlpha = 1.0 / 255.0;
    double maxAlpha = 0.999;
    double minTransmittance = 1e-4;
    double parallelEpsilon = 1e-9;
    std::vector<HitRecord> *log = nullptr; // single-ray diagnostics only
};

/// Per-ray composited quantities.
struct RaySample {
    Vec3 color = Vec3::Zero();
    double transmittance = 1.0;
    double depth = 0.0;
    Vec3 normal = Vec3::Zero();
    Vec3 position = Vec3::Zero();
    double blend = 0.0;
    double alpha = 0.0;
    int hits = 0;
};

/// Throws ContractError when `bvh` was not built from the current snapshot
/// of `set`.
void checkSnapshot(const Bvh &bvh, const GaussianSet &set);

RaySample integrateRay(const Bvh &bvh, const GaussianSet &set, const Ray &ray,
                       const TraceOptions &opts = {});

std::vector<RaySample> renderRays(const Bvh &bvh, const GaussianSet &set,
                                  std::span<const Ray> rays, const TraceOptions &opts = {},
                                  int threads = 1);

} // namespace reflsurf
