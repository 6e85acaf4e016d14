// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/tracer.hpp>

#include <reflsurf/parallel.hpp>

#include "trace_kernel.hpp"

#include <algorithm>
#include <cmath>

namespace reflsurf {

namespace {

constexpr int kSahBins = 16;
constexpr double kParallelEpsilon = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct BuildTri {
    Aabb box;
    Vec3 centroid;
    std::uint32_t source = 0; // index into the flat triangle list
};

struct Bin {
    Aabb box;
    int count = 0;
};

// Picks the SAH split of tris[begin, end). Returns false when every centroid
// coincides and no plane separates them.
bool findSahSplit(const std::vector<BuildTri> &tris, const std::vector<std::uint32_t> &order,
                  std::size_t begin, std::size_t end, int &bestAxis, double &bestPlane) {
    Aabb cbox;
    for (std::size_t i = begin; i < end; ++i) cbox.extend(tris[order[i]].centroid);
    const Vec3 ext = cbox.extent();
    double bestCost = kInf;
    bestAxis = -1;
    for (int axis = 0; axis < 3; ++axis) {
        if (!(ext[axis] > 0.0)) continue;
        std::array<Bin, kSahBins> bins{};
        const double scale = kSahBins / ext[axis];
        for (std::size_t i = begin; i < end; ++i) {
            const BuildTri &bt = tris[order[i]];
            int b = static_cast<int>((bt.centroid[axis] - cbox.lo[axis]) * scale);
            b = std::clamp(b, 0, kSahBins - 1);
            bins[b].count++;
            bins[b].box.extend(bt.box);
        }
        std::array<double, kSahBins - 1> leftCost{};
        Aabb acc;
        int n = 0;
        for (int b = 0; b < kSahBins - 1; ++b) {
            acc.extend(bins[b].box);
            n += bins[b].count;
            leftCost[b] = n > 0 ? n * acc.halfArea() : 0.0;
        }
        acc = Aabb{};
        n = 0;
        for (int b = kSahBins - 1; b > 0; --b) {
            acc.extend(bins[b].box);
            n += bins[b].count;
            const int nl = static_cast<int>(end - begin) - n;
            if (n == 0 || nl == 0) continue;
            const double cost = leftCost[b - 1] + n * acc.halfArea();
            if (cost < bestCost) {
                bestCost = cost;
                bestAxis = axis;
                bestPlane = cbox.lo[axis] + b / scale;
            }
        }
    }
    return bestAxis >= 0;
}

// Slab test; returns the clipped parametric interval.
inline bool slab(const Aabb &box, const Vec3 &o, const Vec3 &invD, double lower, double upper,
                 double &tNear) {
    double t0 = lower, t1 = upper;
    for (int a = 0; a < 3; ++a) {
        if (std::isinf(invD[a])) {
            if (o[a] < box.lo[a] || o[a] > box.hi[a]) return false;
            continue;
        }
        double ta = (box.lo[a] - o[a]) * invD[a];
        double tb = (box.hi[a] - o[a]) * invD[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    tNear = t0;
    return true;
}

// Barycentric inside test (Moller-Trumbore without the depth term).
inline bool insideTriangle(const BvhTriangle &tri, const Vec3 &o, const Vec3 &d) {
    const Vec3 p = d.cross(tri.e2);
    const double det = tri.e1.dot(p);
    if (det == 0.0) return false;
    const double inv = 1.0 / det;
    const Vec3 s = o - tri.v0;
    const double b1 = s.dot(p) * inv;
    constexpr double eps = 1e-9; // closes the seam along the shared diagonal
    if (b1 < -eps || b1 > 1.0 + eps) return false;
    const Vec3 q = s.cross(tri.e1);
    const double b2 = d.dot(q) * inv;
    return b2 >= -eps && b1 + b2 <= 1.0 + eps;
}

inline void insertHit(HitBuffer &buf, const Hit &h) {
    if (buf.full() && !hitLess(h, buf.entries[static_cast<std::size_t>(buf.count - 1)])) return;
    for (int i = 0; i < buf.count; ++i)
        if (buf.entries[static_cast<std::size_t>(i)].id == h.id) return;
    int pos = buf.full() ? buf.count - 1 : buf.count;
    while (pos > 0 && hitLess(h, buf.entries[static_cast<std::size_t>(pos - 1)])) {
        buf.entries[static_cast<std::size_t>(pos)] = buf.entries[static_cast<std::size_t>(pos - 1)];
        --pos;
    }
    buf.entries[static_cast<std::size_t>(pos)] = h;
    if (!buf.full()) ++buf.count;
}

} // namespace

Ray makeRay(const Vec3 &origin, const Vec3 &direction, double tMin) {
    if (std::abs(direction.norm() - 1.0) > 1e-6)
        throw ContractError("makeRay: direction must be unit length");
    if (!(tMin >= 0.0)) throw ContractError("makeRay: tMin must be non-negative");
    return Ray{origin, direction, tMin};
}

Bvh buildBvh(std::span<const TriangleProxy> proxies, std::uint64_t generation) {
    if (proxies.empty()) throw ContractError("buildBvh: empty proxy set");

    Bvh bvh;
    bvh.generation = generation;

    std::uint32_t maxId = 0;
    for (const auto &p : proxies) maxId = std::max(maxId, p.primitiveId);
    bvh.planes.assign(static_cast<std::size_t>(maxId) + 1, ProxyPlane{Vec3::Zero(), Vec3::UnitZ()});

    std::vector<BvhTriangle> flat;
    std::vector<BuildTri> build;
    flat.reserve(proxies.size() * 2);
    build.reserve(proxies.size() * 2);
    for (const auto &p : proxies) {
        const Triangle &t0 = p.tris[0];
        const Vec3 n = (t0.v1 - t0.v0).cross(t0.v2 - t0.v0);
        bvh.planes[p.primitiveId] = {t0.v0, n.normalized()};
        for (const Triangle &t : p.tris) {
            BuildTri bt;
            bt.box.extend(t.v0);
            bt.box.extend(t.v1);
            bt.box.extend(t.v2);
            bt.centroid = (t.v0 + t.v1 + t.v2) / 3.0;
            bt.source = static_cast<std::uint32_t>(flat.size());
            build.push_back(bt);
            flat.push_back({t.v0, t.v1 - t.v0, t.v2 - t.v0, p.primitiveId});
        }
    }

    std::vector<std::uint32_t> order(build.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);

    struct Task {
        std::uint32_t node;
        std::size_t begin, end;
    };
    bvh.nodes.reserve(build.size() / 2 + 1);
    bvh.nodes.emplace_back();
    std::vector<Task> stack{{0, 0, build.size()}};
    while (!stack.empty()) {
        const Task task = stack.back();
        stack.pop_back();
        Aabb box;
        for (std::size_t i = task.begin; i < task.end; ++i) box.extend(build[order[i]].box);
        bvh.nodes[task.node].box = box;
        const std::size_t n = task.end - task.begin;
        if (n <= static_cast<std::size_t>(kMaxLeafTriangles)) {
            bvh.nodes[task.node].first = static_cast<std::uint32_t>(task.begin);
            bvh.nodes[task.node].count = static_cast<std::uint32_t>(n);
            continue;
        }
        int axis = -1;
        double plane = 0.0;
        std::size_t mid;
        if (findSahSplit(build, order, task.begin, task.end, axis, plane)) {
            auto it = std::partition(order.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(task.end),
                                     [&](std::uint32_t i) { return build[i].centroid[axis] < plane; });
            mid = static_cast<std::size_t>(it - order.begin());
            if (mid == task.begin || mid == task.end) mid = task.begin + n / 2;
        } else {
            mid = task.begin + n / 2;
        }
        const auto left = static_cast<std::uint32_t>(bvh.nodes.size());
        bvh.nodes.emplace_back();
        bvh.nodes.emplace_back();
        bvh.nodes[task.node].first = left;
        bvh.nodes[task.node].count = 0;
        stack.push_back({left + 1, mid, task.end});
        stack.push_back({left, task.begin, mid});
    }

    bvh.triangles.reserve(flat.size());
    for (std::uint32_t i : order) bvh.triangles.push_back(flat[build[i].source]);

    // Pad boxes so slab tests never cull a hit that the plane math keeps.
    const double pad = 1e-9 * (bvh.nodes.front().box.extent().maxCoeff() + 1.0);
    for (auto &node : bvh.nodes) {
        node.box.lo.array() -= pad;
        node.box.hi.array() += pad;
    }
    return bvh;
}

Bvh buildBvh(const GaussianSet &set) {
    if (set.empty()) {
        Bvh bvh;
        bvh.generation = set.generation();
        return bvh;
    }
    std::vector<TriangleProxy> proxies;
    proxies.reserve(set.size());
    std::vector<ProxyPlane> planes(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const SurfelFrame f = surfelFrame(set, i);
        proxies.push_back(buildProxy(f, static_cast<std::uint32_t>(i)));
        planes[i] = {f.center, f.normal};
    }
    Bvh bvh = buildBvh(proxies, set.generation());
    // Use the surfel frame itself for depths so the tracer and the hit
    // evaluation agree bit for bit.
    bvh.planes = std::move(planes);
    return bvh;
}

HitBuffer nextChunk(const Bvh &bvh, const Ray &ray, const HitCursor &after, int k) {
    if (k < 1 || k > kMaxChunk) throw ContractError("nextChunk: chunk size out of range");
    HitBuffer buf;
    buf.capacity = k;
    if (bvh.empty()) return buf;

    const Vec3 &o = ray.origin;
    const Vec3 &d = ray.direction;
    const Vec3 invD(1.0 / d.x(), 1.0 / d.y(), 1.0 / d.z());
    const double lowerT = std::max(ray.tMin, after.t);
    const double lower = lowerT - 1e-9 * (std::abs(lowerT) + 1.0);

    struct Entry {
        std::uint32_t node;
        double tNear;
    };
    std::array<Entry, 128> stack;
    int top = 0;
    double tNear = 0.0;
    if (!slab(bvh.nodes[0].box, o, invD, lower, kInf, tNear)) return buf;
    stack[static_cast<std::size_t>(top++)] = {0, tNear};

    while (top > 0) {
        const Entry entry = stack[static_cast<std::size_t>(--top)];
        const double upper =
            buf.full() ? buf.entries[static_cast<std::size_t>(buf.count - 1)].t : kInf;
        const double upperPad = upper + 1e-9 * (std::abs(upper) + 1.0);
        if (entry.tNear > upperPad) continue;
        const BvhNode &node = bvh.nodes[entry.node];
        if (node.isLeaf()) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                const BvhTriangle &tri = bvh.triangles[i];
                const ProxyPlane &pl = bvh.planes[tri.primitive];
                const double denom = pl.normal.dot(d);
                if (std::abs(denom) < kParallelEpsilon) continue;
                const double t = pl.normal.dot(pl.point - o) / denom;
                if (!(t > ray.tMin)) continue;
                if (!(t > after.t || (t == after.t && tri.primitive > after.id))) continue;
                if (buf.full() && !hitLess({t, tri.primitive}, buf.entries[static_cast<std::size_t>(buf.count - 1)]))
                    continue;
                if (!insideTriangle(tri, o, d)) continue;
                insertHit(buf, {t, tri.primitive});
            }
            continue;
        }
        const std::uint32_t l = node.first, r = node.first + 1;
        double tl = 0.0, tr = 0.0;
        const bool hl = slab(bvh.nodes[l].box, o, invD, lower, upperPad, tl);
        const bool hr = slab(bvh.nodes[r].box, o, invD, lower, upperPad, tr);
        if (hl && hr) {
            // near child on top
            if (tl <= tr) {
                stack[static_cast<std::size_t>(top++)] = {r, tr};
                stack[static_cast<std::size_t>(top++)] = {l, tl};
            } else {
                stack[static_cast<std::size_t>(top++)] = {l, tl};
                stack[static_cast<std::size_t>(top++)] = {r, tr};
            }
        } else if (hl) {
            stack[static_cast<std::size_t>(top++)] = {l, tl};
        } else if (hr) {
            stack[static_cast<std::size_t>(top++)] = {r, tr};
        }
    }
    return buf;
}

HitBuffer nextChunk(const Bvh &bvh, const Ray &ray, double afterDepth, int k) {
    return nextChunk(bvh, ray, HitCursor{afterDepth, std::numeric_limits<std::uint32_t>::max()}, k);
}

void checkSnapshot(const Bvh &bvh, const GaussianSet &set) {
    if (bvh.generation != set.generation())
        throw ContractError("BVH was built from a different GaussianSet snapshot");
}

RaySample integrateRay(const Bvh &bvh, const GaussianSet &set, const Ray &ray,
                       const TraceOptions &opts) {
    checkSnapshot(bvh, set);
    RaySample s;
    const double T = detail::walkRay(bvh, set, ray, opts, [&](const detail::HitEval &e, double Ti) {
        const double w = Ti * e.alpha;
        s.color += w * evalShUnchecked(set.sh[e.id], ray.direction);
        s.depth += w * e.t;
        s.normal += (w * e.normalSign) * e.frame.normal;
        s.position += w * e.x;
        s.blend += w * set.blend(e.id);
        ++s.hits;
    });
    s.transmittance = T;
    s.alpha = 1.0 - T;
    return s;
}

std::vector<RaySample> renderRays(const Bvh &bvh, const GaussianSet &set, std::span<const Ray> rays,
                                  const TraceOptions &opts, int threads) {
    checkSnapshot(bvh, set);
    std::vector<RaySample> out(rays.size());
    parallelRanges(rays.size(), resolveThreads(threads), [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) out[i] = integrateRay(bvh, set, rays[i], opts);
    });
    return out;
}

} // namespace reflsurf
