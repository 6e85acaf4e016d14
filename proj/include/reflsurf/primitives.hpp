// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// 2D Gaussian surfels: parameter storage, tangent-plane transform, triangle
// proxies and degree-2 spherical harmonics.
//
#pragma once

#include <reflsurf/types.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace reflsurf {

inline constexpr int kShBasisCount = 9;                 // degrees 0..2
inline constexpr int kShCoeffCount = 3 * kShBasisCount; // RGB
inline constexpr double kProxyExtent = 3.0;             // proxy half-width in sigmas
inline constexpr double kShC0 = 0.28209479177387814;

/// SH coefficients laid out channel-major: coeffs[channel * 9 + basis].
using ShCoeffs = std::array<double, kShCoeffCount>;

enum class SetKind { Base, Env };

const char *toString(SetKind kind);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// One surfel in raw (pre-activation) parameters.
struct Gaussian2D {
    Vec3 center = Vec3::Zero();
    Vec4 rotation{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z)
    Vec2 logScales = Vec2::Zero();
    double rawOpacity = 0.0;
    ShCoeffs sh{};
    std::optional<double> rawBlend; // base-set surfels only

    double opacity() const { return sigmoid(rawOpacity); }
    Vec2 scales() const { return logScales.array().exp(); }
    std::optional<double> blend() const {
        if (!rawBlend) return std::nullopt;
        return sigmoid(*rawBlend);
    }
};

/// Array-of-attributes surfel collection. The raw arrays are the optimizable
/// parameters; anything that mutates them must call touch() so acceleration
/// structures built from an older snapshot are rejected.
struct GaussianSet {
    SetKind kind = SetKind::Base;

    std::vector<Vec3> centers;
    std::vector<Vec4> rotations;
    std::vector<Vec2> logScales;
    std::vector<double> rawOpacity;
    std::vector<ShCoeffs> sh;
    std::vector<double> rawBlend; // empty for env sets

    GaussianSet() : generation_(nextGeneration()) {}
    explicit GaussianSet(SetKind k) : kind(k), generation_(nextGeneration()) {}

    std::size_t size() const { return centers.size(); }
    bool empty() const { return centers.empty(); }
    bool hasBlend() const { return kind == SetKind::Base; }

    void reserve(std::size_t n);
    void push_back(const Gaussian2D &g);
    Gaussian2D get(std::size_t i) const;
    void set(std::size_t i, const Gaussian2D &g);
    /// Keeps entries whose mask is true, preserving order.
    void compact(const std::vector<char> &keep);
    void clear();

    double opacity(std::size_t i) const { return sigmoid(rawOpacity[i]); }
    double blend(std::size_t i) const { return hasBlend() ? sigmoid(rawBlend[i]) : 0.0; }

    std::uint64_t generation() const { return generation_; }
    void touch() { generation_ = nextGeneration(); }

  private:
    static std::uint64_t nextGeneration();
    std::uint64_t generation_;
};

/// Rotation matrix of the normalized quaternion (w, x, y, z). Columns are
/// t_u, t_v and the surfel normal.
Mat3 rotationMatrix(const Vec4 &q);

/// Back-propagates dL/dR through R = rotationMatrix(q), including the
/// normalization of q.
Vec4 rotationMatrixBackward(const Vec4 &q, const Mat3 &dR);

struct TangentTransform {
    Mat4 H = Mat4::Identity();
};

TangentTransform buildTransform(const Gaussian2D &g);

/// Local coordinates (u, v, w) of a world point; w is the signed offset along
/// the normal in world units.
Vec3 invertToLocal(const TangentTransform &t, const Vec3 &x);

inline double gaussianValue(double u, double v) { return std::exp(-0.5 * (u * u + v * v)); }

/// Cached orthonormal frame and activated scales of a surfel.
struct SurfelFrame {
    Vec3 center;
    Vec3 tu, tv, normal;
    double su = 1.0, sv = 1.0;
};

SurfelFrame surfelFrame(const GaussianSet &set, std::size_t i);

struct Triangle {
    Vec3 v0, v1, v2;
};

struct TriangleProxy {
    std::array<Triangle, 2> tris;
    std::uint32_t primitiveId = 0;
};

TriangleProxy buildProxy(const Gaussian2D &g, std::uint32_t id);
TriangleProxy buildProxy(const SurfelFrame &f, std::uint32_t id);
std::vector<TriangleProxy> buildProxies(const GaussianSet &set);

/// Real SH basis values for degrees 0..2 at a unit direction.
std::array<double, kShBasisCount> shBasis(const Vec3 &dir);

/// Radiance for direction `dir` (validated to be unit length).
Vec3 evalSh(const ShCoeffs &coeffs, const Vec3 &dir);

/// Same as evalSh without the unit-length check; for inner loops whose
/// directions are normalized by construction.
Vec3 evalShUnchecked(const ShCoeffs &coeffs, const Vec3 &dir);

/// Given dL/dcolor, accumulates dL/dcoeffs and returns dL/ddir. Channels that
/// were clamped at zero in the forward pass contribute nothing.
Vec3 evalShBackward(const ShCoeffs &coeffs, const Vec3 &dir, const Vec3 &dColor,
                    ShCoeffs &dCoeffs);

/// Unit normal flipped to face the viewer (normal . viewDir < 0).
Vec3 surfelNormal(const Gaussian2D &g, const Vec3 &viewDir);

} // namespace reflsurf
