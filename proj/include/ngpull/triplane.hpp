#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ngpull/aligned.hpp"
#include "ngpull/rng.hpp"
#include "ngpull/vec3.hpp"

namespace ngp {

// Plane order: xy drops z, xz drops y, yz drops x.
enum class PlaneId : int { xy = 0, xz = 1, yz = 2 };

template <typename Real>
struct PlaneUV {
    Real u, v;
};

// The four grid nodes and bilinear weights touched by one interpolation.
// Corners are flat node indices (row * N + col); weights are >= 0 and sum to 1.
template <typename Real>
struct PlaneFootprint {
    std::array<int, 4> corner{};
    std::array<Real, 4> weight{};
};

template <typename Real>
using TriFootprint = std::array<PlaneFootprint<Real>, 3>;

// Three orthogonal N x N feature planes with C channels each. Entry (i, j)
// of a plane lives at planes[p][(i * N + j) * C + c], i along the first
// projected axis.
template <typename Real>
struct TriPlane {
    int resolution = 0;
    int channels = 0;
    std::array<avec<Real>, 3> planes;

    TriPlane() = default;
    TriPlane(int n, int c) : resolution(n), channels(c) {
        if (n < 2) throw std::invalid_argument("TriPlane: resolution must be >= 2");
        if (c < 1) throw std::invalid_argument("TriPlane: channels must be >= 1");
        for (auto& p : planes) p.assign(static_cast<std::size_t>(n) * n * c, Real(0));
    }

    std::size_t entries_per_plane() const {
        return static_cast<std::size_t>(resolution) * resolution * channels;
    }

    void fill_zero() {
        for (auto& p : planes) std::fill(p.begin(), p.end(), Real(0));
    }

    Real* entry(int plane, int node) { return planes[static_cast<std::size_t>(plane)].data() + static_cast<std::size_t>(node) * channels; }
    const Real* entry(int plane, int node) const {
        return planes[static_cast<std::size_t>(plane)].data() + static_cast<std::size_t>(node) * channels;
    }
};

template <typename Real>
TriPlane<Real> random_triplane(int n, int c, Real stddev, std::uint64_t seed) {
    TriPlane<Real> tp(n, c);
    Rng rng(seed);
    for (auto& plane : tp.planes)
        for (auto& v : plane) v = static_cast<Real>(rng.normal()) * stddev;
    return tp;
}

// Drop the orthogonal axis and map the remaining coordinates affinely from
// [-1, 1] onto [0, N-1]. Out-of-range queries clamp: numerical-gradient
// probes may step past the cube boundary and must stay legal.
template <typename Real>
PlaneUV<Real> project(const Vec3<Real>& q, PlaneId plane, int resolution) {
    Real a, b;
    switch (plane) {
        case PlaneId::xy: a = q.x; b = q.y; break;
        case PlaneId::xz: a = q.x; b = q.z; break;
        default:          a = q.y; b = q.z; break;
    }
    const Real top = static_cast<Real>(resolution - 1);
    const Real half = Real(0.5);
    Real u = (a + Real(1)) * half * top;
    Real v = (b + Real(1)) * half * top;
    u = std::min(std::max(u, Real(0)), top);
    v = std::min(std::max(v, Real(0)), top);
    return {u, v};
}

namespace detail {

template <typename Real>
inline PlaneFootprint<Real> bilinear_footprint(PlaneUV<Real> uv, int n) {
    int i0 = static_cast<int>(uv.u);
    int j0 = static_cast<int>(uv.v);
    i0 = std::min(i0, n - 2);
    j0 = std::min(j0, n - 2);
    const Real fu = uv.u - static_cast<Real>(i0);
    const Real fv = uv.v - static_cast<Real>(j0);
    PlaneFootprint<Real> fp;
    fp.corner = {i0 * n + j0, (i0 + 1) * n + j0, i0 * n + j0 + 1, (i0 + 1) * n + j0 + 1};
    fp.weight = {(Real(1) - fu) * (Real(1) - fv), fu * (Real(1) - fv), (Real(1) - fu) * fv, fu * fv};
    return fp;
}

}  // namespace detail

// Bilinear sample of one plane. Integer uv returns the stored entry exactly.
template <typename Real>
PlaneFootprint<Real> interpolate(const avec<Real>& plane, int n, int c, PlaneUV<Real> uv,
                                 Real* feature_out) {
    const PlaneFootprint<Real> fp = detail::bilinear_footprint(uv, n);
    const Real* e0 = plane.data() + static_cast<std::size_t>(fp.corner[0]) * c;
    const Real* e1 = plane.data() + static_cast<std::size_t>(fp.corner[1]) * c;
    const Real* e2 = plane.data() + static_cast<std::size_t>(fp.corner[2]) * c;
    const Real* e3 = plane.data() + static_cast<std::size_t>(fp.corner[3]) * c;
    const Real w0 = fp.weight[0], w1 = fp.weight[1], w2 = fp.weight[2], w3 = fp.weight[3];
    for (int k = 0; k < c; ++k) feature_out[k] = w0 * e0[k] + w1 * e1[k] + w2 * e2[k] + w3 * e3[k];
    return fp;
}

// Sum of the three plane interpolations at q (element-wise feature addition).
template <typename Real>
TriFootprint<Real> gather_features(const TriPlane<Real>& tp, const Vec3<Real>& q, Real* feature_out) {
    TriFootprint<Real> fps;
    const int n = tp.resolution, c = tp.channels;
    for (int k = 0; k < c; ++k) feature_out[k] = Real(0);
    avec<Real> scratch(static_cast<std::size_t>(c));
    for (int p = 0; p < 3; ++p) {
        const auto uv = project(q, static_cast<PlaneId>(p), n);
        fps[static_cast<std::size_t>(p)] = interpolate(tp.planes[static_cast<std::size_t>(p)], n, c, uv, scratch.data());
        for (int k = 0; k < c; ++k) feature_out[k] += scratch[k];
    }
    return fps;
}

// Allocation-free variant for hot loops; adds each plane's contribution directly.
template <typename Real>
void gather_features_into(const TriPlane<Real>& tp, const Vec3<Real>& q, Real* feature_out,
                          TriFootprint<Real>& fps) {
    const int n = tp.resolution, c = tp.channels;
    for (int k = 0; k < c; ++k) feature_out[k] = Real(0);
    for (int p = 0; p < 3; ++p) {
        const auto uv = project(q, static_cast<PlaneId>(p), n);
        const PlaneFootprint<Real> fp = detail::bilinear_footprint(uv, n);
        const auto& plane = tp.planes[static_cast<std::size_t>(p)];
        const Real* e0 = plane.data() + static_cast<std::size_t>(fp.corner[0]) * c;
        const Real* e1 = plane.data() + static_cast<std::size_t>(fp.corner[1]) * c;
        const Real* e2 = plane.data() + static_cast<std::size_t>(fp.corner[2]) * c;
        const Real* e3 = plane.data() + static_cast<std::size_t>(fp.corner[3]) * c;
        const Real w0 = fp.weight[0], w1 = fp.weight[1], w2 = fp.weight[2], w3 = fp.weight[3];
        for (int k = 0; k < c; ++k)
            feature_out[k] += w0 * e0[k] + w1 * e1[k] + w2 * e2[k] + w3 * e3[k];
        fps[static_cast<std::size_t>(p)] = fp;
    }
}

// Reverse of gather_features: each footprint corner accumulates
// weight * upstream into the gradient grids. Callers own exclusivity.
template <typename Real>
void accumulate_plane_grads(TriPlane<Real>& grads, const TriFootprint<Real>& fps, const Real* upstream) {
    const int c = grads.channels;
    for (int p = 0; p < 3; ++p) {
        auto& plane = grads.planes[static_cast<std::size_t>(p)];
        const auto& fp = fps[static_cast<std::size_t>(p)];
        for (int k = 0; k < 4; ++k) {
            Real* g = plane.data() + static_cast<std::size_t>(fp.corner[static_cast<std::size_t>(k)]) * c;
            const Real w = fp.weight[static_cast<std::size_t>(k)];
            for (int ch = 0; ch < c; ++ch) g[ch] += w * upstream[ch];
        }
    }
}

// Double the resolution with corner-aligned bilinear resampling: new node
// (i, j) reads the old plane at i * (N-1) / (2N-1), so the four plane
// corners are reproduced exactly and the map is linear in the entries.
template <typename Real>
TriPlane<Real> upsample(const TriPlane<Real>& tp) {
    const int n = tp.resolution, c = tp.channels;
    const int m = 2 * n;
    TriPlane<Real> out(m, c);
    const Real ratio = static_cast<Real>(n - 1) / static_cast<Real>(m - 1);
    avec<Real> scratch(static_cast<std::size_t>(c));
    for (int p = 0; p < 3; ++p) {
        const auto& src = tp.planes[static_cast<std::size_t>(p)];
        auto& dst = out.planes[static_cast<std::size_t>(p)];
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const PlaneUV<Real> uv{static_cast<Real>(i) * ratio, static_cast<Real>(j) * ratio};
                interpolate(src, n, c, uv, scratch.data());
                Real* e = dst.data() + (static_cast<std::size_t>(i) * m + j) * c;
                for (int k = 0; k < c; ++k) e[k] = scratch[k];
            }
        }
    }
    return out;
}

}  // namespace ngp
