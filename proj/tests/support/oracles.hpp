#pragma once

// Test-side oracles, kept independent of the library implementation paths
// they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ngpull/decoder.hpp"
#include "ngpull/rng.hpp"
#include "ngpull/sdf_model.hpp"
#include "ngpull/triplane.hpp"
#include "ngpull/vec3.hpp"

namespace ngp::test {

// Plain O(n) nearest-neighbor scan: the reference for every kd-tree result.
template <typename Real>
struct BruteHit {
    int index;
    Real squared_dist;
};

template <typename Real>
std::vector<BruteHit<Real>> brute_knn(const std::vector<Vec3<Real>>& points, const Vec3<Real>& q, int k) {
    std::vector<BruteHit<Real>> all;
    all.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        all.push_back({static_cast<int>(i), squared_distance(q, points[i])});
    std::sort(all.begin(), all.end(), [](const BruteHit<Real>& a, const BruteHit<Real>& b) {
        return a.squared_dist < b.squared_dist || (a.squared_dist == b.squared_dist && a.index < b.index);
    });
    all.resize(static_cast<std::size_t>(k));
    return all;
}

// Uniform points on a sphere surface (normalized gaussian directions).
template <typename Real>
std::vector<Vec3<Real>> sphere_cloud(std::size_t count, Real radius, std::uint64_t seed) {
    std::vector<Vec3<Real>> pts;
    pts.reserve(count);
    Rng rng(seed);
    while (pts.size() < count) {
        Vec3<Real> d = rng.normal_vec3<Real>();
        const Real n = d.norm();
        if (n < Real(1e-6)) continue;
        pts.push_back(d * (radius / n));
    }
    return pts;
}

// Exact signed distance field of a sphere; runs through pull_field.
struct SphereField {
    double radius = 1.0;
    double epsilon = 1e-4;
    double value(const Vec3d& q) const { return q.norm() - radius; }
};

// Decoder that forwards feature channel 0 exactly: large hidden biases hold
// every pre-activation in the softplus pass-through branch, so the whole
// network is exactly linear on the inputs exercised.
template <typename Real>
Decoder<Real> passthrough_decoder(int channels, int hidden) {
    Decoder<Real> dec(channels, hidden);
    const Real shift = Real(10);
    dec.w1[0] = Real(1);  // row 0 reads channel 0
    for (int j = 0; j < hidden; ++j) dec.b1[static_cast<std::size_t>(j)] = shift;
    for (int j = 0; j < hidden; ++j) dec.w2[static_cast<std::size_t>(j) * hidden + j] = Real(1);
    dec.w3[0] = Real(1);
    dec.b3[0] = -shift;
    dec.sync_transposed();
    return dec;
}

// Model whose field is exactly a*x + b*y + c*z + d (for probes inside the
// cube): separable-linear plane data is reproduced exactly by bilinear
// interpolation, and the pass-through decoder adds no curvature.
template <typename Real>
SdfModel<Real> linear_field_model(int n, Real a, Real b, Real c, Real d) {
    SdfModel<Real> model;
    model.triplane = TriPlane<Real>(n, 1);
    auto coord = [n](int i) { return Real(-1) + Real(2) * static_cast<Real>(i) / static_cast<Real>(n - 1); };
    // xy plane carries a*x + b*y; xz carries c*z; yz stays zero.
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            model.triplane.planes[0][static_cast<std::size_t>(i * n + j)] = a * coord(i) + b * coord(j);
            model.triplane.planes[1][static_cast<std::size_t>(i * n + j)] = c * coord(j);
        }
    model.decoder = passthrough_decoder<Real>(1, 4);
    model.decoder.b3[0] += d;
    model.epsilon = SdfModel<Real>::epsilon_for_resolution(n);
    return model;
}

// Field equal to x^2 at every grid node; with epsilon equal to the node
// spacing, probes land exactly on nodes and central differences are exact.
template <typename Real>
SdfModel<Real> quadratic_x_model(int n) {
    SdfModel<Real> model;
    model.triplane = TriPlane<Real>(n, 1);
    auto coord = [n](int i) { return Real(-1) + Real(2) * static_cast<Real>(i) / static_cast<Real>(n - 1); };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            model.triplane.planes[0][static_cast<std::size_t>(i * n + j)] = coord(i) * coord(i);
    model.decoder = passthrough_decoder<Real>(1, 4);
    model.epsilon = Real(2) / static_cast<Real>(n - 1);  // one node step
    return model;
}

// Constant field: zero planes, bias-only decoder.
template <typename Real>
SdfModel<Real> constant_field_model(int n, Real value) {
    SdfModel<Real> model;
    model.triplane = TriPlane<Real>(n, 2);
    model.decoder = Decoder<Real>(2, 4);
    model.decoder.b3[0] = value;
    model.decoder.sync_transposed();
    model.epsilon = SdfModel<Real>::epsilon_for_resolution(n);
    return model;
}

// Random small model for gradient checks.
template <typename Real>
SdfModel<Real> random_model(int n, int c, int h, std::uint64_t seed) {
    SdfModel<Real> model;
    model.triplane = random_triplane<Real>(n, c, Real(0.5), seed);
    model.decoder = Decoder<Real>(c, h);
    Rng rng(derive_seed(seed, 0xdec0de));
    for (auto& w : model.decoder.w1) w = static_cast<Real>(rng.normal()) * Real(0.6);
    for (auto& w : model.decoder.b1) w = static_cast<Real>(rng.normal()) * Real(0.1);
    for (auto& w : model.decoder.w2) w = static_cast<Real>(rng.normal()) * Real(0.4);
    for (auto& w : model.decoder.b2) w = static_cast<Real>(rng.normal()) * Real(0.1);
    for (auto& w : model.decoder.w3) w = static_cast<Real>(rng.normal()) * Real(0.6);
    model.decoder.b3[0] = static_cast<Real>(rng.normal()) * Real(0.1);
    model.decoder.sync_transposed();
    model.epsilon = SdfModel<Real>::epsilon_for_resolution(n);
    return model;
}

inline double rel_err(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

// Five-point central difference, O(h^4) truncation. The softplus beta of 100
// makes the plain O(h^2) stencil at h = 1e-4 carry ~(beta h)^2/6 ~ 1.7e-5
// truncation, too coarse for the 1e-5 isolation checks.
template <typename F>
double central_diff4(F&& eval, double h) {
    return (-eval(2 * h) + 8 * eval(h) - 8 * eval(-h) + eval(-2 * h)) / (12 * h);
}

template <typename F>
double central_diff(F&& eval, double h) {
    return (eval(h) - eval(-h)) / (2 * h);
}

}  // namespace ngp::test
