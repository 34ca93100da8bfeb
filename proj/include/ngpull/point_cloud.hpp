#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ngpull/vec3.hpp"

namespace ngp {

// World <-> unit-cube mapping: unit = (world - center) * scale.
struct NormalizationTransform {
    Vec3d center{0, 0, 0};
    double scale = 1.0;

    Vec3d to_unit(const Vec3d& world) const { return (world - center) * scale; }
    Vec3d to_world(const Vec3d& unit) const { return unit / scale + center; }
};

// Point set in unit-cube coordinates, together with the transform that
// takes it back to world space.
struct PointCloud {
    std::vector<Vec3d> points;
    NormalizationTransform transform;

    std::size_t size() const { return points.size(); }
};

struct TriangleMesh {
    std::vector<Vec3d> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool empty() const { return triangles.empty(); }

    // Indices in range, no triangle with a repeated vertex.
    void validate() const {
        const int n = static_cast<int>(vertices.size());
        for (std::size_t t = 0; t < triangles.size(); ++t) {
            const auto& tri = triangles[t];
            for (int k = 0; k < 3; ++k) {
                if (tri[k] < 0 || tri[k] >= n)
                    throw std::runtime_error("mesh: triangle " + std::to_string(t) +
                                             " references vertex " + std::to_string(tri[k]) +
                                             " out of range");
            }
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                throw std::runtime_error("mesh: degenerate triangle " + std::to_string(t));
        }
    }
};

// Center the points on their centroid and scale uniformly so the largest
// absolute coordinate equals `margin`. Isotropic on purpose: signed
// distances only survive uniform scaling.
inline PointCloud normalize(const std::vector<Vec3d>& points, double margin = 0.9) {
    if (points.empty()) throw std::invalid_argument("normalize: empty point set");
    if (!(margin > 0.0 && margin <= 1.0))
        throw std::invalid_argument("normalize: margin must be in (0, 1]");

    Vec3d centroid{0, 0, 0};
    for (const auto& p : points) {
        if (!p.finite()) throw std::invalid_argument("normalize: non-finite coordinate");
        centroid += p;
    }
    centroid = centroid / static_cast<double>(points.size());

    double extent = 0.0;
    for (const auto& p : points) {
        const Vec3d d = p - centroid;
        extent = std::max({extent, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
    }
    if (extent == 0.0) throw std::invalid_argument("normalize: degenerate extent (all points identical)");

    PointCloud cloud;
    cloud.transform.center = centroid;
    cloud.transform.scale = margin / extent;
    cloud.points.reserve(points.size());
    for (const auto& p : points) cloud.points.push_back(cloud.transform.to_unit(p));
    return cloud;
}

// Map mesh vertices back to world space; connectivity untouched.
inline TriangleMesh denormalize_mesh(const TriangleMesh& mesh, const NormalizationTransform& transform) {
    TriangleMesh out;
    out.triangles = mesh.triangles;
    out.vertices.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.vertices.push_back(transform.to_world(v));
    return out;
}

}  // namespace ngp
