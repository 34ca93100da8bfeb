#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ngpull/mc_tables.hpp"
#include "ngpull/parallel.hpp"
#include "ngpull/point_cloud.hpp"
#include "ngpull/sdf_model.hpp"
#include "ngpull/vec3.hpp"

namespace ngp {

// Scalar field sampled on the inclusive M^3 lattice over [-1, 1]^3,
// x fastest: values[x + M * (y + M * z)].
struct SdfGrid {
    int resolution = 0;
    std::vector<float> values;

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(resolution) * (static_cast<std::size_t>(y) +
                                                       static_cast<std::size_t>(resolution) * static_cast<std::size_t>(z));
    }
    float at(int x, int y, int z) const { return values[index(x, y, z)]; }
    double coord(int i) const { return -1.0 + 2.0 * static_cast<double>(i) / (resolution - 1); }
};

// Evaluate the model over the full lattice in query chunks of at most
// `chunk`. Each slot is written independently, so chunking and threading
// never change the output.
template <typename Real>
SdfGrid evaluate_grid(const SdfModel<Real>& model, int resolution, int chunk, int threads) {
    if (resolution < 2) throw std::invalid_argument("evaluate_grid: resolution must be >= 2");
    if (chunk < 1) throw std::invalid_argument("evaluate_grid: chunk must be >= 1");
    SdfGrid grid;
    grid.resolution = resolution;
    const std::size_t total = static_cast<std::size_t>(resolution) * resolution * resolution;
    grid.values.resize(total);

    std::vector<Real> coords(static_cast<std::size_t>(resolution));
    for (int i = 0; i < resolution; ++i)
        coords[static_cast<std::size_t>(i)] = Real(-1) + Real(2) * static_cast<Real>(i) / static_cast<Real>(resolution - 1);

    const std::size_t chunk_sz = static_cast<std::size_t>(chunk);
    std::vector<Vec3<Real>> queries;
    std::vector<Real> values;
    for (std::size_t begin = 0; begin < total; begin += chunk_sz) {
        const std::size_t end = std::min(begin + chunk_sz, total);
        queries.resize(end - begin);
        values.resize(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const int x = static_cast<int>(i % static_cast<std::size_t>(resolution));
            const int y = static_cast<int>((i / static_cast<std::size_t>(resolution)) % static_cast<std::size_t>(resolution));
            const int z = static_cast<int>(i / (static_cast<std::size_t>(resolution) * resolution));
            queries[i - begin] = {coords[static_cast<std::size_t>(x)], coords[static_cast<std::size_t>(y)],
                                  coords[static_cast<std::size_t>(z)]};
        }
        phi_batch(model, queries.data(), queries.size(), values.data(), threads);
        for (std::size_t i = begin; i < end; ++i) grid.values[i] = static_cast<float>(values[i - begin]);
    }
    return grid;
}

namespace detail {

// Cell corner layout matching the classic tables: corners 0-3 ring the
// z = k face counter-clockwise starting at (i, j, k), corners 4-7 the
// z = k + 1 face.
inline constexpr int kCornerOffset[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

// Cell edges as (corner, corner) pairs, same order as the edge table bits.
inline constexpr int kEdgeCorner[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

}  // namespace detail

// Standard 256-case marching cubes with linear edge interpolation.
// Vertices are deduplicated through an edge-keyed lookup so every interior
// edge is shared, and triangles are wound so normals face increasing field
// values. No sign change anywhere yields an empty mesh.
inline TriangleMesh marching_cubes(const SdfGrid& grid, double iso = 0.0) {
    const int m = grid.resolution;
    if (m < 2) throw std::invalid_argument("marching_cubes: grid resolution must be >= 2");

    TriangleMesh mesh;
    // Key: lattice node id * 3 + axis of the edge leaving it.
    std::unordered_map<std::uint64_t, int> edge_vertex;

    auto node_id = [m](int x, int y, int z) {
        return static_cast<std::uint64_t>(x) +
               static_cast<std::uint64_t>(m) * (static_cast<std::uint64_t>(y) +
                                                static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(z));
    };

    auto edge_point = [&](int cx, int cy, int cz, int edge) -> int {
        const int* c0 = detail::kCornerOffset[detail::kEdgeCorner[edge][0]];
        const int* c1 = detail::kCornerOffset[detail::kEdgeCorner[edge][1]];
        int ax = cx + c0[0], ay = cy + c0[1], az = cz + c0[2];
        int bx = cx + c1[0], by = cy + c1[1], bz = cz + c1[2];
        // canonical direction: a is the lower lattice corner
        if (std::make_tuple(az, ay, ax) > std::make_tuple(bz, by, bx)) {
            std::swap(ax, bx);
            std::swap(ay, by);
            std::swap(az, bz);
        }
        const int axis = (bx > ax) ? 0 : (by > ay) ? 1 : 2;
        const std::uint64_t key = node_id(ax, ay, az) * 3 + static_cast<std::uint64_t>(axis);
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;

        const double v0 = grid.at(ax, ay, az);
        const double v1 = grid.at(bx, by, bz);
        const double t = (iso - v0) / (v1 - v0);
        Vec3d p{grid.coord(ax), grid.coord(ay), grid.coord(az)};
        p[static_cast<std::size_t>(axis)] += t * (grid.coord(1) - grid.coord(0));
        const int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(p);
        edge_vertex.emplace(key, idx);
        return idx;
    };

    for (int z = 0; z + 1 < m; ++z) {
        for (int y = 0; y + 1 < m; ++y) {
            for (int x = 0; x + 1 < m; ++x) {
                unsigned cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const int* off = detail::kCornerOffset[c];
                    if (grid.at(x + off[0], y + off[1], z + off[2]) < iso) cube |= 1u << c;
                }
                if (mc::kEdgeTable[cube] == 0) continue;
                const auto* tris = mc::kTriTable[cube];
                for (int k = 0; tris[k] != -1; k += 3) {
                    const int a = edge_point(x, y, z, tris[k]);
                    const int b = edge_point(x, y, z, tris[k + 1]);
                    const int c = edge_point(x, y, z, tris[k + 2]);
                    if (a == b || b == c || a == c) continue;  // collapsed by shared iso crossings
                    // table winding faces the negative side; flip for outward normals
                    mesh.triangles.push_back({a, c, b});
                }
            }
        }
    }
    return mesh;
}

}  // namespace ngp
