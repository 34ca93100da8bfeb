#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "ngpull/vec3.hpp"

namespace ngp {

// Exact k-nearest-neighbor index (balanced kd-tree, immutable after build).
// Ties on squared distance break toward the lower original point index, so
// queries are deterministic and match a brute-force scan exactly.
template <typename Real>
class KnnIndex {
public:
    struct Hit {
        int index;
        Real squared_dist;
    };

    explicit KnnIndex(std::vector<Vec3<Real>> points) : points_(std::move(points)) {
        if (points_.empty()) throw std::invalid_argument("KnnIndex: empty point set");
        order_.resize(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) order_[i] = static_cast<int>(i);
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, static_cast<int>(points_.size()));
    }

    std::size_t size() const { return points_.size(); }
    const Vec3<Real>& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

    // k exact nearest neighbors of q, ascending (squared_dist, index).
    std::vector<Hit> knn(const Vec3<Real>& q, int k) const {
        if (k < 1 || static_cast<std::size_t>(k) > points_.size())
            throw std::invalid_argument("KnnIndex::knn: k out of range");
        std::vector<Hit> heap;
        heap.reserve(static_cast<std::size_t>(k));
        search(0, q, k, heap);
        std::sort(heap.begin(), heap.end(), [](const Hit& a, const Hit& b) {
            return a.squared_dist < b.squared_dist ||
                   (a.squared_dist == b.squared_dist && a.index < b.index);
        });
        return heap;
    }

    Hit nearest(const Vec3<Real>& q) const {
        Hit best{-1, Real(0)};
        bool found = false;
        nearest_one(0, q, best, found);
        return best;
    }

private:
    static constexpr int kLeafSize = 12;

    struct Node {
        int begin, end;    // range in order_
        int axis = -1;     // -1 for leaf
        Real split = Real(0);
        int left = -1, right = -1;
    };

    int build(int begin, int end) {
        const int node_index = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= kLeafSize) return node_index;

        // Split on the axis of largest extent.
        Vec3<Real> lo = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(begin)])];
        Vec3<Real> hi = lo;
        for (int i = begin + 1; i < end; ++i) {
            const auto& p = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
            for (std::size_t a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], p[a]);
                hi[a] = std::max(hi[a], p[a]);
            }
        }
        std::size_t axis = 0;
        for (std::size_t a = 1; a < 3; ++a)
            if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
        if (hi[axis] - lo[axis] == Real(0)) return node_index;  // all coincident: leave as leaf

        const int mid = begin + (end - begin) / 2;
        auto first = order_.begin() + begin;
        std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                         [this, axis](int a, int b) {
                             return points_[static_cast<std::size_t>(a)][axis] < points_[static_cast<std::size_t>(b)][axis];
                         });

        Node node = nodes_[static_cast<std::size_t>(node_index)];
        node.axis = static_cast<int>(axis);
        node.split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];
        node.left = build(begin, mid);
        node.right = build(mid, end);
        nodes_[static_cast<std::size_t>(node_index)] = node;
        return node_index;
    }

    static bool worse(const Hit& a, const Hit& b) {
        return a.squared_dist < b.squared_dist ||
               (a.squared_dist == b.squared_dist && a.index < b.index);
    }

    void consider(const Vec3<Real>& q, int idx, int k, std::vector<Hit>& heap) const {
        const Hit cand{idx, squared_distance(q, points_[static_cast<std::size_t>(idx)])};
        if (static_cast<int>(heap.size()) < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), worse);
        } else if (worse(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), worse);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), worse);
        }
    }

    void search(int node_index, const Vec3<Real>& q, int k, std::vector<Hit>& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_index)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i)
                consider(q, order_[static_cast<std::size_t>(i)], k, heap);
            return;
        }
        const Real diff = q[static_cast<std::size_t>(node.axis)] - node.split;
        const int near = diff < Real(0) ? node.left : node.right;
        const int far = diff < Real(0) ? node.right : node.left;
        search(near, q, k, heap);
        // <= keeps equal-distance candidates reachable for the index tie-break.
        if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().squared_dist)
            search(far, q, k, heap);
    }

    void nearest_one(int node_index, const Vec3<Real>& q, Hit& best, bool& found) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_index)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int idx = order_[static_cast<std::size_t>(i)];
                const Hit cand{idx, squared_distance(q, points_[static_cast<std::size_t>(idx)])};
                if (!found || worse(cand, best)) {
                    best = cand;
                    found = true;
                }
            }
            return;
        }
        const Real diff = q[static_cast<std::size_t>(node.axis)] - node.split;
        const int near = diff < Real(0) ? node.left : node.right;
        const int far = diff < Real(0) ? node.right : node.left;
        nearest_one(near, q, best, found);
        if (!found || diff * diff <= best.squared_dist) nearest_one(far, q, best, found);
    }

    std::vector<Vec3<Real>> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace ngp
