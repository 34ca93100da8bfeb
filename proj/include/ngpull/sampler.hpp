#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ngpull/kdtree.hpp"
#include "ngpull/parallel.hpp"
#include "ngpull/rng.hpp"
#include "ngpull/vec3.hpp"

namespace ngp {

enum class QueryOrigin : std::uint8_t { gaussian = 0, uniform = 1 };

// Paired query locations and their exact nearest surface points.
template <typename Real>
struct QueryBatch {
    std::vector<Vec3<Real>> queries;
    std::vector<Vec3<Real>> targets;
    std::vector<int> target_index;  // into the training cloud
    std::vector<QueryOrigin> origin;
    bool with_replacement = false;  // set when the pool was smaller than a batch

    std::size_t size() const { return queries.size(); }
};

struct SamplerConfig {
    int per_point_queries = 25;
    int density_k = 50;
    double uniform_fraction = 0.1;

    void validate() const {
        if (per_point_queries < 1) throw std::invalid_argument("sampler: per_point_queries must be >= 1");
        if (density_k < 1) throw std::invalid_argument("sampler: density_k must be >= 1");
        if (!(uniform_fraction >= 0.0 && uniform_fraction < 1.0))
            throw std::invalid_argument("sampler: uniform_fraction must be in [0, 1)");
    }
};

// Per-point variance: squared distance from each point to its k-th nearest
// neighbor, self excluded. Captures local density.
template <typename Real>
std::vector<Real> compute_sigmas(const std::vector<Vec3<Real>>& points, const KnnIndex<Real>& index,
                                 int k, int threads = 1) {
    if (k < 1 || static_cast<std::size_t>(k) + 1 > points.size())
        throw std::invalid_argument("compute_sigmas: need at least k + 1 points");
    std::vector<Real> sigmas(points.size());
    parallel_chunks(points.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const auto hits = index.knn(points[j], k + 1);
            // Drop the self hit (exactly one entry carries index j).
            int taken = 0;
            Real kth = Real(0);
            for (const auto& h : hits) {
                if (h.index == static_cast<int>(j)) continue;
                kth = h.squared_dist;
                if (++taken == k) break;
            }
            sigmas[j] = kth;
        }
    });
    return sigmas;
}

// per_point i.i.d. draws from N(p_j, sigma_j^2 I). Each point owns its own
// counter-seeded stream, so the result is independent of thread count.
template <typename Real>
std::vector<Vec3<Real>> sample_gaussian_queries(const std::vector<Vec3<Real>>& points,
                                                const std::vector<Real>& sigmas, int per_point,
                                                std::uint64_t seed, int threads = 1) {
    if (sigmas.size() != points.size())
        throw std::invalid_argument("sample_gaussian_queries: sigma/point count mismatch");
    std::vector<Vec3<Real>> queries(points.size() * static_cast<std::size_t>(per_point));
    parallel_chunks(points.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            Rng rng(seed, j);
            const Real sigma = std::sqrt(sigmas[j]);
            for (int s = 0; s < per_point; ++s) {
                queries[j * static_cast<std::size_t>(per_point) + static_cast<std::size_t>(s)] =
                    points[j] + rng.normal_vec3<Real>() * sigma;
            }
        }
    });
    return queries;
}

// i.i.d. uniform over the unit cube [-1, 1]^3.
template <typename Real>
std::vector<Vec3<Real>> sample_uniform_queries(std::size_t count, std::uint64_t seed) {
    std::vector<Vec3<Real>> queries(count);
    Rng rng(seed);
    for (auto& q : queries) q = rng.uniform_vec3<Real>(-1.0, 1.0);
    return queries;
}

// Attach the exact nearest cloud point to every query.
template <typename Real>
QueryBatch<Real> pair_with_targets(std::vector<Vec3<Real>> queries, std::vector<QueryOrigin> origin,
                                   const KnnIndex<Real>& index, int threads = 1) {
    if (origin.size() != queries.size())
        throw std::invalid_argument("pair_with_targets: origin/query count mismatch");
    QueryBatch<Real> batch;
    batch.queries = std::move(queries);
    batch.origin = std::move(origin);
    batch.targets.resize(batch.queries.size());
    batch.target_index.resize(batch.queries.size());
    parallel_chunks(batch.queries.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto hit = index.nearest(batch.queries[i]);
            batch.target_index[i] = hit.index;
            batch.targets[i] = index.point(hit.index);
        }
    });
    return batch;
}

template <typename Real>
QueryBatch<Real> pair_with_targets(std::vector<Vec3<Real>> queries, QueryOrigin origin,
                                   const KnnIndex<Real>& index, int threads = 1) {
    std::vector<QueryOrigin> tags(queries.size(), origin);
    return pair_with_targets(std::move(queries), std::move(tags), index, threads);
}

namespace detail {

struct PoolSplit {
    std::vector<std::size_t> gaussian;
    std::vector<std::size_t> uniform;
};

template <typename Real>
PoolSplit split_by_origin(const QueryBatch<Real>& pool) {
    PoolSplit split;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        (pool.origin[i] == QueryOrigin::uniform ? split.uniform : split.gaussian).push_back(i);
    }
    return split;
}

}  // namespace detail

// How a batch is stratified: ~uniform_fraction of it carries the uniform tag.
inline std::size_t uniform_quota(std::size_t batch_size, double uniform_fraction) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(batch_size) * uniform_fraction));
}

// Steps until a pool of the given composition is exhausted (an epoch).
inline std::size_t minibatch_steps_per_epoch(std::size_t gaussian_count, std::size_t uniform_count,
                                             std::size_t batch_size, double uniform_fraction) {
    const std::size_t n_u = uniform_quota(batch_size, uniform_fraction);
    const std::size_t n_g = batch_size - n_u;
    std::size_t steps = n_g > 0 ? gaussian_count / n_g : std::size_t(-1);
    if (n_u > 0) steps = std::min(steps, uniform_count / n_u);
    return std::max<std::size_t>(steps, 1);
}

// Stratified minibatch, drawn without replacement within an epoch: the
// pool indices are reshuffled once per epoch (seed, epoch)-deterministically
// and consumed in slices. A pool smaller than one batch falls back to
// sampling with replacement and flags the batch.
template <typename Real>
QueryBatch<Real> draw_minibatch(const QueryBatch<Real>& pool, std::size_t batch_size,
                                double uniform_fraction, std::uint64_t seed, std::size_t step) {
    if (pool.size() == 0) throw std::invalid_argument("draw_minibatch: empty pool");
    auto split = detail::split_by_origin(pool);

    QueryBatch<Real> batch;
    auto push = [&](std::size_t i) {
        batch.queries.push_back(pool.queries[i]);
        batch.targets.push_back(pool.targets[i]);
        batch.target_index.push_back(pool.target_index[i]);
        batch.origin.push_back(pool.origin[i]);
    };

    std::size_t n_u = uniform_quota(batch_size, uniform_fraction);
    if (split.uniform.empty()) n_u = 0;
    const std::size_t n_g = batch_size - n_u;

    if (n_g > split.gaussian.size() || (n_u > 0 && n_u > split.uniform.size())) {
        Rng rng(derive_seed(seed, 0x7265706cu /* repl */, step));
        for (std::size_t i = 0; i < n_g; ++i)
            push(split.gaussian.empty() ? split.uniform[rng.uniform_index(split.uniform.size())]
                                        : split.gaussian[rng.uniform_index(split.gaussian.size())]);
        for (std::size_t i = 0; i < n_u; ++i) push(split.uniform[rng.uniform_index(split.uniform.size())]);
        batch.with_replacement = true;
        return batch;
    }

    const std::size_t spe = minibatch_steps_per_epoch(split.gaussian.size(), split.uniform.size(),
                                                      batch_size, uniform_fraction);
    const std::size_t epoch = step / spe;
    const std::size_t slot = step % spe;

    Rng rng_g(derive_seed(seed, 0x73686667u /* shfg */, epoch));
    shuffle(split.gaussian, rng_g);
    for (std::size_t i = slot * n_g; i < (slot + 1) * n_g; ++i) push(split.gaussian[i]);
    if (n_u > 0) {
        Rng rng_u(derive_seed(seed, 0x73686675u /* shfu */, epoch));
        shuffle(split.uniform, rng_u);
        for (std::size_t i = slot * n_u; i < (slot + 1) * n_u; ++i) push(split.uniform[i]);
    }
    return batch;
}

}  // namespace ngp
