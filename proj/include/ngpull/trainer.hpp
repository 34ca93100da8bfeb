#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngpull/adam.hpp"
#include "ngpull/kdtree.hpp"
#include "ngpull/parallel.hpp"
#include "ngpull/sampler.hpp"
#include "ngpull/sdf_model.hpp"

namespace ngp {

struct TrainConfig {
    int total_iters = 20000;
    std::vector<int> stage_iters = {3000, 8000, 12000};
    // three doublings land on the final 32^2 planes
    int initial_resolution = 4;
    int final_resolution = 32;
    int channels = 32;
    int hidden = 128;
    double lr_decoder = 0.001;
    double lr_triplane = 0.05;
    AdamConfig adam;
    int batch_size = 5000;
    std::uint64_t seed = 42;
    SamplerConfig sampler;
    double init_radius = 0.5;
    double triplane_init_std = 0.01;
    bool analytical_gradients = false;  // ablation: pull via in-cell weight derivatives

    void validate() const {
        sampler.validate();
        if (total_iters < 1) throw std::invalid_argument("train: total_iters must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (initial_resolution < 2) throw std::invalid_argument("train: initial_resolution must be >= 2");
        if (channels < 1 || hidden < 1) throw std::invalid_argument("train: channels/hidden must be >= 1");
        int expected = initial_resolution;
        for (std::size_t s = 0; s < stage_iters.size(); ++s) expected *= 2;
        if (expected != final_resolution)
            throw std::invalid_argument(
                "train: final_resolution must equal initial_resolution * 2^#stages (got " +
                std::to_string(final_resolution) + ", expected " + std::to_string(expected) + ")");
        for (std::size_t s = 0; s < stage_iters.size(); ++s) {
            if (stage_iters[s] <= 0 || stage_iters[s] >= total_iters)
                throw std::invalid_argument("train: stage iterations must lie inside (0, total_iters)");
            if (s > 0 && stage_iters[s] <= stage_iters[s - 1])
                throw std::invalid_argument("train: stage iterations must be strictly increasing");
        }
    }
};

struct LossSample {
    int iter;
    double loss;
    int resolution;
    int stage;
};

template <typename Real>
struct TrainResult {
    SdfModel<Real> model;
    AdamState<Real> adam_decoder;
    AdamState<Real> adam_triplane;
    std::vector<LossSample> history;  // one entry per executed iteration
    bool diverged = false;
    int diverged_at = -1;
};

namespace detail {

template <typename Real>
std::vector<ParamSegment<Real>> triplane_segments(TriPlane<Real>& tp, const TriPlane<Real>& grads) {
    std::vector<ParamSegment<Real>> segs;
    for (int p = 0; p < 3; ++p)
        segs.push_back({tp.planes[static_cast<std::size_t>(p)].data(),
                        grads.planes[static_cast<std::size_t>(p)].data(),
                        tp.planes[static_cast<std::size_t>(p)].size()});
    return segs;
}

template <typename Real>
std::vector<ParamSegment<Real>> decoder_segments(Decoder<Real>& dec, const DecoderGrads<Real>& grads) {
    std::vector<ParamSegment<Real>> segs;
    auto params = dec.param_segments();
    auto gsegs = grad_segments(grads);
    for (std::size_t i = 0; i < params.size(); ++i)
        segs.push_back({params[i].first, gsegs[i].first, params[i].second});
    return segs;
}

template <typename Real>
std::size_t triplane_param_count(const TriPlane<Real>& tp) {
    return 3 * tp.entries_per_plane();
}

}  // namespace detail

// Mean squared pull residual (1/I) sum ||q'_i - t_i||^2 with gradients
// accumulated into the supplied buffers. Parallel over a fixed partition of
// the batch; per-chunk partials merge in chunk order so sums are
// deterministic for a given thread count.
template <typename Real>
double loss_and_gradients(const SdfModel<Real>& model, const QueryBatch<Real>& batch,
                          TriPlane<Real>& plane_grads, DecoderGrads<Real>& decoder_grads,
                          int threads, bool analytical = false) {
    if (batch.size() == 0) throw std::invalid_argument("loss: empty batch");
    const std::size_t count = batch.size();
    const Real upstream_scale = Real(2) / static_cast<Real>(count);

    const int nthreads = std::max(1, threads);
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(nthreads), count);
    std::vector<double> partial_loss(chunks, 0.0);
    std::vector<TriPlane<Real>> partial_plane;
    std::vector<DecoderGrads<Real>> partial_dec;
    partial_plane.reserve(chunks);
    partial_dec.reserve(chunks);
    for (std::size_t cidx = 0; cidx < chunks; ++cidx) {
        partial_plane.emplace_back(model.triplane.resolution, model.triplane.channels);
        partial_dec.emplace_back(model.decoder.make_grads());
    }
    std::vector<long> bad_sample(chunks, -1);

    parallel_chunks(count, static_cast<int>(chunks), [&](std::size_t cidx, std::size_t begin, std::size_t end) {
        PullWorkspace<Real> ws;
        double loss_acc = 0.0;
        auto& pgrads = partial_plane[cidx];
        auto& dgrads = partial_dec[cidx];
        for (std::size_t i = begin; i < end; ++i) {
            const PullRecord<Real> rec = analytical ? pull_analytic(model, batch.queries[i], ws)
                                                    : pull(model, batch.queries[i], ws);
            const Vec3<Real> residual = rec.q_pulled - batch.targets[i];
            const double term = static_cast<double>(residual.squared_norm());
            if (!std::isfinite(term)) {
                if (bad_sample[cidx] < 0) bad_sample[cidx] = static_cast<long>(i);
                continue;
            }
            loss_acc += term;
            const Vec3<Real> upstream = residual * upstream_scale;
            if (analytical)
                backward_through_pull_analytic(model, rec, ws, upstream, pgrads, dgrads);
            else
                backward_through_pull(model, rec, ws, upstream, pgrads, dgrads);
        }
        partial_loss[cidx] = loss_acc;
    });

    for (std::size_t cidx = 0; cidx < chunks; ++cidx) {
        if (bad_sample[cidx] >= 0)
            throw std::runtime_error("loss: non-finite pull residual at sample " +
                                     std::to_string(bad_sample[cidx]));
    }

    double loss = 0.0;
    for (std::size_t cidx = 0; cidx < chunks; ++cidx) {
        loss += partial_loss[cidx];
        for (int p = 0; p < 3; ++p) {
            auto& dst = plane_grads.planes[static_cast<std::size_t>(p)];
            const auto& src = partial_plane[cidx].planes[static_cast<std::size_t>(p)];
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
        auto merge = [](avec<Real>& dst, const avec<Real>& src) {
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        };
        merge(decoder_grads.w1, partial_dec[cidx].w1);
        merge(decoder_grads.b1, partial_dec[cidx].b1);
        merge(decoder_grads.w2, partial_dec[cidx].w2);
        merge(decoder_grads.b2, partial_dec[cidx].b2);
        merge(decoder_grads.w3, partial_dec[cidx].w3);
        merge(decoder_grads.b3, partial_dec[cidx].b3);
    }
    return loss / static_cast<double>(count);
}

// Mean unsquared residual ||q' - t|| over a batch; diagnostic only.
template <typename Real>
double mean_pull_residual(const SdfModel<Real>& model, const QueryBatch<Real>& batch, int threads) {
    if (batch.size() == 0) throw std::invalid_argument("mean_pull_residual: empty batch");
    const std::size_t count = batch.size();
    const int nthreads = std::max(1, threads);
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(nthreads), count);
    std::vector<double> partial(chunks, 0.0);
    parallel_chunks(count, static_cast<int>(chunks), [&](std::size_t cidx, std::size_t begin, std::size_t end) {
        PullWorkspace<Real> ws;
        double acc = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto rec = pull(model, batch.queries[i], ws);
            acc += static_cast<double>((rec.q_pulled - batch.targets[i]).norm());
        }
        partial[cidx] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(count);
}

// Double the tri-plane resolution in place: features are resampled, the
// probe step drops to 1/(2N_new), and the tri-plane Adam buffers restart at
// the new shape. Decoder parameters and state are untouched.
template <typename Real>
void expand_stage(SdfModel<Real>& model, AdamState<Real>& triplane_state, int final_resolution) {
    if (model.triplane.resolution >= final_resolution)
        throw std::invalid_argument("expand_stage: already at final resolution");
    model.triplane = upsample(model.triplane);
    model.epsilon = SdfModel<Real>::epsilon_for_resolution(model.triplane.resolution);
    triplane_state.reset(detail::triplane_param_count(model.triplane));
}

namespace detail {

// Epoch layout shared by train() and the resume path. A fresh gaussian pool
// (cloud x per_point queries) is drawn every epoch; the uniform pool is
// sized so each stratified batch gets its quota for a whole epoch.
struct EpochPlan {
    std::size_t gaussian_count;
    std::size_t uniform_count;
    std::size_t steps_per_epoch;
};

inline EpochPlan make_epoch_plan(std::size_t cloud_size, const TrainConfig& cfg) {
    EpochPlan plan{};
    plan.gaussian_count = cloud_size * static_cast<std::size_t>(cfg.sampler.per_point_queries);
    const std::size_t n_u = uniform_quota(static_cast<std::size_t>(cfg.batch_size), cfg.sampler.uniform_fraction);
    const std::size_t n_g = static_cast<std::size_t>(cfg.batch_size) - n_u;
    std::size_t spe = n_g > 0 ? std::max<std::size_t>(plan.gaussian_count / n_g, 1) : 1;
    plan.uniform_count = n_u * spe;
    plan.steps_per_epoch = minibatch_steps_per_epoch(plan.gaussian_count, plan.uniform_count,
                                                     static_cast<std::size_t>(cfg.batch_size),
                                                     cfg.sampler.uniform_fraction);
    return plan;
}

}  // namespace detail

// Runs the pull-supervision loop from `start_iter` on an existing state.
// Fully deterministic in (cloud, config, threads): every random draw is
// addressed by (seed, epoch/step), so a resumed run retraces an
// uninterrupted one exactly.
template <typename Real>
TrainResult<Real> train_from(const std::vector<Vec3<Real>>& cloud, const TrainConfig& cfg,
                             SdfModel<Real> model, AdamState<Real> adam_decoder,
                             AdamState<Real> adam_triplane, int start_iter, int threads,
                             const std::function<void(const LossSample&)>& monitor = {}) {
    cfg.validate();
    if (cloud.size() < static_cast<std::size_t>(cfg.sampler.density_k) + 1)
        throw std::invalid_argument("train: cloud smaller than density_k + 1");

    const int nthreads = resolve_threads(threads);
    KnnIndex<Real> index(cloud);
    const auto sigmas = compute_sigmas(cloud, index, cfg.sampler.density_k, nthreads);
    const auto plan = detail::make_epoch_plan(cloud.size(), cfg);

    TrainResult<Real> result;
    result.history.reserve(static_cast<std::size_t>(cfg.total_iters));

    QueryBatch<Real> pool;
    std::size_t pool_epoch = static_cast<std::size_t>(-1);
    const std::uint64_t seed = cfg.seed;

    auto build_pool = [&](std::size_t epoch) {
        auto queries = sample_gaussian_queries(cloud, sigmas, cfg.sampler.per_point_queries,
                                               derive_seed(seed, 0x67617573u /* gaus */, epoch), nthreads);
        std::vector<QueryOrigin> tags(queries.size(), QueryOrigin::gaussian);
        if (plan.uniform_count > 0) {
            auto uniform = sample_uniform_queries<Real>(plan.uniform_count,
                                                        derive_seed(seed, 0x756e6966u /* unif */, epoch));
            queries.insert(queries.end(), uniform.begin(), uniform.end());
            tags.resize(queries.size(), QueryOrigin::uniform);
        }
        pool = pair_with_targets(std::move(queries), std::move(tags), index, nthreads);
        pool_epoch = epoch;
    };

    TriPlane<Real> plane_grads(model.triplane.resolution, model.triplane.channels);
    DecoderGrads<Real> decoder_grads = model.decoder.make_grads();

    for (int t = start_iter; t < cfg.total_iters; ++t) {
        const auto stage_it = std::find(cfg.stage_iters.begin(), cfg.stage_iters.end(), t);
        if (stage_it != cfg.stage_iters.end() && model.triplane.resolution < cfg.final_resolution) {
            expand_stage(model, adam_triplane, cfg.final_resolution);
            plane_grads = TriPlane<Real>(model.triplane.resolution, model.triplane.channels);
        }

        const std::size_t epoch = static_cast<std::size_t>(t) / plan.steps_per_epoch;
        if (epoch != pool_epoch) build_pool(epoch);

        const auto batch = draw_minibatch(pool, static_cast<std::size_t>(cfg.batch_size),
                                          cfg.sampler.uniform_fraction,
                                          derive_seed(seed, 0x64726177u /* draw */), t);

        plane_grads.fill_zero();
        decoder_grads.fill_zero();
        double loss;
        try {
            loss = loss_and_gradients(model, batch, plane_grads, decoder_grads, nthreads,
                                      cfg.analytical_gradients);
        } catch (const std::runtime_error&) {
            loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(loss)) {
            result.diverged = true;
            result.diverged_at = t;
            break;
        }

        adam_step(detail::decoder_segments(model.decoder, decoder_grads), adam_decoder,
                  static_cast<Real>(cfg.lr_decoder), cfg.adam);
        model.decoder.sync_transposed();
        adam_step(detail::triplane_segments(model.triplane, plane_grads), adam_triplane,
                  static_cast<Real>(cfg.lr_triplane), cfg.adam);

        int stage = 0;
        for (std::size_t s = 0; s < cfg.stage_iters.size(); ++s)
            if (t >= cfg.stage_iters[s]) stage = static_cast<int>(s) + 1;
        const LossSample sample{t, loss, model.triplane.resolution, stage};
        result.history.push_back(sample);
        if (monitor) monitor(sample);
    }

    result.model = std::move(model);
    result.adam_decoder = std::move(adam_decoder);
    result.adam_triplane = std::move(adam_triplane);
    return result;
}

// Fresh model: noise features plus a coordinate ramp on the first three
// channels (each coordinate split across its two planes, exact under
// bilinear interpolation), so the feature vector at q has norm ~ |q|. The
// geometrically initialized decoder then starts as a signed sphere field --
// negative inside init_radius, positive outside -- which anchors the sign
// of the distance field; with featureless planes the pull loss is equally
// happy with an unsigned valley that marching cubes cannot extract.
template <typename Real>
SdfModel<Real> initial_model(const TrainConfig& cfg) {
    SdfModel<Real> model;
    model.triplane = random_triplane<Real>(cfg.initial_resolution, cfg.channels,
                                           static_cast<Real>(cfg.triplane_init_std),
                                           derive_seed(cfg.seed, 0x7470696eu /* tpin */));
    if (cfg.channels >= 3) {
        const int n = cfg.initial_resolution, c = cfg.channels;
        auto coord = [n](int i) {
            return Real(-1) + Real(2) * static_cast<Real>(i) / static_cast<Real>(n - 1);
        };
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const std::size_t at = static_cast<std::size_t>(i * n + j) * c;
                const Real half_u = coord(i) / Real(2), half_v = coord(j) / Real(2);
                model.triplane.planes[0][at + 0] += half_u;  // xy: x, y
                model.triplane.planes[0][at + 1] += half_v;
                model.triplane.planes[1][at + 0] += half_u;  // xz: x, z
                model.triplane.planes[1][at + 2] += half_v;
                model.triplane.planes[2][at + 1] += half_u;  // yz: y, z
                model.triplane.planes[2][at + 2] += half_v;
            }
        }
    }
    model.decoder = geometric_init<Real>(cfg.channels, cfg.hidden, static_cast<Real>(cfg.init_radius),
                                         derive_seed(cfg.seed, 0x67656f6du /* geom */));
    model.epsilon = SdfModel<Real>::epsilon_for_resolution(cfg.initial_resolution);
    return model;
}

template <typename Real>
TrainResult<Real> train(const std::vector<Vec3<Real>>& cloud, const TrainConfig& cfg, int threads,
                        const std::function<void(const LossSample&)>& monitor = {}) {
    cfg.validate();
    SdfModel<Real> model = initial_model<Real>(cfg);
    AdamState<Real> adam_decoder(model.decoder.parameter_count());
    AdamState<Real> adam_triplane(detail::triplane_param_count(model.triplane));
    return train_from(cloud, cfg, std::move(model), std::move(adam_decoder), std::move(adam_triplane),
                      0, threads, monitor);
}

}  // namespace ngp
