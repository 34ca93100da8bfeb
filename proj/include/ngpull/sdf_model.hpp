#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ngpull/decoder.hpp"
#include "ngpull/parallel.hpp"
#include "ngpull/triplane.hpp"
#include "ngpull/vec3.hpp"

namespace ngp {

inline constexpr double kDegenerateGradNorm = 1e-12;

// The learned signed distance field: tri-plane features decoded by the MLP.
// epsilon is the finite-difference probe step; the trainer keeps it at
// 1/(2N) for the current plane resolution N.
template <typename Real>
struct SdfModel {
    TriPlane<Real> triplane;
    Decoder<Real> decoder;
    Real epsilon = Real(0);

    static Real epsilon_for_resolution(int n) { return Real(1) / (Real(2) * static_cast<Real>(n)); }
};

// Scratch for one query's pull evaluation: the center sample plus the six
// axis probes share one 7-row decoder tape. Row order: center, x+, x-, y+,
// y-, z+, z-.
template <typename Real>
struct PullWorkspace {
    DecoderTape<Real> tape;
    std::array<TriFootprint<Real>, 7> footprints;
    avec<Real> features;    // 7 x C staging
    avec<Real> dfeat;       // 7 x C backward output
    avec<Real> d1, d2;      // decoder scratch
    avec<Real> input_grad;  // C: dPhi/dfeature of the center (analytic mode)
    std::array<Real, 7> upstream{};
};

template <typename Real>
struct PullRecord {
    Vec3<Real> q;
    Real phi_q = Real(0);
    std::array<Real, 6> probes{};  // x+, x-, y+, y-, z+, z-
    Vec3<Real> grad{};
    Real grad_norm = Real(0);
    Vec3<Real> q_pulled{};
    bool degenerate = false;
};

// Shared pull algebra: central differences for the gradient, then
// q' = q - phi(q) * grad / |grad| with the *signed* phi so interior
// queries are pushed outward onto the surface. A vanishing gradient
// flags the record instead of inventing a direction.
template <typename Real>
void pull_from_values(const Vec3<Real>& q, Real phi_q, const std::array<Real, 6>& probes, Real eps,
                      PullRecord<Real>& rec) {
    rec.q = q;
    rec.phi_q = phi_q;
    rec.probes = probes;
    const Real inv2e = Real(1) / (Real(2) * eps);
    rec.grad = {(probes[0] - probes[1]) * inv2e, (probes[2] - probes[3]) * inv2e,
                (probes[4] - probes[5]) * inv2e};
    rec.grad_norm = rec.grad.norm();
    if (static_cast<double>(rec.grad_norm) < kDegenerateGradNorm) {
        rec.degenerate = true;
        rec.q_pulled = q;
        return;
    }
    rec.degenerate = false;
    rec.q_pulled = q - rec.grad * (phi_q / rec.grad_norm);
}

// Probe order matches PullRecord::probes: x+, x-, y+, y-, z+, z-.
template <typename Real>
std::array<Vec3<Real>, 6> probe_offsets(Real eps) {
    return {Vec3<Real>{eps, 0, 0}, Vec3<Real>{-eps, 0, 0}, Vec3<Real>{0, eps, 0},
            Vec3<Real>{0, -eps, 0}, Vec3<Real>{0, 0, eps}, Vec3<Real>{0, 0, -eps}};
}

// Pull on any field exposing value(q) and epsilon; lets analytic test
// fields run through the identical pull path as the learned model.
template <typename Field, typename Real>
PullRecord<Real> pull_field(const Field& field, const Vec3<Real>& q) {
    const std::array<Vec3<Real>, 6> offsets = probe_offsets<Real>(field.epsilon);
    std::array<Real, 6> probes;
    for (int i = 0; i < 6; ++i) probes[static_cast<std::size_t>(i)] = field.value(q + offsets[static_cast<std::size_t>(i)]);
    PullRecord<Real> rec;
    pull_from_values(q, field.value(q), probes, field.epsilon, rec);
    return rec;
}

// --- single evaluation ----------------------------------------------------

template <typename Real>
struct PhiTrace {
    Real value = Real(0);
    TriFootprint<Real> footprints;
    DecoderTape<Real> tape;
};

template <typename Real>
PhiTrace<Real> phi(const SdfModel<Real>& model, const Vec3<Real>& q) {
    if (!q.finite()) throw std::invalid_argument("phi: non-finite query");
    PhiTrace<Real> trace;
    avec<Real> feature(static_cast<std::size_t>(model.triplane.channels));
    gather_features_into(model.triplane, q, feature.data(), trace.footprints);
    decoder_forward(model.decoder, feature.data(), 1, trace.tape);
    trace.value = trace.tape.y[0];
    return trace;
}

template <typename Real>
Real phi_value(const SdfModel<Real>& model, const Vec3<Real>& q) {
    return phi(model, q).value;
}

// Batched tape-free evaluation, deterministic under any thread count
// (every output slot is written independently).
template <typename Real>
void phi_batch(const SdfModel<Real>& model, const Vec3<Real>* queries, std::size_t count,
               Real* values, int threads) {
    const int c = model.triplane.channels;
    parallel_chunks(count, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        avec<Real> feature(static_cast<std::size_t>(c));
        avec<Real> h1, h2;
        TriFootprint<Real> fps;
        for (std::size_t i = begin; i < end; ++i) {
            gather_features_into(model.triplane, queries[i], feature.data(), fps);
            decoder_values(model.decoder, feature.data(), 1, values + i, h1, h2);
        }
    });
}

// --- pull with trace --------------------------------------------------------

// Evaluates the center and all six probes in one 7-row decoder batch,
// keeping footprints and the tape in `ws` for the backward pass.
template <typename Real>
PullRecord<Real> pull(const SdfModel<Real>& model, const Vec3<Real>& q, PullWorkspace<Real>& ws) {
    if (!q.finite()) throw std::invalid_argument("pull: non-finite query");
    const int c = model.triplane.channels;
    ws.features.resize(static_cast<std::size_t>(7) * c);

    const auto offsets = probe_offsets<Real>(model.epsilon);
    gather_features_into(model.triplane, q, ws.features.data(), ws.footprints[0]);
    for (int i = 0; i < 6; ++i) {
        gather_features_into(model.triplane, q + offsets[static_cast<std::size_t>(i)],
                             ws.features.data() + static_cast<std::size_t>(i + 1) * c,
                             ws.footprints[static_cast<std::size_t>(i + 1)]);
    }
    decoder_forward(model.decoder, ws.features.data(), 7, ws.tape);

    std::array<Real, 6> probes;
    for (int i = 0; i < 6; ++i) probes[static_cast<std::size_t>(i)] = ws.tape.y[static_cast<std::size_t>(i + 1)];
    PullRecord<Real> rec;
    pull_from_values(q, ws.tape.y[0], probes, model.epsilon, rec);
    return rec;
}

template <typename Real>
PullRecord<Real> pull(const SdfModel<Real>& model, const Vec3<Real>& q) {
    PullWorkspace<Real> ws;
    return pull(model, q, ws);
}

// Spatial gradient by central differences (Eq. grad_a = (phi(q + eps_a) -
// phi(q - eps_a)) / (2 eps)); exact on fields affine or quadratic in q.
template <typename Real>
Vec3<Real> numerical_gradient(const SdfModel<Real>& model, const Vec3<Real>& q) {
    PullWorkspace<Real> ws;
    return pull(model, q, ws).grad;
}

// Reverse pass of ||upstream . d q'|| through the pull: all seven phi
// evaluations contribute, including the normalization Jacobian
// (I - g g^T)/|g| of the direction factor. Gradients accumulate into the
// caller's buffers; a degenerate record contributes nothing.
template <typename Real>
void backward_through_pull(const SdfModel<Real>& model, const PullRecord<Real>& rec,
                           PullWorkspace<Real>& ws, const Vec3<Real>& upstream,
                           TriPlane<Real>& plane_grads, DecoderGrads<Real>& decoder_grads) {
    if (rec.degenerate) return;
    const int c = model.triplane.channels;

    const Vec3<Real> ghat = rec.grad / rec.grad_norm;
    const Real gdotu = ghat.dot(upstream);
    // d/d phi(q): q' moves along -ghat.
    ws.upstream[0] = -gdotu;
    // d/d g: -(phi/|g|) (I - ghat ghat^T) u, then probes via +-1/(2 eps).
    const Vec3<Real> dg = (upstream - ghat * gdotu) * (-rec.phi_q / rec.grad_norm);
    const Real inv2e = Real(1) / (Real(2) * model.epsilon);
    ws.upstream[1] = dg.x * inv2e;
    ws.upstream[2] = -dg.x * inv2e;
    ws.upstream[3] = dg.y * inv2e;
    ws.upstream[4] = -dg.y * inv2e;
    ws.upstream[5] = dg.z * inv2e;
    ws.upstream[6] = -dg.z * inv2e;

    ws.dfeat.resize(static_cast<std::size_t>(7) * c);
    decoder_backward(model.decoder, ws.tape, ws.upstream.data(), &decoder_grads, ws.dfeat.data(),
                     ws.d1, ws.d2);
    for (int e = 0; e < 7; ++e)
        accumulate_plane_grads(plane_grads, ws.footprints[static_cast<std::size_t>(e)],
                               ws.dfeat.data() + static_cast<std::size_t>(e) * c);
}

// --- analytical-gradient ablation ------------------------------------------

namespace detail {

// Plane axes: xy reads (x, y), xz reads (x, z), yz reads (y, z).
inline constexpr int kPlaneAxisU[3] = {0, 0, 1};
inline constexpr int kPlaneAxisV[3] = {1, 2, 2};

// d(bilinear weight k)/d(fu, fv) for the corner order
// (i0,j0), (i1,j0), (i0,j1), (i1,j1).
template <typename Real>
inline void bilinear_weight_slopes(Real fu, Real fv, Real* dwu, Real* dwv) {
    dwu[0] = -(Real(1) - fv); dwu[1] = Real(1) - fv; dwu[2] = -fv; dwu[3] = fv;
    dwv[0] = -(Real(1) - fu); dwv[1] = -fu; dwv[2] = Real(1) - fu; dwv[3] = fu;
}

}  // namespace detail

// dPhi/dq by differentiating the bilinear weights inside the current cells.
// Discontinuous across cell boundaries; the training mode built on it exists
// to demonstrate exactly that failure. Fills ws with a 1-row tape and the
// center input gradient so the matching backward can reuse them.
template <typename Real>
Vec3<Real> analytic_spatial_gradient(const SdfModel<Real>& model, const Vec3<Real>& q,
                                     PullWorkspace<Real>& ws, Real* phi_out) {
    const int n = model.triplane.resolution, c = model.triplane.channels;
    ws.features.resize(static_cast<std::size_t>(c));
    gather_features_into(model.triplane, q, ws.features.data(), ws.footprints[0]);
    decoder_forward(model.decoder, ws.features.data(), 1, ws.tape);
    if (phi_out) *phi_out = ws.tape.y[0];

    // u = dPhi/dfeature via a parameter-free backward; kept for the backward pass.
    ws.input_grad.resize(static_cast<std::size_t>(c));
    const Real one = Real(1);
    decoder_backward(model.decoder, ws.tape, &one, static_cast<DecoderGrads<Real>*>(nullptr),
                     ws.input_grad.data(), ws.d1, ws.d2);

    const Real jac = static_cast<Real>(n - 1) / Real(2);  // d(grid coord)/d(world coord)
    Vec3<Real> grad{0, 0, 0};
    Real dwu[4], dwv[4];
    for (int p = 0; p < 3; ++p) {
        const auto& fp = ws.footprints[0][static_cast<std::size_t>(p)];
        const auto& plane = model.triplane.planes[static_cast<std::size_t>(p)];
        // Recover fu, fv from the stored weights: w1 = fu(1-fv), w3 = fu fv.
        const Real fu = fp.weight[1] + fp.weight[3];
        const Real fv = fp.weight[2] + fp.weight[3];
        detail::bilinear_weight_slopes(fu, fv, dwu, dwv);
        Real dfu = Real(0), dfv = Real(0);
        for (int k = 0; k < 4; ++k) {
            const Real* entry = plane.data() + static_cast<std::size_t>(fp.corner[static_cast<std::size_t>(k)]) * c;
            Real dot = Real(0);
            for (int ch = 0; ch < c; ++ch) dot += ws.input_grad[static_cast<std::size_t>(ch)] * entry[ch];
            dfu += dwu[k] * dot;
            dfv += dwv[k] * dot;
        }
        // Clamped projections have zero derivative outside the domain.
        const auto uv = project(q, static_cast<PlaneId>(p), n);
        const bool u_interior = uv.u > Real(0) && uv.u < static_cast<Real>(n - 1);
        const bool v_interior = uv.v > Real(0) && uv.v < static_cast<Real>(n - 1);
        if (u_interior) grad[static_cast<std::size_t>(detail::kPlaneAxisU[p])] += dfu * jac;
        if (v_interior) grad[static_cast<std::size_t>(detail::kPlaneAxisV[p])] += dfv * jac;
    }
    return grad;
}

// Pull built on the analytic gradient; supervision reaches only the four
// corner entries per plane touched by the center evaluation.
template <typename Real>
PullRecord<Real> pull_analytic(const SdfModel<Real>& model, const Vec3<Real>& q, PullWorkspace<Real>& ws) {
    Real phi_q = Real(0);
    const Vec3<Real> grad = analytic_spatial_gradient(model, q, ws, &phi_q);
    PullRecord<Real> rec;
    rec.q = q;
    rec.phi_q = phi_q;
    rec.grad = grad;
    rec.grad_norm = grad.norm();
    if (static_cast<double>(rec.grad_norm) < kDegenerateGradNorm) {
        rec.degenerate = true;
        rec.q_pulled = q;
    } else {
        rec.degenerate = false;
        rec.q_pulled = q - rec.grad * (phi_q / rec.grad_norm);
    }
    return rec;
}

// Full reverse pass of the analytic pull, normalization Jacobian included:
// the direction depends on the parameters through both the interpolation
// slopes (linear in the plane entries) and the decoder input gradient
// (a directional second-order term handled by decoder_hvp).
template <typename Real>
void backward_through_pull_analytic(const SdfModel<Real>& model, const PullRecord<Real>& rec,
                                    PullWorkspace<Real>& ws, const Vec3<Real>& upstream,
                                    TriPlane<Real>& plane_grads, DecoderGrads<Real>& decoder_grads) {
    if (rec.degenerate) return;
    const int n = model.triplane.resolution, c = model.triplane.channels;
    const Vec3<Real> ghat = rec.grad / rec.grad_norm;
    const Real gdotu = ghat.dot(upstream);
    const Real dphi = -gdotu;
    // dL/dg through q' = q - phi * g/|g|
    const Vec3<Real> wg = (upstream - ghat * gdotu) * (-rec.phi_q / rec.grad_norm);
    const Real jac = static_cast<Real>(n - 1) / Real(2);

    // Value path: dphi through the decoder; input gradient lands in dfeat.
    ws.dfeat.assign(static_cast<std::size_t>(c), Real(0));
    decoder_backward(model.decoder, ws.tape, &dphi, &decoder_grads, ws.dfeat.data(), ws.d1, ws.d2);

    // Interpolation-slope path: g = D^T u with D linear in the plane
    // entries. kappa_k = wg . dw_k/dq scatters u directly into the plane
    // gradients, and r = D wg feeds the second-order decoder pass.
    avec<Real> r(static_cast<std::size_t>(c), Real(0));
    Real dwu[4], dwv[4];
    for (int p = 0; p < 3; ++p) {
        const auto& fp = ws.footprints[0][static_cast<std::size_t>(p)];
        const auto& plane = model.triplane.planes[static_cast<std::size_t>(p)];
        auto& gplane = plane_grads.planes[static_cast<std::size_t>(p)];
        const Real fu = fp.weight[1] + fp.weight[3];
        const Real fv = fp.weight[2] + fp.weight[3];
        detail::bilinear_weight_slopes(fu, fv, dwu, dwv);
        const auto uv = project(rec.q, static_cast<PlaneId>(p), n);
        const bool u_interior = uv.u > Real(0) && uv.u < static_cast<Real>(n - 1);
        const bool v_interior = uv.v > Real(0) && uv.v < static_cast<Real>(n - 1);
        const Real wu = u_interior ? wg[static_cast<std::size_t>(detail::kPlaneAxisU[p])] : Real(0);
        const Real wv = v_interior ? wg[static_cast<std::size_t>(detail::kPlaneAxisV[p])] : Real(0);
        for (int k = 0; k < 4; ++k) {
            const Real kappa = jac * (dwu[k] * wu + dwv[k] * wv);
            if (kappa == Real(0)) continue;
            const std::size_t base = static_cast<std::size_t>(fp.corner[static_cast<std::size_t>(k)]) * c;
            Real* gentry = gplane.data() + base;
            const Real* entry = plane.data() + base;
            for (int ch = 0; ch < c; ++ch) {
                gentry[ch] += kappa * ws.input_grad[static_cast<std::size_t>(ch)];
                r[static_cast<std::size_t>(ch)] += kappa * entry[ch];
            }
        }
    }

    // Second-order path: d(u . r)/dparams and the input Hessian-vector
    // product, folded into the same feature gradient before scattering.
    decoder_hvp(model.decoder, ws.tape, r.data(), decoder_grads, ws.dfeat.data());
    accumulate_plane_grads(plane_grads, ws.footprints[0], ws.dfeat.data());
}

}  // namespace ngp
