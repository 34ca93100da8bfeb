#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ngpull/aligned.hpp"
#include "ngpull/rng.hpp"

namespace ngp {

inline constexpr double kSoftplusBeta = 100.0;

namespace detail {

// exp(v) via 2^n * exp(r), Cody-Waite two-part ln2 reduction and a degree-7
// Taylor tail. Branch-free (inputs are pre-clamped), relative error < 1e-6.
// The float training path evaluates this millions of times per optimizer
// step, so libm is too slow.
inline float fast_exp(float v) {
    const float n_f = std::floor(v * 1.44269504088896341f + 0.5f);
    float r = v - n_f * 0.693359375f;  // high bits of ln2, exact in float
    r -= n_f * -2.12194440e-4f;        // low-order correction
    float p = 1.0f / 5040.0f;
    p = p * r + 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const auto n = static_cast<std::int32_t>(n_f);
    const float scale = std::bit_cast<float>(static_cast<std::uint32_t>(n + 127) << 23);
    return p * scale;
}

// log(1 + t) for t in [0, 1] via the atanh series: s = t/(2+t),
// log(1+t) = 2(s + s^3/3 + ... + s^11/11). s <= 1/3 keeps the tail < 1e-7.
inline float fast_log1p01(float t) {
    const float s = t / (2.0f + t);
    const float s2 = s * s;
    float p = 1.0f / 11.0f;
    p = p * s2 + 1.0f / 9.0f;
    p = p * s2 + 1.0f / 7.0f;
    p = p * s2 + 1.0f / 5.0f;
    p = p * s2 + 1.0f / 3.0f;
    p = p * s2 + 1.0f;
    return 2.0f * s * p;
}

// Tails below 1e-12 flush to exact zero: smaller survivors push the value
// term (~t/beta) and the log-polynomial intermediates into subnormal range,
// where every touching FMA pays a microcode assist. The induced error is
// ~1e-14, far below the resolution of anything downstream.
inline constexpr double kSoftplusTailFlush = 1e-12;

inline float exp_clamped(float v) {
    const float t = fast_exp(std::max(v, -87.0f));
    return t < static_cast<float>(kSoftplusTailFlush) ? 0.0f : t;
}
inline double exp_clamped(double v) {
    const double t = std::exp(std::max(v, -700.0));
    return t < kSoftplusTailFlush ? 0.0 : t;
}
inline float log1p01(float t) { return fast_log1p01(t); }
inline double log1p01(double t) { return std::log1p(t); }

}  // namespace detail

// Softplus(beta x) value and derivative, branch-free and overflow-safe:
// value = max(x, 0) + log1p(exp(-|beta x|))/beta, so large positive inputs
// pass through exactly and large negative ones flush to zero.
template <typename Real>
inline void softplus(Real x, Real& value, Real& deriv) {
    const Real beta = static_cast<Real>(kSoftplusBeta);
    const Real v = beta * x;
    const Real t = detail::exp_clamped(v < Real(0) ? v : -v);
    value = std::max(x, Real(0)) + detail::log1p01(t) / beta;
    deriv = (v < Real(0) ? t : Real(1)) / (Real(1) + t);
}

// Vectorizable batch form of the same arithmetic. Two branch-free passes
// (exp tail, then log/derivative) keep the per-iteration dependency chains
// short enough to pipeline; deriv doubles as scratch for the tail values.
template <typename Real>
inline void softplus_span(const Real* __restrict z, Real* __restrict value, Real* __restrict deriv, int n) {
    if constexpr (sizeof(Real) == 8) {
        for (int i = 0; i < n; ++i) softplus(z[i], value[i], deriv[i]);
        return;
    }
    const float beta = static_cast<float>(kSoftplusBeta);
    const float inv_beta = 1.0f / beta;
    const float flush = static_cast<float>(detail::kSoftplusTailFlush);
    for (int i = 0; i < n; ++i) {
        const float v = beta * static_cast<float>(z[i]);
        const float a = std::max(-std::fabs(v), -87.0f);
        // inlined fast_exp(a)
        const float n_f = std::floor(a * 1.44269504088896341f + 0.5f);
        float r = a - n_f * 0.693359375f;
        r -= n_f * -2.12194440e-4f;
        float p = 1.0f / 5040.0f;
        p = p * r + 1.0f / 720.0f;
        p = p * r + 1.0f / 120.0f;
        p = p * r + 1.0f / 24.0f;
        p = p * r + 1.0f / 6.0f;
        p = p * r + 0.5f;
        p = p * r + 1.0f;
        p = p * r + 1.0f;
        const float scale = std::bit_cast<float>(
            static_cast<std::uint32_t>(static_cast<std::int32_t>(n_f) + 127) << 23);
        const float t = p * scale;
        deriv[i] = t < flush ? 0.0f : t;
    }
    for (int i = 0; i < n; ++i) {
        const float x = static_cast<float>(z[i]);
        const float t = static_cast<float>(deriv[i]);
        // inlined log(1 + t) via the atanh series
        const float s = t / (2.0f + t);
        const float s2 = s * s;
        float q = 1.0f / 11.0f;
        q = q * s2 + 1.0f / 9.0f;
        q = q * s2 + 1.0f / 7.0f;
        q = q * s2 + 1.0f / 5.0f;
        q = q * s2 + 1.0f / 3.0f;
        q = q * s2 + 1.0f;
        value[i] = std::max(x, 0.0f) + (2.0f * s * q) * inv_beta;
        deriv[i] = (x < 0.0f ? t : 1.0f) / (1.0f + t);
    }
}

namespace detail {

inline constexpr int kRowBlock = 8;

// z[r, out] = bias[out] + x[r, in] . wt[in, out] for R rows at once.
// Output tiles of 32 sit in registers across the whole k sweep, so the
// weight matrix streams through exactly once per row block.
template <typename Real, int R>
void dense_forward_rows(const Real* __restrict x, int in, const Real* __restrict wt,
                        const Real* __restrict bias, int out, Real* __restrict z) {
    constexpr int OB = 32;
    int ob = 0;
    for (; ob + OB <= out; ob += OB) {
        Real acc[R][OB];
        for (int r = 0; r < R; ++r)
            for (int o = 0; o < OB; ++o) acc[r][o] = bias[ob + o];
        for (int k = 0; k < in; ++k) {
            const Real* w = wt + static_cast<std::size_t>(k) * out + ob;
            for (int r = 0; r < R; ++r) {
                const Real f = x[static_cast<std::size_t>(r) * in + k];
                for (int o = 0; o < OB; ++o) acc[r][o] += f * w[o];
            }
        }
        for (int r = 0; r < R; ++r)
            for (int o = 0; o < OB; ++o) z[static_cast<std::size_t>(r) * out + ob + o] = acc[r][o];
    }
    for (; ob < out; ++ob) {
        for (int r = 0; r < R; ++r) {
            Real acc = bias[ob];
            for (int k = 0; k < in; ++k)
                acc += x[static_cast<std::size_t>(r) * in + k] * wt[static_cast<std::size_t>(k) * out + ob];
            z[static_cast<std::size_t>(r) * out + ob] = acc;
        }
    }
}

template <typename Real>
void dense_forward(const Real* __restrict x, int rows, int in, const Real* __restrict wt,
                   const Real* __restrict bias, int out, Real* __restrict z) {
    while (rows > 0) {
        const int r = std::min(rows, kRowBlock);
        switch (r) {
            case 8: dense_forward_rows<Real, 8>(x, in, wt, bias, out, z); break;
            case 7: dense_forward_rows<Real, 7>(x, in, wt, bias, out, z); break;
            case 6: dense_forward_rows<Real, 6>(x, in, wt, bias, out, z); break;
            case 5: dense_forward_rows<Real, 5>(x, in, wt, bias, out, z); break;
            case 4: dense_forward_rows<Real, 4>(x, in, wt, bias, out, z); break;
            case 3: dense_forward_rows<Real, 3>(x, in, wt, bias, out, z); break;
            case 2: dense_forward_rows<Real, 2>(x, in, wt, bias, out, z); break;
            default: dense_forward_rows<Real, 1>(x, in, wt, bias, out, z); break;
        }
        x += static_cast<std::size_t>(r) * in;
        z += static_cast<std::size_t>(r) * out;
        rows -= r;
    }
}

// d1[r, k] = (sum_j d2[r, j] * w[j, k]) * s1[r, k]; same register tiling.
template <typename Real, int R>
void dense_backward_rows(const Real* __restrict d2, const Real* __restrict w,
                         const Real* __restrict s1, int h_out, int h_in, Real* __restrict d1) {
    constexpr int OB = 32;
    int kb = 0;
    for (; kb + OB <= h_in; kb += OB) {
        Real acc[R][OB] = {};
        for (int j = 0; j < h_out; ++j) {
            const Real* wr = w + static_cast<std::size_t>(j) * h_in + kb;
            for (int r = 0; r < R; ++r) {
                const Real s = d2[static_cast<std::size_t>(r) * h_out + j];
                for (int o = 0; o < OB; ++o) acc[r][o] += s * wr[o];
            }
        }
        for (int r = 0; r < R; ++r)
            for (int o = 0; o < OB; ++o)
                d1[static_cast<std::size_t>(r) * h_in + kb + o] =
                    acc[r][o] * s1[static_cast<std::size_t>(r) * h_in + kb + o];
    }
    for (; kb < h_in; ++kb) {
        for (int r = 0; r < R; ++r) {
            Real acc = Real(0);
            for (int j = 0; j < h_out; ++j)
                acc += d2[static_cast<std::size_t>(r) * h_out + j] * w[static_cast<std::size_t>(j) * h_in + kb];
            d1[static_cast<std::size_t>(r) * h_in + kb] = acc * s1[static_cast<std::size_t>(r) * h_in + kb];
        }
    }
}

template <typename Real>
void dense_backward(const Real* __restrict d2, int rows, const Real* __restrict w,
                    const Real* __restrict s1, int h_out, int h_in, Real* __restrict d1) {
    while (rows > 0) {
        const int r = std::min(rows, kRowBlock);
        switch (r) {
            case 8: dense_backward_rows<Real, 8>(d2, w, s1, h_out, h_in, d1); break;
            case 7: dense_backward_rows<Real, 7>(d2, w, s1, h_out, h_in, d1); break;
            case 6: dense_backward_rows<Real, 6>(d2, w, s1, h_out, h_in, d1); break;
            case 5: dense_backward_rows<Real, 5>(d2, w, s1, h_out, h_in, d1); break;
            case 4: dense_backward_rows<Real, 4>(d2, w, s1, h_out, h_in, d1); break;
            case 3: dense_backward_rows<Real, 3>(d2, w, s1, h_out, h_in, d1); break;
            case 2: dense_backward_rows<Real, 2>(d2, w, s1, h_out, h_in, d1); break;
            default: dense_backward_rows<Real, 1>(d2, w, s1, h_out, h_in, d1); break;
        }
        d2 += static_cast<std::size_t>(r) * h_out;
        s1 += static_cast<std::size_t>(r) * h_in;
        d1 += static_cast<std::size_t>(r) * h_in;
        rows -= r;
    }
}

// Dot product with a fixed 16-lane accumulation pattern: index -> lane
// assignment never depends on buffer alignment, so results are bit-stable
// across allocations and call sites.
template <typename Real>
Real dot_fixed(const Real* __restrict a, const Real* __restrict b, int n) {
    constexpr int L = 16;
    Real lanes[L] = {};
    int i = 0;
    for (; i + L <= n; i += L)
        for (int l = 0; l < L; ++l) lanes[l] += a[i + l] * b[i + l];
    Real sum = Real(0);
    for (; i < n; ++i) sum += a[i] * b[i];
    for (int l = 0; l < L; ++l) sum += lanes[l];
    return sum;
}

// gw[j, k] += sum_r d[r, j] * a[r, k]: plain axpy rows, L1-resident.
template <typename Real>
void accumulate_weight_grads(const Real* __restrict d, const Real* __restrict a, int rows, int out,
                             int in, Real* __restrict gw) {
    for (int j = 0; j < out; ++j) {
        Real* row = gw + static_cast<std::size_t>(j) * in;
        for (int r = 0; r < rows; ++r) {
            const Real s = d[static_cast<std::size_t>(r) * out + j];
            const Real* ar = a + static_cast<std::size_t>(r) * in;
            for (int k = 0; k < in; ++k) row[k] += s * ar[k];
        }
    }
}

}  // namespace detail

template <typename Real>
struct DecoderGrads {
    avec<Real> w1, b1, w2, b2, w3, b3;

    void fill_zero() {
        for (auto* v : {&w1, &b1, &w2, &b2, &w3, &b3}) std::fill(v->begin(), v->end(), Real(0));
    }
};

// Cached activations for one forward batch; backward consumes it.
template <typename Real>
struct DecoderTape {
    int rows = 0;
    avec<Real> input;   // rows x C
    avec<Real> a1, s1;  // rows x H: hidden activations and softplus slopes
    avec<Real> a2, s2;
    avec<Real> y;       // rows

    void resize(int r, int c, int h) {
        rows = r;
        input.resize(static_cast<std::size_t>(r) * c);
        const std::size_t rh = static_cast<std::size_t>(r) * h;
        a1.resize(rh);
        s1.resize(rh);
        a2.resize(rh);
        s2.resize(rh);
        y.resize(static_cast<std::size_t>(r));
    }
};

// Fixed three-layer MLP: C -> H -> H -> 1, Softplus(beta=100) on the two
// hidden layers, linear output. Weight matrices are (out x in) row-major;
// transposed copies are kept for the forward pass and must be refreshed
// after every in-place parameter update.
template <typename Real>
struct Decoder {
    int channels = 0;
    int hidden = 0;
    avec<Real> w1, b1;  // H x C, H
    avec<Real> w2, b2;  // H x H, H
    avec<Real> w3, b3;  // 1 x H, 1
    avec<Real> w1t, w2t;  // C x H, H x H

    Decoder() = default;
    Decoder(int c, int h) : channels(c), hidden(h) {
        if (c < 1 || h < 1) throw std::invalid_argument("Decoder: sizes must be >= 1");
        w1.assign(static_cast<std::size_t>(h) * c, Real(0));
        b1.assign(static_cast<std::size_t>(h), Real(0));
        w2.assign(static_cast<std::size_t>(h) * h, Real(0));
        b2.assign(static_cast<std::size_t>(h), Real(0));
        w3.assign(static_cast<std::size_t>(h), Real(0));
        b3.assign(1, Real(0));
        sync_transposed();
    }

    void sync_transposed() {
        const int c = channels, h = hidden;
        w1t.resize(static_cast<std::size_t>(c) * h);
        w2t.resize(static_cast<std::size_t>(h) * h);
        for (int j = 0; j < h; ++j)
            for (int k = 0; k < c; ++k) w1t[static_cast<std::size_t>(k) * h + j] = w1[static_cast<std::size_t>(j) * c + k];
        for (int j = 0; j < h; ++j)
            for (int k = 0; k < h; ++k) w2t[static_cast<std::size_t>(k) * h + j] = w2[static_cast<std::size_t>(j) * h + k];
    }

    DecoderGrads<Real> make_grads() const {
        DecoderGrads<Real> g;
        g.w1.assign(w1.size(), Real(0));
        g.b1.assign(b1.size(), Real(0));
        g.w2.assign(w2.size(), Real(0));
        g.b2.assign(b2.size(), Real(0));
        g.w3.assign(w3.size(), Real(0));
        g.b3.assign(1, Real(0));
        return g;
    }

    std::size_t parameter_count() const {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }

    // Stable segment order used by the optimizer and the checkpoint format.
    std::array<std::pair<Real*, std::size_t>, 6> param_segments() {
        return {{{w1.data(), w1.size()},
                 {b1.data(), b1.size()},
                 {w2.data(), w2.size()},
                 {b2.data(), b2.size()},
                 {w3.data(), w3.size()},
                 {b3.data(), b3.size()}}};
    }
    std::array<std::pair<const Real*, std::size_t>, 6> param_segments() const {
        return {{{w1.data(), w1.size()},
                 {b1.data(), b1.size()},
                 {w2.data(), w2.size()},
                 {b2.data(), b2.size()},
                 {w3.data(), w3.size()},
                 {b3.data(), b3.size()}}};
    }
};

template <typename Real>
std::array<std::pair<const Real*, std::size_t>, 6> grad_segments(const DecoderGrads<Real>& g) {
    return {{{g.w1.data(), g.w1.size()},
             {g.b1.data(), g.b1.size()},
             {g.w2.data(), g.w2.size()},
             {g.b2.data(), g.b2.size()},
             {g.w3.data(), g.w3.size()},
             {g.b3.data(), g.b3.size()}}};
}

// Initialization that makes the fresh network approximate the signed
// distance field of a sphere: normal hidden weights with variance 2/fan_in,
// constant sqrt(pi)/sqrt(fan_in) output weights, output bias -radius.
template <typename Real>
Decoder<Real> geometric_init(int channels, int hidden, Real radius, std::uint64_t seed) {
    if (radius <= Real(0)) throw std::invalid_argument("geometric_init: radius must be positive");
    Decoder<Real> dec(channels, hidden);
    Rng rng(seed);
    const Real std1 = std::sqrt(Real(2) / static_cast<Real>(channels));
    const Real std2 = std::sqrt(Real(2) / static_cast<Real>(hidden));
    for (auto& w : dec.w1) w = static_cast<Real>(rng.normal()) * std1;
    for (auto& w : dec.w2) w = static_cast<Real>(rng.normal()) * std2;
    const Real w_out = std::sqrt(static_cast<Real>(std::numbers::pi) / static_cast<Real>(hidden));
    for (auto& w : dec.w3) w = w_out;
    dec.b3[0] = -radius;
    dec.sync_transposed();
    return dec;
}

// Forward pass over `rows` feature vectors; activations cached in the tape.
template <typename Real>
void decoder_forward(const Decoder<Real>& dec, const Real* features, int rows, DecoderTape<Real>& tape) {
    const int c = dec.channels, h = dec.hidden;
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * c; ++i) {
        if (!std::isfinite(static_cast<double>(features[i])))
            throw std::runtime_error("decoder_forward: non-finite input feature");
    }
    tape.resize(rows, c, h);
    std::copy(features, features + static_cast<std::size_t>(rows) * c, tape.input.begin());

    const std::size_t rh = static_cast<std::size_t>(rows) * h;
    static thread_local avec<Real> z;
    z.resize(rh);
    detail::dense_forward(features, rows, c, dec.w1t.data(), dec.b1.data(), h, z.data());
    softplus_span(z.data(), tape.a1.data(), tape.s1.data(), static_cast<int>(rh));
    detail::dense_forward(tape.a1.data(), rows, h, dec.w2t.data(), dec.b2.data(), h, z.data());
    softplus_span(z.data(), tape.a2.data(), tape.s2.data(), static_cast<int>(rh));

    for (int r = 0; r < rows; ++r) {
        const Real* a2 = tape.a2.data() + static_cast<std::size_t>(r) * h;
        tape.y[static_cast<std::size_t>(r)] = dec.b3[0] + detail::dot_fixed(dec.w3.data(), a2, h);
    }
}

// Tape-free forward for inference. h1/h2 are caller scratch.
template <typename Real>
void decoder_values(const Decoder<Real>& dec, const Real* features, int rows, Real* values,
                    avec<Real>& h1, avec<Real>& h2) {
    const int c = dec.channels, h = dec.hidden;
    const std::size_t rh = static_cast<std::size_t>(rows) * h;
    h1.resize(2 * rh);  // [z or activation | slope scratch]
    h2.resize(rh);
    Real* z = h1.data();
    Real* slopes = h1.data() + rh;
    detail::dense_forward(features, rows, c, dec.w1t.data(), dec.b1.data(), h, z);
    softplus_span(z, h2.data(), slopes, static_cast<int>(rh));
    detail::dense_forward(h2.data(), rows, h, dec.w2t.data(), dec.b2.data(), h, z);
    softplus_span(z, h2.data(), slopes, static_cast<int>(rh));
    for (int r = 0; r < rows; ++r) {
        const Real* a2 = h2.data() + static_cast<std::size_t>(r) * h;
        values[r] = dec.b3[0] + detail::dot_fixed(dec.w3.data(), a2, h);
    }
}

// Directional second-order pass over a single-row tape: with
// u = dy/dinput and a fixed direction r, accumulates d(u . r)/dparams into
// grads and adds the Hessian-vector product d(u . r)/dinput into
// input_grad_acc. Forward tangent propagation followed by a reverse sweep
// over both the primal and tangent variables; softplus contributes its
// second derivative beta s (1 - s).
template <typename Real>
void decoder_hvp(const Decoder<Real>& dec, const DecoderTape<Real>& tape, const Real* r,
                 DecoderGrads<Real>& grads, Real* input_grad_acc) {
    const int c = dec.channels, h = dec.hidden;
    if (tape.rows != 1) throw std::invalid_argument("decoder_hvp: single-row tapes only");
    const Real beta = static_cast<Real>(kSoftplusBeta);
    const Real* a1 = tape.a1.data();
    const Real* s1 = tape.s1.data();
    const Real* s2 = tape.s2.data();
    const Real* f = tape.input.data();

    avec<Real> zdot1(static_cast<std::size_t>(h)), adot1(static_cast<std::size_t>(h));
    avec<Real> zdot2(static_cast<std::size_t>(h)), adot2(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
        Real acc = Real(0);
        const Real* w = dec.w1.data() + static_cast<std::size_t>(j) * c;
        for (int k = 0; k < c; ++k) acc += w[k] * r[k];
        zdot1[static_cast<std::size_t>(j)] = acc;
        adot1[static_cast<std::size_t>(j)] = s1[j] * acc;
    }
    for (int j = 0; j < h; ++j) {
        Real acc = Real(0);
        const Real* w = dec.w2.data() + static_cast<std::size_t>(j) * h;
        for (int k = 0; k < h; ++k) acc += w[k] * adot1[static_cast<std::size_t>(k)];
        zdot2[static_cast<std::size_t>(j)] = acc;
        adot2[static_cast<std::size_t>(j)] = s2[j] * acc;
    }

    // reverse sweep; lambda_x = d(u . r)/dx
    avec<Real> lz2(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j)
        lz2[static_cast<std::size_t>(j)] = dec.w3[static_cast<std::size_t>(j)] *
                                           zdot2[static_cast<std::size_t>(j)] * beta * s2[j] * (Real(1) - s2[j]);
    for (int j = 0; j < h; ++j) grads.w3[static_cast<std::size_t>(j)] += adot2[static_cast<std::size_t>(j)];

    avec<Real> la1_dot(static_cast<std::size_t>(h), Real(0)), la1(static_cast<std::size_t>(h), Real(0));
    for (int j = 0; j < h; ++j) {
        const Real lzdot2 = dec.w3[static_cast<std::size_t>(j)] * s2[j];
        Real* gw = grads.w2.data() + static_cast<std::size_t>(j) * h;
        const Real lz = lz2[static_cast<std::size_t>(j)];
        for (int k = 0; k < h; ++k) gw[k] += lzdot2 * adot1[static_cast<std::size_t>(k)] + lz * a1[k];
        grads.b2[static_cast<std::size_t>(j)] += lz;
        const Real* w = dec.w2.data() + static_cast<std::size_t>(j) * h;
        for (int k = 0; k < h; ++k) {
            la1_dot[static_cast<std::size_t>(k)] += lzdot2 * w[k];
            la1[static_cast<std::size_t>(k)] += lz * w[k];
        }
    }

    avec<Real> lz1(static_cast<std::size_t>(h));
    for (int k = 0; k < h; ++k) {
        const Real lzdot1 = s1[k] * la1_dot[static_cast<std::size_t>(k)];
        lz1[static_cast<std::size_t>(k)] = la1_dot[static_cast<std::size_t>(k)] * zdot1[static_cast<std::size_t>(k)] *
                                               beta * s1[k] * (Real(1) - s1[k]) +
                                           s1[k] * la1[static_cast<std::size_t>(k)];
        Real* gw = grads.w1.data() + static_cast<std::size_t>(k) * c;
        for (int kk = 0; kk < c; ++kk) gw[kk] += lzdot1 * r[kk];
    }
    for (int j = 0; j < h; ++j) {
        const Real lz = lz1[static_cast<std::size_t>(j)];
        Real* gw = grads.w1.data() + static_cast<std::size_t>(j) * c;
        for (int k = 0; k < c; ++k) gw[k] += lz * f[k];
        grads.b1[static_cast<std::size_t>(j)] += lz;
        const Real* w = dec.w1.data() + static_cast<std::size_t>(j) * c;
        for (int k = 0; k < c; ++k) input_grad_acc[k] += lz * w[k];
    }
}

// Reverse pass for d(sum_r upstream[r] * y[r]). Parameter gradients
// accumulate into `grads` (pass nullptr to skip); per-row input gradients
// land in `input_grads` (rows x C, pass nullptr to skip). d1/d2 are caller
// scratch buffers.
template <typename Real>
void decoder_backward(const Decoder<Real>& dec, const DecoderTape<Real>& tape, const Real* upstream,
                      DecoderGrads<Real>* grads, Real* input_grads,
                      avec<Real>& d1, avec<Real>& d2) {
    const int c = dec.channels, h = dec.hidden;
    const int rows = tape.rows;
    if (rows == 0) return;
    if (tape.a1.size() != static_cast<std::size_t>(rows) * h ||
        tape.input.size() != static_cast<std::size_t>(rows) * c)
        throw std::invalid_argument("decoder_backward: tape/decoder shape mismatch");
    const std::size_t rh = static_cast<std::size_t>(rows) * h;
    d1.resize(rh);
    d2.resize(rh);

    for (int r = 0; r < rows; ++r) {
        const Real u = upstream[r];
        const Real* s2 = tape.s2.data() + static_cast<std::size_t>(r) * h;
        Real* d2r = d2.data() + static_cast<std::size_t>(r) * h;
        for (int j = 0; j < h; ++j) d2r[j] = u * dec.w3[static_cast<std::size_t>(j)] * s2[j];
    }

    if (grads) {
        for (int r = 0; r < rows; ++r) {
            const Real u = upstream[r];
            grads->b3[0] += u;
            const Real* a2 = tape.a2.data() + static_cast<std::size_t>(r) * h;
            const Real* d2r = d2.data() + static_cast<std::size_t>(r) * h;
            for (int j = 0; j < h; ++j) {
                grads->w3[static_cast<std::size_t>(j)] += u * a2[j];
                grads->b2[static_cast<std::size_t>(j)] += d2r[j];
            }
        }
        detail::accumulate_weight_grads(d2.data(), tape.a1.data(), rows, h, h, grads->w2.data());
    }

    detail::dense_backward(d2.data(), rows, dec.w2.data(), tape.s1.data(), h, h, d1.data());

    if (grads) {
        for (int r = 0; r < rows; ++r) {
            const Real* d1r = d1.data() + static_cast<std::size_t>(r) * h;
            for (int j = 0; j < h; ++j) grads->b1[static_cast<std::size_t>(j)] += d1r[j];
        }
        detail::accumulate_weight_grads(d1.data(), tape.input.data(), rows, h, c, grads->w1.data());
    }

    if (input_grads) {
        // dinput[r, k] = sum_j d1[r, j] * w1[j, k]: reuse the blocked kernel
        // with unit slopes.
        static thread_local avec<Real> ones;
        ones.assign(static_cast<std::size_t>(rows) * c, Real(1));
        detail::dense_backward(d1.data(), rows, dec.w1.data(), ones.data(), h, c, input_grads);
    }
}

}  // namespace ngp
