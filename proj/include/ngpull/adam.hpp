#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ngp {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment buffers for one parameter group. The trainer keeps two groups
// (decoder, tri-plane) so they can run at different learning rates and the
// tri-plane buffers can be rebuilt on expansion.
template <typename Real>
struct AdamState {
    std::vector<Real> m, v;
    std::int64_t step = 0;

    explicit AdamState(std::size_t n = 0) { reset(n); }

    void reset(std::size_t n) {
        m.assign(n, Real(0));
        v.assign(n, Real(0));
        step = 0;
    }

    std::size_t size() const { return m.size(); }
};

template <typename Real>
struct ParamSegment {
    Real* param;
    const Real* grad;
    std::size_t count;
};

// Standard Adam with bias correction over a list of parameter segments that
// together form one group. Segment order must stay stable across steps.
template <typename Real>
void adam_step(const std::vector<ParamSegment<Real>>& segments, AdamState<Real>& state, Real lr,
               const AdamConfig& cfg = {}) {
    std::size_t total = 0;
    for (const auto& s : segments) total += s.count;
    if (total != state.size()) throw std::invalid_argument("adam_step: state size mismatch");

    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const Real inv_bc1 = static_cast<Real>(1.0 / bc1);
    const Real inv_bc2 = static_cast<Real>(1.0 / bc2);
    const Real beta1 = static_cast<Real>(b1), one_m_b1 = static_cast<Real>(1.0 - b1);
    const Real beta2 = static_cast<Real>(b2), one_m_b2 = static_cast<Real>(1.0 - b2);
    const Real eps = static_cast<Real>(cfg.eps);

    std::size_t off = 0;
    for (const auto& seg : segments) {
        Real* m = state.m.data() + off;
        Real* v = state.v.data() + off;
        for (std::size_t i = 0; i < seg.count; ++i) {
            const Real g = seg.grad[i];
            m[i] = beta1 * m[i] + one_m_b1 * g;
            v[i] = beta2 * v[i] + one_m_b2 * g * g;
            const Real mhat = m[i] * inv_bc1;
            const Real vhat = v[i] * inv_bc2;
            seg.param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        off += seg.count;
    }
}

}  // namespace ngp
