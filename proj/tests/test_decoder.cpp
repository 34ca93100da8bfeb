#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ngpull/decoder.hpp"
#include "ngpull/rng.hpp"
#include "support/oracles.hpp"

using namespace ngp;

namespace {

// Straight-line re-implementation of the decoder arithmetic, no shared code
// with decoder_forward beyond the softplus definition itself.
double reference_forward(const Decoder<double>& dec, const std::vector<double>& f) {
    const int c = dec.channels, h = dec.hidden;
    auto sp = [](double x) { return std::log1p(std::exp(100.0 * x)) / 100.0; };
    std::vector<double> a1(static_cast<std::size_t>(h)), a2(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
        double z = dec.b1[static_cast<std::size_t>(j)];
        for (int k = 0; k < c; ++k) z += dec.w1[static_cast<std::size_t>(j * c + k)] * f[static_cast<std::size_t>(k)];
        a1[static_cast<std::size_t>(j)] = sp(z);
    }
    for (int j = 0; j < h; ++j) {
        double z = dec.b2[static_cast<std::size_t>(j)];
        for (int k = 0; k < h; ++k) z += dec.w2[static_cast<std::size_t>(j * h + k)] * a1[static_cast<std::size_t>(k)];
        a2[static_cast<std::size_t>(j)] = sp(z);
    }
    double y = dec.b3[0];
    for (int j = 0; j < h; ++j) y += dec.w3[static_cast<std::size_t>(j)] * a2[static_cast<std::size_t>(j)];
    return y;
}

Decoder<double> random_decoder(int c, int h, std::uint64_t seed) {
    Decoder<double> dec(c, h);
    Rng rng(seed);
    for (auto& w : dec.w1) w = rng.normal() * 0.7;
    for (auto& w : dec.b1) w = rng.normal() * 0.2;
    for (auto& w : dec.w2) w = rng.normal() * 0.5;
    for (auto& w : dec.b2) w = rng.normal() * 0.2;
    for (auto& w : dec.w3) w = rng.normal() * 0.8;
    dec.b3[0] = rng.normal() * 0.2;
    dec.sync_transposed();
    return dec;
}

double forward_one(const Decoder<double>& dec, const std::vector<double>& f) {
    DecoderTape<double> tape;
    decoder_forward(dec, f.data(), 1, tape);
    return tape.y[0];
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("geometric init is deterministic and shaped as specified") {
    const auto a = geometric_init<double>(32, 128, 0.5, 99);
    const auto b = geometric_init<double>(32, 128, 0.5, 99);
    CHECK(a.w1 == b.w1);
    CHECK(a.w2 == b.w2);
    CHECK(a.b3[0] == -0.5);
    const double w_out = std::sqrt(std::numbers::pi / 128.0);
    for (double w : a.w3) CHECK(w == doctest::Approx(w_out).epsilon(1e-15));
    for (double v : a.b1) CHECK(v == 0.0);
    for (double v : a.b2) CHECK(v == 0.0);

    const auto c = geometric_init<double>(32, 128, 0.5, 100);
    CHECK(a.w1 != c.w1);
}

TEST_CASE("geometric init at the zero feature stays near -radius") {
    const auto dec = geometric_init<double>(32, 128, 0.5, 7);
    std::vector<double> zero(32, 0.0);
    const double y = forward_one(dec, zero);
    CHECK(y > -1.5);
    CHECK(y < 0.5);
}

TEST_CASE("all-zero decoder returns zero") {
    Decoder<double> dec(4, 8);
    for (const auto f : {std::vector<double>{0, 0, 0, 0}, std::vector<double>{1, -2, 3, 4}}) {
        CHECK(forward_one(dec, f) == 0.0);
    }
}

TEST_CASE("pass-through configuration is exactly linear") {
    // hidden pre-activations sit in the softplus pass-through branch, so
    // y == w . f + b up to bare float round-off of the bias shift
    const auto dec = test::passthrough_decoder<double>(1, 4);
    for (double f : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        CHECK(forward_one(dec, {f}) == doctest::Approx(f).epsilon(1e-14));
    }
}

TEST_CASE("forward matches the straight-line reference") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_index(5));
        const int h = 3 + static_cast<int>(rng.uniform_index(6));
        const auto dec = random_decoder(c, h, 1000 + static_cast<std::uint64_t>(trial));
        std::vector<double> f(static_cast<std::size_t>(c));
        for (auto& v : f) v = rng.normal();
        const double got = forward_one(dec, f);
        const double want = reference_forward(dec, f);
        CHECK(test::rel_err(got, want) < 1e-12);
    }
}

TEST_CASE("forward is batch-order equivariant") {
    const auto dec = random_decoder(3, 6, 5);
    Rng rng(6);
    std::vector<double> batch(5 * 3);
    for (auto& v : batch) v = rng.normal();
    DecoderTape<double> tape;
    decoder_forward(dec, batch.data(), 5, tape);
    const auto y = tape.y;

    // reversed batch
    std::vector<double> rev(5 * 3);
    for (int r = 0; r < 5; ++r)
        for (int k = 0; k < 3; ++k) rev[static_cast<std::size_t>((4 - r) * 3 + k)] = batch[static_cast<std::size_t>(r * 3 + k)];
    decoder_forward(dec, rev.data(), 5, tape);
    for (int r = 0; r < 5; ++r) CHECK(tape.y[static_cast<std::size_t>(4 - r)] == y[static_cast<std::size_t>(r)]);
}

TEST_CASE("non-finite input raises") {
    const auto dec = random_decoder(2, 3, 8);
    const double bad[2] = {1.0, std::numeric_limits<double>::quiet_NaN()};
    DecoderTape<double> tape;
    CHECK_THROWS_AS(decoder_forward(dec, bad, 1, tape), std::runtime_error);
}

TEST_CASE("zero upstream produces zero gradients") {
    const auto dec = random_decoder(3, 5, 9);
    std::vector<double> f = {0.3, -0.2, 0.9};
    DecoderTape<double> tape;
    decoder_forward(dec, f.data(), 1, tape);
    auto grads = dec.make_grads();
    std::vector<double> din(3);
    avec<double> d1, d2;
    const double zero = 0.0;
    decoder_backward(dec, tape, &zero, &grads, din.data(), d1, d2);
    for (const auto* seg : {&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3, &grads.b3})
        for (double g : *seg) CHECK(g == 0.0);
    for (double g : din) CHECK(g == 0.0);
}

TEST_CASE("backward matches central differences on every parameter") {
    const double h = 1e-4;
    for (int trial = 0; trial < 20; ++trial) {
        auto dec = random_decoder(2, 3, 200 + static_cast<std::uint64_t>(trial));
        Rng rng(300 + static_cast<std::uint64_t>(trial));
        std::vector<double> f = {rng.normal(), rng.normal()};
        const double upstream = rng.normal();

        DecoderTape<double> tape;
        decoder_forward(dec, f.data(), 1, tape);
        auto grads = dec.make_grads();
        std::vector<double> din(2);
        avec<double> s1, s2;
        decoder_backward(dec, tape, &upstream, &grads, din.data(), s1, s2);

        auto segments = dec.param_segments();
        const auto gsegs = grad_segments(grads);
        for (std::size_t seg = 0; seg < segments.size(); ++seg) {
            for (std::size_t i = 0; i < segments[seg].second; ++i) {
                double* p = segments[seg].first + i;
                const double saved = *p;
                const double fd = test::central_diff4(
                    [&](double delta) {
                        *p = saved + delta;
                        dec.sync_transposed();
                        const double y = forward_one(dec, f) * upstream;
                        *p = saved;
                        return y;
                    },
                    h);
                dec.sync_transposed();
                const double got = gsegs[seg].first[i];
                if (std::max(std::abs(fd), std::abs(got)) > 1e-7)
                    CHECK(test::rel_err(got, fd) < 1e-5);
                else
                    CHECK(std::abs(got - fd) < 1e-7);
            }
        }

        // input gradient check
        for (std::size_t k = 0; k < 2; ++k) {
            const double saved = f[k];
            const double fd = test::central_diff4(
                [&](double delta) {
                    f[k] = saved + delta;
                    const double y = forward_one(dec, f) * upstream;
                    f[k] = saved;
                    return y;
                },
                h);
            if (std::max(std::abs(fd), std::abs(din[k])) > 1e-7)
                CHECK(test::rel_err(din[k], fd) < 1e-5);
            else
                CHECK(std::abs(din[k] - fd) < 1e-7);
        }
    }
}

TEST_CASE("tape shape mismatch raises") {
    const auto dec = random_decoder(3, 5, 12);
    const auto other = random_decoder(3, 7, 13);
    std::vector<double> f = {0.1, 0.2, 0.3};
    DecoderTape<double> tape;
    decoder_forward(other, f.data(), 1, tape);
    auto grads = dec.make_grads();
    avec<double> d1, d2;
    const double one = 1.0;
    CHECK_THROWS_AS(decoder_backward(dec, tape, &one, &grads, static_cast<double*>(nullptr), d1, d2),
                    std::invalid_argument);
}

TEST_CASE("softplus is overflow-safe at |x| = 1e4") {
    for (double x : {1e4, -1e4, 3000.0, -3000.0}) {
        double v, d;
        softplus(x, v, d);
        CHECK(std::isfinite(v));
        CHECK(std::isfinite(d));
        if (x > 0) {
            CHECK(v == doctest::Approx(x));
            CHECK(d == 1.0);
        } else {
            CHECK(v == 0.0);
            CHECK(d == 0.0);
        }
    }
    float vf, df;
    softplus(1e4f, vf, df);
    CHECK(std::isfinite(vf));
    softplus(-1e4f, vf, df);
    CHECK(std::isfinite(vf));
}

TEST_CASE("float fast_exp tracks std::exp") {
    double worst = 0.0;
    for (double step = -87.0; step <= 30.0; step += 0.0137) {
        const float x = static_cast<float>(step);
        const double want = std::exp(static_cast<double>(x));
        const double got = static_cast<double>(detail::fast_exp(x));
        worst = std::max(worst, std::abs(got - want) / want);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("decoder survives huge feature magnitudes") {
    const auto dec = random_decoder(2, 4, 31);
    std::vector<double> f = {1e4, -1e4};
    const double y = forward_one(dec, f);
    CHECK(std::isfinite(y));
}

}  // TEST_SUITE
