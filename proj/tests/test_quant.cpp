#include <cmath>
#include <cstdint>

#include "doctest.h"

#include "qsearch/quant.hpp"
#include "qsearch/rng.hpp"

using namespace qsearch;

namespace {

// Scalar reference for Eq-style uniform quantization. Rounding goes through
// std::nearbyint (half-to-even under the default FP environment), an
// independent path from the library's magic-number rounding.
int32_t oracle_quantize_one(float x, const QuantParams& qp) {
    const float ratio = x / qp.delta + static_cast<float>(qp.zero_point);
    const double r = std::nearbyint(static_cast<double>(ratio));
    if (r <= qp.alpha) {
        return qp.alpha;
    }
    if (r >= qp.beta) {
        return qp.beta;
    }
    return static_cast<int32_t>(r);
}

} // namespace

TEST_CASE("uniform_quantize closed-form examples") {
    const QuantParams qp4 = QuantParams::uniform_symmetric(4, 0.5f);
    const Tensor x({3}, {0.0f, 2.4f, 100.0f});
    const CodeTensor q = uniform_quantize(x, qp4);
    CHECK(q.data[0] == 0);
    CHECK(q.data[1] == 5); // round(4.8) = 5
    CHECK(q.data[2] == 7); // clipped to beta
}

TEST_CASE("uniform_dequantize closed-form examples") {
    const QuantParams qp4 = QuantParams::uniform_symmetric(4, 0.5f);
    CodeTensor q;
    q.shape = {2};
    q.data = {0, 5};
    const Tensor x = uniform_dequantize(q, qp4);
    CHECK(x[0] == 0.0f);
    CHECK(x[1] == 2.5f);

    q.data = {0, 9}; // out of [alpha, beta]
    CHECK_THROWS_AS(uniform_dequantize(q, qp4), DataError);
}

TEST_CASE("vectorized quantize equals scalar oracle exactly on 1e4 draws") {
    Rng rng(42);
    const int bits_choices[3] = {3, 4, 8};
    for (int iter = 0; iter < 10000; ++iter) {
        const int bits = bits_choices[rng.next_below(3)];
        const float delta = static_cast<float>(std::exp(rng.uniform(-6.0, 2.0)));
        const bool asym = rng.next_below(2) == 1;
        QuantParams qp;
        if (asym) {
            const int32_t lo = -(1 << (bits - 1));
            const int32_t hi = (1 << (bits - 1)) - 1;
            const int32_t zp = static_cast<int32_t>(lo + static_cast<int64_t>(rng.next_below(
                                                             static_cast<uint64_t>(hi - lo + 1))));
            qp = QuantParams::uniform_asymmetric(bits, delta, zp);
        } else {
            qp = QuantParams::uniform_symmetric(bits, delta);
        }
        const float x = static_cast<float>(rng.uniform(-4.0, 4.0)) * delta *
                        static_cast<float>(1 << (bits - 1));
        const Tensor t({1}, {x});
        const CodeTensor q = uniform_quantize(t, qp);
        REQUIRE(q.data[0] == oracle_quantize_one(x, qp));
    }
}

TEST_CASE("round-trip error is at most delta/2 inside the unclipped range") {
    Rng rng(43);
    const QuantParams qp = QuantParams::uniform_symmetric(8, 0.03f);
    for (int iter = 0; iter < 2000; ++iter) {
        // stay strictly inside the representable range
        const float x = static_cast<float>(rng.uniform(-126.0, 126.0)) * qp.delta;
        const Tensor t({1}, {x});
        const Tensor back = uniform_dequantize(uniform_quantize(t, qp), qp);
        CHECK(std::fabs(back[0] - x) <= qp.delta / 2.0f + 1e-7f);
    }
}

TEST_CASE("uniform_quantize is monotone in x") {
    Rng rng(44);
    const QuantParams qp = QuantParams::uniform_symmetric(4, 0.37f);
    float prev_x = -10.0f;
    int32_t prev_q = uniform_quantize(Tensor({1}, {prev_x}), qp).data[0];
    for (int i = 0; i < 500; ++i) {
        const float x = prev_x + static_cast<float>(rng.uniform(0.0, 0.1));
        const int32_t q = uniform_quantize(Tensor({1}, {x}), qp).data[0];
        CHECK(q >= prev_q);
        prev_x = x;
        prev_q = q;
    }
}

TEST_CASE("scaling covariance: same codes for (x, delta) and (kx, k delta)") {
    Rng rng(45);
    for (int iter = 0; iter < 500; ++iter) {
        const float delta = static_cast<float>(std::exp(rng.uniform(-4.0, 1.0)));
        // x placed away from rounding ties so float arithmetic cannot flip codes
        const int32_t c = static_cast<int32_t>(rng.next_below(17)) - 8;
        const float frac = static_cast<float>(rng.uniform(0.05, 0.45));
        const float x = delta * (static_cast<float>(c) + frac);
        const QuantParams qa = QuantParams::uniform_symmetric(4, delta);
        for (float k : {0.125f, 0.5f, 2.0f, 256.0f, 3.7f, 0.9f}) {
            const QuantParams qb = QuantParams::uniform_symmetric(4, k * delta);
            const int32_t ca = uniform_quantize(Tensor({1}, {x}), qa).data[0];
            const int32_t cb = uniform_quantize(Tensor({1}, {k * x}), qb).data[0];
            CHECK(ca == cb);
        }
    }
}

TEST_CASE("minmax weight calibration") {
    SUBCASE("full [-1,1] range at 8 bits") {
        const Tensor w({4}, {-1.0f, 0.3f, 1.0f, 0.0f});
        const QuantParams qp = minmax_calibrate_weights(w, 8);
        CHECK(qp.scheme == QuantScheme::kUniformSymmetric);
        CHECK(qp.delta == doctest::Approx(1.0 / 127.0).epsilon(1e-7));
        CHECK(qp.alpha == -128);
        CHECK(qp.beta == 127);
    }
    SUBCASE("all-zero weights fall back to the epsilon delta") {
        const Tensor w({8});
        const QuantParams qp = minmax_calibrate_weights(w, 8);
        CHECK(qp.delta == kDegenerateDelta);
        const CodeTensor q = uniform_quantize(w, qp);
        for (int32_t c : q.data) {
            CHECK(c == 0);
        }
    }
    SUBCASE("asymmetric-valued tensor still calibrates symmetric") {
        const Tensor w({2}, {-0.5f, 0.25f});
        const QuantParams qp = minmax_calibrate_weights(w, 4);
        CHECK(qp.delta == doctest::Approx(0.5 / 7.0).epsilon(1e-7));
    }
}

TEST_CASE("activation minmax calibration") {
    SUBCASE("range [0, 2.55] at 8 bits") {
        ActivationStats st;
        st.observe(Tensor({2}, {0.0f, 2.55f}));
        const QuantParams qp = st.finalize(8);
        CHECK(qp.scheme == QuantScheme::kUniformAsymmetric);
        CHECK(qp.delta == doctest::Approx(0.01).epsilon(1e-6));
        CHECK(qp.zero_point == -128);
    }
    SUBCASE("constant-zero stream quantizes exactly") {
        ActivationStats st;
        st.observe(Tensor({4}));
        const QuantParams qp = st.finalize(8);
        const Tensor y = fake_quant(Tensor({4}), qp);
        for (int64_t i = 0; i < 4; ++i) {
            CHECK(y[i] == 0.0f);
        }
    }
    SUBCASE("symmetric stream keeps zero exactly representable") {
        ActivationStats st;
        st.observe(Tensor({2}, {-1.0f, 1.0f}));
        const QuantParams qp = st.finalize(8);
        const Tensor y = fake_quant(Tensor({1}, {0.0f}), qp);
        CHECK(y[0] == 0.0f);
    }
    SUBCASE("positive-only stream still represents zero") {
        ActivationStats st;
        st.observe(Tensor({2}, {0.5f, 2.0f}));
        const QuantParams qp = st.finalize(8);
        const Tensor y = fake_quant(Tensor({1}, {0.0f}), qp);
        CHECK(y[0] == 0.0f);
    }
    SUBCASE("finalize before any observation throws") {
        ActivationStats st;
        CHECK_THROWS_AS(st.finalize(8), std::logic_error);
    }
}

TEST_CASE("log2 quantizer closed forms") {
    const QuantParams qp = QuantParams::log2(4, 1.0f);
    const Tensor x({3}, {1.0f, 0.25f, 0.0f});
    const CodeTensor q = log2_quantize(x, qp);
    CHECK(q.data[0] == 0);  // x = s -> code 0
    CHECK(q.data[1] == 2);  // s/4 -> code 2
    CHECK(q.data[2] == 15); // zero -> max code

    const Tensor back = log2_dequantize(q, qp);
    CHECK(back[0] == 1.0f);
    CHECK(back[1] == 0.25f);

    CHECK_THROWS_AS(log2_quantize(Tensor({1}, {-0.1f}), qp), std::invalid_argument);
    CodeTensor bad;
    bad.shape = {1};
    bad.data = {16};
    CHECK_THROWS_AS(log2_dequantize(bad, qp), DataError);
}

TEST_CASE("log2 zero-at-max dequantize flag") {
    const QuantParams qp = QuantParams::log2(4, 1.0f);
    CodeTensor q;
    q.shape = {1};
    q.data = {15};
    CHECK(log2_dequantize(q, qp, false)[0] == doctest::Approx(std::exp2(-15.0)));
    CHECK(log2_dequantize(q, qp, true)[0] == 0.0f);
}

TEST_CASE("log2 code idempotence over all codes") {
    // For 8 bits the scale must keep s * 2^-255 representable in f32.
    for (const auto& [bits, scale] : {std::pair<int, float>{3, 1.0f}, {4, 1.0f}, {8, 1.29807421463370316e+33f}}) {
        const QuantParams qp = QuantParams::log2(bits, scale); // 2^110 for 8 bits
        for (int32_t code = 0; code <= qp.beta; ++code) {
            CodeTensor q;
            q.shape = {1};
            q.data = {code};
            const Tensor v = log2_dequantize(q, qp);
            REQUIRE(v[0] > 0.0f);
            const CodeTensor q2 = log2_quantize(v, qp);
            REQUIRE(q2.data[0] == code);
        }
    }
}

TEST_CASE("fake_quant fixed points and idempotence") {
    const QuantParams qp = QuantParams::uniform_symmetric(4, 0.5f);
    SUBCASE("grid-aligned values are fixed points") {
        for (int32_t c = qp.alpha; c <= qp.beta; ++c) {
            const float x = 0.5f * static_cast<float>(c);
            CHECK(fake_quant(Tensor({1}, {x}), qp)[0] == x);
        }
    }
    SUBCASE("idempotence and error bound on random inputs") {
        Rng rng(46);
        for (int iter = 0; iter < 2000; ++iter) {
            const float x = static_cast<float>(rng.uniform(-6.0, 6.0));
            const Tensor t({1}, {x});
            const Tensor once = fake_quant(t, qp);
            const Tensor twice = fake_quant(once, qp);
            CHECK(once[0] == twice[0]);
            const float clipped = std::clamp(x, qp.delta * qp.alpha, qp.delta * qp.beta);
            CHECK(std::fabs(once[0] - clipped) <= qp.delta / 2.0f + 1e-6f);
        }
    }
    SUBCASE("log2 fake_quant is idempotent") {
        Rng rng(47);
        const QuantParams lq = QuantParams::log2(8, 1.0f);
        for (int iter = 0; iter < 500; ++iter) {
            const float x = static_cast<float>(rng.uniform(0.0, 1.0));
            const Tensor once = fake_quant(Tensor({1}, {x}), lq);
            CHECK(fake_quant(once, lq)[0] == once[0]);
        }
    }
}

TEST_CASE("QuantParams invariants are enforced") {
    CHECK_THROWS_AS(QuantParams::uniform_symmetric(8, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(QuantParams::uniform_symmetric(8, -1.0f), std::invalid_argument);
    CHECK_THROWS_AS(QuantParams::uniform_symmetric(1, 0.5f), std::invalid_argument);
    CHECK_THROWS_AS(QuantParams::uniform_asymmetric(8, 0.1f, 200), std::invalid_argument);
    QuantParams qp = QuantParams::uniform_symmetric(8, 0.1f);
    qp.beta = 300;
    CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
}
