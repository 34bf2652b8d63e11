#pragma once

#include <cstdint>
#include <vector>

#include "qsearch/tensor.hpp"

namespace qsearch {

enum class QuantScheme : uint8_t {
    kUniformSymmetric = 0,
    kUniformAsymmetric = 1,
    kLog2 = 2,
};

// Scale used when a weight tensor is identically zero and MinMax calibration
// would otherwise produce delta = 0.
inline constexpr float kDegenerateDelta = 1e-8f;

// One quantizer's state. delta is the step size for the uniform schemes and
// the full-scale reference s for log2. Clip bounds are integer codes:
//   uniform (both):  alpha = -2^(bits-1), beta = 2^(bits-1) - 1
//   log2:            alpha = 0,           beta = 2^bits - 1
struct QuantParams {
    QuantScheme scheme = QuantScheme::kUniformSymmetric;
    int bits = 8;
    float delta = 1.0f;
    int32_t zero_point = 0; // asymmetric only
    int32_t alpha = -128;
    int32_t beta = 127;

    static QuantParams uniform_symmetric(int bits, float delta);
    static QuantParams uniform_asymmetric(int bits, float delta, int32_t zero_point);
    static QuantParams log2(int bits, float scale);

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;

    bool operator==(const QuantParams&) const = default;
};

// Round-half-to-even, the single rounding mode used by every quantizer.
inline float round_half_even(float x) {
    // 1.5 * 2^23; add/subtract forces rounding at ULP=1 for |x| <= 2^22,
    // which covers every code range we use. Larger magnitudes land outside
    // the clip bounds anyway.
    if (x >= 4194304.0f || x <= -4194304.0f) {
        return x;
    }
    const float magic = 12582912.0f;
    const float y = x + magic;
    return y - magic;
}

// Integer codes produced by quantization.
struct CodeTensor {
    std::vector<int64_t> shape;
    std::vector<int32_t> data;
};

namespace detail {
inline int32_t clip_code(float v, int32_t lo, int32_t hi) {
    if (v <= static_cast<float>(lo)) {
        return lo;
    }
    if (v >= static_cast<float>(hi)) {
        return hi;
    }
    return static_cast<int32_t>(v);
}
} // namespace detail

// Scalar quantize-then-dequantize core. Every fake-quant path in the project
// (tensor op, weight caches, the attention inner loop) goes through this one
// function so results are bit-identical regardless of call site. Throws on
// negative input to a log2 quantizer.
float fake_quant_value(float x, const QuantParams& qp);

// The same composition for uniform schemes only, branch-free enough for hot
// loops once the caller has validated the params.
inline float fake_quant_uniform_value(float x, const QuantParams& qp) {
    const int32_t code =
        detail::clip_code(round_half_even(x / qp.delta + static_cast<float>(qp.zero_point)), qp.alpha, qp.beta);
    return qp.delta * static_cast<float>(code - qp.zero_point);
}

// Eq-style uniform quantization: clip(round(x/delta [+ zero_point]), alpha, beta).
CodeTensor uniform_quantize(const Tensor& x, const QuantParams& qp);

// delta * (q [- zero_point]). Throws DataError when a code is out of range.
Tensor uniform_dequantize(const CodeTensor& q, const QuantParams& qp);

// q = clip(round(-log2(x/s)), 0, 2^bits - 1); x = 0 maps to the max code.
// Negative input throws. Internal math is double so the code survives the
// float32 dynamic range wherever s * 2^-code itself does.
CodeTensor log2_quantize(const Tensor& x, const QuantParams& qp);

// s * 2^(-q). With zero_at_max the max code dequantizes to exactly 0
// (off by default; the model always uses the default).
Tensor log2_dequantize(const CodeTensor& q, const QuantParams& qp, bool zero_at_max = false);

// quantize-then-dequantize in one pass; output lies exactly on the grid.
Tensor fake_quant(const Tensor& x, const QuantParams& qp);

// Per-tensor symmetric MinMax: delta = max|w| / (2^(bits-1) - 1), or
// kDegenerateDelta when the tensor is all zeros.
QuantParams minmax_calibrate_weights(const Tensor& w, int bits);

// Running min/max over an activation stream -> uniform-asymmetric params.
// The observed range is widened to include 0 so that real zero is exactly
// representable. Single-writer: observe() is not thread-safe.
class ActivationStats {
public:
    void observe(const Tensor& x);
    bool empty() const { return !seen_; }
    float min() const { return min_; }
    float max() const { return max_; }

    // Throws std::logic_error if nothing was observed.
    QuantParams finalize(int bits) const;

private:
    bool seen_ = false;
    float min_ = 0.0f;
    float max_ = 0.0f;
};

} // namespace qsearch
