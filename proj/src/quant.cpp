#include "qsearch/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qsearch/errors.hpp"

namespace qsearch {

namespace {

void check_bits(int bits) {
    if (bits < 2 || bits > 16) {
        throw std::invalid_argument("quant: bits must be in [2, 16]");
    }
}

using detail::clip_code;

} // namespace

QuantParams QuantParams::uniform_symmetric(int bits, float delta) {
    QuantParams qp;
    qp.scheme = QuantScheme::kUniformSymmetric;
    qp.bits = bits;
    qp.delta = delta;
    qp.zero_point = 0;
    qp.alpha = -(1 << (bits - 1));
    qp.beta = (1 << (bits - 1)) - 1;
    qp.validate();
    return qp;
}

QuantParams QuantParams::uniform_asymmetric(int bits, float delta, int32_t zero_point) {
    QuantParams qp;
    qp.scheme = QuantScheme::kUniformAsymmetric;
    qp.bits = bits;
    qp.delta = delta;
    qp.zero_point = zero_point;
    qp.alpha = -(1 << (bits - 1));
    qp.beta = (1 << (bits - 1)) - 1;
    qp.validate();
    return qp;
}

QuantParams QuantParams::log2(int bits, float scale) {
    QuantParams qp;
    qp.scheme = QuantScheme::kLog2;
    qp.bits = bits;
    qp.delta = scale;
    qp.zero_point = 0;
    qp.alpha = 0;
    qp.beta = (1 << bits) - 1;
    qp.validate();
    return qp;
}

void QuantParams::validate() const {
    check_bits(bits);
    if (!(delta > 0.0f) || !std::isfinite(delta)) {
        throw std::invalid_argument("quant: delta must be a positive finite real");
    }
    if (alpha >= beta) {
        throw std::invalid_argument("quant: alpha must be below beta");
    }
    switch (scheme) {
    case QuantScheme::kUniformSymmetric:
    case QuantScheme::kUniformAsymmetric:
        if (alpha != -(1 << (bits - 1)) || beta != (1 << (bits - 1)) - 1) {
            throw std::invalid_argument("quant: uniform clip bounds inconsistent with bits");
        }
        if (scheme == QuantScheme::kUniformAsymmetric && (zero_point < alpha || zero_point > beta)) {
            throw std::invalid_argument("quant: zero_point outside [alpha, beta]");
        }
        break;
    case QuantScheme::kLog2:
        if (alpha != 0 || beta != (1 << bits) - 1) {
            throw std::invalid_argument("quant: log2 clip bounds inconsistent with bits");
        }
        break;
    }
}

CodeTensor uniform_quantize(const Tensor& x, const QuantParams& qp) {
    if (qp.scheme == QuantScheme::kLog2) {
        throw std::invalid_argument("uniform_quantize: log2 params");
    }
    qp.validate();
    const float zp = static_cast<float>(qp.zero_point);
    CodeTensor out;
    out.shape = x.shape();
    out.data.resize(static_cast<size_t>(x.numel()));
    const float* px = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        out.data[static_cast<size_t>(i)] = clip_code(round_half_even(px[i] / qp.delta + zp), qp.alpha, qp.beta);
    }
    return out;
}

Tensor uniform_dequantize(const CodeTensor& q, const QuantParams& qp) {
    if (qp.scheme == QuantScheme::kLog2) {
        throw std::invalid_argument("uniform_dequantize: log2 params");
    }
    qp.validate();
    Tensor out(q.shape);
    float* po = out.data();
    for (size_t i = 0; i < q.data.size(); ++i) {
        const int32_t code = q.data[i];
        if (code < qp.alpha || code > qp.beta) {
            throw DataError("uniform_dequantize: code out of range");
        }
        po[i] = qp.delta * static_cast<float>(code - qp.zero_point);
    }
    return out;
}

CodeTensor log2_quantize(const Tensor& x, const QuantParams& qp) {
    if (qp.scheme != QuantScheme::kLog2) {
        throw std::invalid_argument("log2_quantize: expects log2 params");
    }
    qp.validate();
    CodeTensor out;
    out.shape = x.shape();
    out.data.resize(static_cast<size_t>(x.numel()));
    const float* px = x.data();
    const double s = static_cast<double>(qp.delta);
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = px[i];
        if (v < 0.0f) {
            throw std::invalid_argument("log2_quantize: negative input");
        }
        if (v == 0.0f) {
            out.data[static_cast<size_t>(i)] = qp.beta;
            continue;
        }
        const double code = -std::log2(static_cast<double>(v) / s);
        out.data[static_cast<size_t>(i)] = clip_code(round_half_even(static_cast<float>(code)), qp.alpha, qp.beta);
    }
    return out;
}

Tensor log2_dequantize(const CodeTensor& q, const QuantParams& qp, bool zero_at_max) {
    if (qp.scheme != QuantScheme::kLog2) {
        throw std::invalid_argument("log2_dequantize: expects log2 params");
    }
    qp.validate();
    Tensor out(q.shape);
    float* po = out.data();
    const double s = static_cast<double>(qp.delta);
    for (size_t i = 0; i < q.data.size(); ++i) {
        const int32_t code = q.data[i];
        if (code < qp.alpha || code > qp.beta) {
            throw DataError("log2_dequantize: code out of range");
        }
        if (zero_at_max && code == qp.beta) {
            po[i] = 0.0f;
        } else {
            po[i] = static_cast<float>(s * std::exp2(static_cast<double>(-code)));
        }
    }
    return out;
}

float fake_quant_value(float x, const QuantParams& qp) {
    if (qp.scheme == QuantScheme::kLog2) {
        if (x < 0.0f) {
            throw std::invalid_argument("fake_quant: negative input to log2 quantizer");
        }
        const double s = static_cast<double>(qp.delta);
        int32_t code;
        if (x == 0.0f) {
            code = qp.beta;
        } else {
            const double c = -std::log2(static_cast<double>(x) / s);
            code = clip_code(round_half_even(static_cast<float>(c)), qp.alpha, qp.beta);
        }
        return static_cast<float>(s * std::exp2(static_cast<double>(-code)));
    }
    return fake_quant_uniform_value(x, qp);
}

Tensor fake_quant(const Tensor& x, const QuantParams& qp) {
    qp.validate();
    Tensor out(x.shape());
    const float* px = x.data();
    float* po = out.data();
    const int64_t n = x.numel();
    if (qp.scheme == QuantScheme::kLog2) {
        for (int64_t i = 0; i < n; ++i) {
            po[i] = fake_quant_value(px[i], qp);
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            po[i] = fake_quant_uniform_value(px[i], qp);
        }
    }
    return out;
}

QuantParams minmax_calibrate_weights(const Tensor& w, int bits) {
    check_bits(bits);
    if (w.numel() == 0) {
        throw std::invalid_argument("minmax_calibrate_weights: empty tensor");
    }
    float amax = 0.0f;
    const float* pw = w.data();
    for (int64_t i = 0; i < w.numel(); ++i) {
        amax = std::max(amax, std::fabs(pw[i]));
    }
    const float levels = static_cast<float>((1 << (bits - 1)) - 1);
    const float delta = amax > 0.0f ? amax / levels : kDegenerateDelta;
    return QuantParams::uniform_symmetric(bits, delta);
}

void ActivationStats::observe(const Tensor& x) {
    const float* px = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        if (!seen_) {
            min_ = max_ = px[i];
            seen_ = true;
        } else {
            min_ = std::min(min_, px[i]);
            max_ = std::max(max_, px[i]);
        }
    }
}

QuantParams ActivationStats::finalize(int bits) const {
    check_bits(bits);
    if (!seen_) {
        throw std::logic_error("ActivationStats: finalize before any observation");
    }
    // Widen to include zero so that real 0 is exactly representable.
    const float lo = std::min(min_, 0.0f);
    const float hi = std::max(max_, 0.0f);
    const float levels = static_cast<float>((1 << bits) - 1);
    float delta = (hi - lo) / levels;
    if (!(delta > 0.0f)) {
        delta = kDegenerateDelta;
    }
    const int32_t alpha = -(1 << (bits - 1));
    const int32_t beta = (1 << (bits - 1)) - 1;
    const float z = static_cast<float>(alpha) - lo / delta;
    const int32_t zero_point = clip_code(round_half_even(z), alpha, beta);
    return QuantParams::uniform_asymmetric(bits, delta, zero_point);
}

} // namespace qsearch
