#include "qsearch/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qsearch {

namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) {
            throw std::invalid_argument("tensor: negative dimension");
        }
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw std::invalid_argument("tensor: shape/data size mismatch");
    }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) {
        v = value;
    }
    return t;
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) {
        t.data_[static_cast<size_t>(i * n + i)] = 1.0f;
    }
    return t;
}

int64_t Tensor::dim(int64_t i) const {
    if (i < 0 || i >= ndim()) {
        throw std::invalid_argument("tensor: dim index out of range");
    }
    return shape_[static_cast<size_t>(i)];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> idx) const {
    if (static_cast<int64_t>(idx.size()) != ndim()) {
        throw std::invalid_argument("tensor: index rank mismatch");
    }
    int64_t flat = 0;
    int64_t axis = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[static_cast<size_t>(axis)]) {
            throw std::invalid_argument("tensor: index out of range");
        }
        flat = flat * shape_[static_cast<size_t>(axis)] + i;
        ++axis;
    }
    return flat;
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(flat_index(idx))];
}

float& Tensor::at(std::initializer_list<int64_t> idx) {
    return data_[static_cast<size_t>(flat_index(idx))];
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        os << (i ? ", " : "") << shape_[i];
    }
    os << "]";
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw std::invalid_argument("matmul: expects 2-D operands, got " + a.shape_str() + " x " + b.shape_str());
    }
    const int64_t m = a.dim(0);
    const int64_t k = a.dim(1);
    const int64_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
    }
    Tensor out({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < m; ++i) {
        float* orow = po + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const float av = pa[i * k + kk];
            const float* brow = pb + kk * n;
            for (int64_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    if (x.ndim() < 1) {
        throw std::invalid_argument("layernorm: rank-0 input");
    }
    if (!(eps > 0.0f)) {
        throw std::invalid_argument("layernorm: eps must be positive");
    }
    const int64_t d = x.dim(x.ndim() - 1);
    if (gain.numel() != d || bias.numel() != d) {
        throw std::invalid_argument("layernorm: gain/bias length mismatch");
    }
    const int64_t rows = x.numel() / d;
    Tensor out(x.shape());
    const float* px = x.data();
    const float* pg = gain.data();
    const float* pb = bias.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = px + r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            mean += row[j];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        float* orow = po + r * d;
        for (int64_t j = 0; j < d; ++j) {
            orow[j] = static_cast<float>((row[j] - mean) * inv) * pg[j] + pb[j];
        }
    }
    return out;
}

Tensor softmax(const Tensor& x, int64_t axis) {
    if (axis < 0) {
        axis += x.ndim();
    }
    if (axis < 0 || axis >= x.ndim()) {
        throw std::invalid_argument("softmax: axis out of range");
    }
    const int64_t n = x.dim(axis);
    int64_t inner = 1;
    for (int64_t i = axis + 1; i < x.ndim(); ++i) {
        inner *= x.dim(i);
    }
    const int64_t outer = x.numel() / (n * inner);
    Tensor out(x.shape());
    const float* px = x.data();
    float* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            float mx = px[base];
            for (int64_t j = 1; j < n; ++j) {
                mx = std::max(mx, px[base + j * inner]);
            }
            double sum = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                const double e = std::exp(static_cast<double>(px[base + j * inner] - mx));
                po[base + j * inner] = static_cast<float>(e);
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int64_t j = 0; j < n; ++j) {
                po[base + j * inner] = static_cast<float>(po[base + j * inner] * inv);
            }
        }
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    const float* px = x.data();
    float* po = out.data();
    const int64_t n = x.numel();
    if constexpr (kGeluVariant == GeluVariant::kErf) {
        for (int64_t i = 0; i < n; ++i) {
            const double v = px[i];
            po[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)));
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            const double v = px[i];
            const double u = 0.7978845608028654 * (v + 0.044715 * v * v * v);
            po[i] = static_cast<float>(0.5 * v * (1.0 + std::tanh(u)));
        }
    }
    return out;
}

Tensor l2_normalize(const Tensor& x) {
    if (x.ndim() != 2) {
        throw std::invalid_argument("l2_normalize: expects [B,D]");
    }
    const int64_t b = x.dim(0);
    const int64_t d = x.dim(1);
    Tensor out(x.shape());
    const float* px = x.data();
    float* po = out.data();
    for (int64_t r = 0; r < b; ++r) {
        const float* row = px + r * d;
        double sq = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            sq += static_cast<double>(row[j]) * row[j];
        }
        const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
        for (int64_t j = 0; j < d; ++j) {
            po[r * d + j] = static_cast<float>(row[j] * inv);
        }
    }
    return out;
}

std::vector<int64_t> argmax_rows(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) < 1) {
        throw std::invalid_argument("argmax_rows: expects [B,D] with D >= 1");
    }
    const int64_t b = x.dim(0);
    const int64_t d = x.dim(1);
    std::vector<int64_t> out(static_cast<size_t>(b));
    const float* px = x.data();
    for (int64_t r = 0; r < b; ++r) {
        const float* row = px + r * d;
        int64_t best = 0;
        for (int64_t j = 1; j < d; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        out[i] = a[i] * b[i];
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.ndim() < 1 || bias.ndim() != 1 || x.dim(x.ndim() - 1) != bias.dim(0)) {
        throw std::invalid_argument("add_bias: last dim must match bias length");
    }
    const int64_t d = bias.dim(0);
    const int64_t rows = x.numel() / d;
    Tensor out(x.shape());
    const float* px = x.data();
    const float* pb = bias.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < d; ++j) {
            po[r * d + j] = px[r * d + j] + pb[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) {
        throw std::invalid_argument("transpose: expects 2-D");
    }
    const int64_t m = x.dim(0);
    const int64_t n = x.dim(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            out[j * m + i] = x[i * n + j];
        }
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
    return Tensor(std::move(shape), x.vec());
}

Tensor slice_rows(const Tensor& x, int64_t lo, int64_t hi) {
    if (x.ndim() < 1 || lo < 0 || hi < lo || hi > x.dim(0)) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    const int64_t stride = x.numel() / x.dim(0);
    std::vector<int64_t> shape = x.shape();
    shape[0] = hi - lo;
    std::vector<float> data(x.vec().begin() + lo * stride, x.vec().begin() + hi * stride);
    return Tensor(std::move(shape), std::move(data));
}

} // namespace qsearch
