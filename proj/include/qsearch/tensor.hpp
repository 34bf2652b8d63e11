#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace qsearch {

// Dense row-major float32 tensor, the universal value carrier. Shapes are
// validated at call time, values are immutable once an op has produced them
// (ops allocate fresh results; nothing aliases).
//
// Accumulation policy, fixed for determinism:
//   - matmul accumulates in float (32-bit), inner loop ordered i,k,j;
//   - row reductions (layernorm, softmax, l2_normalize, mean) accumulate
//     in double (64-bit), sequential order.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, float value);
    static Tensor identity(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const;
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Checked multi-index access; convenience for tests and glue code.
    float at(std::initializer_list<int64_t> idx) const;
    float& at(std::initializer_list<int64_t> idx);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    int64_t flat_index(std::initializer_list<int64_t> idx) const;

    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

// GELU variant is a single global compile-time constant so the full-precision
// reference is reproducible. Default is the exact-erf form; define
// QSEARCH_GELU_TANH to build with the tanh approximation instead.
enum class GeluVariant { kErf, kTanh };
#ifdef QSEARCH_GELU_TANH
inline constexpr GeluVariant kGeluVariant = GeluVariant::kTanh;
#else
inline constexpr GeluVariant kGeluVariant = GeluVariant::kErf;
#endif

// a[M,K] x b[K,N] -> [M,N]. Throws std::invalid_argument on rank or inner
// dimension mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Normalizes the last dimension of x to zero mean / unit variance (biased
// variance, eps inside the sqrt), then applies gain and bias of length D.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps);

// Softmax along `axis` with max-subtraction for stability.
Tensor softmax(const Tensor& x, int64_t axis);

Tensor gelu(const Tensor& x);

// Rows of x[B,D] scaled to unit L2 norm; zero rows stay zero.
Tensor l2_normalize(const Tensor& x);

// Index of each row's maximum; ties break to the lowest index.
std::vector<int64_t> argmax_rows(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// x[..., D] + bias[D].
Tensor add_bias(const Tensor& x, const Tensor& bias);

// 2-D transpose.
Tensor transpose(const Tensor& x);

// Same data, new shape; element counts must match.
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);

// Rows [lo, hi) of the first dimension.
Tensor slice_rows(const Tensor& x, int64_t lo, int64_t hi);

} // namespace qsearch
