#include <cmath>
#include <vector>

#include "doctest.h"

#include "qsearch/rng.hpp"
#include "qsearch/tensor.hpp"

using namespace qsearch;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = scale * static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    return t;
}

// Naive scalar oracle: triple loop, double accumulation.
Tensor oracle_matmul(const Tensor& a, const Tensor& b) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) {
                acc += static_cast<double>(a[i * k + kk]) * b[kk * n + j];
            }
            out[i * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

void check_close(const Tensor& got, const Tensor& want, double rel) {
    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) {
        const double scale = std::max(1.0, std::fabs(static_cast<double>(want[i])));
        CHECK(std::fabs(static_cast<double>(got[i]) - want[i]) <= rel * scale);
    }
}

} // namespace

TEST_CASE("matmul identity is exact") {
    Rng rng(1);
    const Tensor a = random_tensor({3, 3}, rng);
    const Tensor i3 = Tensor::identity(3);
    const Tensor left = matmul(i3, a);
    const Tensor right = matmul(a, i3);
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(left[i] == a[i]);
        CHECK(right[i] == a[i]);
    }
}

TEST_CASE("matmul hand arithmetic") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {1, 1});
    const Tensor c = matmul(a, b);
    CHECK(c.shape() == std::vector<int64_t>{2, 1});
    CHECK(c[0] == 3.0f);
    CHECK(c[1] == 7.0f);
}

TEST_CASE("matmul dimension mismatch throws") {
    const Tensor a({2, 3});
    const Tensor b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(matmul(a, Tensor({3})), std::invalid_argument);
}

TEST_CASE("matmul matches naive oracle on random instances") {
    Rng rng(2);
    for (int iter = 0; iter < 20; ++iter) {
        const int64_t m = 1 + static_cast<int64_t>(rng.next_below(16));
        const int64_t k = 1 + static_cast<int64_t>(rng.next_below(16));
        const int64_t n = 1 + static_cast<int64_t>(rng.next_below(16));
        const Tensor a = random_tensor({m, k}, rng);
        const Tensor b = random_tensor({k, n}, rng);
        check_close(matmul(a, b), oracle_matmul(a, b), 1e-5);
    }
}

TEST_CASE("layernorm constant row maps to zero") {
    const Tensor x({1, 4}, {5, 5, 5, 5});
    const Tensor gain = Tensor::full({4}, 1.0f);
    const Tensor bias({4});
    const Tensor y = layernorm(x, gain, bias, 1e-5f);
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(y[i] == 0.0f);
    }
}

TEST_CASE("layernorm hand arithmetic") {
    const Tensor x({1, 2}, {1, 3});
    const Tensor y = layernorm(x, Tensor::full({2}, 1.0f), Tensor({2}), 1e-12f);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layernorm with zero gain returns bias") {
    Rng rng(3);
    const Tensor x = random_tensor({3, 5}, rng, 4.0f);
    const Tensor bias({5}, {1, 2, 3, 4, 5});
    const Tensor y = layernorm(x, Tensor({5}), bias, 1e-5f);
    for (int64_t r = 0; r < 3; ++r) {
        for (int64_t j = 0; j < 5; ++j) {
            CHECK(y[r * 5 + j] == bias[j]);
        }
    }
}

TEST_CASE("layernorm normalizes rows") {
    Rng rng(4);
    const Tensor x = random_tensor({8, 16}, rng, 10.0f);
    const Tensor y = layernorm(x, Tensor::full({16}, 1.0f), Tensor({16}), 1e-6f);
    for (int64_t r = 0; r < 8; ++r) {
        double mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < 16; ++j) {
            mean += y[r * 16 + j];
        }
        mean /= 16.0;
        for (int64_t j = 0; j < 16; ++j) {
            var += (y[r * 16 + j] - mean) * (y[r * 16 + j] - mean);
        }
        var /= 16.0;
        CHECK(std::fabs(mean) < 1e-5);
        CHECK(std::fabs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("softmax closed forms") {
    const Tensor a({1, 2}, {0, 0});
    const Tensor sa = softmax(a, 1);
    CHECK(sa[0] == doctest::Approx(0.5));
    CHECK(sa[1] == doctest::Approx(0.5));

    const Tensor big({1, 2}, {1000, 1000});
    const Tensor sb = softmax(big, 1);
    CHECK(sb.all_finite());
    CHECK(sb[0] == doctest::Approx(0.5));

    const Tensor c({1, 2}, {0.0f, std::log(3.0f)});
    const Tensor sc = softmax(c, 1);
    CHECK(sc[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(sc[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
    Rng rng(5);
    const Tensor x = random_tensor({16, 9}, rng, 1e4f);
    const Tensor s = softmax(x, 1);
    for (int64_t r = 0; r < 16; ++r) {
        double sum = 0.0;
        for (int64_t j = 0; j < 9; ++j) {
            sum += s[r * 9 + j];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("softmax along axis 0 matches per-column scalar computation") {
    Rng rng(6);
    const Tensor x = random_tensor({4, 3}, rng, 2.0f);
    const Tensor s = softmax(x, 0);
    for (int64_t j = 0; j < 3; ++j) {
        double mx = -1e300;
        for (int64_t i = 0; i < 4; ++i) {
            mx = std::max(mx, static_cast<double>(x[i * 3 + j]));
        }
        double denom = 0.0;
        for (int64_t i = 0; i < 4; ++i) {
            denom += std::exp(x[i * 3 + j] - mx);
        }
        for (int64_t i = 0; i < 4; ++i) {
            CHECK(s[i * 3 + j] == doctest::Approx(std::exp(x[i * 3 + j] - mx) / denom).epsilon(1e-5));
        }
    }
}

TEST_CASE("gelu reference points") {
    const Tensor x({3}, {0.0f, 1.0f, 10.0f});
    const Tensor y = gelu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == doctest::Approx(0.8413447).epsilon(1e-4)); // exact-erf variant
    CHECK(y[2] == doctest::Approx(10.0).epsilon(1e-4));      // asymptote
}

TEST_CASE("l2_normalize") {
    const Tensor x({3, 2}, {3, 4, 0.6f, 0.8f, 0, 0});
    const Tensor y = l2_normalize(x);
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(y[2] == doctest::Approx(0.6).epsilon(1e-6)); // unit row unchanged
    CHECK(y[3] == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(y[4] == 0.0f); // zero row stays zero
    CHECK(y[5] == 0.0f);
}

TEST_CASE("argmax_rows") {
    const Tensor a({1, 3}, {0, 1, 0});
    CHECK(argmax_rows(a) == std::vector<int64_t>{1});
    const Tensor tie({1, 2}, {2, 2});
    CHECK(argmax_rows(tie) == std::vector<int64_t>{0});

    Rng rng(7);
    const Tensor x = random_tensor({5, 7}, rng);
    const auto got = argmax_rows(x);
    for (int64_t r = 0; r < 5; ++r) {
        int64_t best = 0;
        for (int64_t j = 1; j < 7; ++j) {
            if (x[r * 7 + j] > x[r * 7 + best]) {
                best = j;
            }
        }
        CHECK(got[static_cast<size_t>(r)] == best);
    }
}

TEST_CASE("elementwise ops match scalar oracles") {
    Rng rng(8);
    const Tensor a = random_tensor({4, 6}, rng);
    const Tensor b = random_tensor({4, 6}, rng);
    const Tensor bias = random_tensor({6}, rng);
    const Tensor s = add(a, b);
    const Tensor p = mul(a, b);
    const Tensor ab = add_bias(a, bias);
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(s[i] == a[i] + b[i]);
        CHECK(p[i] == a[i] * b[i]);
        CHECK(ab[i] == a[i] + bias[i % 6]);
    }
    CHECK_THROWS_AS(add(a, Tensor({3, 6})), std::invalid_argument);
}

TEST_CASE("transpose, reshape, slice") {
    Rng rng(9);
    const Tensor a = random_tensor({3, 5}, rng);
    const Tensor at = transpose(a);
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < 5; ++j) {
            CHECK(at[j * 3 + i] == a[i * 5 + j]);
        }
    }
    const Tensor r = reshape(a, {5, 3});
    CHECK(r.shape() == std::vector<int64_t>{5, 3});
    CHECK(r[7] == a[7]);
    CHECK_THROWS_AS(reshape(a, {4, 4}), std::invalid_argument);

    const Tensor sl = slice_rows(a, 1, 3);
    CHECK(sl.shape() == std::vector<int64_t>{2, 5});
    for (int64_t j = 0; j < 10; ++j) {
        CHECK(sl[j] == a[5 + j]);
    }
    CHECK_THROWS_AS(slice_rows(a, 2, 4), std::invalid_argument);
}

TEST_CASE("ops keep finite inputs finite") {
    Rng rng(10);
    for (int iter = 0; iter < 5; ++iter) {
        const Tensor a = random_tensor({6, 8}, rng, 100.0f);
        const Tensor b = random_tensor({8, 4}, rng, 100.0f);
        CHECK(matmul(a, b).all_finite());
        CHECK(softmax(a, 1).all_finite());
        CHECK(gelu(a).all_finite());
        CHECK(l2_normalize(a).all_finite());
        CHECK(layernorm(a, Tensor::full({8}, 1.0f), Tensor({8}), 1e-5f).all_finite());
    }
}

TEST_CASE("tensor shape/data invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), std::invalid_argument);
    const Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 0.0f);
    CHECK_THROWS_AS(t.at({2, 0}), std::invalid_argument);
}
