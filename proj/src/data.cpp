#include "qsearch/data.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "qsearch/errors.hpp"
#include "qsearch/rng.hpp"

namespace qsearch {

namespace {

constexpr char kMagic[4] = {'Q', 'D', 'A', 'T'};
constexpr uint32_t kVersion = 1;

// Stream tags for deriving independent substreams from the dataset seed.
enum : uint64_t { kTagClassMean = 1, kTagImageNoise = 2, kTagShuffle = 3 };

void write_u32(std::ostream& os, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(std::string("raw tensor file: truncated while reading ") + what);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

Tensor Dataset::gather(const std::vector<int64_t>& idx) const {
    if (images.ndim() != 4) {
        throw std::invalid_argument("dataset: images must be [N,C,H,W]");
    }
    const int64_t n = images.dim(0);
    const int64_t stride = images.numel() / n;
    Tensor out({static_cast<int64_t>(idx.size()), images.dim(1), images.dim(2), images.dim(3)});
    float* po = out.data();
    const float* pi = images.data();
    for (size_t r = 0; r < idx.size(); ++r) {
        const int64_t i = idx[r];
        if (i < 0 || i >= n) {
            throw std::invalid_argument("dataset: index out of range");
        }
        std::memcpy(po + static_cast<int64_t>(r) * stride, pi + i * stride, static_cast<size_t>(stride) * sizeof(float));
    }
    return out;
}

std::vector<std::vector<int64_t>> make_batches(int64_t n, int64_t batch_size, uint64_t seed) {
    if (batch_size < 1) {
        throw std::invalid_argument("make_batches: batch_size must be >= 1");
    }
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        order[static_cast<size_t>(i)] = i;
    }
    Rng rng = Rng::stream(seed, {kTagShuffle});
    for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    std::vector<std::vector<int64_t>> out;
    for (int64_t lo = 0; lo < n; lo += batch_size) {
        const int64_t hi = std::min(n, lo + batch_size);
        out.emplace_back(order.begin() + lo, order.begin() + hi);
    }
    return out;
}

void save_raw(const Tensor& images, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("raw tensor file: cannot open for writing: " + path);
    }
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(images.ndim()));
    for (int64_t i = 0; i < images.ndim(); ++i) {
        write_u32(os, static_cast<uint32_t>(images.dim(i)));
    }
    os.write(reinterpret_cast<const char*>(images.data()), images.numel() * static_cast<int64_t>(sizeof(float)));
    if (!os) {
        throw DataError("raw tensor file: write failed: " + path);
    }
}

Dataset load_raw(const std::string& path, const std::vector<int64_t>& expected_shape) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("raw tensor file: cannot open: " + path);
    }
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("raw tensor file: bad magic (expected QDAT): " + path);
    }
    const uint32_t version = read_u32(is, "version");
    if (version != kVersion) {
        throw DataError("raw tensor file: unsupported version " + std::to_string(version));
    }
    const uint32_t ndim = read_u32(is, "ndim");
    if (ndim != 4) {
        throw DataError("raw tensor file: expected 4 dims [N,C,H,W], got " + std::to_string(ndim));
    }
    std::vector<int64_t> shape(ndim);
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        shape[i] = read_u32(is, "dims");
        numel *= shape[i];
    }
    if (!expected_shape.empty() && shape != expected_shape) {
        throw DataError("raw tensor file: header shape does not match expectation");
    }
    std::vector<float> data(static_cast<size_t>(numel));
    const int64_t want = numel * static_cast<int64_t>(sizeof(float));
    if (!is.read(reinterpret_cast<char*>(data.data()), want)) {
        const int64_t got = static_cast<int64_t>(is.gcount());
        throw DataError("raw tensor file: payload truncated, expected " + std::to_string(want) + " bytes, got " +
                        std::to_string(got));
    }
    char extra;
    if (is.read(&extra, 1)) {
        throw DataError("raw tensor file: trailing bytes after payload");
    }
    Dataset ds;
    ds.images = Tensor(std::move(shape), std::move(data));
    if (!ds.images.all_finite()) {
        throw NumericError("raw tensor file: non-finite values in payload");
    }
    ds.source = "file:" + path;
    return ds;
}

Dataset synth_gaussian(int64_t num_classes, int64_t total, uint64_t seed, const ImageShape& img) {
    if (num_classes < 1 || total < 0) {
        throw std::invalid_argument("synth_gaussian: bad sizes");
    }
    const int64_t c = img.channels;
    const int64_t h = img.height;
    const int64_t w = img.width;
    const int64_t pixels = c * h * w;

    // Per-class mean: 4x4 noise grid per channel, bilinearly upsampled.
    const int64_t grid = 4;
    std::vector<std::vector<float>> means(static_cast<size_t>(num_classes));
    for (int64_t cls = 0; cls < num_classes; ++cls) {
        Rng rng = Rng::stream(seed, {kTagClassMean, static_cast<uint64_t>(cls)});
        std::vector<float> coarse(static_cast<size_t>(c * grid * grid));
        for (auto& v : coarse) {
            v = static_cast<float>(rng.normal());
        }
        std::vector<float> mean(static_cast<size_t>(pixels));
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t y = 0; y < h; ++y) {
                const float gy = static_cast<float>(y) * static_cast<float>(grid - 1) / static_cast<float>(h - 1);
                const int64_t y0 = static_cast<int64_t>(gy);
                const int64_t y1 = std::min(y0 + 1, grid - 1);
                const float fy = gy - static_cast<float>(y0);
                for (int64_t x = 0; x < w; ++x) {
                    const float gx = static_cast<float>(x) * static_cast<float>(grid - 1) / static_cast<float>(w - 1);
                    const int64_t x0 = static_cast<int64_t>(gx);
                    const int64_t x1 = std::min(x0 + 1, grid - 1);
                    const float fx = gx - static_cast<float>(x0);
                    const float* g = coarse.data() + ch * grid * grid;
                    const float v = g[y0 * grid + x0] * (1 - fy) * (1 - fx) + g[y0 * grid + x1] * (1 - fy) * fx +
                                    g[y1 * grid + x0] * fy * (1 - fx) + g[y1 * grid + x1] * fy * fx;
                    mean[static_cast<size_t>(ch * h * w + y * w + x)] = v;
                }
            }
        }
        means[static_cast<size_t>(cls)] = std::move(mean);
    }

    Tensor images({total, c, h, w});
    float* po = images.data();
    for (int64_t i = 0; i < total; ++i) {
        const int64_t cls = i % num_classes;
        Rng rng = Rng::stream(seed, {kTagImageNoise, static_cast<uint64_t>(i)});
        const float* mean = means[static_cast<size_t>(cls)].data();
        float* row = po + i * pixels;
        for (int64_t p = 0; p < pixels; ++p) {
            row[p] = mean[p] + 0.5f * static_cast<float>(rng.normal());
        }
    }
    Dataset ds;
    ds.images = std::move(images);
    ds.source = "synth";
    ds.seed = seed;
    return ds;
}

Dataset synth_gaussian_classes(int64_t num_classes, int64_t per_class, uint64_t seed, const ImageShape& img) {
    return synth_gaussian(num_classes, num_classes * per_class, seed, img);
}

} // namespace qsearch
