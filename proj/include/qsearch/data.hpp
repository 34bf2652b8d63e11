#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsearch/tensor.hpp"

namespace qsearch {

struct ImageShape {
    int64_t channels = 3;
    int64_t height = 32;
    int64_t width = 32;
};

// Calibration/evaluation images plus a frozen batch partition. The partition
// is shuffled exactly once (by its own seed) and never re-sampled, so the
// in-batch negatives of the contrastive loss are stable for a whole run.
// Immutable after construction; safe to share across threads.
struct Dataset {
    Tensor images;      // [N, C, H, W]
    std::string source; // "synth" / "file:<path>"
    uint64_t seed = 0;
    std::vector<std::vector<int64_t>> batches;

    int64_t size() const { return images.ndim() == 4 ? images.dim(0) : 0; }

    // Copy of the rows named by idx, shaped [|idx|, C, H, W].
    Tensor gather(const std::vector<int64_t>& idx) const;
};

// Shuffles indices once by `seed`, then splits into consecutive chunks of
// batch_size. The short final batch is kept (a batch of size 1 contributes
// zero contrastive loss).
std::vector<std::vector<int64_t>> make_batches(int64_t n, int64_t batch_size, uint64_t seed);

// Raw tensor file: magic "QDAT", version u32, ndim u32, dims u32[],
// payload f32 little-endian. expected_shape ({} to skip) is validated
// against the header.
Dataset load_raw(const std::string& path, const std::vector<int64_t>& expected_shape);
void save_raw(const Tensor& images, const std::string& path);

// Class-conditional Gaussian blobs: every class gets a smooth mean pattern
// (low-resolution noise, bilinearly upsampled), each image is its class mean
// plus per-pixel noise. Classes are interleaved (image i has class i % num_classes)
// so truncating to any prefix stays balanced. Deterministic per seed.
Dataset synth_gaussian(int64_t num_classes, int64_t total, uint64_t seed, const ImageShape& img);

// total = num_classes * per_class.
Dataset synth_gaussian_classes(int64_t num_classes, int64_t per_class, uint64_t seed, const ImageShape& img);

} // namespace qsearch
