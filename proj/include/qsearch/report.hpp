#pragma once

#include <string>
#include <vector>

#include "qsearch/data.hpp"
#include "qsearch/vit.hpp"

namespace qsearch {

// Fraction of images where both models produce the same argmax class; the
// label-free fidelity metric standing in for accuracy.
double top1_agreement(const Model& a, const Model& b, const Dataset& ds, int64_t batch_size = 32);

struct LayerHistogram {
    std::string layer;
    std::vector<double> bin_lo;
    std::vector<double> bin_hi;
    std::vector<int64_t> fp_count;    // full-precision weights
    std::vector<int64_t> quant_count; // dequantized fake-quant weights
};

// Per-layer weight histograms over a shared range covering both the fp and
// the dequantized values; counts in each column sum to the tensor size.
std::vector<LayerHistogram> weight_histograms(const Model& m, int bins);

void write_histogram_csv(const LayerHistogram& h, const std::string& path, const std::string& manifest_hash);

// Block-averaged post-softmax attention over the whole dataset -> [T, T].
Tensor averaged_attention(const Model& m, const Dataset& ds, int64_t batch_size = 32);

// 8-bit binary PGM (P5), values scaled by the map maximum. A PGM comment
// carries the manifest hash.
void write_pgm(const Tensor& map2d, const std::string& path, const std::string& manifest_hash);

} // namespace qsearch
