#include "qsearch/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "qsearch/errors.hpp"

namespace qsearch {

double top1_agreement(const Model& a, const Model& b, const Dataset& ds, int64_t batch_size) {
    if (ds.size() == 0) {
        throw std::invalid_argument("top1_agreement: empty dataset");
    }
    int64_t match = 0;
    for (int64_t lo = 0; lo < ds.size(); lo += batch_size) {
        const int64_t hi = std::min(ds.size(), lo + batch_size);
        std::vector<int64_t> idx;
        idx.reserve(static_cast<size_t>(hi - lo));
        for (int64_t i = lo; i < hi; ++i) {
            idx.push_back(i);
        }
        const Tensor batch = ds.gather(idx);
        const auto pa = argmax_rows(a.forward(batch));
        const auto pb = argmax_rows(b.forward(batch));
        for (size_t i = 0; i < pa.size(); ++i) {
            match += pa[i] == pb[i];
        }
    }
    return static_cast<double>(match) / static_cast<double>(ds.size());
}

std::vector<LayerHistogram> weight_histograms(const Model& m, int bins) {
    if (bins < 1) {
        throw std::invalid_argument("weight_histograms: bins must be >= 1");
    }
    if (!m.calibrated) {
        throw std::invalid_argument("weight_histograms: model must be calibrated");
    }
    std::vector<LayerHistogram> out;
    const auto layers = m.all_weight_layers();
    const auto names = m.weight_layer_names();
    for (size_t li = 0; li < layers.size(); ++li) {
        const Tensor& fp = layers[li]->weight;
        const Tensor& fq = layers[li]->weight_fq;
        float lo = fp[0];
        float hi = fp[0];
        for (int64_t i = 0; i < fp.numel(); ++i) {
            lo = std::min({lo, fp[i], fq[i]});
            hi = std::max({hi, fp[i], fq[i]});
        }
        if (!(hi > lo)) {
            hi = lo + 1e-6f;
        }
        LayerHistogram h;
        h.layer = names[li];
        h.bin_lo.resize(static_cast<size_t>(bins));
        h.bin_hi.resize(static_cast<size_t>(bins));
        h.fp_count.assign(static_cast<size_t>(bins), 0);
        h.quant_count.assign(static_cast<size_t>(bins), 0);
        const double width = (static_cast<double>(hi) - lo) / bins;
        for (int b = 0; b < bins; ++b) {
            h.bin_lo[static_cast<size_t>(b)] = lo + width * b;
            h.bin_hi[static_cast<size_t>(b)] = lo + width * (b + 1);
        }
        auto bucket = [&](float v) {
            int b = static_cast<int>((static_cast<double>(v) - lo) / width);
            return std::clamp(b, 0, bins - 1);
        };
        for (int64_t i = 0; i < fp.numel(); ++i) {
            ++h.fp_count[static_cast<size_t>(bucket(fp[i]))];
            ++h.quant_count[static_cast<size_t>(bucket(fq[i]))];
        }
        out.push_back(std::move(h));
    }
    return out;
}

void write_histogram_csv(const LayerHistogram& h, const std::string& path, const std::string& manifest_hash) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("histogram: cannot open for writing: " + path);
    }
    if (!manifest_hash.empty()) {
        os << "# manifest_hash=" << manifest_hash << "\n";
    }
    os << "bin,bin_lo,bin_hi,fp_count,quant_count\n";
    char buf[64];
    for (size_t b = 0; b < h.bin_lo.size(); ++b) {
        os << b << ',';
        std::snprintf(buf, sizeof(buf), "%.9g", h.bin_lo[b]);
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.9g", h.bin_hi[b]);
        os << buf << ',' << h.fp_count[b] << ',' << h.quant_count[b] << "\n";
    }
    if (!os) {
        throw DataError("histogram: write failed: " + path);
    }
}

Tensor averaged_attention(const Model& m, const Dataset& ds, int64_t batch_size) {
    if (ds.size() == 0) {
        throw std::invalid_argument("averaged_attention: empty dataset");
    }
    const int64_t t = m.cfg.tokens();
    std::vector<double> acc(static_cast<size_t>(t * t), 0.0);
    double planes = 0.0;
    for (int64_t lo = 0; lo < ds.size(); lo += batch_size) {
        const int64_t hi = std::min(ds.size(), lo + batch_size);
        std::vector<int64_t> idx;
        for (int64_t i = lo; i < hi; ++i) {
            idx.push_back(i);
        }
        std::vector<Tensor> maps;
        m.forward_with_maps(ds.gather(idx), &maps);
        for (const auto& blk : maps) {
            const int64_t n = blk.dim(0) * blk.dim(1);
            const float* p = blk.data();
            for (int64_t pl = 0; pl < n; ++pl) {
                for (int64_t i = 0; i < t * t; ++i) {
                    acc[static_cast<size_t>(i)] += p[pl * t * t + i];
                }
            }
            planes += static_cast<double>(n);
        }
    }
    Tensor out({t, t});
    for (int64_t i = 0; i < t * t; ++i) {
        out[i] = static_cast<float>(acc[static_cast<size_t>(i)] / planes);
    }
    return out;
}

void write_pgm(const Tensor& map2d, const std::string& path, const std::string& manifest_hash) {
    if (map2d.ndim() != 2) {
        throw std::invalid_argument("write_pgm: expects a 2-D map");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("pgm: cannot open for writing: " + path);
    }
    const int64_t h = map2d.dim(0);
    const int64_t w = map2d.dim(1);
    float mx = 0.0f;
    for (int64_t i = 0; i < map2d.numel(); ++i) {
        mx = std::max(mx, map2d[i]);
    }
    os << "P5\n";
    if (!manifest_hash.empty()) {
        os << "# manifest_hash=" << manifest_hash << "\n";
    }
    os << w << " " << h << "\n255\n";
    for (int64_t i = 0; i < map2d.numel(); ++i) {
        const float v = mx > 0.0f ? map2d[i] / mx : 0.0f;
        const int byte = std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255);
        os.put(static_cast<char>(byte));
    }
    if (!os) {
        throw DataError("pgm: write failed: " + path);
    }
}

} // namespace qsearch
