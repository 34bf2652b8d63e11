#include "qsearch/vit.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "qsearch/errors.hpp"
#include "qsearch/rng.hpp"

namespace qsearch {

namespace {

constexpr float kLayerNormEps = 1e-5f;
// Stand-in for pretrained weights. The std is large enough that attention is
// structured rather than near-uniform and low-bit quantization measurably
// separates M_Q from M_F; trained ViTs sit in the same regime.
constexpr float kInitStd = 0.1f;
enum : uint64_t { kTagWeights = 101 };

const char* kActSiteNames[kNumActSites] = {"act.in", "act.qkv", "act.softmax", "act.proj", "act.gelu", "act.out"};

bool valid_weight_bits(int bits) {
    return bits == 3 || bits == 4 || bits == 8 || bits == 16;
}

} // namespace

const char* act_site_name(int site) {
    if (site < 0 || site >= kNumActSites) {
        throw std::invalid_argument("act_site_name: bad site");
    }
    return kActSiteNames[site];
}

void ViTConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0) {
        throw std::invalid_argument("vit config: image_size must be a positive multiple of patch_size");
    }
    if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0) {
        throw std::invalid_argument("vit config: embed_dim must be a positive multiple of num_heads");
    }
    if (num_blocks < 1) {
        throw std::invalid_argument("vit config: num_blocks must be >= 1");
    }
    if (in_channels < 1 || mlp_ratio < 1 || num_classes < 2) {
        throw std::invalid_argument("vit config: bad channels/mlp_ratio/classes");
    }
    if (!valid_weight_bits(bits_weights)) {
        throw std::invalid_argument("vit config: bits_weights must be one of {3,4,8,16}");
    }
    if (bits_activations < 2 || bits_activations > 16) {
        throw std::invalid_argument("vit config: bits_activations must be in [2,16]");
    }
}

ViTConfig ViTConfig::desk() {
    return ViTConfig{};
}

ViTConfig ViTConfig::tiny() {
    ViTConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.embed_dim = 16;
    c.num_heads = 2;
    c.mlp_ratio = 2;
    c.num_blocks = 2;
    c.num_classes = 4;
    return c;
}

void QuantLinear::calibrate_weight(int bits) {
    wq = minmax_calibrate_weights(weight, bits);
    has_wq = true;
    refresh_cache();
}

void QuantLinear::refresh_cache() {
    if (has_wq) {
        weight_fq = fake_quant(weight, wq);
    }
}

const Tensor& QuantLinear::effective_weight(Mode mode) const {
    if (mode == Mode::kFakeQuant) {
        if (!has_wq) {
            throw std::logic_error("QuantLinear: fake-quant forward before weight calibration");
        }
        return weight_fq;
    }
    return weight;
}

Tensor AttentionBlock::forward(const Tensor& x, int64_t batch, const ViTConfig& cfg, Mode mode,
                               std::array<ActivationStats, kNumActSites>* stats, Tensor* maps_out) const {
    const int64_t t = cfg.tokens();
    const int64_t d = cfg.embed_dim;
    const int64_t heads = cfg.num_heads;
    const int64_t dh = cfg.head_dim();
    if (x.ndim() != 2 || x.dim(0) != batch * t || x.dim(1) != d) {
        throw std::invalid_argument("block forward: expected [B*T, D] input");
    }
    if (stats && mode != Mode::kFullPrecision) {
        throw std::logic_error("block forward: calibration pass must run in full precision");
    }
    const bool quant = mode == Mode::kFakeQuant && act_calibrated;

    auto site = [&](Tensor v, int which) -> Tensor {
        if (stats) {
            (*stats)[static_cast<size_t>(which)].observe(v);
            return v;
        }
        if (quant) {
            return fake_quant(v, act_q[static_cast<size_t>(which)]);
        }
        return v;
    };

    Tensor xq = site(x, kActIn);
    Tensor h = layernorm(xq, ln1.gain, ln1.bias, kLayerNormEps);
    Tensor qkvt = site(add_bias(matmul(h, qkv.effective_weight(mode)), qkv.bias), kActQkv);

    // Attention: per image and head, scores -> softmax -> (log2 fake-quant) -> context.
    const QuantParams& soft_qp = act_q[kActSoftmax];
    Tensor ctx({batch * t, d});
    if (maps_out) {
        *maps_out = Tensor({batch, heads, t, t});
    }
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
    const float* pqkv = qkvt.data();
    float* pctx = ctx.data();
    std::vector<float> scores(static_cast<size_t>(t) * static_cast<size_t>(t));
    Tensor map_row; // observation buffer for the calibration pass
    if (stats) {
        map_row = Tensor({t});
    }
    for (int64_t b = 0; b < batch; ++b) {
        const float* base = pqkv + b * t * 3 * d;
        for (int64_t hd = 0; hd < heads; ++hd) {
            const int64_t qoff = hd * dh;
            const int64_t koff = d + hd * dh;
            const int64_t voff = 2 * d + hd * dh;
            for (int64_t i = 0; i < t; ++i) {
                const float* qrow = base + i * 3 * d + qoff;
                float* srow = scores.data() + i * t;
                for (int64_t j = 0; j < t; ++j) {
                    const float* krow = base + j * 3 * d + koff;
                    float dot = 0.0f;
                    for (int64_t k = 0; k < dh; ++k) {
                        dot += qrow[k] * krow[k];
                    }
                    srow[j] = dot * inv_sqrt_dh;
                }
                // stable softmax over the row
                float mx = srow[0];
                for (int64_t j = 1; j < t; ++j) {
                    mx = std::max(mx, srow[j]);
                }
                double sum = 0.0;
                for (int64_t j = 0; j < t; ++j) {
                    const double e = std::exp(static_cast<double>(srow[j] - mx));
                    srow[j] = static_cast<float>(e);
                    sum += e;
                }
                const double inv = 1.0 / sum;
                for (int64_t j = 0; j < t; ++j) {
                    srow[j] = static_cast<float>(srow[j] * inv);
                }
                if (stats) {
                    std::memcpy(map_row.data(), srow, static_cast<size_t>(t) * sizeof(float));
                    (*stats)[kActSoftmax].observe(map_row);
                } else if (quant) {
                    for (int64_t j = 0; j < t; ++j) {
                        srow[j] = fake_quant_value(srow[j], soft_qp);
                    }
                }
                if (maps_out) {
                    std::memcpy(maps_out->data() + ((b * heads + hd) * t + i) * t, srow,
                                static_cast<size_t>(t) * sizeof(float));
                }
                // context row: A_i . V
                float* crow = pctx + (b * t + i) * d + qoff;
                for (int64_t k = 0; k < dh; ++k) {
                    crow[k] = 0.0f;
                }
                for (int64_t j = 0; j < t; ++j) {
                    const float a = srow[j];
                    const float* vrow = base + j * 3 * d + voff;
                    for (int64_t k = 0; k < dh; ++k) {
                        crow[k] += a * vrow[k];
                    }
                }
            }
        }
    }

    Tensor projt = site(add_bias(matmul(ctx, proj.effective_weight(mode)), proj.bias), kActProj);
    Tensor x2 = add(xq, projt); // residual carries the quantized block input
    Tensor h2 = layernorm(x2, ln2.gain, ln2.bias, kLayerNormEps);
    Tensor f1 = site(gelu(add_bias(matmul(h2, fc1.effective_weight(mode)), fc1.bias)), kActGelu);
    Tensor f2 = add_bias(matmul(f1, fc2.effective_weight(mode)), fc2.bias);
    return site(add(x2, f2), kActOut);
}

ScaleVector AttentionBlock::get_scales() const {
    if (!qkv.has_wq || !act_calibrated) {
        throw std::logic_error("get_scales: block not calibrated");
    }
    ScaleVector sv;
    auto push = [&sv](const std::string& name, QuantScheme scheme, bool is_weight, float value) {
        sv.layout.push_back(ScaleEntry{name, scheme, is_weight});
        sv.values.push_back(value);
    };
    push("qkv.weight", qkv.wq.scheme, true, qkv.wq.delta);
    push("proj.weight", proj.wq.scheme, true, proj.wq.delta);
    push("fc1.weight", fc1.wq.scheme, true, fc1.wq.delta);
    push("fc2.weight", fc2.wq.scheme, true, fc2.wq.delta);
    for (int s = 0; s < kNumActSites; ++s) {
        push(act_site_name(s), act_q[static_cast<size_t>(s)].scheme, false, act_q[static_cast<size_t>(s)].delta);
    }
    return sv;
}

void AttentionBlock::set_scales(const ScaleVector& sv) {
    const ScaleVector cur = get_scales();
    if (!sv.layout_matches(cur)) {
        throw std::invalid_argument("set_scales: scale vector layout mismatch");
    }
    for (float v : sv.values) {
        if (!(v > 0.0f) || !std::isfinite(v)) {
            throw std::invalid_argument("set_scales: scales must be positive finite reals");
        }
    }
    qkv.wq.delta = sv.values[0];
    proj.wq.delta = sv.values[1];
    fc1.wq.delta = sv.values[2];
    fc2.wq.delta = sv.values[3];
    for (int s = 0; s < kNumActSites; ++s) {
        act_q[static_cast<size_t>(s)].delta = sv.values[static_cast<size_t>(4 + s)];
    }
    qkv.refresh_cache();
    proj.refresh_cache();
    fc1.refresh_cache();
    fc2.refresh_cache();
}

Model Model::random_init(const ViTConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng = Rng::stream(seed, {kTagWeights});
    auto randn = [&rng](std::vector<int64_t> shape) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) {
            t[i] = kInitStd * static_cast<float>(rng.normal());
        }
        return t;
    };
    const int64_t d = cfg.embed_dim;
    m.patch_embed.weight = randn({cfg.patch_dim(), d});
    m.patch_embed.bias = Tensor({d});
    m.cls_token = randn({d});
    m.pos_embed = randn({cfg.tokens(), d});
    m.blocks.resize(static_cast<size_t>(cfg.num_blocks));
    for (auto& blk : m.blocks) {
        blk.ln1.gain = Tensor::full({d}, 1.0f);
        blk.ln1.bias = Tensor({d});
        blk.qkv.weight = randn({d, 3 * d});
        blk.qkv.bias = Tensor({3 * d});
        blk.proj.weight = randn({d, d});
        blk.proj.bias = Tensor({d});
        blk.ln2.gain = Tensor::full({d}, 1.0f);
        blk.ln2.bias = Tensor({d});
        blk.fc1.weight = randn({d, cfg.mlp_ratio * d});
        blk.fc1.bias = Tensor({cfg.mlp_ratio * d});
        blk.fc2.weight = randn({cfg.mlp_ratio * d, d});
        blk.fc2.bias = Tensor({d});
    }
    m.final_ln.gain = Tensor::full({d}, 1.0f);
    m.final_ln.bias = Tensor({d});
    m.head.weight = randn({d, cfg.num_classes});
    m.head.bias = Tensor({cfg.num_classes});
    return m;
}

namespace {

// batch [B,C,H,W] -> [B*P, patch_dim]; patch vector is channel-major, then
// row-major within the patch.
Tensor patchify(const Tensor& batch, const ViTConfig& cfg) {
    const int64_t b = batch.dim(0);
    const int64_t c = cfg.in_channels;
    const int64_t h = cfg.image_size;
    const int64_t w = cfg.image_size;
    const int64_t ps = cfg.patch_size;
    const int64_t grid = cfg.grid();
    Tensor out({b * cfg.num_patches(), cfg.patch_dim()});
    const float* pi = batch.data();
    float* po = out.data();
    for (int64_t img = 0; img < b; ++img) {
        const float* ibase = pi + img * c * h * w;
        for (int64_t gy = 0; gy < grid; ++gy) {
            for (int64_t gx = 0; gx < grid; ++gx) {
                float* prow = po + ((img * grid + gy) * grid + gx) * cfg.patch_dim();
                int64_t k = 0;
                for (int64_t ch = 0; ch < c; ++ch) {
                    for (int64_t py = 0; py < ps; ++py) {
                        const float* src = ibase + ch * h * w + (gy * ps + py) * w + gx * ps;
                        for (int64_t px = 0; px < ps; ++px) {
                            prow[k++] = src[px];
                        }
                    }
                }
            }
        }
    }
    return out;
}

} // namespace

Tensor Model::forward(const Tensor& batch) const {
    return forward_impl(batch, nullptr, nullptr);
}

Tensor Model::forward_with_maps(const Tensor& batch, std::vector<Tensor>* maps) const {
    if (maps) {
        maps->assign(static_cast<size_t>(num_blocks()), Tensor());
    }
    return forward_impl(batch, nullptr, maps);
}

Tensor Model::forward_impl(const Tensor& batch, std::vector<std::array<ActivationStats, kNumActSites>>* stats,
                           std::vector<Tensor>* maps) const {
    cfg.validate();
    if (batch.ndim() != 4 || batch.dim(1) != cfg.in_channels || batch.dim(2) != cfg.image_size ||
        batch.dim(3) != cfg.image_size) {
        throw std::invalid_argument("forward: batch must be [B, " + std::to_string(cfg.in_channels) + ", " +
                                    std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) + "]");
    }
    if (mode == Mode::kFakeQuant && !calibrated) {
        throw std::logic_error("forward: fake-quant mode before calibration");
    }
    const int64_t b = batch.dim(0);
    const int64_t t = cfg.tokens();
    const int64_t d = cfg.embed_dim;
    const int64_t p = cfg.num_patches();

    Tensor patches = patchify(batch, cfg);
    Tensor emb = add_bias(matmul(patches, patch_embed.effective_weight(mode)), patch_embed.bias);

    Tensor x({b * t, d});
    const float* pe = emb.data();
    const float* ppos = pos_embed.data();
    const float* pcls = cls_token.data();
    float* px = x.data();
    for (int64_t img = 0; img < b; ++img) {
        float* row0 = px + img * t * d;
        for (int64_t j = 0; j < d; ++j) {
            row0[j] = pcls[j] + ppos[j];
        }
        for (int64_t pi = 0; pi < p; ++pi) {
            float* row = row0 + (1 + pi) * d;
            const float* erow = pe + (img * p + pi) * d;
            const float* prow = ppos + (1 + pi) * d;
            for (int64_t j = 0; j < d; ++j) {
                row[j] = erow[j] + prow[j];
            }
        }
    }

    for (size_t n = 0; n < blocks.size(); ++n) {
        x = blocks[n].forward(x, b, cfg, mode, stats ? &(*stats)[n] : nullptr, maps ? &(*maps)[n] : nullptr);
    }

    x = layernorm(x, final_ln.gain, final_ln.bias, kLayerNormEps);

    Tensor cls_rows({b, d});
    for (int64_t img = 0; img < b; ++img) {
        std::memcpy(cls_rows.data() + img * d, x.data() + img * t * d, static_cast<size_t>(d) * sizeof(float));
    }
    Tensor logits = add_bias(matmul(cls_rows, head.effective_weight(mode)), head.bias);
    if (!logits.all_finite()) {
        throw NumericError("forward: non-finite logits");
    }
    return logits;
}

void Model::calibrate(const Dataset& calib) {
    cfg.validate();
    if (calib.size() == 0) {
        throw std::invalid_argument("calibrate: empty calibration set");
    }
    if (calib.batches.empty()) {
        throw std::invalid_argument("calibrate: dataset has no batch partition");
    }
    for (QuantLinear* l : all_weight_layers()) {
        l->calibrate_weight(cfg.bits_weights);
    }
    const Mode saved = mode;
    mode = Mode::kFullPrecision;
    std::vector<std::array<ActivationStats, kNumActSites>> stats(blocks.size());
    for (const auto& idx : calib.batches) {
        forward_impl(calib.gather(idx), &stats, nullptr);
    }
    mode = saved;
    for (size_t n = 0; n < blocks.size(); ++n) {
        for (int s = 0; s < kNumActSites; ++s) {
            if (s == kActSoftmax) {
                blocks[n].act_q[kActSoftmax] = QuantParams::log2(cfg.bits_activations, 1.0f);
            } else {
                blocks[n].act_q[static_cast<size_t>(s)] = stats[n][static_cast<size_t>(s)].finalize(cfg.bits_activations);
            }
        }
        blocks[n].act_calibrated = true;
    }
    calibrated = true;
    mode = Mode::kFakeQuant;
}

ScaleVector Model::get_scales(int64_t block) const {
    if (block < 0 || block >= num_blocks()) {
        throw std::invalid_argument("get_scales: block index out of range");
    }
    return blocks[static_cast<size_t>(block)].get_scales();
}

void Model::set_scales(int64_t block, const ScaleVector& sv) {
    if (block < 0 || block >= num_blocks()) {
        throw std::invalid_argument("set_scales: block index out of range");
    }
    blocks[static_cast<size_t>(block)].set_scales(sv);
}

std::vector<QuantLinear*> Model::all_weight_layers() {
    std::vector<QuantLinear*> out;
    out.push_back(&patch_embed);
    for (auto& blk : blocks) {
        out.push_back(&blk.qkv);
        out.push_back(&blk.proj);
        out.push_back(&blk.fc1);
        out.push_back(&blk.fc2);
    }
    out.push_back(&head);
    return out;
}

std::vector<const QuantLinear*> Model::all_weight_layers() const {
    std::vector<const QuantLinear*> out;
    for (QuantLinear* l : const_cast<Model*>(this)->all_weight_layers()) {
        out.push_back(l);
    }
    return out;
}

std::vector<std::string> Model::weight_layer_names() const {
    std::vector<std::string> out;
    out.push_back("patch_embed");
    for (size_t n = 0; n < blocks.size(); ++n) {
        const std::string p = "blocks." + std::to_string(n) + ".";
        out.push_back(p + "qkv");
        out.push_back(p + "proj");
        out.push_back(p + "fc1");
        out.push_back(p + "fc2");
    }
    out.push_back("head");
    return out;
}

namespace {

void fnv_bytes(uint64_t& h, const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

void fnv_tensor(uint64_t& h, const Tensor& t) {
    fnv_bytes(h, t.data(), static_cast<size_t>(t.numel()) * sizeof(float));
}

} // namespace

uint64_t weight_bytes_hash(const Model& m) {
    uint64_t h = 1469598103934665603ull;
    fnv_tensor(h, m.patch_embed.weight);
    fnv_tensor(h, m.patch_embed.bias);
    fnv_tensor(h, m.cls_token);
    fnv_tensor(h, m.pos_embed);
    for (const auto& blk : m.blocks) {
        fnv_tensor(h, blk.ln1.gain);
        fnv_tensor(h, blk.ln1.bias);
        fnv_tensor(h, blk.qkv.weight);
        fnv_tensor(h, blk.qkv.bias);
        fnv_tensor(h, blk.proj.weight);
        fnv_tensor(h, blk.proj.bias);
        fnv_tensor(h, blk.ln2.gain);
        fnv_tensor(h, blk.ln2.bias);
        fnv_tensor(h, blk.fc1.weight);
        fnv_tensor(h, blk.fc1.bias);
        fnv_tensor(h, blk.fc2.weight);
        fnv_tensor(h, blk.fc2.bias);
    }
    fnv_tensor(h, m.final_ln.gain);
    fnv_tensor(h, m.final_ln.bias);
    fnv_tensor(h, m.head.weight);
    fnv_tensor(h, m.head.bias);
    return h;
}

Tensor stack_attention_maps(const std::vector<Tensor>& maps) {
    if (maps.empty()) {
        throw std::invalid_argument("stack_attention_maps: no maps");
    }
    const auto& s = maps[0].shape();
    Tensor out({static_cast<int64_t>(maps.size()), s[0], s[1], s[2], s[3]});
    int64_t off = 0;
    for (const auto& m : maps) {
        if (m.shape() != s) {
            throw std::invalid_argument("stack_attention_maps: ragged shapes");
        }
        std::memcpy(out.data() + off, m.data(), static_cast<size_t>(m.numel()) * sizeof(float));
        off += m.numel();
    }
    return out;
}

Tensor block_averaged_attention(const std::vector<Tensor>& maps) {
    if (maps.empty()) {
        throw std::invalid_argument("block_averaged_attention: no maps");
    }
    const int64_t t = maps[0].dim(2);
    Tensor out({t, t});
    double count = 0.0;
    std::vector<double> acc(static_cast<size_t>(t * t), 0.0);
    for (const auto& m : maps) {
        const int64_t planes = m.dim(0) * m.dim(1);
        const float* p = m.data();
        for (int64_t pl = 0; pl < planes; ++pl) {
            for (int64_t i = 0; i < t * t; ++i) {
                acc[static_cast<size_t>(i)] += p[pl * t * t + i];
            }
        }
        count += static_cast<double>(planes);
    }
    for (int64_t i = 0; i < t * t; ++i) {
        out[i] = static_cast<float>(acc[static_cast<size_t>(i)] / count);
    }
    return out;
}

} // namespace qsearch
