#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qsearch/data.hpp"
#include "qsearch/quant.hpp"
#include "qsearch/tensor.hpp"

namespace qsearch {

struct ViTConfig {
    int64_t image_size = 32;
    int64_t patch_size = 8;
    int64_t in_channels = 3;
    int64_t embed_dim = 64;
    int64_t num_heads = 4;
    int64_t mlp_ratio = 2;
    int64_t num_blocks = 4;
    int64_t num_classes = 10;
    int bits_weights = 8;
    int bits_activations = 8;

    void validate() const;
    int64_t grid() const { return image_size / patch_size; }
    int64_t num_patches() const { return grid() * grid(); }
    int64_t tokens() const { return num_patches() + 1; } // +1 class token
    int64_t patch_dim() const { return in_channels * patch_size * patch_size; }
    int64_t head_dim() const { return embed_dim / num_heads; }
    ImageShape image_shape() const { return {in_channels, image_size, image_size}; }

    // Default desk-scale model: sub-millisecond forward per image.
    static ViTConfig desk();
    // Shrunken config for fast smoke tests.
    static ViTConfig tiny();

    bool operator==(const ViTConfig&) const = default;
};

enum class Mode : uint8_t { kFullPrecision = 0, kFakeQuant = 1 };

// Per-block activation quantization sites, in scale-vector order.
enum ActSite : int {
    kActIn = 0,      // block input (also covers the residual stream)
    kActQkv = 1,     // fused qkv projection output
    kActSoftmax = 2, // post-softmax attention map (log2)
    kActProj = 3,    // attention output projection
    kActGelu = 4,    // post-GELU hidden activations
    kActOut = 5,     // block output
    kNumActSites = 6,
};
const char* act_site_name(int site);

struct ScaleEntry {
    std::string name;
    QuantScheme scheme = QuantScheme::kUniformSymmetric;
    bool is_weight = false;

    bool operator==(const ScaleEntry&) const = default;
};

// The stacked 1-D vector of one block's searchable quantization scales.
// Layout is fixed per block shape and identical across candidates.
struct ScaleVector {
    std::vector<float> values;
    std::vector<ScaleEntry> layout;

    int64_t size() const { return static_cast<int64_t>(values.size()); }
    bool layout_matches(const ScaleVector& other) const { return layout == other.layout; }
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
};

// Linear layer with an optional weight quantizer. The float weight is the
// single source of truth; weight_fq caches fake_quant(weight, wq) and is
// refreshed explicitly whenever wq changes, never inside forward, so
// concurrent forwards stay read-only.
struct QuantLinear {
    Tensor weight; // [in, out]
    Tensor bias;   // [out], kept full precision
    QuantParams wq;
    bool has_wq = false;
    Tensor weight_fq;

    void calibrate_weight(int bits);
    void refresh_cache();
    const Tensor& effective_weight(Mode mode) const;
};

struct AttentionBlock {
    LayerNormParams ln1;
    QuantLinear qkv;  // [D, 3D]
    QuantLinear proj; // [D, D]
    LayerNormParams ln2;
    QuantLinear fc1; // [D, r*D]
    QuantLinear fc2; // [r*D, D]
    std::array<QuantParams, kNumActSites> act_q;
    bool act_calibrated = false;

    // x is [B*T, D]; returns the same shape. When stats is non-null the
    // block records per-site value ranges instead of quantizing (calibration
    // pass). When maps_out is non-null it receives the post-softmax (and, in
    // quant mode, post-log2) attention probabilities as [B, H, T, T].
    Tensor forward(const Tensor& x, int64_t batch, const ViTConfig& cfg, Mode mode,
                   std::array<ActivationStats, kNumActSites>* stats = nullptr, Tensor* maps_out = nullptr) const;

    ScaleVector get_scales() const;
    void set_scales(const ScaleVector& sv);
};

// The model. M_F and M_Q are the same object in different modes: the real
// weights never change, only `mode` and the attached QuantParams do.
// A model is immutable during forward; set_scales/calibrate need exclusive
// access.
struct Model {
    ViTConfig cfg;
    Mode mode = Mode::kFullPrecision;
    bool calibrated = false;

    QuantLinear patch_embed; // [patch_dim, D]
    Tensor cls_token;        // [D]
    Tensor pos_embed;        // [T, D], kept full precision
    std::vector<AttentionBlock> blocks;
    LayerNormParams final_ln;
    QuantLinear head; // [D, classes]

    // Seeded initializer standing in for pretrained weights: all weights,
    // class token and position embeddings ~ N(0, 0.02^2); biases zero;
    // layernorm gain 1, bias 0.
    static Model random_init(const ViTConfig& cfg, uint64_t seed);

    // batch [B, C, H, W] -> logits [B, num_classes]. Throws NumericError if
    // any logit is non-finite.
    Tensor forward(const Tensor& batch) const;

    // Same forward, also filling one [B, H, T, T] map tensor per block.
    Tensor forward_with_maps(const Tensor& batch, std::vector<Tensor>* maps) const;

    // MinMax weight calibration + running min/max over full-precision
    // activations of the calibration stream (post-softmax maps use log2 with
    // s = 1). Populates every QuantParams and switches to fake-quant mode.
    void calibrate(const Dataset& calib);

    int64_t num_blocks() const { return static_cast<int64_t>(blocks.size()); }
    ScaleVector get_scales(int64_t block) const;
    void set_scales(int64_t block, const ScaleVector& sv);

    Tensor forward_impl(const Tensor& batch, std::vector<std::array<ActivationStats, kNumActSites>>* stats,
                        std::vector<Tensor>* maps) const;

    std::vector<QuantLinear*> all_weight_layers();
    std::vector<const QuantLinear*> all_weight_layers() const;
    std::vector<std::string> weight_layer_names() const;
};

// FNV-1a over the raw bytes of every float weight tensor (not the quantizer
// caches); used to assert that mode toggling and scale search never touch
// the underlying weights.
uint64_t weight_bytes_hash(const Model& m);

// Stacks per-block maps into [N, B, H, T, T].
Tensor stack_attention_maps(const std::vector<Tensor>& maps);

// Mean over blocks, batch and heads -> [T, T].
Tensor block_averaged_attention(const std::vector<Tensor>& maps);

} // namespace qsearch
