#include "qsearch/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

#include "wire.hpp"

namespace qsearch {

namespace {

constexpr char kMagic[4] = {'Q', 'V', 'I', 'T'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeTensor = 0;
constexpr uint8_t kDtypeQuantParams = 1;

struct Section {
    std::string name;
    const Tensor* tensor = nullptr;
    const QuantParams* qp = nullptr;
};

// Fixed section order; the single source of truth for both save and load.
std::vector<Section> layout(const Model& m) {
    std::vector<Section> s;
    auto ten = [&s](std::string name, const Tensor& t) { s.push_back({std::move(name), &t, nullptr}); };
    auto qps = [&s](std::string name, const QuantParams& q) { s.push_back({std::move(name), nullptr, &q}); };

    ten("patch_embed.weight", m.patch_embed.weight);
    ten("patch_embed.bias", m.patch_embed.bias);
    ten("cls_token", m.cls_token);
    ten("pos_embed", m.pos_embed);
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        const auto& b = m.blocks[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        ten(p + "ln1.gain", b.ln1.gain);
        ten(p + "ln1.bias", b.ln1.bias);
        ten(p + "qkv.weight", b.qkv.weight);
        ten(p + "qkv.bias", b.qkv.bias);
        ten(p + "proj.weight", b.proj.weight);
        ten(p + "proj.bias", b.proj.bias);
        ten(p + "ln2.gain", b.ln2.gain);
        ten(p + "ln2.bias", b.ln2.bias);
        ten(p + "fc1.weight", b.fc1.weight);
        ten(p + "fc1.bias", b.fc1.bias);
        ten(p + "fc2.weight", b.fc2.weight);
        ten(p + "fc2.bias", b.fc2.bias);
    }
    ten("final_ln.gain", m.final_ln.gain);
    ten("final_ln.bias", m.final_ln.bias);
    ten("head.weight", m.head.weight);
    ten("head.bias", m.head.bias);

    if (m.calibrated) {
        qps("patch_embed.weight.qparams", m.patch_embed.wq);
        for (size_t i = 0; i < m.blocks.size(); ++i) {
            const auto& b = m.blocks[i];
            const std::string p = "blocks." + std::to_string(i) + ".";
            qps(p + "qkv.weight.qparams", b.qkv.wq);
            qps(p + "proj.weight.qparams", b.proj.wq);
            qps(p + "fc1.weight.qparams", b.fc1.wq);
            qps(p + "fc2.weight.qparams", b.fc2.wq);
            for (int site = 0; site < kNumActSites; ++site) {
                qps(p + act_site_name(site) + ".qparams", b.act_q[static_cast<size_t>(site)]);
            }
        }
        qps("head.weight.qparams", m.head.wq);
    }
    return s;
}

void write_section(std::ostream& os, const Section& sec) {
    wire::put_u32(os, static_cast<uint32_t>(sec.name.size()));
    os.write(sec.name.data(), static_cast<std::streamsize>(sec.name.size()));
    if (sec.tensor) {
        wire::put_u8(os, kDtypeTensor);
        wire::put_u32(os, static_cast<uint32_t>(sec.tensor->ndim()));
        for (int64_t i = 0; i < sec.tensor->ndim(); ++i) {
            wire::put_u32(os, static_cast<uint32_t>(sec.tensor->dim(i)));
        }
        for (int64_t i = 0; i < sec.tensor->numel(); ++i) {
            wire::put_f32(os, (*sec.tensor)[i]);
        }
    } else {
        wire::put_u8(os, kDtypeQuantParams);
        wire::put_u32(os, 0); // ndim
        wire::put_u8(os, static_cast<uint8_t>(sec.qp->scheme));
        wire::put_u8(os, static_cast<uint8_t>(sec.qp->bits));
        wire::put_f32(os, sec.qp->delta);
        wire::put_i32(os, sec.qp->zero_point);
        wire::put_i32(os, sec.qp->alpha);
        wire::put_i32(os, sec.qp->beta);
    }
}

void read_section_into(std::istream& is, const Section& expect) {
    const uint32_t name_len = wire::get_u32(is, "section name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
        throw DataError("checkpoint: truncated section name");
    }
    if (name != expect.name) {
        throw DataError("checkpoint: expected section '" + expect.name + "', found '" + name + "'");
    }
    const uint8_t dtype = wire::get_u8(is, "section dtype");
    const uint32_t ndim = wire::get_u32(is, "section ndim");
    if (expect.tensor) {
        if (dtype != kDtypeTensor) {
            throw DataError("checkpoint: section '" + name + "' has wrong dtype");
        }
        std::vector<int64_t> shape(ndim);
        int64_t numel = 1;
        for (uint32_t i = 0; i < ndim; ++i) {
            shape[i] = wire::get_u32(is, "section dims");
            numel *= shape[i];
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) {
            data[static_cast<size_t>(i)] = wire::get_f32(is, "tensor payload");
        }
        *const_cast<Tensor*>(expect.tensor) = Tensor(std::move(shape), std::move(data));
    } else {
        if (dtype != kDtypeQuantParams || ndim != 0) {
            throw DataError("checkpoint: section '" + name + "' has wrong dtype");
        }
        QuantParams qp;
        qp.scheme = static_cast<QuantScheme>(wire::get_u8(is, "qparams scheme"));
        qp.bits = wire::get_u8(is, "qparams bits");
        qp.delta = wire::get_f32(is, "qparams delta");
        qp.zero_point = wire::get_i32(is, "qparams zero_point");
        qp.alpha = wire::get_i32(is, "qparams alpha");
        qp.beta = wire::get_i32(is, "qparams beta");
        qp.validate();
        *const_cast<QuantParams*>(expect.qp) = qp;
    }
}

} // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("checkpoint: cannot open for writing: " + path);
    }
    os.write(kMagic, 4);
    wire::put_u32(os, kVersion);
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.image_size));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.patch_size));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.in_channels));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.embed_dim));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.num_heads));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.mlp_ratio));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.num_blocks));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.num_classes));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.bits_weights));
    wire::put_u32(os, static_cast<uint32_t>(m.cfg.bits_activations));
    wire::put_u32(os, static_cast<uint32_t>(m.mode));
    wire::put_u32(os, m.calibrated ? 1u : 0u);

    const auto sections = layout(m);
    wire::put_u32(os, static_cast<uint32_t>(sections.size()));
    for (const auto& sec : sections) {
        write_section(os, sec);
    }
    if (!os) {
        throw DataError("checkpoint: write failed: " + path);
    }
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("checkpoint: cannot open: " + path);
    }
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("checkpoint: bad magic (expected QVIT): " + path);
    }
    const uint32_t version = wire::get_u32(is, "version");
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    Model m;
    m.cfg.image_size = wire::get_u32(is, "config");
    m.cfg.patch_size = wire::get_u32(is, "config");
    m.cfg.in_channels = wire::get_u32(is, "config");
    m.cfg.embed_dim = wire::get_u32(is, "config");
    m.cfg.num_heads = wire::get_u32(is, "config");
    m.cfg.mlp_ratio = wire::get_u32(is, "config");
    m.cfg.num_blocks = wire::get_u32(is, "config");
    m.cfg.num_classes = wire::get_u32(is, "config");
    m.cfg.bits_weights = static_cast<int>(wire::get_u32(is, "config"));
    m.cfg.bits_activations = static_cast<int>(wire::get_u32(is, "config"));
    const uint32_t mode = wire::get_u32(is, "config");
    if (mode > 1) {
        throw DataError("checkpoint: bad mode field");
    }
    m.mode = static_cast<Mode>(mode);
    m.calibrated = wire::get_u32(is, "config") != 0;
    m.cfg.validate();
    m.blocks.resize(static_cast<size_t>(m.cfg.num_blocks));

    const auto sections = layout(m);
    const uint32_t count = wire::get_u32(is, "section count");
    if (count != sections.size()) {
        throw DataError("checkpoint: section count mismatch");
    }
    for (const auto& sec : sections) {
        read_section_into(is, sec);
    }
    char extra;
    if (is.read(&extra, 1)) {
        throw DataError("checkpoint: trailing bytes after last section");
    }

    // Shape consistency against the config.
    const int64_t d = m.cfg.embed_dim;
    auto expect_shape = [](const Tensor& t, std::vector<int64_t> shape, const char* what) {
        if (t.shape() != shape) {
            throw DataError(std::string("checkpoint: unexpected shape for ") + what);
        }
    };
    expect_shape(m.patch_embed.weight, {m.cfg.patch_dim(), d}, "patch_embed.weight");
    expect_shape(m.cls_token, {d}, "cls_token");
    expect_shape(m.pos_embed, {m.cfg.tokens(), d}, "pos_embed");
    for (const auto& blk : m.blocks) {
        expect_shape(blk.qkv.weight, {d, 3 * d}, "qkv.weight");
        expect_shape(blk.proj.weight, {d, d}, "proj.weight");
        expect_shape(blk.fc1.weight, {d, m.cfg.mlp_ratio * d}, "fc1.weight");
        expect_shape(blk.fc2.weight, {m.cfg.mlp_ratio * d, d}, "fc2.weight");
    }
    expect_shape(m.head.weight, {d, m.cfg.num_classes}, "head.weight");

    if (m.calibrated) {
        for (QuantLinear* l : m.all_weight_layers()) {
            l->has_wq = true;
            l->refresh_cache();
        }
        for (auto& blk : m.blocks) {
            blk.act_calibrated = true;
        }
    }
    return m;
}

} // namespace qsearch
