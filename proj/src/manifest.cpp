#include "qsearch/manifest.hpp"

#include <fstream>

#include "qsearch/errors.hpp"
#include "qsearch/loss.hpp"

namespace qsearch {

Dataset DatasetDesc::build(const ImageShape& img) const {
    Dataset ds;
    if (kind == "synth") {
        ds = synth_gaussian(num_classes, total, data_seed, img);
    } else if (kind == "file") {
        ds = load_raw(path, {});
        if (ds.images.dim(1) != img.channels || ds.images.dim(2) != img.height || ds.images.dim(3) != img.width) {
            throw DataError("dataset: file images are " + ds.images.shape_str() + ", model expects [N," +
                            std::to_string(img.channels) + "," + std::to_string(img.height) + "," +
                            std::to_string(img.width) + "]");
        }
    } else {
        throw UsageError("dataset: unknown kind '" + kind + "'");
    }
    ds.batches = make_batches(ds.size(), batch_size, data_seed);
    return ds;
}

std::string DatasetDesc::describe() const {
    if (kind == "file") {
        return "file:" + path;
    }
    return "synth(classes=" + std::to_string(num_classes) + ",total=" + std::to_string(total) +
           ",seed=" + std::to_string(data_seed) + ")";
}

json to_json(const ViTConfig& cfg) {
    return json{{"image_size", cfg.image_size},
                {"patch_size", cfg.patch_size},
                {"in_channels", cfg.in_channels},
                {"embed_dim", cfg.embed_dim},
                {"num_heads", cfg.num_heads},
                {"mlp_ratio", cfg.mlp_ratio},
                {"num_blocks", cfg.num_blocks},
                {"num_classes", cfg.num_classes},
                {"bits_weights", cfg.bits_weights},
                {"bits_activations", cfg.bits_activations}};
}

ViTConfig vit_config_from_json(const json& j) {
    ViTConfig cfg;
    cfg.image_size = j.at("image_size").get<int64_t>();
    cfg.patch_size = j.at("patch_size").get<int64_t>();
    cfg.in_channels = j.at("in_channels").get<int64_t>();
    cfg.embed_dim = j.at("embed_dim").get<int64_t>();
    cfg.num_heads = j.at("num_heads").get<int64_t>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<int64_t>();
    cfg.num_blocks = j.at("num_blocks").get<int64_t>();
    cfg.num_classes = j.at("num_classes").get<int64_t>();
    cfg.bits_weights = j.at("bits_weights").get<int>();
    cfg.bits_activations = j.at("bits_activations").get<int>();
    cfg.validate();
    return cfg;
}

json to_json(const SearchConfig& cfg) {
    return json{{"passes", cfg.passes},
                {"cycles", cfg.cycles},
                {"population", cfg.population},
                {"samples", cfg.samples},
                {"gamma", cfg.gamma},
                {"seed", cfg.seed},
                {"loss", loss_kind_name(cfg.loss.kind)},
                {"tau", cfg.loss.tau},
                {"normalize", cfg.loss.normalize},
                {"batch_size", cfg.batch_size},
                {"init_jitter", cfg.init_jitter},
                {"search_activation_scales", cfg.search_activation_scales},
                {"relative_mutation", cfg.relative_mutation}};
}

SearchConfig search_config_from_json(const json& j) {
    SearchConfig cfg;
    cfg.passes = j.at("passes").get<int>();
    cfg.cycles = j.at("cycles").get<int>();
    cfg.population = j.at("population").get<int>();
    cfg.samples = j.at("samples").get<int>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.loss.kind = loss_kind_from_string(j.at("loss").get<std::string>());
    cfg.loss.tau = j.at("tau").get<double>();
    cfg.loss.normalize = j.at("normalize").get<bool>();
    cfg.batch_size = j.at("batch_size").get<int64_t>();
    cfg.init_jitter = j.at("init_jitter").get<bool>();
    cfg.search_activation_scales = j.at("search_activation_scales").get<bool>();
    cfg.relative_mutation = j.at("relative_mutation").get<bool>();
    cfg.validate();
    return cfg;
}

json to_json(const DatasetDesc& d) {
    return json{{"kind", d.kind},         {"path", d.path},           {"num_classes", d.num_classes},
                {"total", d.total},       {"data_seed", d.data_seed}, {"batch_size", d.batch_size}};
}

DatasetDesc dataset_desc_from_json(const json& j) {
    DatasetDesc d;
    d.kind = j.at("kind").get<std::string>();
    d.path = j.at("path").get<std::string>();
    d.num_classes = j.at("num_classes").get<int64_t>();
    d.total = j.at("total").get<int64_t>();
    d.data_seed = j.at("data_seed").get<uint64_t>();
    d.batch_size = j.at("batch_size").get<int64_t>();
    return d;
}

std::string manifest_hash(const json& config_closure) {
    const std::string s = config_closure.dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void save_manifest(const json& manifest, const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("manifest: cannot open for writing: " + path);
    }
    os << manifest.dump(2) << "\n";
    if (!os) {
        throw DataError("manifest: write failed: " + path);
    }
}

json load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("manifest: cannot open: " + path);
    }
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: parse error: ") + e.what());
    }
    return j;
}

} // namespace qsearch
