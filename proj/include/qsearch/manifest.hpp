#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "qsearch/data.hpp"
#include "qsearch/search.hpp"
#include "qsearch/vit.hpp"

namespace qsearch {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "qsearch 0.1.0";

// Where a run's images come from. Synth datasets derive everything from
// data_seed; the batch partition is shuffled by the same seed on a separate
// stream, so image content and batch composition are independent draws.
struct DatasetDesc {
    std::string kind = "synth"; // "synth" | "file"
    std::string path;           // file kind only
    int64_t num_classes = 10;   // synth kind only
    int64_t total = 256;        // synth kind only
    uint64_t data_seed = 0;
    int64_t batch_size = 32;

    Dataset build(const ImageShape& img) const;
    std::string describe() const;
};

json to_json(const ViTConfig& cfg);
ViTConfig vit_config_from_json(const json& j);

json to_json(const SearchConfig& cfg);
SearchConfig search_config_from_json(const json& j);

json to_json(const DatasetDesc& d);
DatasetDesc dataset_desc_from_json(const json& j);

// FNV-1a64 over the canonical (sorted-key) dump of the config closure;
// stamped into every file a command emits.
std::string manifest_hash(const json& config_closure);

void save_manifest(const json& manifest, const std::string& path);
json load_manifest(const std::string& path);

} // namespace qsearch
