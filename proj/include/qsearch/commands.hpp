#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qsearch/manifest.hpp"
#include "qsearch/search.hpp"

namespace qsearch {

// Command implementations behind the CLI. Each one writes its outputs plus a
// manifest carrying the full config closure; `replay` re-executes a command
// from that manifest.

struct CalibrateOptions {
    std::string model_preset = "desk"; // desk | tiny
    std::string weights_path;          // fp weights from an existing checkpoint
    std::optional<uint64_t> weights_seed;
    int bits_w = 8;
    int bits_a = 8;
    DatasetDesc calib;
    std::optional<DatasetDesc> eval; // agreement set; defaults to the calib set
    std::string out;
    int threads = 1;
};
void cmd_calibrate(const CalibrateOptions& opt);

struct SearchOptions {
    std::string checkpoint;
    DatasetDesc calib;
    std::optional<DatasetDesc> eval;
    SearchConfig search;
    bool gamma_given = false; // false -> default_gamma(checkpoint bits)
    std::string trace_out;
    std::string out;
};
void cmd_search(const SearchOptions& opt);

struct AblateOptions {
    SearchOptions base; // out/trace_out unused
    std::string sweep;  // passes | cycles | tau
    std::vector<double> values;
    int seeds = 1;
    std::string out; // csv
};
void cmd_ablate(const AblateOptions& opt);

struct SeedStudyRow {
    uint64_t seed = 0;
    double fitness_before = 0.0;
    double fitness_after = 0.0;
    double agreement_before = 0.0;
    double agreement_after = 0.0;
};

struct SeedStudyOptions {
    std::string model_preset = "desk";
    std::string weights_path;
    std::optional<uint64_t> weights_seed;
    int bits_w = 4;
    int bits_a = 8;
    DatasetDesc calib; // per-seed run s uses data_seed + s
    DatasetDesc eval;  // fixed held-out set
    SearchConfig search; // per-seed run s uses seed + s
    bool gamma_given = false;
    int n = 12;
    int threads = 1;
};

// The multi-seed experiment: per seed, calibrate on that seed's calibration
// set, measure, search, measure again. The fp weights stay fixed across
// seeds; only the calibration set and the search stream vary.
std::vector<SeedStudyRow> run_seed_study(const SeedStudyOptions& opt);

struct ReportOptions {
    std::string what; // hist | attmaps | seeds
    std::string checkpoint;
    int bins = 64;
    DatasetDesc data; // attmaps input images
    std::string out_dir;
    SeedStudyOptions seeds; // what == seeds
};
void cmd_report(const ReportOptions& opt);

struct ReplayOptions {
    std::string manifest_path;
    // Output overrides so a replay can sit next to the original for comparison.
    std::string out;
    std::string trace_out;
    std::string out_dir;
};
void cmd_replay(const ReplayOptions& opt);

} // namespace qsearch
