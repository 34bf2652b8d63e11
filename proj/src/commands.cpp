#include "qsearch/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qsearch/checkpoint.hpp"
#include "qsearch/errors.hpp"
#include "qsearch/report.hpp"

namespace qsearch {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

uint64_t file_fnv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open: " + path);
    }
    uint64_t h = 1469598103934665603ull;
    char buf[8192];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (is.eof()) {
            break;
        }
    }
    return h;
}

ViTConfig preset_config(const std::string& preset) {
    if (preset == "desk") {
        return ViTConfig::desk();
    }
    if (preset == "tiny") {
        return ViTConfig::tiny();
    }
    throw UsageError("unknown model preset '" + preset + "' (expected desk or tiny)");
}

Model build_fp_model(const std::string& preset, const std::string& weights_path,
                     const std::optional<uint64_t>& weights_seed, int bits_w, int bits_a) {
    if (weights_path.empty() && !weights_seed.has_value()) {
        throw UsageError("need --weights <checkpoint> or --seed <n> for the model weights");
    }
    if (!weights_path.empty() && weights_seed.has_value()) {
        throw UsageError("--weights and --seed are mutually exclusive");
    }
    Model m;
    if (!weights_path.empty()) {
        m = load_checkpoint(weights_path);
        m.mode = Mode::kFullPrecision;
        m.calibrated = false;
        m.cfg.bits_weights = bits_w;
        m.cfg.bits_activations = bits_a;
    } else {
        ViTConfig cfg = preset_config(preset);
        cfg.bits_weights = bits_w;
        cfg.bits_activations = bits_a;
        m = Model::random_init(cfg, *weights_seed);
    }
    m.cfg.validate();
    return m;
}

// CLI convention: num_classes <= 0 on a synth dataset means "the model's".
DatasetDesc resolve_classes(DatasetDesc d, const ViTConfig& cfg) {
    if (d.kind == "synth" && d.num_classes <= 0) {
        d.num_classes = cfg.num_classes;
    }
    return d;
}

json weights_json(const std::string& weights_path, const std::optional<uint64_t>& weights_seed) {
    if (!weights_path.empty()) {
        return json{{"kind", "file"}, {"path", weights_path}, {"fnv", file_fnv(weights_path)}};
    }
    return json{{"kind", "seed"}, {"seed", *weights_seed}};
}

} // namespace

void cmd_calibrate(const CalibrateOptions& opt) {
    const double t0 = now_seconds();
    if (opt.out.empty()) {
        throw UsageError("calibrate: --out is required");
    }
    if (opt.calib.kind == "synth" && opt.calib.total < 1) {
        throw UsageError("calibrate: empty calibration set");
    }
    Model mq = build_fp_model(opt.model_preset, opt.weights_path, opt.weights_seed, opt.bits_w, opt.bits_a);
    const Model mf = mq; // full-precision reference; shares the same weights by value

    const DatasetDesc calib_desc = resolve_classes(opt.calib, mq.cfg);
    std::optional<DatasetDesc> eval_desc = opt.eval;
    if (eval_desc.has_value()) {
        eval_desc = resolve_classes(*eval_desc, mq.cfg);
    }
    const Dataset calib = calib_desc.build(mq.cfg.image_shape());
    mq.calibrate(calib);

    const Dataset* agree_ds = &calib;
    Dataset eval_ds;
    if (eval_desc.has_value()) {
        eval_ds = eval_desc->build(mq.cfg.image_shape());
        agree_ds = &eval_ds;
    }
    const double agreement = top1_agreement(mq, mf, *agree_ds);
    const LossSpec spec; // contrastive defaults, reported for reference
    const double fit = fitness(mq, mf, calib, spec, opt.threads);

    save_checkpoint(mq, opt.out);

    json config{{"command", "calibrate"},
                {"model", to_json(mq.cfg)},
                {"model_preset", opt.model_preset},
                {"weights", weights_json(opt.weights_path, opt.weights_seed)},
                {"calib", to_json(calib_desc)},
                {"eval", eval_desc.has_value() ? to_json(*eval_desc) : json(nullptr)}};
    const std::string hash = manifest_hash(config);
    json manifest{{"tool", kToolVersion},
                  {"command", "calibrate"},
                  {"config", config},
                  {"hash", hash},
                  {"outputs", json{{"checkpoint", opt.out}}},
                  {"metrics", json{{"baseline_agreement", agreement}, {"baseline_fitness", fit}}},
                  {"wall_seconds", now_seconds() - t0}};
    save_manifest(manifest, opt.out + ".manifest.json");

    std::cout << "calibrated " << opt.model_preset << " model: bits_w=" << opt.bits_w << " bits_a=" << opt.bits_a
              << " calib=" << calib_desc.describe() << "\n";
    std::cout << "baseline agreement: " << fmt(agreement) << "\n";
    std::cout << "baseline fitness (contrastive): " << fmt17(fit) << "\n";
    std::cout << "wrote " << opt.out << "\n";
}

namespace {

struct SearchRun {
    double fitness_before = 0.0;
    double fitness_after = 0.0;
    double agreement_before = 0.0;
    double agreement_after = 0.0;
    SearchTrace trace;
};

// Shared search pipeline: load-independent core used by search/ablate.
SearchRun execute_search(Model& mq, const Model& mf, const Dataset& calib, const Dataset* eval_ds,
                         const SearchConfig& cfg) {
    SearchRun r;
    FitnessEvaluator evaluate(mf, calib, cfg.loss, cfg.threads);
    r.fitness_before = evaluate(mq);
    const Dataset& ads = eval_ds ? *eval_ds : calib;
    r.agreement_before = top1_agreement(mq, mf, ads);
    r.trace = run_search(mq, evaluate, cfg);
    r.fitness_after = evaluate(mq);
    r.agreement_after = top1_agreement(mq, mf, ads);
    return r;
}

} // namespace

void cmd_search(const SearchOptions& opt) {
    const double t0 = now_seconds();
    if (opt.checkpoint.empty() || opt.out.empty()) {
        throw UsageError("search: --checkpoint and --out are required");
    }
    Model mq = load_checkpoint(opt.checkpoint);
    if (!mq.calibrated) {
        throw DataError("search: checkpoint is not calibrated (run calibrate first)");
    }
    Model mf = mq;
    mf.mode = Mode::kFullPrecision;

    SearchConfig cfg = opt.search;
    if (!opt.gamma_given) {
        cfg.gamma = SearchConfig::default_gamma(mq.cfg.bits_weights);
    }
    cfg.validate();

    const DatasetDesc calib_desc = resolve_classes(opt.calib, mq.cfg);
    std::optional<DatasetDesc> eval_desc = opt.eval;
    if (eval_desc.has_value()) {
        eval_desc = resolve_classes(*eval_desc, mq.cfg);
    }
    const Dataset calib = calib_desc.build(mq.cfg.image_shape());
    Dataset eval_ds;
    const Dataset* eval_ptr = nullptr;
    if (eval_desc.has_value()) {
        eval_ds = eval_desc->build(mq.cfg.image_shape());
        eval_ptr = &eval_ds;
    }

    const SearchRun r = execute_search(mq, mf, calib, eval_ptr, cfg);
    save_checkpoint(mq, opt.out);

    json config{{"command", "search"},
                {"checkpoint", opt.checkpoint},
                {"checkpoint_fnv", file_fnv(opt.checkpoint)},
                {"calib", to_json(calib_desc)},
                {"eval", eval_desc.has_value() ? to_json(*eval_desc) : json(nullptr)},
                {"search", to_json(cfg)}};
    const std::string hash = manifest_hash(config);
    if (!opt.trace_out.empty()) {
        r.trace.write_csv(opt.trace_out, hash);
    }
    json manifest{{"tool", kToolVersion},
                  {"command", "search"},
                  {"config", config},
                  {"hash", hash},
                  {"outputs", json{{"checkpoint", opt.out}, {"trace", opt.trace_out}}},
                  {"metrics", json{{"fitness_before", r.fitness_before},
                                   {"fitness_after", r.fitness_after},
                                   {"agreement_before", r.agreement_before},
                                   {"agreement_after", r.agreement_after}}},
                  {"wall_seconds", now_seconds() - t0}};
    save_manifest(manifest, opt.out + ".manifest.json");

    std::cout << "search: loss=" << loss_kind_name(cfg.loss.kind) << " K=" << cfg.passes << " C=" << cfg.cycles
              << " P=" << cfg.population << " S=" << cfg.samples << " gamma=" << cfg.gamma << " seed=" << cfg.seed
              << "\n";
    std::cout << "fitness before: " << fmt17(r.fitness_before) << "\n";
    std::cout << "fitness after:  " << fmt17(r.fitness_after) << "\n";
    std::cout << "agreement before: " << fmt(r.agreement_before) << "\n";
    std::cout << "agreement after:  " << fmt(r.agreement_after) << "\n";
    std::cout << "wrote " << opt.out << "\n";
}

void cmd_ablate(const AblateOptions& opt) {
    const double t0 = now_seconds();
    if (opt.base.checkpoint.empty() || opt.out.empty()) {
        throw UsageError("ablate: --checkpoint and --out are required");
    }
    if (opt.sweep != "passes" && opt.sweep != "cycles" && opt.sweep != "tau") {
        throw UsageError("ablate: --sweep must be passes, cycles or tau");
    }
    if (opt.values.empty()) {
        throw UsageError("ablate: --values must not be empty");
    }
    if (opt.seeds < 1) {
        throw UsageError("ablate: --seeds must be >= 1");
    }
    const Model base = load_checkpoint(opt.base.checkpoint);
    if (!base.calibrated) {
        throw DataError("ablate: checkpoint is not calibrated");
    }
    Model mf = base;
    mf.mode = Mode::kFullPrecision;

    const DatasetDesc calib_desc = resolve_classes(opt.base.calib, base.cfg);
    std::optional<DatasetDesc> eval_desc = opt.base.eval;
    if (eval_desc.has_value()) {
        eval_desc = resolve_classes(*eval_desc, base.cfg);
    }
    const Dataset calib = calib_desc.build(base.cfg.image_shape());
    Dataset eval_ds;
    const Dataset* eval_ptr = nullptr;
    if (eval_desc.has_value()) {
        eval_ds = eval_desc->build(base.cfg.image_shape());
        eval_ptr = &eval_ds;
    }

    json config{{"command", "ablate"},
                {"checkpoint", opt.base.checkpoint},
                {"calib", to_json(calib_desc)},
                {"eval", eval_desc.has_value() ? to_json(*eval_desc) : json(nullptr)},
                {"search", to_json(opt.base.search)},
                {"sweep", opt.sweep},
                {"values", opt.values},
                {"seeds", opt.seeds}};
    const std::string hash = manifest_hash(config);

    std::ofstream os(opt.out);
    if (!os) {
        throw DataError("ablate: cannot open for writing: " + opt.out);
    }
    os << "# manifest_hash=" << hash << "\n";
    os << "sweep_value,seed,final_fitness,final_agreement\n";
    for (double value : opt.values) {
        for (int s = 0; s < opt.seeds; ++s) {
            SearchConfig cfg = opt.base.search;
            if (!opt.base.gamma_given) {
                cfg.gamma = SearchConfig::default_gamma(base.cfg.bits_weights);
            }
            if (opt.sweep == "passes") {
                cfg.passes = static_cast<int>(value);
            } else if (opt.sweep == "cycles") {
                cfg.cycles = static_cast<int>(value);
            } else {
                cfg.loss.tau = value;
            }
            cfg.seed = opt.base.search.seed + static_cast<uint64_t>(s);
            cfg.validate();
            Model mq = base;
            const SearchRun r = execute_search(mq, mf, calib, eval_ptr, cfg);
            char vbuf[64];
            std::snprintf(vbuf, sizeof(vbuf), "%.9g", value);
            os << vbuf << ',' << s << ',' << fmt17(r.fitness_after) << ',' << fmt(r.agreement_after) << "\n";
        }
    }
    if (!os) {
        throw DataError("ablate: write failed: " + opt.out);
    }
    json manifest{{"tool", kToolVersion},           {"command", "ablate"}, {"config", config}, {"hash", hash},
                  {"outputs", json{{"csv", opt.out}}}, {"wall_seconds", now_seconds() - t0}};
    save_manifest(manifest, opt.out + ".manifest.json");
    std::cout << "ablate: wrote " << opt.values.size() * static_cast<size_t>(opt.seeds) << " rows to " << opt.out
              << "\n";
}

std::vector<SeedStudyRow> run_seed_study(const SeedStudyOptions& opt) {
    if (opt.n < 1) {
        throw UsageError("seed study: n must be >= 1");
    }
    const Model fp = build_fp_model(opt.model_preset, opt.weights_path, opt.weights_seed, opt.bits_w, opt.bits_a);
    const DatasetDesc calib_desc = resolve_classes(opt.calib, fp.cfg);
    const Dataset eval_ds = resolve_classes(opt.eval, fp.cfg).build(fp.cfg.image_shape());

    std::vector<SeedStudyRow> rows;
    for (int s = 0; s < opt.n; ++s) {
        DatasetDesc cd = calib_desc;
        cd.data_seed = calib_desc.data_seed + static_cast<uint64_t>(s);
        const Dataset calib = cd.build(fp.cfg.image_shape());

        Model mq = fp;
        mq.calibrate(calib);

        SearchConfig cfg = opt.search;
        if (!opt.gamma_given) {
            cfg.gamma = SearchConfig::default_gamma(opt.bits_w);
        }
        cfg.seed = opt.search.seed + static_cast<uint64_t>(s);
        cfg.validate();

        FitnessEvaluator evaluate(fp, calib, cfg.loss, opt.threads);
        SeedStudyRow row;
        row.seed = cfg.seed;
        row.fitness_before = evaluate(mq);
        row.agreement_before = top1_agreement(mq, fp, eval_ds);
        run_search(mq, evaluate, cfg);
        row.fitness_after = evaluate(mq);
        row.agreement_after = top1_agreement(mq, fp, eval_ds);
        rows.push_back(row);
    }
    return rows;
}

void cmd_report(const ReportOptions& opt) {
    const double t0 = now_seconds();
    if (opt.out_dir.empty()) {
        throw UsageError("report: --out-dir is required");
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path dir(opt.out_dir);

    if (opt.what == "hist") {
        if (opt.checkpoint.empty()) {
            throw UsageError("report hist: --checkpoint is required");
        }
        const Model m = load_checkpoint(opt.checkpoint);
        json config{{"command", "report"}, {"what", "hist"}, {"checkpoint", opt.checkpoint}, {"bins", opt.bins}};
        const std::string hash = manifest_hash(config);
        const auto hists = weight_histograms(m, opt.bins);
        for (const auto& h : hists) {
            std::string name = h.layer;
            for (auto& c : name) {
                if (c == '.') {
                    c = '_';
                }
            }
            write_histogram_csv(h, (dir / ("hist_" + name + ".csv")).string(), hash);
        }
        json manifest{{"tool", kToolVersion},
                      {"command", "report"},
                      {"config", config},
                      {"hash", hash},
                      {"outputs", json{{"dir", opt.out_dir}}},
                      {"wall_seconds", now_seconds() - t0}};
        save_manifest(manifest, (dir / "report_hist.manifest.json").string());
        std::cout << "report hist: wrote " << hists.size() << " layer histograms to " << opt.out_dir << "\n";
        return;
    }

    if (opt.what == "attmaps") {
        if (opt.checkpoint.empty()) {
            throw UsageError("report attmaps: --checkpoint is required");
        }
        Model mq = load_checkpoint(opt.checkpoint);
        if (!mq.calibrated) {
            throw DataError("report attmaps: checkpoint is not calibrated");
        }
        Model mf = mq;
        mf.mode = Mode::kFullPrecision;
        const DatasetDesc data_desc = resolve_classes(opt.data, mq.cfg);
        const Dataset ds = data_desc.build(mq.cfg.image_shape());
        json config{{"command", "report"},
                    {"what", "attmaps"},
                    {"checkpoint", opt.checkpoint},
                    {"data", to_json(data_desc)}};
        const std::string hash = manifest_hash(config);
        const Tensor quant_map = averaged_attention(mq, ds);
        const Tensor fp_map = averaged_attention(mf, ds);
        write_pgm(quant_map, (dir / "attmap_quant.pgm").string(), hash);
        write_pgm(fp_map, (dir / "attmap_fp.pgm").string(), hash);
        std::ofstream os(dir / "attmaps.csv");
        if (!os) {
            throw DataError("report attmaps: cannot open csv");
        }
        os << "# manifest_hash=" << hash << "\n";
        os << "row,col,fp_value,quant_value\n";
        const int64_t t = fp_map.dim(0);
        char buf[64];
        for (int64_t i = 0; i < t; ++i) {
            for (int64_t j = 0; j < t; ++j) {
                os << i << ',' << j << ',';
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(fp_map[i * t + j]));
                os << buf << ',';
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(quant_map[i * t + j]));
                os << buf << "\n";
            }
        }
        json manifest{{"tool", kToolVersion},
                      {"command", "report"},
                      {"config", config},
                      {"hash", hash},
                      {"outputs", json{{"dir", opt.out_dir}}},
                      {"wall_seconds", now_seconds() - t0}};
        save_manifest(manifest, (dir / "report_attmaps.manifest.json").string());
        std::cout << "report attmaps: wrote attmap_fp.pgm, attmap_quant.pgm, attmaps.csv to " << opt.out_dir << "\n";
        return;
    }

    if (opt.what == "seeds") {
        json config{{"command", "report"},
                    {"what", "seeds"},
                    {"model_preset", opt.seeds.model_preset},
                    {"weights", weights_json(opt.seeds.weights_path, opt.seeds.weights_seed)},
                    {"bits_w", opt.seeds.bits_w},
                    {"bits_a", opt.seeds.bits_a},
                    {"calib", to_json(opt.seeds.calib)},
                    {"eval", to_json(opt.seeds.eval)},
                    {"search", to_json(opt.seeds.search)},
                    {"n", opt.seeds.n}};
        const std::string hash = manifest_hash(config);
        const auto rows = run_seed_study(opt.seeds);
        std::ofstream os(dir / "seeds.csv");
        if (!os) {
            throw DataError("report seeds: cannot open csv");
        }
        os << "# manifest_hash=" << hash << "\n";
        os << "seed,fitness_before,fitness_after,agreement_before,agreement_after\n";
        int improved = 0;
        for (const auto& r : rows) {
            improved += r.fitness_after > r.fitness_before;
            os << r.seed << ',' << fmt17(r.fitness_before) << ',' << fmt17(r.fitness_after) << ','
               << fmt(r.agreement_before) << ',' << fmt(r.agreement_after) << "\n";
        }
        json manifest{{"tool", kToolVersion},
                      {"command", "report"},
                      {"config", config},
                      {"hash", hash},
                      {"outputs", json{{"dir", opt.out_dir}}},
                      {"metrics", json{{"improved", improved}, {"runs", opt.seeds.n}}},
                      {"wall_seconds", now_seconds() - t0}};
        save_manifest(manifest, (dir / "report_seeds.manifest.json").string());
        std::cout << "report seeds: improved fitness on " << improved << "/" << opt.seeds.n << " seeds\n";
        return;
    }

    throw UsageError("report: --what must be hist, attmaps or seeds");
}

void cmd_replay(const ReplayOptions& opt) {
    const json manifest = load_manifest(opt.manifest_path);
    const std::string command = manifest.at("command").get<std::string>();
    const json& config = manifest.at("config");

    if (command == "calibrate") {
        CalibrateOptions o;
        o.model_preset = config.at("model_preset").get<std::string>();
        const json& w = config.at("weights");
        if (w.at("kind") == "seed") {
            o.weights_seed = w.at("seed").get<uint64_t>();
        } else {
            o.weights_path = w.at("path").get<std::string>();
        }
        const ViTConfig cfg = vit_config_from_json(config.at("model"));
        o.bits_w = cfg.bits_weights;
        o.bits_a = cfg.bits_activations;
        o.calib = dataset_desc_from_json(config.at("calib"));
        if (!config.at("eval").is_null()) {
            o.eval = dataset_desc_from_json(config.at("eval"));
        }
        o.out = opt.out.empty() ? manifest.at("outputs").at("checkpoint").get<std::string>() : opt.out;
        cmd_calibrate(o);
        return;
    }
    if (command == "search") {
        SearchOptions o;
        o.checkpoint = config.at("checkpoint").get<std::string>();
        o.calib = dataset_desc_from_json(config.at("calib"));
        if (!config.at("eval").is_null()) {
            o.eval = dataset_desc_from_json(config.at("eval"));
        }
        o.search = search_config_from_json(config.at("search"));
        o.gamma_given = true; // the manifest records the resolved gamma
        o.out = opt.out.empty() ? manifest.at("outputs").at("checkpoint").get<std::string>() : opt.out;
        o.trace_out = opt.trace_out.empty() ? manifest.at("outputs").at("trace").get<std::string>() : opt.trace_out;
        cmd_search(o);
        return;
    }
    throw UsageError("replay: manifests for command '" + command + "' cannot be replayed");
}

} // namespace qsearch
