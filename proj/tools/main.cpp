#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "qsearch/commands.hpp"
#include "qsearch/errors.hpp"

namespace {

using namespace qsearch;

struct DatasetFlags {
    std::string source = "synth"; // "synth" or a QDAT file path
    int64_t size = 256;
    int64_t classes = 0; // 0 = model's class count
    uint64_t seed = 0;

    DatasetDesc desc(int64_t batch_size) const {
        DatasetDesc d;
        if (source == "synth") {
            d.kind = "synth";
            d.total = size;
            d.num_classes = classes;
        } else {
            d.kind = "file";
            d.path = source;
        }
        d.data_seed = seed;
        d.batch_size = batch_size;
        return d;
    }
};

void add_calib_flags(CLI::App* cmd, DatasetFlags& f) {
    cmd->add_option("--calib", f.source, "calibration images: 'synth' or a QDAT file path")->default_val("synth");
    cmd->add_option("--calib-size", f.size, "synthetic calibration set size")->default_val(256);
    cmd->add_option("--classes", f.classes, "synthetic class count (0 = model classes)")->default_val(0);
    cmd->add_option("--data-seed", f.seed, "dataset generation + batch shuffle seed")->default_val(0);
}

CLI::Option* add_eval_flags(CLI::App* cmd, DatasetFlags& f) {
    f.size = 512;
    f.seed = 911;
    CLI::Option* o = cmd->add_option("--eval", f.source, "held-out images for agreement: 'synth' or a QDAT file path");
    cmd->add_option("--eval-size", f.size, "synthetic held-out set size")->default_val(512);
    cmd->add_option("--eval-classes", f.classes, "synthetic held-out class count (0 = model classes)")->default_val(0);
    cmd->add_option("--eval-seed", f.seed, "held-out set seed")->default_val(911);
    return o;
}

struct SearchFlagHandles {
    CLI::Option* gamma = nullptr;
    CLI::Option* no_act = nullptr;
    std::string loss_name = "contrastive";
};

SearchFlagHandles add_search_flags(CLI::App* cmd, SearchConfig& s) {
    SearchFlagHandles h;
    cmd->add_option("--K", s.passes, "search passes over all blocks")->default_val(10);
    cmd->add_option("--C", s.cycles, "evolution cycles per block visit")->default_val(3);
    cmd->add_option("--P", s.population, "population size")->default_val(15);
    cmd->add_option("--S", s.samples, "parent tournament sample count")->default_val(10);
    h.gamma = cmd->add_option("--gamma", s.gamma, "mutation range (default 1e-3 for 8-bit weights, 1e-4 below)");
    cmd->add_option("--tau", s.loss.tau, "contrastive temperature")->default_val(0.01);
    cmd->add_option("--batch", s.batch_size, "calibration batch size")->default_val(32);
    cmd->add_option("--seed", s.seed, "search seed")->default_val(0);
    return h;
}

void add_search_variant_flags(CLI::App* cmd, SearchConfig& s, SearchFlagHandles& h) {
    cmd->add_option("--loss", h.loss_name, "fitness loss: contrastive|mse|cosine|kl")->default_val("contrastive");
    cmd->add_flag("--init-jitter", s.init_jitter, "jittered instead of literal population init");
    h.no_act = cmd->add_flag("--no-act-scales", "search weight scales only");
    cmd->add_flag("--relative-mutation", s.relative_mutation, "multiplicative instead of additive mutation");
}

void resolve_search_flags(SearchConfig& s, const SearchFlagHandles& h, bool& gamma_given) {
    gamma_given = h.gamma->count() > 0;
    if (h.no_act) {
        s.search_activation_scales = h.no_act->count() == 0;
    }
    s.loss.kind = loss_kind_from_string(h.loss_name);
}

int resolve_threads(int flag_value, bool given) {
    if (given) {
        return flag_value;
    }
    if (const char* env = std::getenv("QSEARCH_THREADS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (...) {
            throw UsageError("QSEARCH_THREADS is not a number");
        }
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-training quantization toolkit: calibrate a ViT, search its quantization scales, report"};
    app.require_subcommand(1);

    int threads = 1;
    CLI::Option* threads_opt = app.add_option("--threads", threads, "fitness batch workers (env QSEARCH_THREADS)");

    // calibrate
    CalibrateOptions cal;
    DatasetFlags cal_calib, cal_eval;
    int64_t cal_batch = 32;
    uint64_t cal_seed = 0;
    auto* c_cal = app.add_subcommand("calibrate", "quantize a model: MinMax weights, Log2/MinMax activations");
    c_cal->add_option("--model", cal.model_preset, "model preset: desk|tiny")->default_val("desk");
    c_cal->add_option("--weights", cal.weights_path, "full-precision weights checkpoint");
    CLI::Option* cal_seed_opt = c_cal->add_option("--seed", cal_seed, "random-init weight seed");
    c_cal->add_option("--bits-w", cal.bits_w, "weight bits: 3|4|8|16")->default_val(8);
    c_cal->add_option("--bits-a", cal.bits_a, "activation bits")->default_val(8);
    c_cal->add_option("--batch", cal_batch, "calibration batch size")->default_val(32);
    add_calib_flags(c_cal, cal_calib);
    CLI::Option* cal_eval_opt = add_eval_flags(c_cal, cal_eval);
    c_cal->add_option("--out", cal.out, "output checkpoint path")->required();

    // search
    SearchOptions sea;
    DatasetFlags sea_calib, sea_eval;
    auto* c_sea = app.add_subcommand("search", "block-wise evolutionary search over quantization scales");
    c_sea->add_option("--checkpoint", sea.checkpoint, "calibrated input checkpoint")->required();
    add_calib_flags(c_sea, sea_calib);
    CLI::Option* sea_eval_opt = add_eval_flags(c_sea, sea_eval);
    SearchFlagHandles sea_h = add_search_flags(c_sea, sea.search);
    add_search_variant_flags(c_sea, sea.search, sea_h);
    c_sea->add_option("--trace-out", sea.trace_out, "search trace CSV path");
    c_sea->add_option("--out", sea.out, "output checkpoint path")->required();

    // ablate
    AblateOptions abl;
    DatasetFlags abl_calib, abl_eval;
    auto* c_abl = app.add_subcommand("ablate", "sweep passes/cycles/tau over seeds, emit a CSV grid");
    c_abl->add_option("--checkpoint", abl.base.checkpoint, "calibrated input checkpoint")->required();
    add_calib_flags(c_abl, abl_calib);
    CLI::Option* abl_eval_opt = add_eval_flags(c_abl, abl_eval);
    SearchFlagHandles abl_h = add_search_flags(c_abl, abl.base.search);
    add_search_variant_flags(c_abl, abl.base.search, abl_h);
    c_abl->add_option("--sweep", abl.sweep, "sweep dimension: passes|cycles|tau")->required();
    c_abl->add_option("--values", abl.values, "sweep values")->required()->delimiter(',');
    c_abl->add_option("--seeds", abl.seeds, "seeds per value")->default_val(1);
    c_abl->add_option("--out", abl.out, "output CSV path")->required();

    // report
    ReportOptions rep;
    DatasetFlags rep_calib, rep_eval;
    uint64_t rep_seed = 0;
    auto* c_rep = app.add_subcommand("report", "emit analysis artifacts: hist | attmaps | seeds");
    c_rep->add_option("--what", rep.what, "hist|attmaps|seeds")->required();
    c_rep->add_option("--checkpoint", rep.checkpoint, "checkpoint (hist/attmaps)");
    c_rep->add_option("--bins", rep.bins, "histogram bins")->default_val(64);
    c_rep->add_option("--model", rep.seeds.model_preset, "model preset (seeds)")->default_val("desk");
    c_rep->add_option("--weights", rep.seeds.weights_path, "fp weights checkpoint (seeds)");
    CLI::Option* rep_seed_opt = c_rep->add_option("--weights-seed", rep_seed, "random-init weight seed (seeds)");
    c_rep->add_option("--bits-w", rep.seeds.bits_w, "weight bits (seeds)")->default_val(4);
    c_rep->add_option("--bits-a", rep.seeds.bits_a, "activation bits (seeds)")->default_val(8);
    c_rep->add_option("--n", rep.seeds.n, "number of seeds")->default_val(12);
    add_calib_flags(c_rep, rep_calib);
    add_eval_flags(c_rep, rep_eval);
    SearchFlagHandles rep_h = add_search_flags(c_rep, rep.seeds.search);
    add_search_variant_flags(c_rep, rep.seeds.search, rep_h);
    c_rep->add_option("--out-dir", rep.out_dir, "output directory")->required();

    // replay
    ReplayOptions repl;
    auto* c_repl = app.add_subcommand("replay", "re-run a command from its manifest");
    c_repl->add_option("--manifest", repl.manifest_path, "manifest JSON path")->required();
    c_repl->add_option("--out", repl.out, "override output checkpoint path");
    c_repl->add_option("--trace-out", repl.trace_out, "override trace path");
    c_repl->add_option("--out-dir", repl.out_dir, "override output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const int nthreads = resolve_threads(threads, threads_opt->count() > 0);
        if (c_cal->parsed()) {
            if (cal_seed_opt->count() > 0) {
                cal.weights_seed = cal_seed;
            }
            cal.calib = cal_calib.desc(cal_batch);
            if (cal_eval_opt->count() > 0) {
                cal.eval = cal_eval.desc(cal_batch);
            }
            cal.threads = nthreads;
            cmd_calibrate(cal);
        } else if (c_sea->parsed()) {
            resolve_search_flags(sea.search, sea_h, sea.gamma_given);
            sea.calib = sea_calib.desc(sea.search.batch_size);
            if (sea_eval_opt->count() > 0) {
                sea.eval = sea_eval.desc(sea.search.batch_size);
            }
            sea.search.threads = nthreads;
            cmd_search(sea);
        } else if (c_abl->parsed()) {
            resolve_search_flags(abl.base.search, abl_h, abl.base.gamma_given);
            abl.base.calib = abl_calib.desc(abl.base.search.batch_size);
            if (abl_eval_opt->count() > 0) {
                abl.base.eval = abl_eval.desc(abl.base.search.batch_size);
            }
            abl.base.search.threads = nthreads;
            cmd_ablate(abl);
        } else if (c_rep->parsed()) {
            resolve_search_flags(rep.seeds.search, rep_h, rep.seeds.gamma_given);
            if (rep_seed_opt->count() > 0) {
                rep.seeds.weights_seed = rep_seed;
            }
            rep.data = rep_calib.desc(rep.seeds.search.batch_size);
            rep.seeds.calib = rep_calib.desc(rep.seeds.search.batch_size);
            rep.seeds.eval = rep_eval.desc(rep.seeds.search.batch_size);
            rep.seeds.threads = nthreads;
            rep.seeds.search.threads = nthreads;
            cmd_report(rep);
        } else if (c_repl->parsed()) {
            cmd_replay(repl);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
