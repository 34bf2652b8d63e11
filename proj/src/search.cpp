#include "qsearch/search.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "qsearch/errors.hpp"

namespace qsearch {

namespace {

constexpr float kMinScale = 1e-8f;

// Stream-splitting tags: one stream per (pass, block, cycle, purpose).
enum : uint64_t { kTagSample = 1, kTagMutate = 2, kTagInitJitter = 3 };

Rng cycle_stream(const SearchConfig& cfg, int pass, int block, int cycle, uint64_t purpose) {
    return Rng::stream(cfg.seed, {static_cast<uint64_t>(pass), static_cast<uint64_t>(block),
                                  static_cast<uint64_t>(cycle + 1), purpose});
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

bool better(const Candidate& a, const Candidate& b) {
    if (a.fitness != b.fitness) {
        return a.fitness > b.fitness;
    }
    if (a.birth_cycle != b.birth_cycle) {
        return a.birth_cycle < b.birth_cycle;
    }
    return a.insert_id < b.insert_id;
}

bool deader(const Candidate& a, const Candidate& b) {
    if (a.fitness != b.fitness) {
        return a.fitness < b.fitness;
    }
    if (a.birth_cycle != b.birth_cycle) {
        return a.birth_cycle < b.birth_cycle;
    }
    return a.insert_id < b.insert_id;
}

} // namespace

void SearchConfig::validate() const {
    if (passes < 0 || cycles < 0) {
        throw std::invalid_argument("search config: passes and cycles must be >= 0");
    }
    if (population < 1 || samples < 1) {
        throw std::invalid_argument("search config: population and samples must be >= 1");
    }
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("search config: gamma must be positive");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("search config: batch size must be >= 1");
    }
    if (threads < 1) {
        throw std::invalid_argument("search config: threads must be >= 1");
    }
    loss.validate();
}

Population::Population(int64_t capacity) : capacity_(capacity) {
    if (capacity < 1) {
        throw std::invalid_argument("population: capacity must be >= 1");
    }
    members_.reserve(static_cast<size_t>(capacity + 1));
}

void Population::insert(ScaleVector scales, double fitness, int birth_cycle) {
    if (size() > capacity_) {
        throw std::logic_error("population: insert before delete_dead");
    }
    members_.push_back(Candidate{std::move(scales), fitness, birth_cycle, next_id_++});
}

void Population::delete_dead() {
    if (size() != capacity_ + 1) {
        throw std::logic_error("population: delete_dead expects capacity+1 members");
    }
    size_t worst = 0;
    for (size_t i = 1; i < members_.size(); ++i) {
        if (deader(members_[i], members_[worst])) {
            worst = i;
        }
    }
    members_.erase(members_.begin() + static_cast<std::ptrdiff_t>(worst));
}

const Candidate& Population::best() const {
    if (members_.empty()) {
        throw std::logic_error("population: empty");
    }
    size_t b = 0;
    for (size_t i = 1; i < members_.size(); ++i) {
        if (better(members_[i], members_[b])) {
            b = i;
        }
    }
    return members_[b];
}

const Candidate& Population::sample_and_select(int samples, Rng& rng) const {
    if (members_.empty()) {
        throw std::logic_error("population: empty");
    }
    if (samples < 1) {
        throw std::invalid_argument("population: samples must be >= 1");
    }
    const Candidate* sel = nullptr;
    for (int s = 0; s < samples; ++s) {
        const Candidate& c = members_[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(size())))];
        if (!sel || better(c, *sel)) {
            sel = &c;
        }
    }
    return *sel;
}

ScaleVector mutate(const ScaleVector& parent, double gamma, Rng& rng, const std::vector<bool>* searchable,
                   bool relative) {
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("mutate: gamma must be positive");
    }
    if (searchable && static_cast<int64_t>(searchable->size()) != parent.size()) {
        throw std::invalid_argument("mutate: searchable mask length mismatch");
    }
    ScaleVector child = parent;
    for (int64_t i = 0; i < parent.size(); ++i) {
        const double u = rng.uniform(-gamma, gamma);
        if (searchable && !(*searchable)[static_cast<size_t>(i)]) {
            continue;
        }
        const double base = static_cast<double>(parent.values[static_cast<size_t>(i)]);
        const double v = relative ? base * (1.0 + u) : base + u;
        child.values[static_cast<size_t>(i)] = std::max(static_cast<float>(v), kMinScale);
    }
    return child;
}

ScaleVector search_block(const BlockHandle& handle, const SearchConfig& cfg, int pass, int block, SearchTrace* trace) {
    cfg.validate();
    const ScaleVector init = handle.get();
    std::vector<bool> searchable(static_cast<size_t>(init.size()), true);
    if (!cfg.search_activation_scales) {
        for (int64_t i = 0; i < init.size(); ++i) {
            searchable[static_cast<size_t>(i)] = init.layout[static_cast<size_t>(i)].is_weight;
        }
    }

    const double t0 = now_ms();
    auto record = [&](int cycle, double fit, const Population& pop) {
        if (trace) {
            trace->rows.push_back(TraceRow{pass, block, cycle, static_cast<int64_t>(trace->rows.size()), fit,
                                           now_ms() - t0, pop.size(), pop.best().fitness});
        }
    };

    Population pop(cfg.population);
    if (cfg.init_jitter) {
        Rng jrng = cycle_stream(cfg, pass, block, -1, kTagInitJitter);
        pop.insert(init, handle.evaluate(), -1);
        record(-1, pop.at(0).fitness, pop);
        for (int i = 1; i < cfg.population; ++i) {
            ScaleVector v = mutate(init, cfg.gamma, jrng, &searchable, cfg.relative_mutation);
            handle.set(v);
            const double fit = handle.evaluate();
            pop.insert(std::move(v), fit, -1);
            record(-1, fit, pop);
        }
    } else {
        // Literal population init: P copies of the current scales sharing one
        // evaluation (they are identical, so their fitness is too).
        const double fit = handle.evaluate();
        for (int i = 0; i < cfg.population; ++i) {
            pop.insert(init, fit, -1);
        }
        record(-1, fit, pop);
    }

    for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
        Rng srng = cycle_stream(cfg, pass, block, cycle, kTagSample);
        Rng mrng = cycle_stream(cfg, pass, block, cycle, kTagMutate);
        const Candidate& parent = pop.sample_and_select(cfg.samples, srng);
        ScaleVector child = mutate(parent.scales, cfg.gamma, mrng, &searchable, cfg.relative_mutation);
        handle.set(child);
        const double fit = handle.evaluate();
        pop.insert(std::move(child), fit, cycle);
        pop.delete_dead();
        record(cycle, fit, pop);
    }

    const Candidate& winner = pop.best();
    handle.set(winner.scales);
    return winner.scales;
}

SearchTrace run_search(Model& mq, const FitnessEvaluator& evaluate, const SearchConfig& cfg) {
    cfg.validate();
    if (!mq.calibrated) {
        throw std::invalid_argument("search: model must be calibrated first");
    }
    SearchTrace trace;
    for (int pass = 0; pass < cfg.passes; ++pass) {
        for (int64_t b = 0; b < mq.num_blocks(); ++b) {
            BlockHandle handle{
                [&mq, b]() { return mq.get_scales(b); },
                [&mq, b](const ScaleVector& sv) { mq.set_scales(b, sv); },
                [&mq, &evaluate]() { return evaluate(mq); },
            };
            search_block(handle, cfg, pass, static_cast<int>(b), &trace);
        }
    }
    return trace;
}

void SearchTrace::write_csv(const std::string& path, const std::string& manifest_hash) const {
    std::ofstream os(path);
    if (!os) {
        throw DataError("trace: cannot open for writing: " + path);
    }
    if (!manifest_hash.empty()) {
        os << "# manifest_hash=" << manifest_hash << "\n";
    }
    os << "pass,block,cycle,candidate_id,fitness,wall_ms\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.fitness);
        os << r.pass << ',' << r.block << ',' << r.cycle << ',' << r.candidate_id << ',' << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.3f", r.wall_ms);
        os << buf << "\n";
    }
    if (!os) {
        throw DataError("trace: write failed: " + path);
    }
}

} // namespace qsearch
