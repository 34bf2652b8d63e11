#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qsearch/loss.hpp"
#include "qsearch/rng.hpp"
#include "qsearch/vit.hpp"

namespace qsearch {

struct SearchConfig {
    int passes = 10;     // K: full sweeps over all attention blocks
    int cycles = 3;      // C: mutate/evaluate/cull steps per block visit
    int population = 15; // P
    int samples = 10;    // S: parent tournament draws, with replacement
    double gamma = 1e-3; // mutation range
    uint64_t seed = 0;
    LossSpec loss;
    int64_t batch_size = 32;
    bool init_jitter = false;              // jittered instead of literal population init
    bool search_activation_scales = true;  // when off, only weight scales move
    bool relative_mutation = false;        // child = parent * (1 + u) instead of parent + u
    int threads = 1;

    // passes/cycles may be zero (no-op search); population and samples must
    // be at least 1.
    void validate() const;

    // Settings-table default: 1e-3 for 8-bit-and-up weights, 1e-4 below.
    static double default_gamma(int bits_weights) { return bits_weights >= 8 ? 1e-3 : 1e-4; }
};

struct Candidate {
    ScaleVector scales;
    double fitness = 0.0;
    int birth_cycle = 0; // -1 for population-init members
    int64_t insert_id = 0;
};

// Fixed-capacity candidate pool. Tie rules are part of the contract:
// best() prefers higher fitness, then earlier birth_cycle, then earlier
// insertion; delete_dead() removes the lowest fitness, then oldest
// birth_cycle, then earliest insertion.
class Population {
public:
    explicit Population(int64_t capacity);

    void insert(ScaleVector scales, double fitness, int birth_cycle);
    void delete_dead();

    const Candidate& best() const;
    const Candidate& sample_and_select(int samples, Rng& rng) const;

    int64_t size() const { return static_cast<int64_t>(members_.size()); }
    int64_t capacity() const { return capacity_; }
    const Candidate& at(int64_t i) const { return members_[static_cast<size_t>(i)]; }

private:
    std::vector<Candidate> members_;
    int64_t capacity_;
    int64_t next_id_ = 0;
};

// Elementwise child_i = parent_i + u_i, u_i ~ U(-gamma, gamma), clamped to
// >= 1e-8 so scales stay positive. Entries whose `searchable` flag is false
// keep the parent value (their draws are still consumed, keeping the stream
// layout independent of the mask). relative: child_i = parent_i * (1 + u_i).
ScaleVector mutate(const ScaleVector& parent, double gamma, Rng& rng, const std::vector<bool>* searchable = nullptr,
                   bool relative = false);

// A block's searchable state, abstracted so the search core can drive either
// a real model block or a synthetic fitness landscape.
struct BlockHandle {
    std::function<ScaleVector()> get;
    std::function<void(const ScaleVector&)> set;
    std::function<double()> evaluate; // fitness of the currently installed scales
};

struct TraceRow {
    int pass = 0;
    int block = 0;
    int cycle = 0; // -1 for the population-init evaluation
    int64_t candidate_id = 0;
    double fitness = 0.0;
    double wall_ms = 0.0;
    // Not serialized; recorded for invariant checks.
    int64_t pop_size = 0;
    double best_fitness = 0.0;
};

struct SearchTrace {
    std::vector<TraceRow> rows;

    // CSV columns: pass, block, cycle, candidate_id, fitness, wall_ms.
    // wall_ms is the only column that varies between identically-seeded runs.
    void write_csv(const std::string& path, const std::string& manifest_hash) const;
};

// One block visit (Algorithm-style): init population from the current
// scales, C cycles of {tournament parent -> mutate -> install -> evaluate ->
// insert -> cull}, then install and return the best member. RNG streams are
// derived from (seed, pass, block, cycle) so the sequence is independent of
// anything the fitness evaluation does internally.
ScaleVector search_block(const BlockHandle& handle, const SearchConfig& cfg, int pass, int block, SearchTrace* trace);

// K passes over all attention blocks in order. Deterministic given cfg.seed.
SearchTrace run_search(Model& mq, const FitnessEvaluator& evaluate, const SearchConfig& cfg);

} // namespace qsearch
