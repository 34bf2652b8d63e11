#pragma once

#include <string>
#include <vector>

#include "qsearch/data.hpp"
#include "qsearch/tensor.hpp"
#include "qsearch/vit.hpp"

namespace qsearch {

enum class LossKind { kContrastive, kMse, kCosine, kKl };

LossKind loss_kind_from_string(const std::string& s);
const char* loss_kind_name(LossKind k);

// The temperature default was chosen by sweeping tau over the multi-seed
// study: sharp temperatures make the contrastive fitness track top-1
// agreement with the full-precision model, soft ones let the search trade
// agreement away for cross-similarity shuffling. `ablate --sweep tau`
// reproduces the sweep.
struct LossSpec {
    LossKind kind = LossKind::kContrastive;
    double tau = 0.01;      // contrastive temperature
    bool normalize = true;  // L2-normalize predictions before dot products

    void validate() const;
};

// infoNCE over index-matched positives with the rest of the batch as
// negatives: mean_i of -log( exp(p_i.o_i/tau) / sum_j exp(p_i.o_j/tau) ),
// log-sum-exp stabilized. Rows are L2-normalized first when `normalize`.
// B = 1 gives exactly 0 (no negatives).
double info_nce(const Tensor& p, const Tensor& o, double tau, bool normalize = true);

// Mean squared difference over all logit entries.
double mse_loss(const Tensor& p, const Tensor& o);

// Mean over rows of 1 - cos(p_i, o_i); zero rows count as orthogonal.
double cosine_loss(const Tensor& p, const Tensor& o);

// Mean over rows of KL(softmax(o_i) || softmax(p_i)).
double kl_loss(const Tensor& p, const Tensor& o);

double batch_loss(const LossSpec& spec, const Tensor& p, const Tensor& o);

// Fitness is the NEGATED average per-batch loss, so greater is better and
// "BestFitness" can be taken literally. The full-precision logits never
// change, so they are computed once at construction and cached.
//
// Evaluation may fan batches out to `threads` workers; per-batch losses land
// in a slot vector that is summed sequentially, so the score is bit-identical
// for any worker count.
class FitnessEvaluator {
public:
    FitnessEvaluator(const Model& mf, const Dataset& ds, LossSpec spec, int threads = 1);

    double operator()(const Model& mq) const;

    int64_t num_batches() const { return static_cast<int64_t>(batches_.size()); }
    const Tensor& fp_logits(int64_t batch) const { return fp_logits_[static_cast<size_t>(batch)]; }

private:
    const Dataset* ds_;
    LossSpec spec_;
    int threads_;
    std::vector<std::vector<int64_t>> batches_;
    std::vector<Tensor> fp_logits_;
};

// One-shot convenience wrapper around FitnessEvaluator.
double fitness(const Model& mq, const Model& mf, const Dataset& ds, const LossSpec& spec, int threads = 1);

} // namespace qsearch
