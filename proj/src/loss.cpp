#include "qsearch/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "qsearch/errors.hpp"

namespace qsearch {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "contrastive") {
        return LossKind::kContrastive;
    }
    if (s == "mse") {
        return LossKind::kMse;
    }
    if (s == "cosine") {
        return LossKind::kCosine;
    }
    if (s == "kl") {
        return LossKind::kKl;
    }
    throw UsageError("unknown loss kind: " + s);
}

const char* loss_kind_name(LossKind k) {
    switch (k) {
    case LossKind::kContrastive:
        return "contrastive";
    case LossKind::kMse:
        return "mse";
    case LossKind::kCosine:
        return "cosine";
    case LossKind::kKl:
        return "kl";
    }
    return "?";
}

void LossSpec::validate() const {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("loss: tau must be positive");
    }
}

namespace {

void check_pair(const Tensor& p, const Tensor& o, const char* what) {
    if (p.ndim() != 2 || !p.same_shape(o)) {
        throw std::invalid_argument(std::string(what) + ": expects matching [B,D] tensors");
    }
    if (p.dim(0) < 1) {
        throw std::invalid_argument(std::string(what) + ": empty batch");
    }
}

} // namespace

double info_nce(const Tensor& p, const Tensor& o, double tau, bool normalize) {
    check_pair(p, o, "info_nce");
    if (!(tau > 0.0)) {
        throw std::invalid_argument("info_nce: tau must be positive");
    }
    const Tensor pn = normalize ? l2_normalize(p) : p;
    const Tensor on = normalize ? l2_normalize(o) : o;
    const int64_t b = p.dim(0);
    const int64_t d = p.dim(1);
    double total = 0.0;
    std::vector<double> sims(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        const float* pi = pn.data() + i * d;
        double mx = -1e300;
        for (int64_t j = 0; j < b; ++j) {
            const float* oj = on.data() + j * d;
            double dot = 0.0;
            for (int64_t k = 0; k < d; ++k) {
                dot += static_cast<double>(pi[k]) * oj[k];
            }
            sims[static_cast<size_t>(j)] = dot / tau;
            mx = std::max(mx, sims[static_cast<size_t>(j)]);
        }
        double lse = 0.0;
        for (int64_t j = 0; j < b; ++j) {
            lse += std::exp(sims[static_cast<size_t>(j)] - mx);
        }
        total += (std::log(lse) + mx) - sims[static_cast<size_t>(i)];
    }
    return total / static_cast<double>(b);
}

double mse_loss(const Tensor& p, const Tensor& o) {
    check_pair(p, o, "mse_loss");
    double total = 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
        const double dlt = static_cast<double>(p[i]) - o[i];
        total += dlt * dlt;
    }
    return total / static_cast<double>(p.numel());
}

double cosine_loss(const Tensor& p, const Tensor& o) {
    check_pair(p, o, "cosine_loss");
    const Tensor pn = l2_normalize(p);
    const Tensor on = l2_normalize(o);
    const int64_t b = p.dim(0);
    const int64_t d = p.dim(1);
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        double dot = 0.0;
        for (int64_t k = 0; k < d; ++k) {
            dot += static_cast<double>(pn[i * d + k]) * on[i * d + k];
        }
        total += 1.0 - dot;
    }
    return total / static_cast<double>(b);
}

double kl_loss(const Tensor& p, const Tensor& o) {
    check_pair(p, o, "kl_loss");
    const Tensor sp = softmax(p, 1);
    const Tensor so = softmax(o, 1);
    const int64_t b = p.dim(0);
    const int64_t d = p.dim(1);
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        double row = 0.0;
        for (int64_t k = 0; k < d; ++k) {
            const double q = so[i * d + k];
            if (q > 0.0) {
                row += q * (std::log(q) - std::log(static_cast<double>(sp[i * d + k])));
            }
        }
        total += row;
    }
    return total / static_cast<double>(b);
}

double batch_loss(const LossSpec& spec, const Tensor& p, const Tensor& o) {
    spec.validate();
    double v = 0.0;
    switch (spec.kind) {
    case LossKind::kContrastive:
        v = info_nce(p, o, spec.tau, spec.normalize);
        break;
    case LossKind::kMse:
        v = mse_loss(p, o);
        break;
    case LossKind::kCosine:
        v = cosine_loss(p, o);
        break;
    case LossKind::kKl:
        v = kl_loss(p, o);
        break;
    }
    if (!std::isfinite(v)) {
        throw NumericError("batch_loss: non-finite loss value");
    }
    return v;
}

FitnessEvaluator::FitnessEvaluator(const Model& mf, const Dataset& ds, LossSpec spec, int threads)
    : ds_(&ds), spec_(spec), threads_(threads < 1 ? 1 : threads), batches_(ds.batches) {
    spec_.validate();
    if (ds.size() == 0 || batches_.empty()) {
        throw std::invalid_argument("fitness: empty dataset or missing batch partition");
    }
    fp_logits_.reserve(batches_.size());
    for (const auto& idx : batches_) {
        fp_logits_.push_back(mf.forward(ds.gather(idx)));
    }
}

double FitnessEvaluator::operator()(const Model& mq) const {
    const int64_t n = num_batches();
    std::vector<double> losses(static_cast<size_t>(n), 0.0);
    auto eval_range = [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const Tensor p = mq.forward(ds_->gather(batches_[static_cast<size_t>(i)]));
            losses[static_cast<size_t>(i)] = batch_loss(spec_, p, fp_logits_[static_cast<size_t>(i)]);
        }
    };
    if (threads_ == 1 || n == 1) {
        eval_range(0, n);
    } else {
        const int workers = static_cast<int>(std::min<int64_t>(threads_, n));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            const int64_t lo = n * w / workers;
            const int64_t hi = n * (w + 1) / workers;
            pool.emplace_back([&, lo, hi, w]() {
                try {
                    eval_range(lo, hi);
                } catch (...) {
                    errors[static_cast<size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    // Sequential sum in batch order: deterministic for any worker count.
    double total = 0.0;
    for (double v : losses) {
        total += v;
    }
    const double score = -total / static_cast<double>(n);
    if (!std::isfinite(score)) {
        throw NumericError("fitness: non-finite score");
    }
    return score;
}

double fitness(const Model& mq, const Model& mf, const Dataset& ds, const LossSpec& spec, int threads) {
    return FitnessEvaluator(mf, ds, spec, threads)(mq);
}

} // namespace qsearch
