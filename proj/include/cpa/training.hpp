#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "mtl_net.hpp"
#include "rng.hpp"

namespace cpa {

struct StepLog {
    std::uint64_t step = 0;
    int epoch = 0;
    nn::LossBreakdown loss{};
};

/// Population variance with a two-pass mean.
inline double label_variance(std::span<const double> rho) {
    require(!rho.empty(), ErrorKind::InputSize, "label variance of an empty set");
    double mean = 0.0;
    for (double r : rho) mean += r;
    mean /= static_cast<double>(rho.size());
    double ss = 0.0;
    for (double r : rho) ss += (r - mean) * (r - mean);
    return ss / static_cast<double>(rho.size());
}

inline std::vector<double> dataset_rho(const Dataset& ds) {
    std::vector<double> rho;
    rho.reserve(ds.size());
    for (const auto& r : ds.records) rho.push_back(r.rho);
    return rho;
}

inline nn::Batch batch_from(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<const FeatureTensor*> feats;
    std::vector<int> intent;
    std::vector<double> rho;
    for (auto i : indices) {
        const auto& r = ds.records.at(i);
        feats.push_back(&r.features);
        intent.push_back(class_index(r.intent));
        rho.push_back(r.rho);
    }
    return nn::make_batch(feats, intent, rho);
}

/// Fresh checkpoint for a dataset: He-initialized weights seeded from the
/// training seed and the regression weighting frozen at the label variance.
inline Checkpoint initial_checkpoint(const Dataset& train_set, nn::NetworkConfig net, const TrainConfig& train,
                                     nn::TaskMode mode) {
    train.validate();
    const auto rho = dataset_rho(train_set);
    const double var = label_variance(rho);
    require(var > 0.0, ErrorKind::Config, "training labels have zero variance; regression weighting undefined");
    net.reg_label_variance = var;
    Checkpoint ck;
    ck.model = nn::MultitaskNet(net, derive_seed(train.seed, 0x1a17));
    ck.mode = mode;
    ck.train = train;
    return ck;
}

/// Mini-batch schedule. Epoch e visits the samples in a permutation seeded by
/// (seed, e); global step s maps to (epoch, batch) so training can resume
/// from the step counter alone.
class BatchSchedule {
public:
    BatchSchedule(std::size_t n, int batch_size, std::uint64_t seed) : n_(n), batch_(batch_size), seed_(seed) {
        require(n > 0 && batch_size > 0, ErrorKind::Config, "empty dataset or batch size");
    }

    std::uint64_t steps_per_epoch() const { return (n_ + static_cast<std::size_t>(batch_) - 1) / static_cast<std::size_t>(batch_); }

    int epoch_of(std::uint64_t step) const { return static_cast<int>(step / steps_per_epoch()); }

    std::vector<std::size_t> batch(std::uint64_t step) {
        const int e = epoch_of(step);
        if (e != cached_epoch_) {
            perm_.resize(n_);
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            Rng rng(derive_seed(seed_, 0x5eed0000ULL + static_cast<std::uint64_t>(e)));
            for (std::size_t i = n_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng.below(i)]);
            cached_epoch_ = e;
        }
        const std::size_t start = static_cast<std::size_t>(step % steps_per_epoch()) * static_cast<std::size_t>(batch_);
        const std::size_t end = std::min(n_, start + static_cast<std::size_t>(batch_));
        return {perm_.begin() + static_cast<std::ptrdiff_t>(start), perm_.begin() + static_cast<std::ptrdiff_t>(end)};
    }

private:
    std::size_t n_;
    int batch_;
    std::uint64_t seed_;
    int cached_epoch_ = -1;
    std::vector<std::size_t> perm_;
};

/// Advances training in `ck` until its step counter reaches the configured
/// epoch budget or `stop_at_step`, whichever is first. Returns the step log.
inline std::vector<StepLog> train_steps(Checkpoint& ck, const Dataset& ds, std::optional<std::uint64_t> stop_at_step = {}) {
    auto& model = ck.model;
    require(ds.size() > 0, ErrorKind::InputSize, "empty training set");
    const auto& f = ds.records.front().features;
    require(f.frames == model.config().in_height && f.bins == model.config().in_width, ErrorKind::Shape,
            "dataset tensors do not match network input");
    BatchSchedule schedule(ds.size(), ck.train.batch_size, ck.train.seed);
    const std::uint64_t total = schedule.steps_per_epoch() * static_cast<std::uint64_t>(ck.train.epochs);
    const std::uint64_t end = stop_at_step ? std::min(total, *stop_at_step) : total;
    std::vector<nn::Param*> frozen;
    if (ck.train.freeze_backbone) frozen = model.backbone_params();

    std::vector<StepLog> log;
    while (model.adam_steps() < end) {
        const std::uint64_t step = model.adam_steps();
        const auto idx = schedule.batch(step);
        const nn::Batch batch = batch_from(ds, idx);
        StepLog entry;
        entry.step = step;
        entry.epoch = schedule.epoch_of(step);
        entry.loss = model.loss_and_grad(batch, ck.mode);
        require(std::isfinite(entry.loss.total), ErrorKind::Invariant, "non-finite loss at step " + std::to_string(step));
        model.adam_step(ck.train.adam, frozen);
        log.push_back(entry);
    }
    return log;
}

struct TrainingRun {
    Checkpoint checkpoint;
    std::vector<StepLog> log;
};

inline TrainingRun train_model(const Dataset& ds, const nn::NetworkConfig& net, const TrainConfig& train, nn::TaskMode mode) {
    TrainingRun run{initial_checkpoint(ds, net, train, mode), {}};
    run.log = train_steps(run.checkpoint, ds);
    return run;
}

inline TrainingRun train_multitask(const Dataset& ds, const nn::NetworkConfig& net, const TrainConfig& train) {
    return train_model(ds, net, train, nn::TaskMode::Multitask);
}

/// Single-task model for the sequential baseline: same backbone and
/// hyperparameters, loss restricted to one head.
inline TrainingRun train_single_task(const Dataset& ds, nn::TaskMode task, const nn::NetworkConfig& net,
                                     const TrainConfig& train) {
    require(task != nn::TaskMode::Multitask, ErrorKind::Config, "single-task training needs intent or capability mode");
    return train_model(ds, net, train, task);
}

inline std::string training_log_csv(const std::vector<StepLog>& log) {
    std::string out = "step,epoch,loss_cls,loss_reg,loss_l2,loss_total\n";
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%llu,%d,%.17g,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(e.step), e.epoch,
                      e.loss.cls, e.loss.reg, e.loss.penalty, e.loss.total);
        out += buf;
    }
    return out;
}

/// Network outputs for one sample.
struct Prediction {
    std::array<double, 3> probs{};
    double rho_hat = 0.0;
};

/// Inference-mode predictions in fixed-size chunks. Batch-norm uses running
/// statistics, so results do not depend on the chunking.
inline std::vector<Prediction> predict(nn::MultitaskNet& model, const Dataset& ds, int chunk = 32) {
    std::vector<Prediction> out;
    out.reserve(ds.size());
    for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(ds.size(), start + static_cast<std::size_t>(chunk));
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto batch = batch_from(ds, idx);
        const auto o = model.forward(batch.inputs, false);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            Prediction p;
            for (std::size_t c = 0; c < 3; ++c) p.probs[c] = o.probs.data[i * 3 + c];
            p.rho_hat = o.rho_hat[i];
            out.push_back(p);
        }
    }
    return out;
}

} // namespace cpa
