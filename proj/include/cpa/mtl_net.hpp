#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "feature_rep.hpp"
#include "layers.hpp"
#include "losses.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace cpa::nn {

struct ConvBlockSpec {
    int filters = 8;
    int kernel = 3;
    int stride = 1;

    friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

/// Shared convolutional backbone with a 3-way softmax head and a scalar
/// regression head. Each block is conv -> ReLU -> 2x2 average pool -> batch norm.
struct NetworkConfig {
    int in_channels = 3;
    int in_height = 64;
    int in_width = 64;
    std::vector<ConvBlockSpec> conv_blocks{{8, 3, 1}, {16, 3, 1}, {32, 3, 1}};
    bool pooling = true;
    bool batch_norm = true;
    /// Average each backbone channel over space before the heads instead of
    /// flattening.
    bool global_pool = false;
    /// Width of the hidden dense layer in each head; 0 connects the backbone
    /// output straight to the head outputs.
    int head_hidden = 32;
    double l2_coeff = 1e-4;
    double focal_gamma = 2.0;
    double amplification = 10.0;
    double reg_label_variance = 1.0;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;

    void validate() const {
        require(in_channels > 0 && in_height > 0 && in_width > 0, ErrorKind::Config, "input shape must be positive");
        require(!conv_blocks.empty(), ErrorKind::Config, "at least one conv block is required");
        for (const auto& b : conv_blocks)
            require(b.filters > 0 && b.kernel > 0 && b.stride > 0, ErrorKind::Config, "conv block fields must be positive");
        require(head_hidden >= 0, ErrorKind::Config, "head_hidden must be non-negative");
        require(l2_coeff >= 0.0 && focal_gamma >= 0.0, ErrorKind::Config, "l2 and gamma must be non-negative");
        require(amplification > 0.0 && reg_label_variance > 0.0, ErrorKind::Config,
                "amplification and label variance must be positive");
        require(bn_momentum >= 0.0 && bn_momentum < 1.0 && bn_eps > 0.0, ErrorKind::Config, "bad batch-norm settings");
    }

    /// Backbone and head layout; hyperparameters excluded.
    bool same_architecture(const NetworkConfig& o) const {
        return in_channels == o.in_channels && in_height == o.in_height && in_width == o.in_width &&
               conv_blocks == o.conv_blocks && pooling == o.pooling && batch_norm == o.batch_norm && global_pool == o.global_pool &&
               head_hidden == o.head_hidden;
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class TaskMode : std::uint8_t { Multitask, Intent, Capability };

inline std::string_view to_string(TaskMode m) {
    switch (m) {
    case TaskMode::Multitask: return "multitask";
    case TaskMode::Intent: return "intent";
    case TaskMode::Capability: return "capability";
    }
    return "?";
}

inline TaskMode task_mode_from_string(std::string_view s) {
    if (s == "multitask") return TaskMode::Multitask;
    if (s == "intent") return TaskMode::Intent;
    if (s == "capability") return TaskMode::Capability;
    fail(ErrorKind::Config, "unknown task mode '" + std::string(s) + "'");
}

struct Batch {
    Tensor inputs;              ///< (B, 3, H, W)
    std::vector<int> intent;    ///< class index per sample
    std::vector<double> rho;    ///< log10 BER label per sample

    int size() const { return inputs.shape.empty() ? 0 : inputs.dim(0); }

    Tensor one_hot() const {
        Tensor q({static_cast<int>(intent.size()), 3});
        for (std::size_t i = 0; i < intent.size(); ++i) q.data[i * 3 + static_cast<std::size_t>(intent[i])] = 1.0;
        return q;
    }
};

/// Packs channel-last feature tensors into an NCHW batch.
inline Batch make_batch(std::span<const FeatureTensor* const> features, std::span<const int> intent,
                        std::span<const double> rho) {
    require(features.size() == intent.size() && features.size() == rho.size(), ErrorKind::Shape,
            "batch fields have inconsistent lengths");
    require(!features.empty(), ErrorKind::InputSize, "empty batch");
    const int h = features[0]->frames;
    const int w = features[0]->bins;
    Batch b;
    b.inputs = Tensor({static_cast<int>(features.size()), 3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < features.size(); ++n) {
        const auto& f = *features[n];
        require(f.frames == h && f.bins == w, ErrorKind::Shape, "feature tensors in a batch differ in shape");
        for (std::size_t i = 0; i < plane; ++i)
            for (std::size_t c = 0; c < 3; ++c) b.inputs.data[(n * 3 + c) * plane + i] = f.data[i * 3 + c];
        require(intent[n] >= 0 && intent[n] < 3, ErrorKind::Invariant, "intent label out of range");
    }
    b.intent.assign(intent.begin(), intent.end());
    b.rho.assign(rho.begin(), rho.end());
    return b;
}

struct Output {
    Tensor logits;               ///< (B, 3)
    Tensor probs;                ///< (B, 3), rows sum to one
    std::vector<double> rho_hat; ///< (B)
};

struct LossBreakdown {
    double cls = 0.0;
    double reg = 0.0;
    double penalty = 0.0;
    double total = 0.0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class MultitaskNet {
public:
    MultitaskNet() = default;

    /// He-normal kernels, zero biases, unit BN scale, zero BN shift.
    MultitaskNet(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(seed);
        int c = cfg_.in_channels;
        for (std::size_t i = 0; i < cfg_.conv_blocks.size(); ++i) {
            const auto& spec = cfg_.conv_blocks[i];
            const std::string prefix = "backbone.block" + std::to_string(i);
            backbone_.add(std::make_unique<Conv2D>(prefix + ".conv", c, spec.filters, spec.kernel, spec.stride, rng));
            backbone_.add(std::make_unique<ReLU>());
            if (cfg_.pooling) backbone_.add(std::make_unique<AvgPool2>());
            if (cfg_.batch_norm)
                backbone_.add(std::make_unique<BatchNorm2D>(prefix + ".bn", spec.filters, cfg_.bn_momentum, cfg_.bn_eps));
            c = spec.filters;
        }
        if (cfg_.global_pool)
            backbone_.add(std::make_unique<GlobalAvgPool>());
        else
            backbone_.add(std::make_unique<Flatten>());
        const auto feat = backbone_.output_shape({1, cfg_.in_channels, cfg_.in_height, cfg_.in_width});
        const int width = feat[1];
        build_head(cls_head_, "cls", width, 3, rng);
        build_head(reg_head_, "reg", width, 1, rng);
    }

    const NetworkConfig& config() const { return cfg_; }
    NetworkConfig& config() { return cfg_; }

    Output forward(const Tensor& x, bool train) {
        require(x.rank() == 4 && x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.in_height &&
                    x.dim(3) == cfg_.in_width,
                ErrorKind::Shape, "network input " + shape_string(x.shape) + " does not match config");
        const Tensor feat = backbone_.forward(x, train);
        Output out;
        out.logits = cls_head_.forward(feat, train);
        out.probs = softmax(out.logits);
        const Tensor r = reg_head_.forward(feat, train);
        out.rho_hat = r.data;
        return out;
    }

    /// Backpropagates head gradients into every parameter's grad.
    void backward(const Tensor& dlogits, std::span<const double> drho) {
        Tensor dr({static_cast<int>(drho.size()), 1});
        std::copy(drho.begin(), drho.end(), dr.data.begin());
        Tensor dfeat = cls_head_.backward(dlogits);
        const Tensor dfeat_reg = reg_head_.backward(dr);
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat.data[i] += dfeat_reg.data[i];
        backbone_.backward(dfeat);
    }

    void zero_grad() {
        for (auto* p : params()) p->grad.fill(0.0);
    }

    /// Forward in train mode, loss for the selected task(s), and gradients of
    /// that loss (including the L2 term) in every Param::grad.
    LossBreakdown loss_and_grad(const Batch& batch, TaskMode mode) {
        zero_grad();
        Output out = forward(batch.inputs, true);
        const Tensor q = batch.one_hot();
        LossBreakdown lb;
        lb.cls = focal_loss(q, out.probs, cfg_.focal_gamma);
        lb.reg = mse_log_ber(batch.rho, out.rho_hat);
        const double w_reg = regression_weight(cfg_.amplification, cfg_.reg_label_variance);
        const bool use_cls = mode != TaskMode::Capability;
        const bool use_reg = mode != TaskMode::Intent;

        Tensor dlogits = use_cls ? focal_loss_grad_logits(q, out.probs, cfg_.focal_gamma) : Tensor(out.logits.shape);
        std::vector<double> drho(out.rho_hat.size(), 0.0);
        if (use_reg) {
            drho = mse_grad(batch.rho, out.rho_hat);
            for (auto& g : drho) g *= w_reg;
        }
        backward(dlogits, drho);

        const auto ps = task_params(mode);
        lb.penalty = l2_penalty(ps, cfg_.l2_coeff);
        for (auto* p : ps) {
            if (!p->decay) continue;
            for (std::size_t i = 0; i < p->value.size(); ++i) p->grad.data[i] += 2.0 * cfg_.l2_coeff * p->value.data[i];
        }
        lb.total = (use_cls ? lb.cls : 0.0) + (use_reg ? w_reg * lb.reg : 0.0) + lb.penalty;
        return lb;
    }

    std::vector<Param*> params() {
        auto out = backbone_.params();
        for (auto* p : cls_head_.params()) out.push_back(p);
        for (auto* p : reg_head_.params()) out.push_back(p);
        return out;
    }

    std::vector<Param*> backbone_params() { return backbone_.params(); }

    /// Parameters that the loss of `mode` depends on; the unused head of a
    /// single-task model is excluded.
    std::vector<Param*> task_params(TaskMode mode) {
        auto out = backbone_.params();
        if (mode != TaskMode::Capability)
            for (auto* p : cls_head_.params()) out.push_back(p);
        if (mode != TaskMode::Intent)
            for (auto* p : reg_head_.params()) out.push_back(p);
        return out;
    }

    std::vector<Buffer*> buffers() { return backbone_.buffers(); }

    std::uint64_t adam_steps() const { return adam_steps_; }
    void set_adam_steps(std::uint64_t s) { adam_steps_ = s; }

    /// One bias-corrected ADAM update on every parameter. Parameters listed
    /// in `frozen` keep their values and moments.
    void adam_step(const AdamConfig& opt, std::span<Param* const> frozen = {}) {
        ++adam_steps_;
        const double t = static_cast<double>(adam_steps_);
        const double c1 = 1.0 - std::pow(opt.beta1, t);
        const double c2 = 1.0 - std::pow(opt.beta2, t);
        for (auto* p : params()) {
            if (std::find(frozen.begin(), frozen.end(), p) != frozen.end()) continue;
            apply_adam(*p, opt, c1, c2);
        }
    }

    static void apply_adam(Param& p, const AdamConfig& opt, double c1, double c2) {
        require(p.grad.same_shape(p.value) && p.m.same_shape(p.value) && p.v.same_shape(p.value), ErrorKind::Shape,
                "adam: shape mismatch in " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            p.m.data[i] = opt.beta1 * p.m.data[i] + (1.0 - opt.beta1) * g;
            p.v.data[i] = opt.beta2 * p.v.data[i] + (1.0 - opt.beta2) * g * g;
            const double mhat = p.m.data[i] / c1;
            const double vhat = p.v.data[i] / c2;
            p.value.data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }

private:
    void build_head(Sequential& head, const std::string& name, int in, int out, Rng& rng) const {
        if (cfg_.head_hidden > 0) {
            head.add(std::make_unique<Dense>(name + ".hidden", in, cfg_.head_hidden, rng));
            head.add(std::make_unique<ReLU>());
            in = cfg_.head_hidden;
        }
        head.add(std::make_unique<Dense>(name + ".out", in, out, rng));
    }

    NetworkConfig cfg_;
    Sequential backbone_;
    Sequential cls_head_;
    Sequential reg_head_;
    std::uint64_t adam_steps_ = 0;
};

} // namespace cpa::nn
