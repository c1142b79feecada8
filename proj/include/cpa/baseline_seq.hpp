#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "assessment.hpp"
#include "errors.hpp"
#include "feature_rep.hpp"
#include "mtl_net.hpp"

namespace cpa {

struct SequentialConfig {
    /// Gate: the intent classifier runs only when 10^rho_hat exceeds this.
    double threshold_ber = 1e-2;
    AssessmentConfig assessment{};

    void validate() const {
        require(threshold_ber >= 0.0 && threshold_ber < 1.0, ErrorKind::Config, "threshold BER must lie in [0, 1)");
        assessment.validate();
    }
};

/// Capability-only regression gating an intent-only classifier. Samples at
/// or under the gate are declared non-adversarial without consulting the
/// classifier; the invocation counter records every sample the classifier saw.
class SequentialAssessor {
public:
    SequentialAssessor(nn::MultitaskNet regression, nn::MultitaskNet classifier, SequentialConfig cfg)
        : regression_(std::move(regression)), classifier_(std::move(classifier)), cfg_(cfg) {
        cfg_.validate();
        require(regression_.config().same_architecture(classifier_.config()), ErrorKind::Config,
                "sequential models must share the backbone architecture");
    }

    const SequentialConfig& config() const { return cfg_; }
    void set_threshold(double threshold_ber) {
        cfg_.threshold_ber = threshold_ber;
        cfg_.validate();
    }

    std::uint64_t classifier_invocations() const { return invocations_; }
    void reset_counter() { invocations_ = 0; }

    ThreatAssessment assess(const FeatureTensor& feature) {
        const FeatureTensor* one[] = {&feature};
        return assess_many(one).front();
    }

    /// Regression on every sample, then one classifier pass over the samples
    /// above the gate. `classified`, when given, receives a per-sample flag.
    std::vector<ThreatAssessment> assess_many(std::span<const FeatureTensor* const> features,
                                              std::vector<std::uint8_t>* classified = nullptr) {
        std::vector<ThreatAssessment> out(features.size());
        if (classified) classified->assign(features.size(), 0);
        if (features.empty()) return out;
        const auto rho_hat = regression_.forward(pack(features), false).rho_hat;

        std::vector<const FeatureTensor*> gated;
        std::vector<std::size_t> where;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const double ber_hat = std::pow(10.0, rho_hat[i]);
            if (ber_hat <= cfg_.threshold_ber) {
                out[i] = assess_with_intent(ThreatKind::NonAdversarial, rho_hat[i], cfg_.assessment);
            } else {
                gated.push_back(features[i]);
                where.push_back(i);
            }
        }
        if (gated.empty()) return out;
        invocations_ += gated.size();
        const auto probs = classifier_.forward(pack(gated), false).probs;
        for (std::size_t g = 0; g < gated.size(); ++g) {
            const std::size_t i = where[g];
            const std::span<const double> p(probs.data.data() + g * 3, 3);
            out[i] = assess_with_intent(argmax_intent(p, cfg_.assessment.tie_break), rho_hat[i], cfg_.assessment);
            if (classified) (*classified)[i] = 1;
        }
        return out;
    }

private:
    nn::Tensor pack(std::span<const FeatureTensor* const> features) const {
        const auto& c = regression_.config();
        for (const auto* f : features)
            require(f->frames == c.in_height && f->bins == c.in_width, ErrorKind::Shape,
                    "feature tensor does not match the sequential models' input");
        const std::vector<int> intent(features.size(), 0);
        const std::vector<double> rho(features.size(), 0.0);
        return nn::make_batch(features, intent, rho).inputs;
    }

    nn::MultitaskNet regression_;
    nn::MultitaskNet classifier_;
    SequentialConfig cfg_;
    std::uint64_t invocations_ = 0;
};

} // namespace cpa
