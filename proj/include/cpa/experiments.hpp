#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "assessment.hpp"
#include "baseline_seq.hpp"
#include "checkpoint.hpp"
#include "dataset.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "training.hpp"

namespace cpa {

struct Evaluation {
    MetricsReport report;
    std::vector<PredictionRecord> predictions;
};

inline TaskLosses task_losses(const Dataset& ds, const std::vector<Prediction>& preds, double gamma) {
    TaskLosses l;
    std::array<std::size_t, 3> count{};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        nn::Tensor q({1, 3});
        nn::Tensor p({1, 3});
        q.data[static_cast<std::size_t>(class_index(r.intent))] = 1.0;
        for (std::size_t c = 0; c < 3; ++c) p.data[c] = preds[i].probs[c];
        const double cls = nn::focal_loss(q, p, gamma);
        const double d = r.rho - preds[i].rho_hat;
        const auto k = static_cast<std::size_t>(class_index(r.intent));
        l.cls_by_intent[k] += cls;
        l.reg_by_intent[k] += d * d;
        l.cls += cls;
        l.reg += d * d;
        ++count[k];
    }
    for (std::size_t k = 0; k < 3; ++k) {
        if (count[k] == 0) continue;
        l.cls_by_intent[k] /= static_cast<double>(count[k]);
        l.reg_by_intent[k] /= static_cast<double>(count[k]);
    }
    l.cls /= static_cast<double>(ds.size());
    l.reg /= static_cast<double>(ds.size());
    return l;
}

/// Joint assessment from one multitask model.
inline Evaluation evaluate_multitask(const Dataset& ds, nn::MultitaskNet& model, const AssessmentConfig& cfg,
                                     std::string label = "multitask") {
    require(ds.size() > 0, ErrorKind::InputSize, "evaluate: empty dataset");
    const auto preds = predict(model, ds);
    Evaluation ev;
    ev.predictions.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        const auto a = assess(preds[i].probs, preds[i].rho_hat, cfg);
        ev.predictions.push_back(make_prediction_record(r.index, r.intent, r.rho, a, true, cfg));
    }
    ev.report = compute_metrics(ev.predictions, std::move(label));
    ev.report.losses = task_losses(ds, preds, model.config().focal_gamma);
    return ev;
}

inline std::string theta_label(double theta) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "sequential theta=%g", theta);
    return buf;
}

/// Cascade assessment, one report per gate threshold.
inline std::vector<Evaluation> evaluate_sequential(const Dataset& ds, const nn::MultitaskNet& regression,
                                                   const nn::MultitaskNet& classifier, const std::vector<double>& thetas,
                                                   const AssessmentConfig& cfg) {
    require(ds.size() > 0, ErrorKind::InputSize, "evaluate: empty dataset");
    require(!thetas.empty(), ErrorKind::Config, "at least one threshold is required");
    std::vector<const FeatureTensor*> feats;
    for (const auto& r : ds.records) feats.push_back(&r.features);
    std::vector<Evaluation> out;
    for (double theta : thetas) {
        SequentialAssessor seq(regression, classifier, SequentialConfig{theta, cfg});
        std::vector<std::uint8_t> classified;
        std::vector<ThreatAssessment> assessments;
        assessments.reserve(ds.size());
        classified.reserve(ds.size());
        for (std::size_t start = 0; start < feats.size(); start += 32) {
            const std::size_t end = std::min(feats.size(), start + 32);
            std::vector<std::uint8_t> flags;
            auto part = seq.assess_many(std::span(feats).subspan(start, end - start), &flags);
            assessments.insert(assessments.end(), part.begin(), part.end());
            classified.insert(classified.end(), flags.begin(), flags.end());
        }
        Evaluation ev;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& r = ds.records[i];
            ev.predictions.push_back(make_prediction_record(r.index, r.intent, r.rho, assessments[i], classified[i] != 0, cfg));
        }
        ev.report = compute_metrics(ev.predictions, theta_label(theta));
        require(ev.report.classifier_invocations == seq.classifier_invocations(), ErrorKind::Invariant,
                "classifier invocation counter disagrees with per-sample flags");
        out.push_back(std::move(ev));
    }
    return out;
}

} // namespace cpa
