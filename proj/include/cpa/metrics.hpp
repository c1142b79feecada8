#pragma once

#include <array>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "assessment.hpp"
#include "errors.hpp"
#include "threat_models.hpp"

namespace cpa {

/// One evaluated sample, as dumped to the predictions CSV.
struct PredictionRecord {
    std::uint64_t index = 0;
    ThreatKind true_intent = ThreatKind::NonAdversarial;
    ThreatKind pred_intent = ThreatKind::NonAdversarial;
    double true_rho = 0.0;
    double rho_hat = 0.0;
    BerCategory true_category = BerCategory::Low;
    BerCategory pred_category = BerCategory::Low;
    int true_scale = 0;
    int pred_scale = 0;
    bool classified = true;
};

inline PredictionRecord make_prediction_record(std::uint64_t index, ThreatKind true_intent, double true_rho,
                                               const ThreatAssessment& predicted, bool classified,
                                               const AssessmentConfig& cfg) {
    PredictionRecord r;
    r.index = index;
    r.true_intent = true_intent;
    r.true_rho = true_rho;
    r.true_category = categorize_ber(true_rho, cfg);
    r.true_scale = true_assessment(true_intent, true_rho, cfg).scale;
    r.pred_intent = predicted.intent;
    r.rho_hat = predicted.rho_hat;
    r.pred_category = categorize_ber(predicted.rho_hat, cfg);
    r.pred_scale = predicted.scale;
    r.classified = classified;
    return r;
}

/// Mean per-task losses, overall and by true intent.
struct TaskLosses {
    std::array<double, 3> cls_by_intent{};
    std::array<double, 3> reg_by_intent{};
    double cls = 0.0;
    double reg = 0.0;
};

struct ScaleRow {
    int scale = 0;
    std::size_t support = 0;
    std::size_t predicted = 0;
    std::size_t correct = 0;
    std::optional<double> precision;
    std::optional<double> recall;
};

struct MetricsReport {
    std::string label;
    std::size_t total = 0;
    std::array<std::array<std::size_t, 3>, 3> intent_confusion{};
    std::array<std::array<std::size_t, kNumScales>, kNumScales> scale_confusion{};
    std::array<std::optional<double>, 3> precision{};
    std::array<std::optional<double>, 3> recall{};
    double intent_accuracy = 0.0;
    double capability_accuracy = 0.0;
    /// Fraction of samples whose threat scale matches the ground truth.
    double overall_accuracy = 0.0;
    std::array<ScaleRow, kNumScales> per_scale{};
    std::optional<TaskLosses> losses;
    std::size_t classifier_invocations = 0;
};

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

/// Accuracy and recall by threat scale; scales without support report n/a.
inline std::array<ScaleRow, kNumScales> report_per_scale(std::span<const PredictionRecord> preds) {
    std::array<ScaleRow, kNumScales> rows{};
    for (int s = 0; s < kNumScales; ++s) rows[static_cast<std::size_t>(s)].scale = s;
    for (const auto& p : preds) {
        require(p.true_scale >= 0 && p.true_scale < kNumScales && p.pred_scale >= 0 && p.pred_scale < kNumScales,
                ErrorKind::Invariant, "threat scale out of range");
        auto& t = rows[static_cast<std::size_t>(p.true_scale)];
        ++t.support;
        if (p.pred_scale == p.true_scale) ++t.correct;
        ++rows[static_cast<std::size_t>(p.pred_scale)].predicted;
    }
    for (auto& r : rows) {
        r.precision = ratio(r.correct, r.predicted);
        r.recall = ratio(r.correct, r.support);
    }
    return rows;
}

inline MetricsReport compute_metrics(std::span<const PredictionRecord> preds, std::string label = {}) {
    require(!preds.empty(), ErrorKind::InputSize, "cannot compute metrics on an empty prediction set");
    MetricsReport m;
    m.label = std::move(label);
    m.total = preds.size();
    std::size_t intent_ok = 0;
    std::size_t cap_ok = 0;
    std::size_t scale_ok = 0;
    for (const auto& p : preds) {
        const auto t = static_cast<std::size_t>(class_index(p.true_intent));
        const auto q = static_cast<std::size_t>(class_index(p.pred_intent));
        ++m.intent_confusion[t][q];
        ++m.scale_confusion[static_cast<std::size_t>(p.true_scale)][static_cast<std::size_t>(p.pred_scale)];
        intent_ok += t == q;
        cap_ok += p.true_category == p.pred_category;
        scale_ok += p.true_scale == p.pred_scale;
        m.classifier_invocations += p.classified ? 1 : 0;
    }
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t support = 0;
        std::size_t predicted = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            support += m.intent_confusion[c][j];
            predicted += m.intent_confusion[j][c];
        }
        m.precision[c] = ratio(m.intent_confusion[c][c], predicted);
        m.recall[c] = ratio(m.intent_confusion[c][c], support);
    }
    const double n = static_cast<double>(preds.size());
    m.intent_accuracy = static_cast<double>(intent_ok) / n;
    m.capability_accuracy = static_cast<double>(cap_ok) / n;
    m.overall_accuracy = static_cast<double>(scale_ok) / n;
    m.per_scale = report_per_scale(preds);
    return m;
}

// ---------------------------------------------------------------------------
// CSV output. Column order is fixed.
// ---------------------------------------------------------------------------
inline constexpr const char* kPredictionsHeader =
    "index,true_intent,pred_intent,true_rho,rho_hat,true_ber_category,pred_ber_category,true_scale,pred_scale,classified";

inline std::string predictions_csv(std::span<const PredictionRecord> preds) {
    std::string out = std::string(kPredictionsHeader) + "\n";
    char buf[320];
    for (const auto& p : preds) {
        std::snprintf(buf, sizeof buf, "%llu,%d,%d,%.17g,%.17g,%d,%d,%d,%d,%d\n", static_cast<unsigned long long>(p.index),
                      class_index(p.true_intent), class_index(p.pred_intent), p.true_rho, p.rho_hat,
                      static_cast<int>(p.true_category), static_cast<int>(p.pred_category), p.true_scale, p.pred_scale,
                      p.classified ? 1 : 0);
        out += buf;
    }
    return out;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

/// Summary rows: label, per-intent precision and recall (deceptive,
/// disruptive, non-adversarial), accuracies, classifier invocations.
inline constexpr const char* kSummaryHeader =
    "label,precision_deceptive,precision_disruptive,precision_non_adversarial,recall_deceptive,recall_disruptive,"
    "recall_non_adversarial,intent_accuracy,capability_accuracy,overall_accuracy,classifier_invocations,samples";

inline std::string summary_row(const MetricsReport& m) {
    std::ostringstream os;
    os << m.label;
    for (const auto& p : m.precision) os << ',' << fmt_opt(p);
    for (const auto& r : m.recall) os << ',' << fmt_opt(r);
    os << ',' << fmt_opt(m.intent_accuracy) << ',' << fmt_opt(m.capability_accuracy) << ','
       << fmt_opt(m.overall_accuracy) << ',' << m.classifier_invocations << ',' << m.total;
    return os.str();
}

inline std::string per_scale_csv(const MetricsReport& m) {
    std::ostringstream os;
    os << "label,scale,support,predicted,correct,precision,recall\n";
    for (const auto& r : m.per_scale)
        os << m.label << ',' << r.scale << ',' << r.support << ',' << r.predicted << ',' << r.correct << ','
           << fmt_opt(r.precision) << ',' << fmt_opt(r.recall) << '\n';
    return os.str();
}

inline std::string task_losses_csv(const MetricsReport& m) {
    std::ostringstream os;
    os << "label,task,deceptive,disruptive,non_adversarial,overall\n";
    if (!m.losses) return os.str();
    const auto& l = *m.losses;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,intent,%.9g,%.9g,%.9g,%.9g\n%s,capability,%.9g,%.9g,%.9g,%.9g\n", m.label.c_str(),
                  l.cls_by_intent[0], l.cls_by_intent[1], l.cls_by_intent[2], l.cls, m.label.c_str(), l.reg_by_intent[0],
                  l.reg_by_intent[1], l.reg_by_intent[2], l.reg);
    os << buf;
    return os.str();
}

/// Human-readable report.
inline std::string format_report(const MetricsReport& m) {
    std::ostringstream os;
    os << "== " << m.label << " (" << m.total << " samples)\n";
    os << "intent accuracy     " << fmt_opt(m.intent_accuracy) << "\n";
    os << "capability accuracy " << fmt_opt(m.capability_accuracy) << "\n";
    os << "overall accuracy    " << fmt_opt(m.overall_accuracy) << "\n";
    os << "classifier calls    " << m.classifier_invocations << "\n";
    os << "intent          precision  recall\n";
    for (auto k : kAllThreatKinds) {
        const auto c = static_cast<std::size_t>(class_index(k));
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-15s %-10s %s\n", std::string(to_string(k)).c_str(), fmt_opt(m.precision[c]).c_str(),
                      fmt_opt(m.recall[c]).c_str());
        os << buf;
    }
    os << "intent confusion (rows true, cols predicted; dec dis non)\n";
    for (const auto& row : m.intent_confusion) os << "  " << row[0] << ' ' << row[1] << ' ' << row[2] << '\n';
    os << "scale support predicted precision recall\n";
    for (const auto& r : m.per_scale) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%5d %7zu %9zu %-9s %s\n", r.scale, r.support, r.predicted,
                      fmt_opt(r.precision).c_str(), fmt_opt(r.recall).c_str());
        os << buf;
    }
    return os.str();
}

} // namespace cpa
