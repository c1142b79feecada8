#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "threat_models.hpp"

namespace cpa {

enum class BerCategory : std::uint8_t { High, Moderate, Low };

/// Capability state S = [S1 S2 S3]; the enumerator is the index of the set bit.
enum class Capability : std::uint8_t { High = 0, Moderate = 1, Low = 2 };

inline std::string_view to_string(BerCategory c) {
    switch (c) {
    case BerCategory::High: return "high_ber";
    case BerCategory::Moderate: return "moderate_ber";
    case BerCategory::Low: return "low_ber";
    }
    return "?";
}

inline std::string_view to_string(Capability c) {
    switch (c) {
    case Capability::High: return "high";
    case Capability::Moderate: return "moderate";
    case Capability::Low: return "low";
    }
    return "?";
}

inline std::array<std::uint8_t, 3> one_hot(Capability c) {
    std::array<std::uint8_t, 3> s{};
    s[static_cast<std::size_t>(c)] = 1;
    return s;
}

enum class TieBreak : std::uint8_t { LowerIndex, HigherIndex };

struct AssessmentConfig {
    /// BER strictly above this is high.
    double high_ber = 1e-2;
    /// BER strictly below this is low; [low_ber, high_ber] is moderate.
    double low_ber = 1e-4;
    /// Default resolves argmax ties toward Deceptive (index 0).
    TieBreak tie_break = TieBreak::LowerIndex;

    void validate() const {
        require(low_ber > 0.0 && low_ber <= high_ber && high_ber < 1.0, ErrorKind::Config,
                "BER thresholds must satisfy 0 < low <= high < 1");
    }
};

inline BerCategory categorize_ber(double rho_hat, const AssessmentConfig& cfg = {}) {
    require(std::isfinite(rho_hat), ErrorKind::InputSize, "categorize_ber: non-finite log-BER");
    const double ber = std::pow(10.0, rho_hat);
    if (ber > cfg.high_ber) return BerCategory::High;
    if (ber < cfg.low_ber) return BerCategory::Low;
    return BerCategory::Moderate;
}

/// Deceptive labels count the adversary's own errors, so a high BER means a
/// weak adversary and the mapping inverts.
inline Capability capability_state(BerCategory category, ThreatKind intent) {
    if (category == BerCategory::Moderate) return Capability::Moderate;
    const bool high = category == BerCategory::High;
    if (intent == ThreatKind::Deceptive) return high ? Capability::Low : Capability::High;
    return high ? Capability::High : Capability::Low;
}

inline constexpr int kNumScales = 8;

/// Threat scale lookup, rows by intent index, columns by capability index.
inline constexpr std::array<std::array<int, 3>, 3> kThreatScaleTable{{
    {5, 6, 7}, // Deceptive
    {4, 3, 3}, // Disruptive
    {2, 1, 0}, // NonAdversarial
}};

inline int threat_scale(ThreatKind intent, Capability capability) {
    return kThreatScaleTable[static_cast<std::size_t>(class_index(intent))][static_cast<std::size_t>(capability)];
}

inline int threat_scale(std::span<const std::uint8_t> intent_one_hot, std::span<const std::uint8_t> capability_one_hot) {
    const ThreatKind intent = from_one_hot(intent_one_hot);
    require(capability_one_hot.size() == 3, ErrorKind::Invariant, "capability one-hot must have three entries");
    int set = -1;
    for (int i = 0; i < 3; ++i) {
        const auto v = capability_one_hot[static_cast<std::size_t>(i)];
        require(v <= 1, ErrorKind::Invariant, "malformed capability one-hot");
        if (v == 1) {
            require(set < 0, ErrorKind::Invariant, "capability one-hot has more than one bit set");
            set = i;
        }
    }
    require(set >= 0, ErrorKind::Invariant, "capability one-hot has no bit set");
    return threat_scale(intent, static_cast<Capability>(set));
}

struct ThreatAssessment {
    ThreatKind intent = ThreatKind::NonAdversarial;
    Capability capability = Capability::Low;
    int scale = 0;
    double rho_hat = 0.0;
    double ber_estimate = 0.0;
};

inline ThreatKind argmax_intent(std::span<const double> probs, TieBreak tie = TieBreak::LowerIndex) {
    require(probs.size() == 3, ErrorKind::Shape, "expected three class probabilities");
    int best = 0;
    for (int i = 0; i < 3; ++i) {
        const double p = probs[static_cast<std::size_t>(i)];
        const double b = probs[static_cast<std::size_t>(best)];
        if (p > b || (p == b && tie == TieBreak::HigherIndex && i > best)) best = i;
    }
    return threat_kind_from_index(best);
}

inline ThreatAssessment assess_with_intent(ThreatKind intent, double rho_hat, const AssessmentConfig& cfg = {}) {
    ThreatAssessment a;
    a.intent = intent;
    a.rho_hat = rho_hat;
    a.ber_estimate = std::pow(10.0, rho_hat);
    a.capability = capability_state(categorize_ber(rho_hat, cfg), intent);
    a.scale = threat_scale(intent, a.capability);
    return a;
}

inline ThreatAssessment assess(std::span<const double> class_probs, double rho_hat, const AssessmentConfig& cfg = {}) {
    return assess_with_intent(argmax_intent(class_probs, cfg.tie_break), rho_hat, cfg);
}

/// Ground-truth assessment from generation labels.
inline ThreatAssessment true_assessment(ThreatKind intent, double rho, const AssessmentConfig& cfg = {}) {
    return assess_with_intent(intent, rho, cfg);
}

inline constexpr std::string_view kReportHeader = "sample_id,intent,F,capability,S,scale,rho_hat,ber_hat";

inline std::string report_line(std::size_t sample_id, const ThreatAssessment& a) {
    const auto f = one_hot(a.intent);
    const auto s = one_hot(a.capability);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%s,%u%u%u,%s,%u%u%u,%d,%.17g,%.17g", sample_id,
                  std::string(to_string(a.intent)).c_str(), f[0], f[1], f[2],
                  std::string(to_string(a.capability)).c_str(), s[0], s[1], s[2], a.scale, a.rho_hat,
                  a.ber_estimate);
    return buf;
}

} // namespace cpa
