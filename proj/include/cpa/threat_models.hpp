#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "channel.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "signal_core.hpp"

namespace cpa {

/// Intent classes. The enumerator value is the class index and the position
/// of the set bit in the one-hot intent vector F = [F1 F2 F3].
enum class ThreatKind : std::uint8_t {
    Deceptive = 0,
    Disruptive = 1,
    NonAdversarial = 2,
};

inline constexpr int kNumIntents = 3;
inline constexpr std::array<ThreatKind, 3> kAllThreatKinds{ThreatKind::Deceptive, ThreatKind::Disruptive,
                                                           ThreatKind::NonAdversarial};

inline constexpr int class_index(ThreatKind k) { return static_cast<int>(k); }

inline ThreatKind threat_kind_from_index(int index) {
    require(index >= 0 && index < kNumIntents, ErrorKind::Invariant, "intent index out of range");
    return static_cast<ThreatKind>(index);
}

inline std::array<std::uint8_t, 3> one_hot(ThreatKind k) {
    std::array<std::uint8_t, 3> f{};
    f[static_cast<std::size_t>(class_index(k))] = 1;
    return f;
}

inline ThreatKind from_one_hot(std::span<const std::uint8_t> f) {
    require(f.size() == 3, ErrorKind::Invariant, "intent one-hot must have three entries");
    int set = -1;
    for (int i = 0; i < 3; ++i) {
        if (f[static_cast<std::size_t>(i)] > 1) fail(ErrorKind::Invariant, "malformed intent one-hot");
        if (f[static_cast<std::size_t>(i)] == 1) {
            if (set >= 0) fail(ErrorKind::Invariant, "intent one-hot has more than one bit set");
            set = i;
        }
    }
    require(set >= 0, ErrorKind::Invariant, "intent one-hot has no bit set");
    return threat_kind_from_index(set);
}

inline std::string_view to_string(ThreatKind k) {
    switch (k) {
    case ThreatKind::Deceptive: return "deceptive";
    case ThreatKind::Disruptive: return "disruptive";
    case ThreatKind::NonAdversarial: return "non_adversarial";
    }
    return "?";
}

struct ThreatScenario {
    ThreatKind kind = ThreatKind::NonAdversarial;
    LinkBudget legit_link{};
    std::optional<LinkBudget> adversary_link{};
    /// Bernoulli on-probability of the jamming mask (disruptive only).
    double obfuscation_prob = 0.5;
    /// Fractional error of the spoofer's legitimate-channel estimate (deceptive only).
    double estimation_error = 0.3;
    NoiseConfig noise{};
    FrameConfig frame{};
};

struct SampleMeta {
    std::uint64_t seed = 0;
    ThreatKind kind = ThreatKind::NonAdversarial;
    double legit_power_w = 0.0;
    double legit_distance_m = 0.0;
    double adversary_power_w = 0.0;
    double adversary_distance_m = 0.0;
    double noise_dbw = 0.0;
    double obfuscation_prob = 0.0;
    double estimation_error = 0.0;
};

struct LabeledSample {
    ComplexSeries received; ///< CP intact
    ThreatKind intent = ThreatKind::NonAdversarial;
    double rho = 0.0;
    double raw_ber = 0.0;
    SampleMeta meta{};
};

/// Capability label: log10 of the BER floored at one error per sample.
inline double label_rho(double ber, const FrameConfig& frame) {
    require(ber >= 0.0 && ber <= 1.0, ErrorKind::InputSize, "label_rho: BER must lie in [0, 1]");
    const double floor = 1.0 / static_cast<double>(frame.bits_per_sample());
    return std::log10(std::max(ber, floor));
}

namespace detail {

// Independent streams per signal component so the legitimate path draws the
// same values whatever threat is layered on top of it.
enum Stream : std::uint64_t { LegitBits = 1, Noise = 2, Jammer = 3, Mask = 4, MaliciousBits = 5 };

/// Transmitted CO-OFDM waveform (CP intact), unit average power, plus its bits.
struct Waveform {
    Bits bits;
    ComplexSeries samples;
};

inline Waveform random_waveform(const FrameConfig& frame, std::uint64_t seed) {
    Rng rng(seed);
    Waveform w;
    w.bits = rng.bits(frame.bits_per_sample());
    w.samples = ofdm_modulate(qam_modulate(w.bits, frame), frame);
    return w;
}

/// Amplitude gain sqrt(P) h(n) at every transmitted sample.
inline std::vector<double> amplitude_track(const LinkBudget& lb, std::size_t length) {
    std::vector<double> a(length);
    const double sp = std::sqrt(lb.tx_power_watts);
    if (lb.drift_m_per_sample == 0.0) {
        std::fill(a.begin(), a.end(), sp * channel_gain(lb, 0));
    } else {
        for (std::size_t n = 0; n < length; ++n) a[n] = sp * channel_gain(lb, n);
    }
    return a;
}

/// Equalizer gain per OFDM symbol: the amplitude at the middle of its body.
inline std::vector<cplx> per_symbol_gains(const LinkBudget& lb, const FrameConfig& frame) {
    std::vector<cplx> g(static_cast<std::size_t>(frame.n_symbols));
    const double sp = std::sqrt(lb.tx_power_watts);
    for (std::size_t s = 0; s < g.size(); ++s) {
        const std::size_t mid = s * frame.block_len() + static_cast<std::size_t>(frame.cp_len) +
                                static_cast<std::size_t>(frame.n_subcarriers) / 2;
        g[s] = sp * channel_gain(lb, lb.drift_m_per_sample == 0.0 ? 0 : mid);
    }
    return g;
}

inline double receiver_ber(const ComplexSeries& received, const Bits& reference, const LinkBudget& eq_link,
                           const FrameConfig& frame) {
    const auto body = remove_cp(received, frame);
    const auto grid = ofdm_demodulate(body, per_symbol_gains(eq_link, frame), frame);
    return compute_ber(reference, qam_demodulate(grid, frame));
}

inline SampleMeta base_meta(const ThreatScenario& s, std::uint64_t seed) {
    SampleMeta m;
    m.seed = seed;
    m.kind = s.kind;
    m.legit_power_w = s.legit_link.tx_power_watts;
    m.legit_distance_m = s.legit_link.distance_m;
    if (s.adversary_link) {
        m.adversary_power_w = s.adversary_link->tx_power_watts;
        m.adversary_distance_m = s.adversary_link->distance_m;
    }
    m.noise_dbw = s.noise.variance_dbw;
    m.obfuscation_prob = s.obfuscation_prob;
    m.estimation_error = s.estimation_error;
    return m;
}

inline void finish_label(LabeledSample& out, double ber, const FrameConfig& frame) {
    out.raw_ber = ber;
    out.rho = label_rho(ber, frame);
}

inline void check_scenario(const ThreatScenario& s, ThreatKind expected) {
    require(s.kind == expected, ErrorKind::Config, "scenario kind does not match generator");
    s.frame.validate();
    s.legit_link.validate();
    if (expected != ThreatKind::NonAdversarial) {
        require(s.adversary_link.has_value(), ErrorKind::Config, "adversarial scenario requires an adversary link");
        s.adversary_link->validate();
    }
}

} // namespace detail

/// y = h_l x + w, labeled with the legitimate-signal BER.
inline LabeledSample gen_non_adversarial(const ThreatScenario& s, std::uint64_t seed) {
    detail::check_scenario(s, ThreatKind::NonAdversarial);
    const auto legit = detail::random_waveform(s.frame, derive_seed(seed, detail::LegitBits));
    const auto a = detail::amplitude_track(s.legit_link, legit.samples.size());
    Rng noise_rng(derive_seed(seed, detail::Noise));
    const auto w = awgn(legit.samples.size(), s.noise, noise_rng);

    LabeledSample out;
    out.intent = ThreatKind::NonAdversarial;
    out.meta = detail::base_meta(s, seed);
    out.received.resize(legit.samples.size());
    for (std::size_t n = 0; n < out.received.size(); ++n) out.received[n] = a[n] * legit.samples[n] + w[n];
    detail::finish_label(out, detail::receiver_ber(out.received, legit.bits, s.legit_link, s.frame), s.frame);
    return out;
}

/// y = h_l x + h_j alpha(n) j(n) + w with j ~ CN(0, P_adv) and alpha ~ Bernoulli(p).
/// Labeled with the legitimate-signal BER.
inline LabeledSample gen_disruptive(const ThreatScenario& s, std::uint64_t seed) {
    detail::check_scenario(s, ThreatKind::Disruptive);
    require(s.obfuscation_prob >= 0.0 && s.obfuscation_prob <= 1.0, ErrorKind::Config,
            "obfuscation probability must lie in [0, 1]");
    const auto legit = detail::random_waveform(s.frame, derive_seed(seed, detail::LegitBits));
    const std::size_t len = legit.samples.size();
    const auto a = detail::amplitude_track(s.legit_link, len);
    Rng noise_rng(derive_seed(seed, detail::Noise));
    const auto w = awgn(len, s.noise, noise_rng);

    const auto& adv = *s.adversary_link;
    const auto hj = detail::amplitude_track(adv, len);
    Rng jam_rng(derive_seed(seed, detail::Jammer));
    Rng mask_rng(derive_seed(seed, detail::Mask));
    // hj already carries sqrt(P_adv); j(n) is drawn at unit power.
    const auto j = awgn(len, NoiseConfig{0.0}, jam_rng);

    LabeledSample out;
    out.intent = ThreatKind::Disruptive;
    out.meta = detail::base_meta(s, seed);
    out.received.resize(len);
    for (std::size_t n = 0; n < len; ++n) {
        const double alpha = mask_rng.bernoulli(s.obfuscation_prob) ? 1.0 : 0.0;
        out.received[n] = a[n] * legit.samples[n] + hj[n] * alpha * j[n] + w[n];
    }
    detail::finish_label(out, detail::receiver_ber(out.received, legit.bits, s.legit_link, s.frame), s.frame);
    return out;
}

/// y = h_l x + x_s + w with x_s = h_s s - h_l (1 - xi) x. The receiver is
/// assumed to lock onto the spoofed channel, so the label is the BER of the
/// malicious bits after equalizing by h_s.
inline LabeledSample gen_deceptive(const ThreatScenario& s, std::uint64_t seed) {
    detail::check_scenario(s, ThreatKind::Deceptive);
    require(s.estimation_error >= 0.0 && s.estimation_error <= 1.0, ErrorKind::Config,
            "estimation error must lie in [0, 1]");
    const auto legit = detail::random_waveform(s.frame, derive_seed(seed, detail::LegitBits));
    const auto spoof = detail::random_waveform(s.frame, derive_seed(seed, detail::MaliciousBits));
    const std::size_t len = legit.samples.size();
    const auto a = detail::amplitude_track(s.legit_link, len);
    const auto& adv = *s.adversary_link;
    const auto hs = detail::amplitude_track(adv, len);
    Rng noise_rng(derive_seed(seed, detail::Noise));
    const auto w = awgn(len, s.noise, noise_rng);

    LabeledSample out;
    out.intent = ThreatKind::Deceptive;
    out.meta = detail::base_meta(s, seed);
    out.received.resize(len);
    for (std::size_t n = 0; n < len; ++n) {
        const double a_est = a[n] * (1.0 - s.estimation_error);
        const cplx xs = hs[n] * spoof.samples[n] - a_est * legit.samples[n];
        out.received[n] = a[n] * legit.samples[n] + xs + w[n];
    }
    detail::finish_label(out, detail::receiver_ber(out.received, spoof.bits, adv, s.frame), s.frame);
    return out;
}

inline LabeledSample generate_sample(const ThreatScenario& s, std::uint64_t seed) {
    switch (s.kind) {
    case ThreatKind::NonAdversarial: return gen_non_adversarial(s, seed);
    case ThreatKind::Disruptive: return gen_disruptive(s, seed);
    case ThreatKind::Deceptive: return gen_deceptive(s, seed);
    }
    fail(ErrorKind::Invariant, "unknown threat kind");
}

} // namespace cpa
