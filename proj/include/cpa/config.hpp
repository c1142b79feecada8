#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "assessment.hpp"
#include "channel.hpp"
#include "errors.hpp"
#include "feature_rep.hpp"
#include "mtl_net.hpp"
#include "signal_core.hpp"

namespace cpa {

using json = nlohmann::json;

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    nn::AdamConfig adam{};
    std::uint64_t seed = 7;
    bool freeze_backbone = false;

    void validate() const {
        require(epochs > 0 && batch_size > 0, ErrorKind::Config, "epochs and batch size must be positive");
        require(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
                    adam.eps > 0.0,
                ErrorKind::Config, "invalid ADAM settings");
    }
};

/// Value sets the generator samples uniformly and independently per sample.
struct ParameterSets {
    std::vector<double> legit_power_w{0.5};
    std::vector<double> legit_distance_km{500, 750, 1500};
    std::vector<double> adversary_power_w{0.25, 0.5};
    std::vector<double> adversary_distance_km{750, 1500, 3000};
    std::vector<double> noise_dbw{-56, -57};
    /// Optics shared by all terminals; power and distance are overwritten per sample.
    LinkBudget optics{};
    double obfuscation_prob = 0.5;
    double estimation_error = 0.3;

    void validate() const {
        for (const auto* set : {&legit_power_w, &legit_distance_km, &adversary_power_w, &adversary_distance_km, &noise_dbw})
            require(!set->empty(), ErrorKind::Config, "parameter sets must be non-empty");
        optics.validate();
        require(obfuscation_prob >= 0.0 && obfuscation_prob <= 1.0 && estimation_error >= 0.0 && estimation_error <= 1.0,
                ErrorKind::Config, "obfuscation probability and estimation error must lie in [0, 1]");
    }
};

struct ExperimentConfig {
    std::uint64_t master_seed = 1;
    int samples_per_kind = 200;
    int test_samples_per_kind = 100;
    ParameterSets params{};
    FrameConfig frame{};
    FeatureConfig features{};
    nn::NetworkConfig network{};
    TrainConfig train{};
    AssessmentConfig assessment{};

    void validate() const {
        require(samples_per_kind > 0 && test_samples_per_kind > 0, ErrorKind::Config, "sample counts must be positive");
        params.validate();
        frame.validate();
        features.validate();
        network.validate();
        train.validate();
        assessment.validate();
        require(network.in_height == frame.n_symbols && network.in_width == frame.n_subcarriers, ErrorKind::Config,
                "network input must be n_symbols x n_subcarriers");
    }

    /// Full-scale sizes: N = 512, N_CP = 64, M = 600, disk radius 15.
    static ExperimentConfig full_scale() {
        ExperimentConfig c;
        c.samples_per_kind = 3600;
        c.test_samples_per_kind = 3600;
        c.frame = FrameConfig::full_scale();
        c.features.disk_radius = 15;
        c.network.in_height = c.frame.n_symbols;
        c.network.in_width = c.frame.n_subcarriers;
        return c;
    }
};

// ---------------------------------------------------------------------------
// JSON mapping. Missing keys keep their defaults; unknown keys are rejected.
// ---------------------------------------------------------------------------
namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    require(j.is_object(), ErrorKind::Config, where + " must be an object");
    std::set<std::string> names(known.begin(), known.end());
    for (const auto& [k, v] : j.items())
        require(names.count(k) > 0, ErrorKind::Config, "unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("bad value for '") + key + "': " + e.what());
    }
}

} // namespace detail

inline json to_json(const FrameConfig& f) {
    return {{"n_subcarriers", f.n_subcarriers}, {"cp_len", f.cp_len}, {"n_symbols", f.n_symbols}, {"qam_order", f.qam_order}};
}

inline void from_json_into(const json& j, FrameConfig& f) {
    detail::check_keys(j, {"n_subcarriers", "cp_len", "n_symbols", "qam_order"}, "frame");
    detail::read(j, "n_subcarriers", f.n_subcarriers);
    detail::read(j, "cp_len", f.cp_len);
    detail::read(j, "n_symbols", f.n_symbols);
    detail::read(j, "qam_order", f.qam_order);
}

inline json to_json(const FeatureConfig& f) { return {{"disk_radius", f.disk_radius}}; }

inline void from_json_into(const json& j, FeatureConfig& f) {
    detail::check_keys(j, {"disk_radius"}, "features");
    detail::read(j, "disk_radius", f.disk_radius);
}

inline json to_json(const LinkBudget& l) {
    return {{"tx_power_watts", l.tx_power_watts}, {"distance_m", l.distance_m},
            {"drift_m_per_sample", l.drift_m_per_sample}, {"wavelength_m", l.wavelength_m},
            {"tx_aperture_m", l.tx_aperture_m}, {"rx_aperture_m", l.rx_aperture_m},
            {"tx_efficiency", l.tx_efficiency}, {"rx_efficiency", l.rx_efficiency},
            {"jitter_rad", l.jitter_rad}, {"divergence_rad", l.divergence_rad}};
}

inline void from_json_into(const json& j, LinkBudget& l) {
    detail::check_keys(j, {"tx_power_watts", "distance_m", "drift_m_per_sample", "wavelength_m", "tx_aperture_m",
                           "rx_aperture_m", "tx_efficiency", "rx_efficiency", "jitter_rad", "divergence_rad"},
                       "optics");
    detail::read(j, "tx_power_watts", l.tx_power_watts);
    detail::read(j, "distance_m", l.distance_m);
    detail::read(j, "drift_m_per_sample", l.drift_m_per_sample);
    detail::read(j, "wavelength_m", l.wavelength_m);
    detail::read(j, "tx_aperture_m", l.tx_aperture_m);
    detail::read(j, "rx_aperture_m", l.rx_aperture_m);
    detail::read(j, "tx_efficiency", l.tx_efficiency);
    detail::read(j, "rx_efficiency", l.rx_efficiency);
    detail::read(j, "jitter_rad", l.jitter_rad);
    detail::read(j, "divergence_rad", l.divergence_rad);
}

inline json to_json(const ParameterSets& p) {
    return {{"legit_power_w", p.legit_power_w},
            {"legit_distance_km", p.legit_distance_km},
            {"adversary_power_w", p.adversary_power_w},
            {"adversary_distance_km", p.adversary_distance_km},
            {"noise_dbw", p.noise_dbw},
            {"optics", to_json(p.optics)},
            {"obfuscation_prob", p.obfuscation_prob},
            {"estimation_error", p.estimation_error}};
}

inline void from_json_into(const json& j, ParameterSets& p) {
    detail::check_keys(j, {"legit_power_w", "legit_distance_km", "adversary_power_w", "adversary_distance_km",
                           "noise_dbw", "optics", "obfuscation_prob", "estimation_error"},
                       "params");
    detail::read(j, "legit_power_w", p.legit_power_w);
    detail::read(j, "legit_distance_km", p.legit_distance_km);
    detail::read(j, "adversary_power_w", p.adversary_power_w);
    detail::read(j, "adversary_distance_km", p.adversary_distance_km);
    detail::read(j, "noise_dbw", p.noise_dbw);
    if (j.contains("optics")) from_json_into(j.at("optics"), p.optics);
    detail::read(j, "obfuscation_prob", p.obfuscation_prob);
    detail::read(j, "estimation_error", p.estimation_error);
}

inline json to_json(const nn::NetworkConfig& n) {
    json blocks = json::array();
    for (const auto& b : n.conv_blocks) blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"stride", b.stride}});
    return {{"in_channels", n.in_channels}, {"in_height", n.in_height}, {"in_width", n.in_width},
            {"conv_blocks", blocks}, {"pooling", n.pooling}, {"batch_norm", n.batch_norm}, {"global_pool", n.global_pool},
            {"head_hidden", n.head_hidden}, {"l2_coeff", n.l2_coeff}, {"focal_gamma", n.focal_gamma},
            {"amplification", n.amplification}, {"reg_label_variance", n.reg_label_variance},
            {"bn_momentum", n.bn_momentum}, {"bn_eps", n.bn_eps}};
}

inline void from_json_into(const json& j, nn::NetworkConfig& n) {
    detail::check_keys(j, {"in_channels", "in_height", "in_width", "conv_blocks", "pooling", "batch_norm", "global_pool",
                           "head_hidden", "l2_coeff", "focal_gamma", "amplification", "reg_label_variance",
                           "bn_momentum", "bn_eps"},
                       "network");
    detail::read(j, "in_channels", n.in_channels);
    detail::read(j, "in_height", n.in_height);
    detail::read(j, "in_width", n.in_width);
    if (j.contains("conv_blocks")) {
        n.conv_blocks.clear();
        for (const auto& b : j.at("conv_blocks")) {
            detail::check_keys(b, {"filters", "kernel", "stride"}, "conv_blocks[]");
            nn::ConvBlockSpec s;
            detail::read(b, "filters", s.filters);
            detail::read(b, "kernel", s.kernel);
            detail::read(b, "stride", s.stride);
            n.conv_blocks.push_back(s);
        }
    }
    detail::read(j, "pooling", n.pooling);
    detail::read(j, "batch_norm", n.batch_norm);
    detail::read(j, "global_pool", n.global_pool);
    detail::read(j, "head_hidden", n.head_hidden);
    detail::read(j, "l2_coeff", n.l2_coeff);
    detail::read(j, "focal_gamma", n.focal_gamma);
    detail::read(j, "amplification", n.amplification);
    detail::read(j, "reg_label_variance", n.reg_label_variance);
    detail::read(j, "bn_momentum", n.bn_momentum);
    detail::read(j, "bn_eps", n.bn_eps);
}

inline json to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.adam.lr}, {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2}, {"adam_eps", t.adam.eps}, {"seed", t.seed}, {"freeze_backbone", t.freeze_backbone}};
}

inline void from_json_into(const json& j, TrainConfig& t) {
    detail::check_keys(j, {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "seed", "freeze_backbone"}, "train");
    detail::read(j, "epochs", t.epochs);
    detail::read(j, "batch_size", t.batch_size);
    detail::read(j, "lr", t.adam.lr);
    detail::read(j, "beta1", t.adam.beta1);
    detail::read(j, "beta2", t.adam.beta2);
    detail::read(j, "adam_eps", t.adam.eps);
    detail::read(j, "seed", t.seed);
    detail::read(j, "freeze_backbone", t.freeze_backbone);
}

inline json to_json(const AssessmentConfig& a) {
    return {{"high_ber", a.high_ber}, {"low_ber", a.low_ber},
            {"tie_break", a.tie_break == TieBreak::LowerIndex ? "lower_index" : "higher_index"}};
}

inline void from_json_into(const json& j, AssessmentConfig& a) {
    detail::check_keys(j, {"high_ber", "low_ber", "tie_break"}, "assessment");
    detail::read(j, "high_ber", a.high_ber);
    detail::read(j, "low_ber", a.low_ber);
    if (j.contains("tie_break")) {
        const auto s = j.at("tie_break").get<std::string>();
        require(s == "lower_index" || s == "higher_index", ErrorKind::Config, "tie_break must be lower_index or higher_index");
        a.tie_break = s == "lower_index" ? TieBreak::LowerIndex : TieBreak::HigherIndex;
    }
}

inline json to_json(const ExperimentConfig& c) {
    return {{"master_seed", c.master_seed},
            {"samples_per_kind", c.samples_per_kind},
            {"test_samples_per_kind", c.test_samples_per_kind},
            {"params", to_json(c.params)},
            {"frame", to_json(c.frame)},
            {"features", to_json(c.features)},
            {"network", to_json(c.network)},
            {"train", to_json(c.train)},
            {"assessment", to_json(c.assessment)}};
}

inline void from_json_into(const json& j, ExperimentConfig& c) {
    detail::check_keys(j, {"master_seed", "samples_per_kind", "test_samples_per_kind", "params", "frame", "features",
                           "network", "train", "assessment"},
                       "experiment config");
    detail::read(j, "master_seed", c.master_seed);
    detail::read(j, "samples_per_kind", c.samples_per_kind);
    detail::read(j, "test_samples_per_kind", c.test_samples_per_kind);
    if (j.contains("params")) from_json_into(j.at("params"), c.params);
    if (j.contains("frame")) from_json_into(j.at("frame"), c.frame);
    if (j.contains("features")) from_json_into(j.at("features"), c.features);
    if (j.contains("network")) from_json_into(j.at("network"), c.network);
    if (j.contains("train")) from_json_into(j.at("train"), c.train);
    if (j.contains("assessment")) from_json_into(j.at("assessment"), c.assessment);
    // The network input follows the frame unless set explicitly.
    const bool explicit_shape = j.contains("network") && j.at("network").contains("in_height");
    if (!explicit_shape) {
        c.network.in_height = c.frame.n_symbols;
        c.network.in_width = c.frame.n_subcarriers;
    }
}

template <typename T>
T parse_config(const std::string& text, T base = {}) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Config, std::string("config parse error: ") + e.what());
    }
    from_json_into(j, base);
    return base;
}

/// Canonical text: sorted keys, two-space indent, round-trip doubles.
template <typename T>
std::string canonical_text(const T& value) {
    return to_json(value).dump(2);
}

} // namespace cpa
