#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "errors.hpp"
#include "rng.hpp"
#include "signal_core.hpp"

namespace cpa {

/// Free-space optical link between two terminals. All lengths in metres,
/// angles in radians, power in watts.
struct LinkBudget {
    double tx_power_watts = 0.5;
    double distance_m = 500e3;
    /// Optional linear range drift d(n) = d0 + v n, metres per sample.
    double drift_m_per_sample = 0.0;
    double wavelength_m = 1500e-9;
    double tx_aperture_m = 0.1;
    double rx_aperture_m = 0.2;
    double tx_efficiency = 1.0;
    double rx_efficiency = 1.0;
    double jitter_rad = 0.002;
    double divergence_rad = 0.02;

    double distance_at(std::size_t n) const { return distance_m + drift_m_per_sample * static_cast<double>(n); }

    void validate() const {
        require(tx_power_watts > 0.0 && distance_m > 0.0 && wavelength_m > 0.0 && tx_aperture_m > 0.0 &&
                    rx_aperture_m > 0.0,
                ErrorKind::Config, "link budget quantities must be strictly positive");
        require(tx_efficiency > 0.0 && tx_efficiency <= 1.0 && rx_efficiency > 0.0 && rx_efficiency <= 1.0,
                ErrorKind::Config, "optics efficiencies must lie in (0, 1]");
        require(jitter_rad >= 0.0 && divergence_rad > 0.0, ErrorKind::Config,
                "jitter must be non-negative and divergence positive");
    }

    friend bool operator==(const LinkBudget&, const LinkBudget&) = default;
};

struct NoiseConfig {
    double variance_dbw = -56.0;

    double variance() const { return std::pow(10.0, variance_dbw / 10.0); }
};

inline double db10(double power_ratio) { return 10.0 * std::log10(power_ratio); }

namespace link {

inline double aperture_gain(double aperture_m, double wavelength_m) {
    const double r = std::numbers::pi * aperture_m / wavelength_m;
    return r * r;
}

inline double path_loss(double wavelength_m, double distance_m) {
    const double r = wavelength_m / (4.0 * std::numbers::pi * distance_m);
    return r * r;
}

inline double pointing_loss(double jitter_rad, double divergence_rad) {
    return std::exp(-8.0 * jitter_rad * jitter_rad / (divergence_rad * divergence_rad));
}

/// Individual budget terms in dB; their sum is 10 log10 h^2.
struct TermsDb {
    double tx_gain;
    double rx_gain;
    double tx_efficiency;
    double rx_efficiency;
    double path_loss;
    double pointing_loss;

    double total() const { return tx_gain + rx_gain + tx_efficiency + rx_efficiency + path_loss + pointing_loss; }
};

inline TermsDb terms_db(const LinkBudget& lb, std::size_t n = 0) {
    return {db10(aperture_gain(lb.tx_aperture_m, lb.wavelength_m)),
            db10(aperture_gain(lb.rx_aperture_m, lb.wavelength_m)),
            db10(lb.tx_efficiency),
            db10(lb.rx_efficiency),
            db10(path_loss(lb.wavelength_m, lb.distance_at(n))),
            db10(pointing_loss(lb.jitter_rad, lb.divergence_rad))};
}

} // namespace link

/// Composite amplitude gain h(n) of the optical link.
inline double channel_gain(const LinkBudget& lb, std::size_t n = 0) {
    lb.validate();
    const double d = lb.distance_at(n);
    require(d > 0.0, ErrorKind::Config, "drifted distance became non-positive");
    const double g2 = link::aperture_gain(lb.tx_aperture_m, lb.wavelength_m) *
                      link::aperture_gain(lb.rx_aperture_m, lb.wavelength_m) * lb.tx_efficiency *
                      lb.rx_efficiency * link::path_loss(lb.wavelength_m, d) *
                      link::pointing_loss(lb.jitter_rad, lb.divergence_rad);
    return std::sqrt(g2);
}

/// Received power P h^2 in dBW.
inline double received_power_dbw(const LinkBudget& lb, std::size_t n = 0) {
    const double h = channel_gain(lb, n);
    return db10(lb.tx_power_watts * h * h);
}

/// Circularly-symmetric complex Gaussian noise with E|w|^2 = sigma^2.
inline ComplexSeries awgn(std::size_t length, const NoiseConfig& noise, Rng& rng) {
    require(length > 0, ErrorKind::InputSize, "awgn: length must be positive");
    const double sd = std::sqrt(noise.variance() / 2.0);
    ComplexSeries out(length);
    for (auto& v : out) {
        const double re = rng.normal() * sd;
        const double im = rng.normal() * sd;
        v = {re, im};
    }
    return out;
}

} // namespace cpa
