#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace cpa {

using cplx = std::complex<double>;
using Bits = std::vector<std::uint8_t>;
/// Unit-spaced discrete-time complex baseband samples.
using ComplexSeries = std::vector<cplx>;

struct FrameConfig {
    int n_subcarriers = 64;
    int cp_len = 8;
    int n_symbols = 64;
    int qam_order = 4;

    int bits_per_symbol() const { return std::countr_zero(static_cast<unsigned>(qam_order)); }
    std::size_t block_len() const { return static_cast<std::size_t>(n_subcarriers + cp_len); }
    std::size_t samples_with_cp() const { return block_len() * static_cast<std::size_t>(n_symbols); }
    std::size_t samples_without_cp() const {
        return static_cast<std::size_t>(n_subcarriers) * static_cast<std::size_t>(n_symbols);
    }
    std::size_t bits_per_sample() const {
        return samples_without_cp() * static_cast<std::size_t>(bits_per_symbol());
    }

    void validate() const {
        require(n_subcarriers > 0, ErrorKind::Config, "n_subcarriers must be positive");
        require(n_symbols > 0, ErrorKind::Config, "n_symbols must be positive");
        require(cp_len >= 0 && cp_len < n_subcarriers, ErrorKind::Config,
                "cp_len must satisfy 0 <= cp_len < n_subcarriers");
        require(qam_order == 4 || qam_order == 16 || qam_order == 64, ErrorKind::Config,
                "qam_order must be one of 4, 16, 64");
    }

    friend bool operator==(const FrameConfig&, const FrameConfig&) = default;

    /// Full-scale frame: 512 subcarriers, 64-sample CP, 600 symbols per sample.
    static FrameConfig full_scale() { return {512, 64, 600, 4}; }
};

/// N x M grid of constellation points, stored symbol-major: entry (k, s) is
/// subcarrier k of OFDM symbol s.
class SymbolGrid {
public:
    SymbolGrid() = default;
    SymbolGrid(int n_subcarriers, int n_symbols)
        : n_(n_subcarriers), m_(n_symbols),
          data_(static_cast<std::size_t>(n_subcarriers) * static_cast<std::size_t>(n_symbols)) {}

    int n_subcarriers() const { return n_; }
    int n_symbols() const { return m_; }

    cplx& operator()(int k, int s) { return data_[index(k, s)]; }
    const cplx& operator()(int k, int s) const { return data_[index(k, s)]; }

    std::span<cplx> symbol(int s) { return {data_.data() + index(0, s), static_cast<std::size_t>(n_)}; }
    std::span<const cplx> symbol(int s) const {
        return {data_.data() + index(0, s), static_cast<std::size_t>(n_)};
    }

    std::span<const cplx> values() const { return data_; }
    std::span<cplx> values() { return data_; }

private:
    std::size_t index(int k, int s) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(k);
    }

    int n_ = 0;
    int m_ = 0;
    std::vector<cplx> data_;
};

// ---------------------------------------------------------------------------
// Square QAM with Gray coding.
//
// Each symbol carries b = log2(order) bits. The first b/2 bits select the
// in-phase level and the last b/2 the quadrature level. Per axis, a bit group
// g (MSB first) is Gray-decoded to a level index i in [0, L), L = 2^(b/2), and
// mapped to amplitude (L - 1) - 2i. The grid is scaled to unit average power.
//
// 4-QAM table (b0 b1 -> symbol):
//   00 -> ( 1 + 1j)/sqrt2    01 -> ( 1 - 1j)/sqrt2
//   10 -> (-1 + 1j)/sqrt2    11 -> (-1 - 1j)/sqrt2
// ---------------------------------------------------------------------------
namespace qam {

inline int levels_per_axis(int order) { return 1 << (std::countr_zero(static_cast<unsigned>(order)) / 2); }

inline double scale(int order) {
    const double levels = levels_per_axis(order);
    return 1.0 / std::sqrt(2.0 * (levels * levels - 1.0) / 3.0);
}

inline unsigned gray_decode(unsigned g) {
    unsigned i = 0;
    for (; g != 0; g >>= 1) i ^= g;
    return i;
}

inline unsigned gray_encode(unsigned i) { return i ^ (i >> 1); }

inline double axis_level(unsigned group, int levels) {
    return static_cast<double>(levels - 1) - 2.0 * static_cast<double>(gray_decode(group));
}

inline unsigned axis_decide(double amplitude, int levels) {
    const double idx = std::round((static_cast<double>(levels - 1) - amplitude) / 2.0);
    const double clamped = std::clamp(idx, 0.0, static_cast<double>(levels - 1));
    return gray_encode(static_cast<unsigned>(clamped));
}

inline cplx map_symbol(std::span<const std::uint8_t> bits, int order) {
    const int half = static_cast<int>(bits.size()) / 2;
    const int levels = levels_per_axis(order);
    unsigned gi = 0;
    unsigned gq = 0;
    for (int b = 0; b < half; ++b) {
        gi = (gi << 1) | (bits[static_cast<std::size_t>(b)] & 1U);
        gq = (gq << 1) | (bits[static_cast<std::size_t>(half + b)] & 1U);
    }
    return scale(order) * cplx(axis_level(gi, levels), axis_level(gq, levels));
}

inline void demap_symbol(cplx symbol, int order, std::span<std::uint8_t> out) {
    const int half = static_cast<int>(out.size()) / 2;
    const int levels = levels_per_axis(order);
    const double inv = 1.0 / scale(order);
    const unsigned gi = axis_decide(symbol.real() * inv, levels);
    const unsigned gq = axis_decide(symbol.imag() * inv, levels);
    for (int b = 0; b < half; ++b) {
        const int shift = half - 1 - b;
        out[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>((gi >> shift) & 1U);
        out[static_cast<std::size_t>(half + b)] = static_cast<std::uint8_t>((gq >> shift) & 1U);
    }
}

} // namespace qam

inline SymbolGrid qam_modulate(std::span<const std::uint8_t> bits, const FrameConfig& cfg) {
    cfg.validate();
    require(bits.size() == cfg.bits_per_sample(), ErrorKind::InputSize,
            "qam_modulate expects " + std::to_string(cfg.bits_per_sample()) + " bits, got " +
                std::to_string(bits.size()));
    const auto b = static_cast<std::size_t>(cfg.bits_per_symbol());
    SymbolGrid grid(cfg.n_subcarriers, cfg.n_symbols);
    auto out = grid.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = qam::map_symbol(bits.subspan(i * b, b), cfg.qam_order);
    return grid;
}

inline Bits qam_demodulate(const SymbolGrid& grid, const FrameConfig& cfg) {
    cfg.validate();
    require(grid.n_subcarriers() == cfg.n_subcarriers && grid.n_symbols() == cfg.n_symbols, ErrorKind::Shape,
            "symbol grid does not match frame config");
    const auto b = static_cast<std::size_t>(cfg.bits_per_symbol());
    Bits bits(cfg.bits_per_sample());
    auto values = grid.values();
    for (std::size_t i = 0; i < values.size(); ++i)
        qam::demap_symbol(values[i], cfg.qam_order, std::span(bits).subspan(i * b, b));
    return bits;
}

// ---------------------------------------------------------------------------
// FFT. Iterative radix-2 for power-of-two sizes, direct summation otherwise.
// Unnormalized: forward uses e^{-j2pi nk/N}, inverse e^{+j2pi nk/N}.
// ---------------------------------------------------------------------------
namespace fft {

inline void dft_direct(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    std::vector<cplx> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc{};
        for (std::size_t t = 0; t < n; ++t) {
            const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += data[t] * std::polar(1.0, phase);
        }
        out[k] = acc;
    }
    std::copy(out.begin(), out.end(), data.begin());
}

inline void transform(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    if (n <= 1) return;
    if (!std::has_single_bit(n)) {
        dft_direct(data, inverse);
        return;
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                // Twiddles are evaluated directly to avoid drift from recurrences.
                const cplx w = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                                   static_cast<double>(len));
                const cplx u = data[i + k];
                const cplx v = data[i + k + half] * w;
                data[i + k] = u + v;
                data[i + k + half] = u - v;
            }
        }
    }
}

inline void forward(std::span<cplx> data) { transform(data, false); }
inline void inverse(std::span<cplx> data) { transform(data, true); }

} // namespace fft

inline ComplexSeries add_cp(std::span<const cplx> blocks, const FrameConfig& cfg) {
    const auto n = static_cast<std::size_t>(cfg.n_subcarriers);
    const auto cp = static_cast<std::size_t>(cfg.cp_len);
    require(n > 0 && blocks.size() % n == 0, ErrorKind::InputSize, "add_cp: length not a multiple of N");
    const std::size_t m = blocks.size() / n;
    ComplexSeries out;
    out.reserve(m * (n + cp));
    for (std::size_t s = 0; s < m; ++s) {
        auto block = blocks.subspan(s * n, n);
        out.insert(out.end(), block.end() - static_cast<std::ptrdiff_t>(cp), block.end());
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

inline ComplexSeries remove_cp(std::span<const cplx> series, const FrameConfig& cfg) {
    const std::size_t n = static_cast<std::size_t>(cfg.n_subcarriers);
    const std::size_t block = cfg.block_len();
    require(block > 0 && series.size() % block == 0, ErrorKind::InputSize,
            "remove_cp: length " + std::to_string(series.size()) + " not divisible by N+N_CP=" +
                std::to_string(block));
    const std::size_t m = series.size() / block;
    ComplexSeries out;
    out.reserve(m * n);
    for (std::size_t s = 0; s < m; ++s) {
        auto body = series.subspan(s * block + static_cast<std::size_t>(cfg.cp_len), n);
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

/// Unitary IDFT per OFDM symbol followed by CP insertion.
inline ComplexSeries ofdm_modulate(const SymbolGrid& grid, const FrameConfig& cfg) {
    cfg.validate();
    require(grid.n_subcarriers() == cfg.n_subcarriers && grid.n_symbols() == cfg.n_symbols, ErrorKind::Shape,
            "ofdm_modulate: grid shape does not match frame config");
    const auto n = static_cast<std::size_t>(cfg.n_subcarriers);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    ComplexSeries blocks(cfg.samples_without_cp());
    for (int s = 0; s < cfg.n_symbols; ++s) {
        auto dst = std::span(blocks).subspan(static_cast<std::size_t>(s) * n, n);
        auto src = grid.symbol(s);
        std::copy(src.begin(), src.end(), dst.begin());
        fft::inverse(dst);
        for (auto& v : dst) v *= norm;
    }
    return add_cp(blocks, cfg);
}

/// Unitary DFT per block and single-tap equalization with one gain per OFDM
/// symbol. Input must already be CP-stripped.
inline SymbolGrid ofdm_demodulate(std::span<const cplx> series, std::span<const cplx> h_per_symbol,
                                  const FrameConfig& cfg) {
    cfg.validate();
    require(series.size() == cfg.samples_without_cp(), ErrorKind::InputSize,
            "ofdm_demodulate: expected " + std::to_string(cfg.samples_without_cp()) + " CP-free samples");
    require(h_per_symbol.size() == static_cast<std::size_t>(cfg.n_symbols), ErrorKind::Shape,
            "ofdm_demodulate: one equalizer gain per symbol required");
    const auto n = static_cast<std::size_t>(cfg.n_subcarriers);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    SymbolGrid grid(cfg.n_subcarriers, cfg.n_symbols);
    for (int s = 0; s < cfg.n_symbols; ++s) {
        const cplx h = h_per_symbol[static_cast<std::size_t>(s)];
        require(h != cplx{}, ErrorKind::Degenerate, "ofdm_demodulate: zero equalizer gain");
        auto dst = grid.symbol(s);
        auto src = series.subspan(static_cast<std::size_t>(s) * n, n);
        std::copy(src.begin(), src.end(), dst.begin());
        fft::forward(dst);
        for (auto& v : dst) v = v * norm / h;
    }
    return grid;
}

inline SymbolGrid ofdm_demodulate(std::span<const cplx> series, cplx h_est, const FrameConfig& cfg) {
    require(h_est != cplx{}, ErrorKind::Degenerate, "ofdm_demodulate: zero equalizer gain");
    const std::vector<cplx> gains(static_cast<std::size_t>(std::max(cfg.n_symbols, 0)), h_est);
    return ofdm_demodulate(series, gains, cfg);
}

inline double compute_ber(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx) {
    require(tx.size() == rx.size(), ErrorKind::InputSize, "compute_ber: length mismatch");
    if (tx.empty()) return 0.0;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) errors += ((tx[i] ^ rx[i]) & 1U);
    return static_cast<double>(errors) / static_cast<double>(tx.size());
}

} // namespace cpa
