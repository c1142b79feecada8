#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numbers>

#include "cpa/channel.hpp"
#include "cpa/signal_core.hpp"
#include "oracles.hpp"

using namespace cpa;

namespace {

std::vector<cplx> random_complex(std::size_t n, Rng& rng) {
    std::vector<cplx> v(n);
    for (auto& z : v) z = {rng.normal(), rng.normal()};
    return v;
}

FrameConfig small_frame(int n, int cp, int m, int order) { return {n, cp, m, order}; }

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

} // namespace

TEST(Qam, GrayTableFor4Qam) {
    const double r = 1.0 / std::sqrt(2.0);
    const std::uint8_t b00[] = {0, 0}, b01[] = {0, 1}, b10[] = {1, 0}, b11[] = {1, 1};
    EXPECT_NEAR(std::abs(qam::map_symbol(b00, 4) - cplx(r, r)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(qam::map_symbol(b01, 4) - cplx(r, -r)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(qam::map_symbol(b10, 4) - cplx(-r, r)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(qam::map_symbol(b11, 4) - cplx(-r, -r)), 0.0, 1e-15);
}

TEST(Qam, ExhaustiveRoundTripAndUnitPower) {
    for (int order : {4, 16, 64}) {
        const int b = std::countr_zero(unsigned(order));
        double power = 0.0;
        std::vector<cplx> points;
        for (int v = 0; v < order; ++v) {
            std::vector<std::uint8_t> bits(b), back(b);
            for (int i = 0; i < b; ++i) bits[i] = (v >> (b - 1 - i)) & 1;
            const cplx s = qam::map_symbol(bits, order);
            qam::demap_symbol(s, order, back);
            EXPECT_EQ(bits, back) << "order " << order << " value " << v;
            power += std::norm(s);
            points.push_back(s);
        }
        EXPECT_NEAR(power / order, 1.0, 1e-12);
        // Distinct points, and Gray property: nearest neighbours differ in one bit.
        const double dmin = 2.0 * qam::scale(order);
        for (int a = 0; a < order; ++a)
            for (int c = a + 1; c < order; ++c) {
                const double d = std::abs(points[a] - points[c]);
                EXPECT_GT(d, 1e-9);
                if (std::abs(d - dmin) < 1e-9) {
                    EXPECT_EQ(std::popcount(unsigned(a ^ c)), 1);
                }
            }
    }
}

TEST(Qam, AllZeroBitsGiveConstantGrid) {
    const auto cfg = small_frame(8, 2, 4, 4);
    const Bits bits(cfg.bits_per_sample(), 0);
    const auto grid = qam_modulate(bits, cfg);
    for (const auto& v : grid.values()) EXPECT_EQ(v, grid.values()[0]);
}

TEST(Qam, Random16QamRoundTrip) {
    const auto cfg = small_frame(16, 4, 8, 16);
    Rng rng(3);
    const Bits bits = rng.bits(cfg.bits_per_sample());
    EXPECT_EQ(qam_demodulate(qam_modulate(bits, cfg), cfg), bits);
}

TEST(Qam, RejectsWrongBitCount) {
    const auto cfg = small_frame(8, 2, 4, 4);
    const Bits bits(cfg.bits_per_sample() - 1, 0);
    EXPECT_THROW(qam_modulate(bits, cfg), Error);
}

TEST(Fft, MatchesNaiveDftForwardAndInverse) {
    Rng rng(11);
    for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 12u, 16u, 64u}) {
        const auto x = random_complex(n, rng);
        auto f = x;
        fft::forward(f);
        auto i = x;
        fft::inverse(i);
        const auto fo = oracle::dft(x, -1.0);
        const auto io = oracle::dft(x, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
            EXPECT_NEAR(std::abs(f[k] - fo[k]), 0.0, 1e-10) << "n=" << n;
            EXPECT_NEAR(std::abs(i[k] - io[k]), 0.0, 1e-10) << "n=" << n;
        }
    }
}

TEST(Ofdm, DcToneGivesConstantBlock) {
    const auto cfg = small_frame(8, 0, 1, 4);
    SymbolGrid grid(8, 1);
    grid(0, 0) = std::sqrt(8.0);
    const auto x = ofdm_modulate(grid, cfg);
    for (const auto& v : x) EXPECT_NEAR(std::abs(v - cplx(1.0, 0.0)), 0.0, 1e-12);
}

TEST(Ofdm, ModulatorMatchesNaiveIdftAndConservesEnergy) {
    const auto cfg = small_frame(8, 2, 3, 4);
    Rng rng(5);
    const auto grid = qam_modulate(rng.bits(cfg.bits_per_sample()), cfg);
    const auto x = remove_cp(ofdm_modulate(grid, cfg), cfg);
    for (int s = 0; s < cfg.n_symbols; ++s) {
        std::vector<cplx> col(grid.symbol(s).begin(), grid.symbol(s).end());
        const auto ref = oracle::dft(col, 1.0);
        double ex = 0.0, eX = 0.0;
        for (int n = 0; n < 8; ++n) {
            const cplx v = x[s * 8 + n];
            EXPECT_NEAR(std::abs(v - ref[n] / std::sqrt(8.0)), 0.0, 1e-10);
            ex += std::norm(v);
            eX += std::norm(col[n]);
        }
        EXPECT_NEAR(ex, eX, 1e-12);
    }
}

TEST(Ofdm, DemodulatorMatchesNaiveDft) {
    const auto cfg = small_frame(8, 2, 1, 4);
    Rng rng(6);
    const auto y = random_complex(8, rng);
    const auto grid = ofdm_demodulate(y, cplx(1.0, 0.0), cfg);
    const auto ref = oracle::dft(y, -1.0);
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(std::abs(grid(k, 0) - ref[k] / std::sqrt(8.0)), 0.0, 1e-10);
}

TEST(Ofdm, NoiselessEqualizedRoundTrip) {
    const auto cfg = small_frame(16, 4, 6, 16);
    Rng rng(9);
    const auto grid = qam_modulate(rng.bits(cfg.bits_per_sample()), cfg);
    auto y = remove_cp(ofdm_modulate(grid, cfg), cfg);
    const cplx h(0.3, -0.7);
    for (auto& v : y) v *= h;
    const auto back = ofdm_demodulate(y, h, cfg);
    for (std::size_t i = 0; i < back.values().size(); ++i)
        EXPECT_NEAR(std::abs(back.values()[i] - grid.values()[i]), 0.0, 1e-9);
}

TEST(Ofdm, ZeroGainIsDegenerate) {
    const auto cfg = small_frame(8, 2, 1, 4);
    const std::vector<cplx> y(8);
    try {
        ofdm_demodulate(y, cplx{}, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
    }
}

TEST(CyclicPrefix, HandExample) {
    const auto cfg = small_frame(4, 2, 1, 4);
    const cplx a(1, 0), b(2, 0), c(3, 0), d(4, 0);
    const std::vector<cplx> block{a, b, c, d};
    const std::vector<cplx> with_cp{c, d, a, b, c, d};
    EXPECT_EQ(add_cp(block, cfg), with_cp);
    EXPECT_EQ(remove_cp(with_cp, cfg), block);
}

TEST(CyclicPrefix, RoundTripAndZeroLength) {
    Rng rng(2);
    const auto x = random_complex(5 * 8, rng);
    EXPECT_EQ(remove_cp(add_cp(x, small_frame(8, 3, 5, 4)), small_frame(8, 3, 5, 4)), x);
    EXPECT_EQ(add_cp(x, small_frame(8, 0, 5, 4)), x);
    EXPECT_EQ(remove_cp(x, small_frame(8, 0, 5, 4)), x);
}

TEST(CyclicPrefix, RejectsBadLength) {
    const std::vector<cplx> x(7);
    EXPECT_THROW(remove_cp(x, small_frame(4, 2, 1, 4)), Error);
}

TEST(Ber, Identities) {
    const Bits a{0, 1, 1, 0, 1};
    Bits na = a;
    for (auto& v : na) v ^= 1;
    EXPECT_EQ(compute_ber(a, a), 0.0);
    EXPECT_EQ(compute_ber(a, na), 1.0);
    EXPECT_THROW(compute_ber(a, Bits{0}), Error);
}

TEST(Ber, QpskOverAwgnMatchesQFunction) {
    // Unit-energy symbols carry 2 bits: Eb = 1/2, so Eb/N0 = 4 dB sets sigma^2.
    const double ebn0 = std::pow(10.0, 0.4);
    const NoiseConfig noise{db10(0.5 / ebn0)};
    const auto cfg = small_frame(64, 8, 64, 4);
    Rng rng(2024);
    std::size_t errors = 0, total = 0;
    while (total < 1'000'000) {
        const Bits bits = rng.bits(cfg.bits_per_sample());
        auto y = remove_cp(ofdm_modulate(qam_modulate(bits, cfg), cfg), cfg);
        const auto w = awgn(y.size(), noise, rng);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += w[i];
        const auto rx = qam_demodulate(ofdm_demodulate(y, cplx(1.0, 0.0), cfg), cfg);
        errors += static_cast<std::size_t>(compute_ber(bits, rx) * double(bits.size()) + 0.5);
        total += bits.size();
    }
    const double expected = q_function(std::sqrt(2.0 * ebn0));
    EXPECT_NEAR(expected, 1.25e-2, 1e-4);
    EXPECT_NEAR(double(errors) / double(total), expected, 0.1 * expected);
}
