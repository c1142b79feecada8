#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "signal_core.hpp"

namespace cpa {

/// Dense row-major real matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct FeatureConfig {
    int disk_radius = 3;

    void validate() const { require(disk_radius >= 0, ErrorKind::Config, "disk radius must be non-negative"); }
};

/// Magnitude spectrogram, one frame per N-sample block: S(k, m) = |DFT_N(block k)[m]|.
inline Matrix spectrogram(std::span<const cplx> y, int n_bins) {
    require(n_bins > 0 && y.size() % static_cast<std::size_t>(n_bins) == 0, ErrorKind::InputSize,
            "spectrogram: length not divisible by N");
    const auto n = static_cast<std::size_t>(n_bins);
    const int frames = static_cast<int>(y.size() / n);
    Matrix s(frames, n_bins);
    std::vector<cplx> buf(n);
    for (int k = 0; k < frames; ++k) {
        auto src = y.subspan(static_cast<std::size_t>(k) * n, n);
        std::copy(src.begin(), src.end(), buf.begin());
        fft::forward(buf);
        for (int m = 0; m < n_bins; ++m) s(k, m) = std::abs(buf[static_cast<std::size_t>(m)]);
    }
    return s;
}

namespace morph {

/// Half-width of the disk chord at row offset du: max dv with du^2 + dv^2 <= R^2.
inline std::vector<int> disk_chords(int radius) {
    std::vector<int> w(static_cast<std::size_t>(radius) + 1);
    for (int du = 0; du <= radius; ++du) {
        int v = 0;
        while ((v + 1) * (v + 1) + du * du <= radius * radius) ++v;
        w[static_cast<std::size_t>(du)] = v;
    }
    return w;
}

/// Running extremum over [c - half, c + half] clipped to the row, for every row.
template <typename Better>
Matrix row_running(const Matrix& s, int half, Better better) {
    Matrix out(s.rows, s.cols);
    std::deque<int> dq;
    for (int r = 0; r < s.rows; ++r) {
        dq.clear();
        int next = 0;
        for (int c = 0; c < s.cols; ++c) {
            const int hi = std::min(s.cols - 1, c + half);
            for (; next <= hi; ++next) {
                while (!dq.empty() && !better(s(r, dq.back()), s(r, next))) dq.pop_back();
                dq.push_back(next);
            }
            while (dq.front() < c - half) dq.pop_front();
            out(r, c) = s(r, dq.front());
        }
    }
    return out;
}

/// Disk-shaped running extremum, decomposed into per-chord row passes.
template <typename Better>
Matrix disk_extremum(const Matrix& s, int radius, Better better) {
    const auto chords = disk_chords(radius);
    std::vector<Matrix> rows_by_width;
    std::vector<int> width_slot(chords.size());
    std::vector<int> widths;
    for (std::size_t du = 0; du < chords.size(); ++du) {
        auto it = std::find(widths.begin(), widths.end(), chords[du]);
        if (it == widths.end()) {
            widths.push_back(chords[du]);
            rows_by_width.push_back(row_running(s, chords[du], better));
            width_slot[du] = static_cast<int>(widths.size()) - 1;
        } else {
            width_slot[du] = static_cast<int>(it - widths.begin());
        }
    }
    Matrix out = rows_by_width[static_cast<std::size_t>(width_slot[0])];
    for (int du = 1; du <= radius; ++du) {
        const Matrix& band = rows_by_width[static_cast<std::size_t>(width_slot[static_cast<std::size_t>(du)])];
        for (int r = 0; r < s.rows; ++r) {
            for (int sign : {-1, 1}) {
                const int src = r + sign * du;
                if (src < 0 || src >= s.rows) continue;
                for (int c = 0; c < s.cols; ++c) {
                    const double v = band(src, c);
                    if (better(v, out(r, c))) out(r, c) = v;
                }
            }
        }
    }
    return out;
}

} // namespace morph

/// Grayscale dilation and erosion over the disk of radius R; neighborhoods are
/// clipped at the matrix border. Returns (sup, inf).
inline std::pair<Matrix, Matrix> local_extrema(const Matrix& s, int radius) {
    require(radius >= 0, ErrorKind::Config, "disk radius must be non-negative");
    for (double v : s.data) require(std::isfinite(v), ErrorKind::InputSize, "local_extrema: non-finite entry");
    if (s.data.empty()) return {s, s};
    return {morph::disk_extremum(s, radius, [](double a, double b) { return a > b; }),
            morph::disk_extremum(s, radius, [](double a, double b) { return a < b; })};
}

/// Per-channel affine map applied to a feature tensor: raw = min + z * (max - min).
struct NormalizationMeta {
    std::array<double, 3> min{};
    std::array<double, 3> max{};
    bool applied = false;
};

/// frames x bins x 3 tensor, channel-last, channels (S, S_sup, S_inf).
struct FeatureTensor {
    int frames = 0;
    int bins = 0;
    std::vector<double> data;
    NormalizationMeta norm{};

    static constexpr int kChannels = 3;

    double& at(int k, int m, int c) { return data[(static_cast<std::size_t>(k) * bins + m) * kChannels + c]; }
    double at(int k, int m, int c) const { return data[(static_cast<std::size_t>(k) * bins + m) * kChannels + c]; }
};

inline FeatureTensor stack_features(const Matrix& s, const Matrix& sup, const Matrix& inf) {
    require(s.rows == sup.rows && s.rows == inf.rows && s.cols == sup.cols && s.cols == inf.cols, ErrorKind::Shape,
            "stack_features: channel shapes differ");
    FeatureTensor z;
    z.frames = s.rows;
    z.bins = s.cols;
    z.data.resize(s.data.size() * 3);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        z.data[3 * i] = s.data[i];
        z.data[3 * i + 1] = sup.data[i];
        z.data[3 * i + 2] = inf.data[i];
    }
    return z;
}

/// Min-max scale each channel to [0, 1]. A constant channel maps to 0.
inline void normalize(FeatureTensor& z) {
    require(!z.norm.applied, ErrorKind::Invariant, "feature tensor already normalized");
    for (int c = 0; c < 3; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = static_cast<std::size_t>(c); i < z.data.size(); i += 3) {
            lo = std::min(lo, z.data[i]);
            hi = std::max(hi, z.data[i]);
        }
        if (z.data.empty()) lo = hi = 0.0;
        const double range = hi - lo;
        for (std::size_t i = static_cast<std::size_t>(c); i < z.data.size(); i += 3)
            z.data[i] = range > 0.0 ? (z.data[i] - lo) / range : 0.0;
        z.norm.min[static_cast<std::size_t>(c)] = lo;
        z.norm.max[static_cast<std::size_t>(c)] = hi;
    }
    z.norm.applied = true;
}

inline void denormalize(FeatureTensor& z) {
    require(z.norm.applied, ErrorKind::Invariant, "feature tensor is not normalized");
    for (int c = 0; c < 3; ++c) {
        const double lo = z.norm.min[static_cast<std::size_t>(c)];
        const double range = z.norm.max[static_cast<std::size_t>(c)] - lo;
        for (std::size_t i = static_cast<std::size_t>(c); i < z.data.size(); i += 3) z.data[i] = lo + z.data[i] * range;
    }
    z.norm.applied = false;
}

/// Full feature pipeline on a CP-intact received sample. The result is
/// normalized; raw magnitudes are recoverable with denormalize().
inline FeatureTensor feature_tensor(std::span<const cplx> received, const FrameConfig& frame,
                                    const FeatureConfig& fcfg) {
    frame.validate();
    fcfg.validate();
    const auto body = remove_cp(received, frame);
    const Matrix s = spectrogram(body, frame.n_subcarriers);
    auto [sup, inf] = local_extrema(s, fcfg.disk_radius);
    FeatureTensor z = stack_features(s, sup, inf);
    normalize(z);
    return z;
}

/// Bilinear resample to a size x size grid, per channel. For experiments that
/// want the square frames x frames layout.
inline FeatureTensor resize_square(const FeatureTensor& z, int size) {
    require(size > 0 && z.frames > 0 && z.bins > 0, ErrorKind::Shape, "resize_square: empty tensor or size");
    FeatureTensor out;
    out.frames = size;
    out.bins = size;
    out.norm = z.norm;
    out.data.resize(static_cast<std::size_t>(size) * size * 3);
    auto coord = [size](int i, int src) {
        if (size == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(size - 1);
    };
    for (int k = 0; k < size; ++k) {
        const double fk = coord(k, z.frames);
        const int k0 = static_cast<int>(fk);
        const int k1 = std::min(k0 + 1, z.frames - 1);
        const double tk = fk - k0;
        for (int m = 0; m < size; ++m) {
            const double fm = coord(m, z.bins);
            const int m0 = static_cast<int>(fm);
            const int m1 = std::min(m0 + 1, z.bins - 1);
            const double tm = fm - m0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - tm) * z.at(k0, m0, c) + tm * z.at(k0, m1, c);
                const double bot = (1 - tm) * z.at(k1, m0, c) + tm * z.at(k1, m1, c);
                out.at(k, m, c) = (1 - tk) * top + tk * bot;
            }
        }
    }
    return out;
}

} // namespace cpa
