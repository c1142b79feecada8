#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace cpa::nn {

inline constexpr double kProbClip = 1e-7;

/// Row-wise softmax of (B, C) logits.
inline Tensor softmax(const Tensor& logits) {
    require(logits.rank() == 2, ErrorKind::Shape, "softmax expects (B, C)");
    Tensor p(logits.shape);
    const int b = logits.dim(0);
    const int c = logits.dim(1);
    for (int n = 0; n < b; ++n) {
        const double* z = logits.data.data() + static_cast<std::size_t>(n) * c;
        double* out = p.data.data() + static_cast<std::size_t>(n) * c;
        const double mx = *std::max_element(z, z + c);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += (out[j] = std::exp(z[j] - mx));
        for (int j = 0; j < c; ++j) out[j] /= s;
    }
    return p;
}

/// Categorical focal loss averaged over the batch:
///   (1/B) sum_b -sum_c q (1 - p)^gamma log p,  p clipped to [eps, 1 - eps].
inline double focal_loss(const Tensor& q, const Tensor& q_hat, double gamma) {
    require(q.same_shape(q_hat) && q.rank() == 2, ErrorKind::Shape, "focal_loss: label/probability shape mismatch");
    require(gamma >= 0.0, ErrorKind::Config, "focal gamma must be non-negative");
    const int b = q.dim(0);
    if (b == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q.data[i] == 0.0) continue;
        const double p = std::clamp(q_hat.data[i], kProbClip, 1.0 - kProbClip);
        total += -q.data[i] * std::pow(1.0 - p, gamma) * std::log(p);
    }
    return total / b;
}

/// Gradient of focal_loss with respect to the logits that produced q_hat via
/// softmax. Clipped probabilities contribute no gradient.
inline Tensor focal_loss_grad_logits(const Tensor& q, const Tensor& q_hat, double gamma) {
    const int b = q.dim(0);
    const int c = q.dim(1);
    Tensor dz(q.shape);
    std::vector<double> dp(static_cast<std::size_t>(c));
    for (int n = 0; n < b; ++n) {
        const std::size_t row = static_cast<std::size_t>(n) * c;
        for (int j = 0; j < c; ++j) {
            const double qv = q.data[row + j];
            const double p = q_hat.data[row + j];
            double g = 0.0;
            if (qv != 0.0 && p > kProbClip && p < 1.0 - kProbClip) {
                const double one_m = 1.0 - p;
                const double focal = std::pow(one_m, gamma);
                const double dfocal = gamma == 0.0 ? 0.0 : -gamma * std::pow(one_m, gamma - 1.0);
                g = -qv * (dfocal * std::log(p) + focal / p);
            }
            dp[static_cast<std::size_t>(j)] = g / b;
        }
        for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            const double pj = q_hat.data[row + j];
            for (int i = 0; i < c; ++i) {
                const double pi = q_hat.data[row + i];
                acc += dp[static_cast<std::size_t>(i)] * pi * ((i == j ? 1.0 : 0.0) - pj);
            }
            dz.data[row + j] = acc;
        }
    }
    return dz;
}

/// Mean squared error between log-BER labels and predictions.
inline double mse_log_ber(std::span<const double> rho, std::span<const double> rho_hat) {
    require(rho.size() == rho_hat.size(), ErrorKind::InputSize, "mse_log_ber: length mismatch");
    if (rho.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double d = rho[i] - rho_hat[i];
        s += d * d;
    }
    return s / static_cast<double>(rho.size());
}

inline std::vector<double> mse_grad(std::span<const double> rho, std::span<const double> rho_hat) {
    std::vector<double> g(rho.size());
    const double scale = 2.0 / static_cast<double>(std::max<std::size_t>(rho.size(), 1));
    for (std::size_t i = 0; i < rho.size(); ++i) g[i] = scale * (rho_hat[i] - rho[i]);
    return g;
}

/// l2 * sum ||W||^2 over decayed (kernel) parameters.
inline double l2_penalty(std::span<Param* const> params, double l2) {
    double s = 0.0;
    for (const Param* p : params) {
        if (!p->decay) continue;
        for (double v : p->value.data) s += v * v;
    }
    return l2 * s;
}

inline double regression_weight(double amplification, double label_variance) {
    require(amplification > 0.0 && label_variance > 0.0, ErrorKind::Config,
            "regression weighting needs positive amplification and label variance");
    return 1.0 / (amplification * label_variance);
}

/// L_cl + L_reg / (amplification * variance) + penalty.
inline double total_loss(double cls, double reg, double amplification, double label_variance, double penalty) {
    return cls + regression_weight(amplification, label_variance) * reg + penalty;
}

} // namespace cpa::nn
