#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace cpa::nn {

/// He normal initialization: N(0, 2 / fan_in).
inline Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.normal() * sd;
    return t;
}

class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    /// Propagates dL/dy to dL/dx and accumulates parameter gradients.
    virtual Tensor backward(const Tensor& dy) = 0;

    virtual std::vector<Param*> params() { return {}; }
    virtual std::vector<Buffer*> buffers() { return {}; }
    virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
};

// ---------------------------------------------------------------------------

/// 2D convolution, square kernel, zero "same"-style padding of kernel/2.
/// Weights are F x (C * k * k); the patch matrix of each sample is kept for
/// the backward pass.
class Conv2D final : public Layer {
public:
    Conv2D(std::string name, int in_channels, int filters, int kernel, int stride, Rng& rng)
        : in_c_(in_channels), filters_(filters), k_(kernel), stride_(stride), pad_(kernel / 2),
          weight_(name + ".weight", he_normal({filters, in_channels * kernel * kernel}, in_channels * kernel * kernel, rng),
                  true),
          bias_(name + ".bias", Tensor({filters}), false) {
        require(in_channels > 0 && filters > 0 && kernel > 0 && stride > 0, ErrorKind::Config,
                "conv layer dimensions must be positive");
    }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(in.size() == 4 && in[1] == in_c_, ErrorKind::Shape, "conv input " + shape_string(in));
        const int ho = (in[2] + 2 * pad_ - k_) / stride_ + 1;
        const int wo = (in[3] + 2 * pad_ - k_) / stride_ + 1;
        require(ho > 0 && wo > 0, ErrorKind::Shape, "conv output would be empty");
        return {in[0], filters_, ho, wo};
    }

    Tensor forward(const Tensor& x, bool) override {
        const auto os = output_shape(x.shape);
        in_shape_ = x.shape;
        const int b = os[0];
        const std::size_t p = static_cast<std::size_t>(os[2]) * os[3];
        const std::size_t q = static_cast<std::size_t>(in_c_) * k_ * k_;
        cols_.assign(static_cast<std::size_t>(b) * q * p, 0.0);
        Tensor y(os);
        for (int n = 0; n < b; ++n) {
            double* col = cols_.data() + static_cast<std::size_t>(n) * q * p;
            im2col(x, n, os[2], os[3], col);
            double* out = y.data.data() + static_cast<std::size_t>(n) * filters_ * p;
            for (int f = 0; f < filters_; ++f) {
                double* orow = out + static_cast<std::size_t>(f) * p;
                const double bias = bias_.value.data[static_cast<std::size_t>(f)];
                for (std::size_t i = 0; i < p; ++i) orow[i] = bias;
                const double* wrow = weight_.value.data.data() + static_cast<std::size_t>(f) * q;
                for (std::size_t j = 0; j < q; ++j) {
                    const double w = wrow[j];
                    const double* crow = col + j * p;
                    for (std::size_t i = 0; i < p; ++i) orow[i] += w * crow[i];
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int b = dy.dim(0);
        const int ho = dy.dim(2);
        const int wo = dy.dim(3);
        const std::size_t p = static_cast<std::size_t>(ho) * wo;
        const std::size_t q = static_cast<std::size_t>(in_c_) * k_ * k_;
        Tensor dx(in_shape_);
        std::vector<double> dcol(q * p);
        for (int n = 0; n < b; ++n) {
            const double* col = cols_.data() + static_cast<std::size_t>(n) * q * p;
            const double* g = dy.data.data() + static_cast<std::size_t>(n) * filters_ * p;
            std::fill(dcol.begin(), dcol.end(), 0.0);
            for (int f = 0; f < filters_; ++f) {
                const double* grow = g + static_cast<std::size_t>(f) * p;
                double bsum = 0.0;
                for (std::size_t i = 0; i < p; ++i) bsum += grow[i];
                bias_.grad.data[static_cast<std::size_t>(f)] += bsum;
                double* dwrow = weight_.grad.data.data() + static_cast<std::size_t>(f) * q;
                const double* wrow = weight_.value.data.data() + static_cast<std::size_t>(f) * q;
                for (std::size_t j = 0; j < q; ++j) {
                    const double* crow = col + j * p;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < p; ++i) acc += grow[i] * crow[i];
                    dwrow[j] += acc;
                    const double w = wrow[j];
                    double* drow = dcol.data() + j * p;
                    for (std::size_t i = 0; i < p; ++i) drow[i] += w * grow[i];
                }
            }
            col2im(dcol.data(), n, ho, wo, dx);
        }
        return dx;
    }

    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }

private:
    void im2col(const Tensor& x, int n, int ho, int wo, double* col) const {
        const int h = x.dim(2);
        const int w = x.dim(3);
        const std::size_t p = static_cast<std::size_t>(ho) * wo;
        for (int c = 0; c < in_c_; ++c) {
            const double* plane = x.data.data() + (static_cast<std::size_t>(n) * in_c_ + c) * h * w;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    double* row = col + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * p;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        double* dst = row + static_cast<std::size_t>(oy) * wo;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < w) dst[ox] = plane[static_cast<std::size_t>(iy) * w + ix];
                        }
                    }
                }
            }
        }
    }

    void col2im(const double* dcol, int n, int ho, int wo, Tensor& dx) const {
        const int h = dx.dim(2);
        const int w = dx.dim(3);
        const std::size_t p = static_cast<std::size_t>(ho) * wo;
        for (int c = 0; c < in_c_; ++c) {
            double* plane = dx.data.data() + (static_cast<std::size_t>(n) * in_c_ + c) * h * w;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const double* row = dcol + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * p;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* src = row + static_cast<std::size_t>(oy) * wo;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < w) plane[static_cast<std::size_t>(iy) * w + ix] += src[ox];
                        }
                    }
                }
            }
        }
    }

    int in_c_, filters_, k_, stride_, pad_;
    Param weight_;
    Param bias_;
    std::vector<int> in_shape_;
    std::vector<double> cols_;
};

// ---------------------------------------------------------------------------

class ReLU final : public Layer {
public:
    std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        mask_.assign(x.size(), 0);
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y.data[i] > 0.0) {
                mask_[i] = 1;
            } else {
                y.data[i] = 0.0;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!mask_[i]) dx.data[i] = 0.0;
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

private:
    std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------

/// 2x2 average pooling, stride 2. A trailing odd row/column is dropped.
class AvgPool2 final : public Layer {
public:
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(in.size() == 4 && in[2] >= 2 && in[3] >= 2, ErrorKind::Shape, "pool input " + shape_string(in));
        return {in[0], in[1], in[2] / 2, in[3] / 2};
    }

    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        const auto os = output_shape(x.shape);
        Tensor y(os);
        const int h = x.dim(2);
        const int w = x.dim(3);
        const std::size_t planes = static_cast<std::size_t>(os[0]) * os[1];
        for (std::size_t pl = 0; pl < planes; ++pl) {
            const double* src = x.data.data() + pl * h * w;
            double* dst = y.data.data() + pl * os[2] * os[3];
            for (int oy = 0; oy < os[2]; ++oy) {
                const double* r0 = src + static_cast<std::size_t>(2 * oy) * w;
                const double* r1 = r0 + w;
                for (int ox = 0; ox < os[3]; ++ox)
                    dst[oy * os[3] + ox] = 0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_);
        const int h = in_shape_[2];
        const int w = in_shape_[3];
        const int ho = dy.dim(2);
        const int wo = dy.dim(3);
        const std::size_t planes = static_cast<std::size_t>(dy.dim(0)) * dy.dim(1);
        for (std::size_t pl = 0; pl < planes; ++pl) {
            const double* src = dy.data.data() + pl * ho * wo;
            double* dst = dx.data.data() + pl * h * w;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const double g = 0.25 * src[oy * wo + ox];
                    double* r0 = dst + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
                    r0[0] += g;
                    r0[1] += g;
                    r0[w] += g;
                    r0[w + 1] += g;
                }
            }
        }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool2>(*this); }

private:
    std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------

/// Mean over (H, W) per channel: (B, C, H, W) -> (B, C).
class GlobalAvgPool final : public Layer {
public:
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(in.size() == 4, ErrorKind::Shape, "global pool input " + shape_string(in));
        return {in[0], in[1]};
    }

    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        Tensor y(output_shape(x.shape));
        const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
        for (std::size_t pl = 0; pl < y.size(); ++pl) {
            const double* src = x.data.data() + pl * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += src[i];
            y.data[pl] = acc / static_cast<double>(hw);
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_);
        const std::size_t hw = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
        for (std::size_t pl = 0; pl < dy.size(); ++pl) {
            const double g = dy.data[pl] / static_cast<double>(hw);
            std::fill_n(dx.data.begin() + static_cast<std::ptrdiff_t>(pl * hw), hw, g);
        }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

private:
    std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------

/// Per-channel batch normalization over (N, H, W). Train mode normalizes with
/// batch statistics and updates running averages; infer mode uses the running
/// averages only.
class BatchNorm2D final : public Layer {
public:
    BatchNorm2D(std::string name, int channels, double momentum, double eps)
        : channels_(channels), momentum_(momentum), eps_(eps),
          gamma_(name + ".gamma", Tensor({channels}, 1.0), false), beta_(name + ".beta", Tensor({channels}), false),
          running_mean_{name + ".running_mean", Tensor({channels})},
          running_var_{name + ".running_var", Tensor({channels}, 1.0)} {}

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(in.size() == 4 && in[1] == channels_, ErrorKind::Shape, "batch-norm input " + shape_string(in));
        return in;
    }

    Tensor forward(const Tensor& x, bool train) override {
        output_shape(x.shape);
        const int b = x.dim(0);
        const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
        const double count = static_cast<double>(b) * static_cast<double>(hw);
        Tensor y(x.shape);
        xhat_ = Tensor(x.shape);
        inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
        for (int c = 0; c < channels_; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            double mean;
            double var;
            if (train) {
                double s = 0.0;
                for (int n = 0; n < b; ++n) {
                    const double* p = x.data.data() + (static_cast<std::size_t>(n) * channels_ + cu) * hw;
                    for (std::size_t i = 0; i < hw; ++i) s += p[i];
                }
                mean = s / count;
                double ss = 0.0;
                for (int n = 0; n < b; ++n) {
                    const double* p = x.data.data() + (static_cast<std::size_t>(n) * channels_ + cu) * hw;
                    for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
                }
                var = ss / count;
                const double unbiased = count > 1 ? ss / (count - 1.0) : var;
                auto& rm = running_mean_.value.data[cu];
                auto& rv = running_var_.value.data[cu];
                rm = momentum_ * rm + (1.0 - momentum_) * mean;
                rv = momentum_ * rv + (1.0 - momentum_) * unbiased;
            } else {
                mean = running_mean_.value.data[cu];
                var = running_var_.value.data[cu];
            }
            const double inv = 1.0 / std::sqrt(var + eps_);
            inv_std_[cu] = inv;
            const double g = gamma_.value.data[cu];
            const double be = beta_.value.data[cu];
            for (int n = 0; n < b; ++n) {
                const std::size_t off = (static_cast<std::size_t>(n) * channels_ + cu) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double xh = (x.data[off + i] - mean) * inv;
                    xhat_.data[off + i] = xh;
                    y.data[off + i] = g * xh + be;
                }
            }
        }
        train_ = train;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int b = dy.dim(0);
        const std::size_t hw = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
        const double count = static_cast<double>(b) * static_cast<double>(hw);
        Tensor dx(dy.shape);
        for (int c = 0; c < channels_; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            double sum_dy = 0.0;
            double sum_dy_xh = 0.0;
            for (int n = 0; n < b; ++n) {
                const std::size_t off = (static_cast<std::size_t>(n) * channels_ + cu) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    sum_dy += dy.data[off + i];
                    sum_dy_xh += dy.data[off + i] * xhat_.data[off + i];
                }
            }
            gamma_.grad.data[cu] += sum_dy_xh;
            beta_.grad.data[cu] += sum_dy;
            const double g = gamma_.value.data[cu] * inv_std_[cu];
            for (int n = 0; n < b; ++n) {
                const std::size_t off = (static_cast<std::size_t>(n) * channels_ + cu) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    if (train_) {
                        dx.data[off + i] =
                            g * (dy.data[off + i] - sum_dy / count - xhat_.data[off + i] * sum_dy_xh / count);
                    } else {
                        dx.data[off + i] = g * dy.data[off + i];
                    }
                }
            }
        }
        return dx;
    }

    std::vector<Param*> params() override { return {&gamma_, &beta_}; }
    std::vector<Buffer*> buffers() override { return {&running_mean_, &running_var_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2D>(*this); }

private:
    int channels_;
    double momentum_;
    double eps_;
    Param gamma_;
    Param beta_;
    Buffer running_mean_;
    Buffer running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
    bool train_ = true;
};

// ---------------------------------------------------------------------------

class Flatten final : public Layer {
public:
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(!in.empty(), ErrorKind::Shape, "flatten of scalar");
        int rest = 1;
        for (std::size_t i = 1; i < in.size(); ++i) rest *= in[i];
        return {in[0], rest};
    }

    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        Tensor y = x;
        y.shape = output_shape(x.shape);
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        dx.shape = in_shape_;
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

private:
    std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------

/// Fully connected layer on (B, in) inputs. Weight is out x in.
class Dense final : public Layer {
public:
    Dense(std::string name, int in, int out, Rng& rng)
        : in_(in), out_(out), weight_(name + ".weight", he_normal({out, in}, in, rng), true),
          bias_(name + ".bias", Tensor({out}), false) {
        require(in > 0 && out > 0, ErrorKind::Config, "dense layer dimensions must be positive");
    }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        require(in.size() == 2 && in[1] == in_, ErrorKind::Shape, "dense input " + shape_string(in));
        return {in[0], out_};
    }

    Tensor forward(const Tensor& x, bool) override {
        const auto os = output_shape(x.shape);
        x_ = x;
        Tensor y(os);
        for (int n = 0; n < os[0]; ++n) {
            const double* xr = x.data.data() + static_cast<std::size_t>(n) * in_;
            for (int o = 0; o < out_; ++o) {
                const double* wr = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
                double acc = bias_.value.data[static_cast<std::size_t>(o)];
                for (int i = 0; i < in_; ++i) acc += wr[i] * xr[i];
                y.data[static_cast<std::size_t>(n) * out_ + o] = acc;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        const int b = dy.dim(0);
        Tensor dx(x_.shape);
        for (int n = 0; n < b; ++n) {
            const double* xr = x_.data.data() + static_cast<std::size_t>(n) * in_;
            double* dxr = dx.data.data() + static_cast<std::size_t>(n) * in_;
            for (int o = 0; o < out_; ++o) {
                const double g = dy.data[static_cast<std::size_t>(n) * out_ + o];
                bias_.grad.data[static_cast<std::size_t>(o)] += g;
                double* dwr = weight_.grad.data.data() + static_cast<std::size_t>(o) * in_;
                const double* wr = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
                for (int i = 0; i < in_; ++i) {
                    dwr[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        return dx;
    }

    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

private:
    int in_, out_;
    Param weight_;
    Param bias_;
    Tensor x_;
};

/// Runs a list of layers in order.
class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& o) {
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& o) {
        if (this != &o) *this = Sequential(o);
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, bool train) {
        Tensor h = x;
        for (auto& l : layers_) h = l->forward(h, train);
        return h;
    }

    Tensor backward(const Tensor& dy) {
        Tensor g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<int> output_shape(std::vector<int> in) const {
        for (const auto& l : layers_) in = l->output_shape(in);
        return in;
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }

    std::vector<Buffer*> buffers() {
        std::vector<Buffer*> out;
        for (auto& l : layers_)
            for (auto* b : l->buffers()) out.push_back(b);
        return out;
    }

    std::size_t size() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

} // namespace cpa::nn
