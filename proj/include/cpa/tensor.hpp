#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace cpa::nn {

/// Dense row-major double tensor. Activations use NCHW layout.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)), data(count(shape), fill) {}

    static std::size_t count(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    std::size_t size() const { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

/// Learnable tensor with its gradient and ADAM moment accumulators.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    /// Kernels receive the L2 penalty; biases and batch-norm affine terms do not.
    bool decay = false;

    Param() = default;
    Param(std::string n, Tensor init, bool is_kernel)
        : name(std::move(n)), value(std::move(init)), grad(value.shape), m(value.shape), v(value.shape),
          decay(is_kernel) {}
};

/// Non-learnable persistent state (batch-norm running statistics).
struct Buffer {
    std::string name;
    Tensor value;
};

} // namespace cpa::nn
