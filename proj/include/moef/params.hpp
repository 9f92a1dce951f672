#pragma once

#include "moef/rng.hpp"
#include "moef/tensor.hpp"

#include <string>
#include <vector>

namespace moef {

// A trainable tensor with a stable name used for checkpointing, the
// gradient-check report, and optimizer bookkeeping. `row_sparse` marks
// embedding tables whose gradients only ever touch looked-up rows.
struct NamedParam {
    std::string group;
    std::string name;
    Tensor tensor;
    bool row_sparse = false;
};

// Uniform(+-sqrt(6/(fan_in+fan_out))) initialization; biases start at zero.
inline std::vector<double> glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                                          std::size_t count) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(count);
    for (double& x : v) x = rng.uniform(-limit, limit);
    return v;
}

inline Tensor glorot_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    return Tensor::param({rows, cols}, glorot_uniform(rng, rows, cols, rows * cols));
}

inline Tensor zero_bias(std::size_t n) {
    return Tensor::param({n}, std::vector<double>(n, 0.0));
}

inline Tensor const_bias(std::size_t n, double v) {
    return Tensor::param({n}, std::vector<double>(n, v));
}

} // namespace moef
