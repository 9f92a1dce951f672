#include "moef/optim.hpp"

#include "moef/errors.hpp"

#include <algorithm>
#include <cmath>

namespace moef {

void adagrad_step(Tensor& param, const std::vector<double>& grad, std::vector<double>& accum,
                  double learning_rate, double epsilon) {
    if (grad.size() != param.size() || accum.size() != param.size()) {
        throw DimensionError("adagrad_step: param " + param.shape_str() + " vs grad size " +
                             std::to_string(grad.size()) + " vs accumulator size " +
                             std::to_string(accum.size()));
    }
    double* p = param.data();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        accum[i] += g * g;
        p[i] -= learning_rate * g / (std::sqrt(accum[i]) + epsilon);
    }
}

Adagrad::Adagrad(double learning_rate, double epsilon) : lr_(learning_rate), eps_(epsilon) {}

void Adagrad::init(const std::vector<NamedParam>& params) {
    accum_.clear();
    accum_.reserve(params.size());
    for (const NamedParam& p : params) {
        accum_.emplace_back(p.tensor.size(), 0.0);
    }
}

void Adagrad::step(std::vector<NamedParam>& params) {
    if (accum_.size() != params.size()) {
        throw ContractError("Adagrad::step: optimizer initialized for " +
                            std::to_string(accum_.size()) + " params, got " +
                            std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        NamedParam& np = params[k];
        if (!np.tensor.has_grad()) continue;
        const auto& g = np.tensor.grad();
        auto& acc = accum_[k];

        if (np.row_sparse && !np.tensor.grad_rows().empty()) {
            // Touched rows only; untouched rows have zero gradient and an
            // exact dense step would leave them unchanged anyway.
            std::vector<std::size_t> rows = np.tensor.grad_rows();
            std::sort(rows.begin(), rows.end());
            rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
            const std::size_t width = np.tensor.shape()[1];
            double* p = np.tensor.data();
            for (std::size_t r : rows) {
                for (std::size_t j = r * width; j < (r + 1) * width; ++j) {
                    const double gv = g[j];
                    acc[j] += gv * gv;
                    p[j] -= lr_ * gv / (std::sqrt(acc[j]) + eps_);
                }
            }
        } else {
            double* p = np.tensor.data();
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double gv = g[j];
                acc[j] += gv * gv;
                p[j] -= lr_ * gv / (std::sqrt(acc[j]) + eps_);
            }
        }
        np.tensor.clear_grad();
    }
}

} // namespace moef
