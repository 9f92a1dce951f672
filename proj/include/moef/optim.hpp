#pragma once

#include "moef/params.hpp"
#include "moef/tensor.hpp"

#include <vector>

namespace moef {

// One elementwise Adagrad update: acc += g^2, p -= lr * g / (sqrt(acc) + eps).
// Shapes of the three arrays must agree.
void adagrad_step(Tensor& param, const std::vector<double>& grad, std::vector<double>& accum,
                  double learning_rate, double epsilon);

// Optimizer state for a fixed, ordered parameter list. Accumulators start
// at zero and are elementwise non-decreasing across steps.
class Adagrad {
public:
    Adagrad(double learning_rate, double epsilon);

    void init(const std::vector<NamedParam>& params);

    // Applies one update from the gradients currently stored on the params,
    // then clears those gradients. Parameters without a gradient (frozen or
    // unused this step) are left untouched. Row-sparse parameters are
    // updated only on rows recorded by the embedding backward.
    void step(std::vector<NamedParam>& params);

    double learning_rate() const { return lr_; }
    double epsilon() const { return eps_; }
    std::vector<std::vector<double>>& accumulators() { return accum_; }
    const std::vector<std::vector<double>>& accumulators() const { return accum_; }

private:
    double lr_;
    double eps_;
    std::vector<std::vector<double>> accum_;
};

} // namespace moef
