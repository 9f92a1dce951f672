#include "moef/metrics.hpp"

#include "moef/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moef {

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) {
        throw DimensionError("auc: " + std::to_string(labels.size()) + " labels vs " +
                             std::to_string(scores.size()) + " scores");
    }
    const std::size_t n = labels.size();
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ContractError("auc: labels must be 0/1");
        positives += static_cast<std::size_t>(y);
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw ContractError("auc undefined: need at least one positive and one negative label");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank-sum of positives with average ranks over tie groups
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0; // 1-based
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(positives);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

double category_entropy(const std::vector<std::size_t>& counts) {
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw ContractError("category_entropy: empty click log");
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

} // namespace moef
