#pragma once

#include <cstdint>
#include <vector>

namespace moef {

// Mann-Whitney AUC with tie-halving: (wins + 0.5 * ties) / (P * N),
// computed from average ranks in O(n log n). Throws if only one class is
// present.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

// Shannon entropy -sum p_i ln p_i over the nonzero shares of `counts`.
double category_entropy(const std::vector<std::size_t>& counts);

} // namespace moef
