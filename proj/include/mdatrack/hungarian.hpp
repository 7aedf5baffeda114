#pragma once

#include "mdatrack/tensor.hpp"

#include <vector>

namespace mdt {

/// Maximum-weight assignment on a rectangular weight matrix (Kuhn-Munkres, O(n^3)).
/// Returns the chosen column for every row, or -1 when the row is left unmatched
/// (only possible when rows > cols). Weights may be any finite values.
std::vector<int> max_weight_assignment(const Matrix& weights);

}  // namespace mdt
