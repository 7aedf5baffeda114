#include "mdatrack/hungarian.hpp"

#include <algorithm>
#include <limits>

namespace mdt {

std::vector<int> max_weight_assignment(const Matrix& weights) {
    const std::size_t rows = weights.rows;
    const std::size_t cols = weights.cols;
    std::vector<int> result(rows, -1);
    if (rows == 0 || cols == 0) return result;

    // Square cost matrix, padded with zero-cost dummies; 1-based potentials.
    const std::size_t n = std::max(rows, cols);
    double max_w = 0.0;
    for (double w : weights.values) max_w = std::max(max_w, w);
    auto cost = [&](std::size_t i, std::size_t j) -> double {
        if (i >= rows || j >= cols) return 0.0;
        return max_w - weights(i, j);
    };

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = p[j];
        if (i >= 1 && i <= rows && j <= cols) result[i - 1] = static_cast<int>(j - 1);
    }
    return result;
}

}  // namespace mdt
