#include "mdatrack/oracle.hpp"

#include "mdatrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mdt::oracle {

double assignment_value(const Tensor& C, const FullAssignment& z) {
    double v = 0.0;
    std::vector<std::size_t> idx(C.order());
    for (const auto& t : z) {
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = t[k] - 1;
        v += C.at(idx);
    }
    return v;
}

namespace {

struct Search {
    const Tensor& C;
    const MdaConstraints& constraints;
    std::vector<std::vector<char>> covered;
    std::vector<std::vector<std::size_t>> chosen;  // 1-based tuples, in selection order
    BruteForceResult result;
    bool have_best = false;
    bool recording = true;
    std::vector<std::pair<FullAssignment, double>> recorded;

    bool is_virtual(std::size_t k, std::size_t i) const {
        return constraints.virtual_slot[k] && *constraints.virtual_slot[k] == i;
    }

    std::optional<std::pair<std::size_t, std::size_t>> first_uncovered() const {
        for (std::size_t k = 0; k < C.order(); ++k) {
            for (std::size_t i = 0; i < C.dim(k); ++i) {
                if (!is_virtual(k, i) && !covered[k][i]) return std::make_pair(k, i);
            }
        }
        return std::nullopt;
    }

    void finish() {
        if (++result.feasible_count > kMaxFeasible) {
            throw SizeGuardError("brute_force_mda: more than " + std::to_string(kMaxFeasible) +
                                 " feasible assignments");
        }
        FullAssignment z = chosen;
        std::sort(z.begin(), z.end());
        const double v = assignment_value(C, z);
        if (recording) {
            if (recorded.size() < kMaxRecorded) {
                recorded.emplace_back(z, v);
            } else {
                recording = false;
                recorded.clear();
            }
        }
        const double tol = 1e-12 * std::max(1.0, std::abs(result.best_value));
        if (!have_best || v > result.best_value + tol) {
            have_best = true;
            result.best_value = v;
            result.best_assignment = std::move(z);
            result.tie_count = 1;
        } else if (std::abs(v - result.best_value) <= tol) {
            ++result.tie_count;
            if (z < result.best_assignment) result.best_assignment = std::move(z);
        }
    }

    void recurse() {
        const auto next = first_uncovered();
        if (!next) {
            finish();
            return;
        }
        const auto [fixed_k, fixed_i] = *next;
        std::vector<std::size_t> tuple(C.order());
        tuple[fixed_k] = fixed_i;
        // Enumerate the remaining slots; each is a virtual or an uncovered real candidate.
        auto fill = [&](auto&& self, std::size_t k) -> void {
            if (k == C.order()) {
                std::vector<std::size_t> math(tuple.size());
                for (std::size_t m = 0; m < tuple.size(); ++m) {
                    math[m] = tuple[m] + 1;
                    if (!is_virtual(m, tuple[m])) covered[m][tuple[m]] = 1;
                }
                chosen.push_back(std::move(math));
                recurse();
                chosen.pop_back();
                for (std::size_t m = 0; m < tuple.size(); ++m) {
                    if (!is_virtual(m, tuple[m])) covered[m][tuple[m]] = 0;
                }
                return;
            }
            if (k == fixed_k) {
                self(self, k + 1);
                return;
            }
            for (std::size_t i = 0; i < C.dim(k); ++i) {
                if (!is_virtual(k, i) && covered[k][i]) continue;
                tuple[k] = i;
                self(self, k + 1);
            }
        };
        fill(fill, 0);
    }
};

}  // namespace

BruteForceResult brute_force_mda(const Tensor& C, const MdaConstraints& constraints) {
    if (C.order() < 2) throw ContractError("brute_force_mda: tensor order must be >= 2");
    if (constraints.virtual_slot.size() != C.order()) throw ContractError("brute_force_mda: one constraint per frame");
    Search s{C, constraints, {}, {}, {}, false, true, {}};
    for (std::size_t k = 0; k < C.order(); ++k) s.covered.emplace_back(C.dim(k), 0);
    s.recurse();
    if (s.recording) s.result.all_values = std::move(s.recorded);
    return s.result;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x0, const FiniteDiffOptions& options) {
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> grad(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = options.relative_step * std::abs(x0[i]) + options.absolute_step;
        if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
        x[i] = x0[i] + h;
        const double fp = f(x);
        x[i] = x0[i] - h;
        const double fm = f(x);
        x[i] = x0[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw ProbeError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i), i);
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

bool gradients_agree(double analytic, double numeric, double rel_tol, double abs_tol) {
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace mdt::oracle
