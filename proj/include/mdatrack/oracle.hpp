#pragma once

#include "mdatrack/tensor.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mdt::oracle {

/// One trajectory tuple per selected hypothesis, 1-based, sorted lexicographically.
using FullAssignment = std::vector<std::vector<std::size_t>>;

struct MdaConstraints {
    /// Per frame: storage index of a virtual slot that may be used any number of times.
    std::vector<std::optional<std::size_t>> virtual_slot;

    static MdaConstraints strict(std::size_t frames) { return {std::vector<std::optional<std::size_t>>(frames)}; }
};

struct BruteForceResult {
    FullAssignment best_assignment;
    double best_value = 0.0;
    std::size_t feasible_count = 0;
    std::size_t tie_count = 0;  // assignments attaining best_value
    /// Every feasible assignment with its value, kept when there are at most 1e5.
    std::optional<std::vector<std::pair<FullAssignment, double>>> all_values;
};

inline constexpr std::size_t kMaxFeasible = 1'000'000;
inline constexpr std::size_t kMaxRecorded = 100'000;

/// Exhaustive search over assignments in which every real candidate lies on
/// exactly one selected trajectory. Ties go to the lexicographically smallest
/// encoding. Throws SizeGuardError past kMaxFeasible assignments.
BruteForceResult brute_force_mda(const Tensor& C, const MdaConstraints& constraints);

/// Objective ||C o Z||_1 of a full assignment.
double assignment_value(const Tensor& C, const FullAssignment& z);

struct FiniteDiffOptions {
    double relative_step = 1e-5;
    double absolute_step = 1e-8;
};

/// Central differences per coordinate with step relative_step * |x_i| + absolute_step.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x0, const FiniteDiffOptions& options = {});

/// |a - b| <= abs_tol or |a - b| <= rel_tol * max(|a|, |b|).
bool gradients_agree(double analytic, double numeric, double rel_tol, double abs_tol);

}  // namespace mdt::oracle
