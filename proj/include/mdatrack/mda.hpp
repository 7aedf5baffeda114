#pragma once

#include "mdatrack/tensor.hpp"

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace mdt {

using AssignmentVector = std::vector<double>;

struct SolverConfig {
    std::size_t power_iterations = 10;     // N
    std::size_t normalization_pairs = 10;  // M, each a row pass then a column pass
    /// Rows/columns that are identically zero on entry to the l1 layer are left
    /// alone and reported instead of raising DegenerateNormalizationError.
    bool exclude_zero_lines = true;
};

/// Every iterate of the rank-1 power iteration, kept for the backward pass.
struct PowerIterationState {
    std::vector<std::vector<AssignmentVector>> history;  // history[n][k-1] = x^(k)(n), n = 0..N
    std::vector<double> contraction;                     // C^(n), n = 0..N-1
    /// flushed[n][k-1][j]: x^(k)(n+1)_j fell below kFlushThreshold and was set to 0.
    std::vector<std::vector<std::vector<char>>> flushed;

    std::size_t iterations() const noexcept { return contraction.size(); }
    const std::vector<AssignmentVector>& final() const { return history.back(); }
};

/// Iterate entries below this are replaced by exact zeros. The update squares
/// the spread between hypotheses every step, so losers reach the subnormal range
/// after about ten iterations, where the backward pass would overflow.
inline constexpr double kFlushThreshold = 1e-280;

/// Full contraction A x_1 x_2 ... x_K.
double multilinear_objective(const Tensor& A, const std::vector<AssignmentVector>& x);

/// Runs N synchronous power iterations from all-ones vectors. Each pair's
/// iterate is renormalised by the shared contraction C^(n).
PowerIterationState power_iteration_forward(const Tensor& A, std::size_t iterations);

struct PowerIterationGradient {
    Tensor dL_dA;
    std::vector<AssignmentVector> dL_dx_initial;
};

PowerIterationGradient power_iteration_backward(const Tensor& A, const PowerIterationState& state,
                                                const std::vector<AssignmentVector>& dL_dx_final);

/// Per frame pair: rows normalised only column-wise and columns normalised only
/// row-wise. In tracking mode these hold the virtual row/column (last slot).
struct PartialNormMask {
    std::vector<std::vector<std::size_t>> column_only_rows;
    std::vector<std::vector<std::size_t>> row_only_cols;

    static PartialNormMask empty(std::size_t pairs);
    bool row_is_column_only(std::size_t k, std::size_t row) const;
    bool col_is_row_only(std::size_t k, std::size_t col) const;
};

/// Reshape x^(k) (length I_{k-1} I_k) to X^(k) (I_{k-1} x I_k) and back.
std::vector<Matrix> to_matrices(const std::vector<AssignmentVector>& x, const Shape& c_shape);
std::vector<AssignmentVector> to_vectors(const std::vector<Matrix>& X);

struct NormalizationState {
    std::vector<std::vector<Matrix>> history;  // history[k-1][s], s = 0..2M
    PartialNormMask mask;                      // effective mask, zero lines folded in
    std::vector<std::vector<std::size_t>> excluded_rows;
    std::vector<std::vector<std::size_t>> excluded_cols;

    std::vector<Matrix> final() const;
};

NormalizationState l1_normalize_forward(const std::vector<Matrix>& X, const PartialNormMask& mask,
                                        std::size_t pairs, bool exclude_zero_lines = false);

std::vector<Matrix> l1_normalize_backward(const NormalizationState& state, const std::vector<Matrix>& dL_dX_final);

struct BceResult {
    double loss = 0.0;
    std::vector<Matrix> dL_dX;
};

inline constexpr double kBceClamp = 1e-7;

/// Standard (non-negative) binary cross-entropy summed over every entry of every pair.
BceResult bce_loss(const std::vector<Matrix>& predicted, const std::vector<Matrix>& truth);

/// Binary assignment per pair: maximum-weight matching on the real block, with
/// any number of real rows allowed onto the virtual column (and real columns
/// onto the virtual row) when that is the better use of the row.
std::vector<Matrix> discretize(const std::vector<Matrix>& X, const PartialNormMask& mask);

/// Spec-facing bundle of the solver state for one batch.
struct AssignmentState {
    PowerIterationState power;
    NormalizationState normalization;
    std::vector<Matrix> soft;  // output of the l1 layer
};

/// Forward pass: power iteration then the l1 layer.
AssignmentState solve_assignment(const Tensor& A, const Shape& c_shape, const PartialNormMask& mask,
                                 const SolverConfig& config);

/// Backward pass through both layers for a gradient on the soft output.
Tensor solve_assignment_backward(const Tensor& A, const AssignmentState& state, const std::vector<Matrix>& dL_dsoft);

/// Deterministic plain-text dump: one tensor block per stored vector/matrix.
void dump_state(std::ostream& out, const AssignmentState& state);

}  // namespace mdt
