#include "mdatrack/mda.hpp"

#include "mdatrack/errors.hpp"
#include "mdatrack/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mdt {

namespace {

constexpr double kMinContraction = 1e-30;

// Odometer over a tensor's multi-indices in row-major order.
class IndexWalker {
public:
    explicit IndexWalker(const Shape& shape) : shape_(shape), idx_(shape.size(), 0) {}
    const std::vector<std::size_t>& index() const noexcept { return idx_; }
    void advance() {
        for (std::size_t a = shape_.size(); a-- > 0;) {
            if (++idx_[a] < shape_[a]) return;
            idx_[a] = 0;
        }
    }

private:
    const Shape& shape_;
    std::vector<std::size_t> idx_;
};

void check_vectors(const Tensor& A, const std::vector<AssignmentVector>& x, const char* what) {
    if (x.size() != A.order()) throw ContractError(std::string(what) + ": expected one vector per tensor mode");
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].size() != A.dim(k)) throw ContractError(std::string(what) + ": vector length != tensor dimension");
    }
}

bool all_finite(const std::vector<AssignmentVector>& x) {
    for (const auto& v : x) {
        for (double e : v) {
            if (!std::isfinite(e)) return false;
        }
    }
    return true;
}

}  // namespace

double multilinear_objective(const Tensor& A, const std::vector<AssignmentVector>& x) {
    check_vectors(A, x, "multilinear_objective");
    IndexWalker walk(A.shape());
    double total = 0.0;
    for (std::size_t flat = 0; flat < A.size(); ++flat, walk.advance()) {
        const double a = A[flat];
        if (a == 0.0) continue;
        double q = a;
        for (std::size_t m = 0; m < x.size(); ++m) q *= x[m][walk.index()[m]];
        total += q;
    }
    return total;
}

PowerIterationState power_iteration_forward(const Tensor& A, std::size_t iterations) {
    if (iterations < 1) throw ContractError("power iteration needs N >= 1");
    if (A.order() < 1) throw ContractError("power iteration needs a tensor of order >= 1");
    for (double a : A.data()) {
        if (!std::isfinite(a)) throw NumericError("affinity tensor contains non-finite values");
        if (a < 0.0) throw ContractError("affinity tensor must be non-negative");
    }
    const std::size_t K = A.order();
    PowerIterationState state;
    std::vector<AssignmentVector> x(K);
    for (std::size_t k = 0; k < K; ++k) x[k].assign(A.dim(k), 1.0);
    state.history.push_back(x);

    for (std::size_t n = 0; n < iterations; ++n) {
        const auto& cur = state.history.back();
        std::vector<AssignmentVector> partial(K);
        for (std::size_t k = 0; k < K; ++k) partial[k].assign(A.dim(k), 0.0);
        double contraction = 0.0;
        IndexWalker walk(A.shape());
        for (std::size_t flat = 0; flat < A.size(); ++flat, walk.advance()) {
            const double a = A[flat];
            if (a == 0.0) continue;
            const auto& idx = walk.index();
            double q = a;
            for (std::size_t m = 0; m < K; ++m) q *= cur[m][idx[m]];
            contraction += q;
            for (std::size_t k = 0; k < K; ++k) partial[k][idx[k]] += q;
        }
        if (!std::isfinite(contraction)) {
            throw NumericError("power iteration " + std::to_string(n) + ": non-finite contraction");
        }
        if (contraction < kMinContraction) {
            throw DegenerateInputError("power iteration " + std::to_string(n) + ": contraction C^(n) is zero", n);
        }
        std::vector<std::vector<char>> flushed(K);
        for (std::size_t k = 0; k < K; ++k) {
            flushed[k].assign(partial[k].size(), 0);
            for (std::size_t j = 0; j < partial[k].size(); ++j) {
                double& e = partial[k][j];
                e /= contraction;
                if (e > 0.0 && e < kFlushThreshold) {
                    e = 0.0;
                    flushed[k][j] = 1;
                }
            }
        }
        state.flushed.push_back(std::move(flushed));
        if (!all_finite(partial)) throw NumericError("power iteration " + std::to_string(n) + ": non-finite iterate");
        state.contraction.push_back(contraction);
        state.history.push_back(std::move(partial));
    }
    return state;
}

namespace {

// Gradients are carried in log coordinates, h = x * dL/dx, wherever the value is
// positive, and linearly, g = dL/dx, where it is exactly zero. Iterates span
// hundreds of decades after a few steps, so dL/dx alone overflows long before
// the gradient with respect to A does.
struct RelGrad {
    std::vector<double> h;
    std::vector<double> g;
};

RelGrad to_relative(const AssignmentVector& value, const AssignmentVector& linear) {
    RelGrad r{std::vector<double>(value.size(), 0.0), std::vector<double>(value.size(), 0.0)};
    for (std::size_t j = 0; j < value.size(); ++j) {
        if (value[j] > 0.0) {
            r.h[j] = value[j] * linear[j];
        } else {
            r.g[j] = linear[j];
        }
    }
    return r;
}

AssignmentVector to_linear(const AssignmentVector& value, const RelGrad& r) {
    AssignmentVector out(value.size());
    for (std::size_t j = 0; j < value.size(); ++j) out[j] = value[j] > 0.0 ? r.h[j] / value[j] : r.g[j];
    return out;
}

// One reverse step of the power iteration: from gradients on y = x(n+1) to x(n),
// accumulating dL/dA on the way.
std::vector<RelGrad> power_step_backward(const Tensor& A, const std::vector<AssignmentVector>& x,
                                         const std::vector<AssignmentVector>& y, double C,
                                         const std::vector<RelGrad>& gy, Tensor& dL_dA) {
    const std::size_t K = A.order();
    double H = 0.0;  // y^T dL/dy summed over pairs
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < y[k].size(); ++j) H += gy[k].h[j];
    }
    // S^(k)_j: the slice sum that produced y^(k)_j.
    std::vector<AssignmentVector> S(K);
    for (std::size_t k = 0; k < K; ++k) {
        S[k].assign(y[k].size(), 0.0);
        for (std::size_t j = 0; j < y[k].size(); ++j) {
            if (y[k][j] > 0.0) S[k][j] = y[k][j] * C / x[k][j];
        }
    }

    std::vector<RelGrad> gx(K);
    for (std::size_t p = 0; p < K; ++p) {
        gx[p].h.assign(x[p].size(), 0.0);
        gx[p].g.assign(x[p].size(), 0.0);
        for (std::size_t q = 0; q < x[p].size(); ++q) {
            if (x[p][q] > 0.0 && y[p][q] > 0.0) gx[p].h[q] = gy[p].h[q] - H * y[p][q];
        }
    }

    std::vector<double> excl(K);  // product of x over every mode except k
    std::vector<double> lin(K);   // dL/dy at this entry, linear; only read where finite and needed
    IndexWalker walk(A.shape());
    for (std::size_t flat = 0; flat < A.size(); ++flat, walk.advance()) {
        const auto& idx = walk.index();
        const double a = A[flat];
        bool any_zero = false;
        for (std::size_t k = 0; k < K; ++k) {
            double e = 1.0;
            for (std::size_t m = 0; m < K; ++m) {
                if (m != k) e *= x[m][idx[m]];
            }
            excl[k] = e;
            if (x[k][idx[k]] == 0.0) any_zero = true;
        }

        // dL/da = sum_k P gbar_k / C - H P / C, P = prod_m x_m.
        double da = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t j = idx[k];
            if (y[k][j] > 0.0) {
                da += excl[k] / S[k][j] * gy[k].h[j];
            } else if (!any_zero) {
                da += excl[k] * x[k][j] * gy[k].g[j] / C;
            }
        }
        if (!any_zero) {
            double P = excl[0] * x[0][idx[0]];
            da -= H * P / C;
        }
        dL_dA[flat] += da;

        if (a == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t j = idx[k];
            lin[k] = y[k][j] > 0.0 ? gy[k].h[j] / y[k][j] : gy[k].g[j];
        }
        for (std::size_t p = 0; p < K; ++p) {
            const std::size_t q = idx[p];
            if (x[p][q] > 0.0) {
                // Cross-pair terms: the share of S^(k) this entry contributes, times h^(k).
                for (std::size_t k = 0; k < K; ++k) {
                    if (k == p || !(y[k][idx[k]] > 0.0)) continue;
                    gx[p].h[q] += a * excl[k] / S[k][idx[k]] * gy[k].h[idx[k]];
                }
                continue;
            }
            double acc = excl[p] * (lin[p] - H);
            for (std::size_t k = 0; k < K; ++k) {
                if (k == p) continue;
                double e = 1.0;
                for (std::size_t m = 0; m < K; ++m) {
                    if (m != p && m != k) e *= x[m][idx[m]];
                }
                if (e != 0.0) acc += e * lin[k];
            }
            gx[p].g[q] += a * acc / C;
        }
    }
    return gx;
}

Tensor power_backward_relative(const Tensor& A, const PowerIterationState& state, std::vector<RelGrad> gbar,
                               std::vector<RelGrad>* initial) {
    const std::size_t N = state.iterations();
    const std::size_t K = A.order();
    Tensor dL_dA(A.shape());
    for (std::size_t n = N; n-- > 0;) {
        // A flushed entry is a constant zero; nothing flows back through it.
        if (n < state.flushed.size()) {
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t j = 0; j < gbar[k].g.size(); ++j) {
                    if (state.flushed[n][k][j]) gbar[k].h[j] = gbar[k].g[j] = 0.0;
                }
            }
        }
        gbar = power_step_backward(A, state.history[n], state.history[n + 1], state.contraction[n], gbar, dL_dA);
    }
    if (!dL_dA.all_finite()) throw NumericError("power iteration backward: non-finite gradient");
    if (initial) *initial = std::move(gbar);
    return dL_dA;
}

void check_history(const Tensor& A, const PowerIterationState& state) {
    const std::size_t N = state.iterations();
    if (N == 0 || state.history.size() != N + 1) throw ContractError("power iteration history is incomplete");
    for (const auto& xs : state.history) check_vectors(A, xs, "power_iteration_backward history");
}

}  // namespace

PowerIterationGradient power_iteration_backward(const Tensor& A, const PowerIterationState& state,
                                                const std::vector<AssignmentVector>& dL_dx_final) {
    check_history(A, state);
    check_vectors(A, dL_dx_final, "power_iteration_backward");
    std::vector<RelGrad> gbar;
    for (std::size_t k = 0; k < A.order(); ++k) gbar.push_back(to_relative(state.final()[k], dL_dx_final[k]));
    PowerIterationGradient out;
    std::vector<RelGrad> initial;
    out.dL_dA = power_backward_relative(A, state, std::move(gbar), &initial);
    for (std::size_t k = 0; k < A.order(); ++k) out.dL_dx_initial.push_back(to_linear(state.history[0][k], initial[k]));
    if (!all_finite(out.dL_dx_initial)) throw NumericError("power iteration backward: non-finite gradient");
    return out;
}

// ---------------------------------------------------------------------------
// l1 normalization

PartialNormMask PartialNormMask::empty(std::size_t pairs) {
    PartialNormMask m;
    m.column_only_rows.resize(pairs);
    m.row_only_cols.resize(pairs);
    return m;
}

bool PartialNormMask::row_is_column_only(std::size_t k, std::size_t row) const {
    if (k >= column_only_rows.size()) return false;
    const auto& v = column_only_rows[k];
    return std::find(v.begin(), v.end(), row) != v.end();
}

bool PartialNormMask::col_is_row_only(std::size_t k, std::size_t col) const {
    if (k >= row_only_cols.size()) return false;
    const auto& v = row_only_cols[k];
    return std::find(v.begin(), v.end(), col) != v.end();
}

std::vector<Matrix> to_matrices(const std::vector<AssignmentVector>& x, const Shape& c_shape) {
    if (c_shape.size() != x.size() + 1) throw ContractError("to_matrices: shape order != K+1");
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < x.size(); ++k) {
        Matrix m(c_shape[k], c_shape[k + 1]);
        if (x[k].size() != m.values.size()) throw ContractError("to_matrices: vector length mismatch");
        m.values = x[k];
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<AssignmentVector> to_vectors(const std::vector<Matrix>& X) {
    std::vector<AssignmentVector> out;
    out.reserve(X.size());
    for (const auto& m : X) out.push_back(m.values);
    return out;
}

std::vector<Matrix> NormalizationState::final() const {
    std::vector<Matrix> out;
    for (const auto& h : history) out.push_back(h.back());
    return out;
}

namespace {

void row_step(const Matrix& in, Matrix& out, const std::vector<char>& skip) {
    out = in;
    for (std::size_t r = 0; r < in.rows; ++r) {
        if (skip[r]) continue;
        double sum = 0.0;
        for (std::size_t c = 0; c < in.cols; ++c) sum += in(r, c);
        for (std::size_t c = 0; c < in.cols; ++c) out(r, c) = in(r, c) / sum;
    }
}

void col_step(const Matrix& in, Matrix& out, const std::vector<char>& skip) {
    out = in;
    for (std::size_t c = 0; c < in.cols; ++c) {
        if (skip[c]) continue;
        double sum = 0.0;
        for (std::size_t r = 0; r < in.rows; ++r) sum += in(r, c);
        for (std::size_t r = 0; r < in.rows; ++r) out(r, c) = in(r, c) / sum;
    }
}

}  // namespace

NormalizationState l1_normalize_forward(const std::vector<Matrix>& X, const PartialNormMask& mask, std::size_t pairs,
                                        bool exclude_zero_lines) {
    using Axis = DegenerateNormalizationError::Axis;
    NormalizationState state;
    state.mask = PartialNormMask::empty(X.size());
    state.excluded_rows.resize(X.size());
    state.excluded_cols.resize(X.size());
    state.history.resize(X.size());

    for (std::size_t k = 0; k < X.size(); ++k) {
        const Matrix& m = X[k];
        for (double v : m.values) {
            if (!std::isfinite(v)) throw NumericError("l1 normalization input is not finite");
            if (v < 0.0) throw ContractError("l1 normalization input must be non-negative");
        }
        std::vector<char> skip_row(m.rows, 0), skip_col(m.cols, 0);
        for (std::size_t r = 0; r < m.rows; ++r) {
            if (mask.row_is_column_only(k, r)) {
                skip_row[r] = 1;
                state.mask.column_only_rows[k].push_back(r);
                continue;
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < m.cols; ++c) sum += m(r, c);
            if (sum > 0.0) continue;
            if (!exclude_zero_lines) {
                throw DegenerateNormalizationError("pair " + std::to_string(k + 1) + ": row " + std::to_string(r + 1) +
                                                       " sums to zero",
                                                   k + 1, Axis::Row, r + 1);
            }
            skip_row[r] = 1;
            state.excluded_rows[k].push_back(r);
        }
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (mask.col_is_row_only(k, c)) {
                skip_col[c] = 1;
                state.mask.row_only_cols[k].push_back(c);
                continue;
            }
            double sum = 0.0;
            for (std::size_t r = 0; r < m.rows; ++r) sum += m(r, c);
            if (sum > 0.0) continue;
            if (!exclude_zero_lines) {
                throw DegenerateNormalizationError("pair " + std::to_string(k + 1) + ": column " +
                                                       std::to_string(c + 1) + " sums to zero",
                                                   k + 1, Axis::Column, c + 1);
            }
            skip_col[c] = 1;
            state.excluded_cols[k].push_back(c);
        }
        for (auto r : state.excluded_rows[k]) state.mask.column_only_rows[k].push_back(r);
        for (auto c : state.excluded_cols[k]) state.mask.row_only_cols[k].push_back(c);

        auto& hist = state.history[k];
        hist.reserve(2 * pairs + 1);
        hist.push_back(m);
        for (std::size_t s = 0; s < pairs; ++s) {
            Matrix next;
            row_step(hist.back(), next, skip_row);
            hist.push_back(std::move(next));
            col_step(hist.back(), next, skip_col);
            hist.push_back(std::move(next));
        }
        for (std::size_t e = 0; e < m.values.size(); ++e) {
            const double v = hist.back().values[e];
            if (!std::isfinite(v)) throw NumericError("l1 normalization produced non-finite values");
            if (m.values[e] > 0.0 && !(v > 0.0)) throw NumericError("l1 normalization underflowed a positive entry");
        }
    }
    return state;
}

namespace {

// Reverse pass of the l1 layer for one pair, in the same mixed coordinates as
// the power iteration. Normalisation never changes which entries are zero.
RelGrad l1_pair_backward(const NormalizationState& state, std::size_t k, const Matrix& G) {
    const auto& hist = state.history[k];
    if (hist.empty() || hist.size() % 2 == 0) throw ContractError("l1 backward: normalization history is incomplete");
    if (G.rows != hist.back().rows || G.cols != hist.back().cols) {
        throw ContractError("l1 backward: gradient shape mismatch");
    }
    const Matrix& first = hist.front();
    RelGrad r = to_relative(hist.back().values, G.values);
    const std::size_t rows = first.rows, cols = first.cols;
    auto at = [cols](std::size_t i, std::size_t j) { return i * cols + j; };

    for (std::size_t s = hist.size() - 1; s >= 1; --s) {
        const Matrix& in = hist[s - 1];
        const Matrix& out = hist[s];
        const bool row_pass = (s % 2 == 1);
        const std::size_t lines = row_pass ? rows : cols;
        const std::size_t len = row_pass ? cols : rows;
        for (std::size_t a = 0; a < lines; ++a) {
            if (row_pass ? state.mask.row_is_column_only(k, a) : state.mask.col_is_row_only(k, a)) continue;
            double sum = 0.0, hsum = 0.0;
            for (std::size_t b = 0; b < len; ++b) {
                const std::size_t e = row_pass ? at(a, b) : at(b, a);
                sum += in.values[e];
                hsum += r.h[e];
            }
            for (std::size_t b = 0; b < len; ++b) {
                const std::size_t e = row_pass ? at(a, b) : at(b, a);
                if (first.values[e] > 0.0) {
                    r.h[e] -= out.values[e] * hsum;
                } else {
                    r.g[e] = (r.g[e] - hsum) / sum;
                }
            }
        }
    }
    return r;
}

}  // namespace

std::vector<Matrix> l1_normalize_backward(const NormalizationState& state, const std::vector<Matrix>& dL_dX_final) {
    if (dL_dX_final.size() != state.history.size()) throw ContractError("l1 backward: one gradient per pair required");
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < state.history.size(); ++k) {
        const RelGrad r = l1_pair_backward(state, k, dL_dX_final[k]);
        Matrix m = state.history[k].front();
        m.values = to_linear(m.values, r);
        for (double v : m.values) {
            if (!std::isfinite(v)) throw NumericError("l1 backward: non-finite gradient");
        }
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// loss

BceResult bce_loss(const std::vector<Matrix>& predicted, const std::vector<Matrix>& truth) {
    if (predicted.size() != truth.size()) throw ContractError("bce_loss: pair count mismatch");
    BceResult result;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
        const Matrix& x = predicted[k];
        const Matrix& t = truth[k];
        if (x.rows != t.rows || x.cols != t.cols) throw ContractError("bce_loss: matrix shape mismatch");
        Matrix g(x.rows, x.cols);
        for (std::size_t i = 0; i < x.values.size(); ++i) {
            const double target = t.values[i];
            const double raw = x.values[i];
            const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
            result.loss -= target * std::log(p) + (1.0 - target) * std::log(1.0 - p);
            const bool clamped = raw <= kBceClamp || raw >= 1.0 - kBceClamp;
            g.values[i] = clamped ? 0.0 : (-target / p + (1.0 - target) / (1.0 - p));
        }
        result.dL_dX.push_back(std::move(g));
    }
    return result;
}

// ---------------------------------------------------------------------------
// discretization

std::vector<Matrix> discretize(const std::vector<Matrix>& X, const PartialNormMask& mask) {
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < X.size(); ++k) {
        const Matrix& m = X[k];
        Matrix bin(m.rows, m.cols);
        std::vector<std::size_t> real_rows, virtual_rows, real_cols, virtual_cols;
        for (std::size_t r = 0; r < m.rows; ++r) {
            (mask.row_is_column_only(k, r) ? virtual_rows : real_rows).push_back(r);
        }
        for (std::size_t c = 0; c < m.cols; ++c) {
            (mask.col_is_row_only(k, c) ? virtual_cols : real_cols).push_back(c);
        }

        // Real columns, then one copy of the virtual column per real row so that
        // several rows may land on it.
        const std::size_t copies = virtual_cols.empty() ? 0 : real_rows.size();
        Matrix w(real_rows.size(), real_cols.size() + copies);
        std::vector<std::size_t> best_virtual(real_rows.size(), 0);
        for (std::size_t r = 0; r < real_rows.size(); ++r) {
            for (std::size_t c = 0; c < real_cols.size(); ++c) w(r, c) = m(real_rows[r], real_cols[c]);
            double vbest = 0.0;
            for (auto vc : virtual_cols) {
                if (m(real_rows[r], vc) > vbest) {
                    vbest = m(real_rows[r], vc);
                    best_virtual[r] = vc;
                }
            }
            for (std::size_t c = 0; c < copies; ++c) w(r, real_cols.size() + c) = vbest;
        }
        const auto choice = max_weight_assignment(w);
        std::vector<char> col_taken(m.cols, 0);
        for (std::size_t r = 0; r < real_rows.size(); ++r) {
            if (choice[r] < 0) continue;
            const auto c = static_cast<std::size_t>(choice[r]);
            if (!(w(r, c) > 0.0)) continue;  // structurally impossible pairing
            const std::size_t col = c < real_cols.size() ? real_cols[c] : best_virtual[r];
            bin(real_rows[r], col) = 1.0;
            col_taken[col] = 1;
        }
        // Real columns nobody claimed may start from the virtual row.
        for (auto c : real_cols) {
            if (col_taken[c]) continue;
            double vbest = 0.0;
            std::size_t vrow = 0;
            bool found = false;
            for (auto vr : virtual_rows) {
                if (m(vr, c) > vbest) {
                    vbest = m(vr, c);
                    vrow = vr;
                    found = true;
                }
            }
            if (found) bin(vrow, c) = 1.0;
        }
        out.push_back(std::move(bin));
    }
    return out;
}

AssignmentState solve_assignment(const Tensor& A, const Shape& c_shape, const PartialNormMask& mask,
                                 const SolverConfig& config) {
    AssignmentState state;
    state.power = power_iteration_forward(A, config.power_iterations);
    const auto X = to_matrices(state.power.final(), c_shape);
    state.normalization = l1_normalize_forward(X, mask, config.normalization_pairs, config.exclude_zero_lines);
    state.soft = state.normalization.final();
    return state;
}

Tensor solve_assignment_backward(const Tensor& A, const AssignmentState& state, const std::vector<Matrix>& dL_dsoft) {
    check_history(A, state.power);
    if (dL_dsoft.size() != A.order()) throw ContractError("solve_assignment_backward: one gradient per pair required");
    std::vector<RelGrad> gbar;
    for (std::size_t k = 0; k < A.order(); ++k) gbar.push_back(l1_pair_backward(state.normalization, k, dL_dsoft[k]));
    return power_backward_relative(A, state.power, std::move(gbar), nullptr);
}

void dump_state(std::ostream& out, const AssignmentState& state) {
    out << "# power_iterations " << state.power.iterations() << '\n';
    for (std::size_t n = 0; n < state.power.history.size(); ++n) {
        for (std::size_t k = 0; k < state.power.history[n].size(); ++k) {
            const auto& v = state.power.history[n][k];
            out << "# x pair " << (k + 1) << " iteration " << n << '\n';
            Tensor t({v.size()});
            std::copy(v.begin(), v.end(), t.data().begin());
            write_tensor(out, t);
        }
    }
    for (std::size_t n = 0; n < state.power.contraction.size(); ++n) {
        out << "# contraction iteration " << n << '\n';
        Tensor t({1}, state.power.contraction[n]);
        write_tensor(out, t);
    }
    for (std::size_t k = 0; k < state.soft.size(); ++k) {
        out << "# soft assignment pair " << (k + 1) << '\n';
        const auto& m = state.soft[k];
        Tensor t({m.rows, m.cols});
        std::copy(m.values.begin(), m.values.end(), t.data().begin());
        write_tensor(out, t);
    }
}

}  // namespace mdt
