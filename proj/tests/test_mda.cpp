#include "mdatrack/affinity.hpp"
#include "mdatrack/errors.hpp"
#include "mdatrack/mda.hpp"
#include "mdatrack/oracle.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mdt;
using test::col_sum;
using test::row_sum;

namespace {

// Random positive C on all tuples, reshaped to A.
Tensor random_A(std::mt19937_64& rng, const Shape& I, double lo = 0.1, double hi = 1.0) {
    Tensor C(I);
    const auto v = test::uniform_vector(rng, C.size(), lo, hi);
    std::copy(v.begin(), v.end(), C.data().begin());
    return reshape_C_to_A(C, std::vector<char>(C.size(), 1));
}

Shape random_shape(std::mt19937_64& rng, std::size_t frames, std::size_t max_dim) {
    std::uniform_int_distribution<std::size_t> d(1, max_dim);
    Shape I(frames);
    for (auto& v : I) v = d(rng);
    return I;
}

// Middle indices of every adjacent pair index agree.
bool on_support(const Shape& I, std::span<const std::size_t> j) {
    for (std::size_t k = 1; k < j.size(); ++k) {
        if (j[k - 1] % I[k] != j[k] / I[k + 1]) return false;
    }
    return true;
}

double linear_readout(const std::vector<AssignmentVector>& x, const std::vector<AssignmentVector>& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        for (std::size_t j = 0; j < x[k].size(); ++j) s += x[k][j] * w[k][j];
    }
    return s;
}

double matrix_readout(const std::vector<Matrix>& X, const std::vector<Matrix>& W) {
    double s = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        for (std::size_t i = 0; i < X[k].values.size(); ++i) s += X[k].values[i] * W[k].values[i];
    }
    return s;
}

Tensor with_entry(const Tensor& A, std::size_t flat, double v) {
    Tensor B = A;
    B[flat] = v;
    return B;
}

}  // namespace

TEST_CASE("single hypothesis keeps unit iterates") {
    Tensor A({1, 1}, 2.5);
    const auto s = power_iteration_forward(A, 7);
    REQUIRE(s.history.size() == 8);
    for (const auto& step : s.history) {
        CHECK(step[0] == AssignmentVector{1.0});
        CHECK(step[1] == AssignmentVector{1.0});
    }
}

TEST_CASE("forward iterates follow the synchronous matrix update") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto I = random_shape(rng, 3, 3);
        const auto A = random_A(rng, I);
        const std::size_t rows = A.dim(0), cols = A.dim(1);
        const auto s = power_iteration_forward(A, 3);
        std::vector<double> x1(rows, 1.0), x2(cols, 1.0);
        for (std::size_t n = 0; n < 3; ++n) {
            double C = 0.0;
            std::vector<double> Ax2(rows, 0.0), Atx1(cols, 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    const double a = A.at({r, c});
                    C += x1[r] * a * x2[c];
                    Ax2[r] += a * x2[c];
                    Atx1[c] += a * x1[r];
                }
            }
            CHECK(s.contraction[n] == doctest::Approx(C).epsilon(1e-13));
            for (std::size_t r = 0; r < rows; ++r) x1[r] = x1[r] * Ax2[r] / C;
            for (std::size_t c = 0; c < cols; ++c) x2[c] = x2[c] * Atx1[c] / C;
            for (std::size_t r = 0; r < rows; ++r) CHECK(s.history[n + 1][0][r] == doctest::Approx(x1[r]).epsilon(1e-12));
            for (std::size_t c = 0; c < cols; ++c) CHECK(s.history[n + 1][1][c] == doctest::Approx(x2[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("identity-dominant instance resolves to the identity") {
    Tensor C({2, 2, 2}, 0.1);
    C.at({0, 0, 0}) = 1.0;
    C.at({1, 1, 1}) = 1.0;
    const auto A = reshape_C_to_A(C, std::vector<char>(8, 1));
    const auto state = solve_assignment(A, C.shape(), PartialNormMask::empty(2), {20, 10, false});
    const auto bin = discretize(state.soft, PartialNormMask::empty(2));
    for (const auto& m : bin) {
        CHECK(m(0, 0) == 1.0);
        CHECK(m(1, 1) == 1.0);
        CHECK(m(0, 1) == 0.0);
        CHECK(m(1, 0) == 0.0);
    }
    // oracle agrees
    const auto best = oracle::brute_force_mda(C, oracle::MdaConstraints::strict(3));
    CHECK(best.best_assignment == oracle::FullAssignment{{1, 1, 1}, {2, 2, 2}});
}

TEST_CASE("uniform symmetric instance stays uniform") {
    const auto A = reshape_C_to_A(Tensor({2, 2, 2}, 0.3), std::vector<char>(8, 1));
    const auto s = power_iteration_forward(A, 10);
    for (const auto& step : s.history) {
        for (const auto& x : step) {
            for (double v : x) CHECK(v == doctest::Approx(x[0]).epsilon(1e-14));
        }
    }
}

TEST_CASE("forward errors") {
    CHECK_THROWS_AS(power_iteration_forward(Tensor({2, 2}), 3), DegenerateInputError);
    Tensor neg({2, 2}, 1.0);
    neg[1] = -0.1;
    CHECK_THROWS_AS(power_iteration_forward(neg, 3), ContractError);
    Tensor inf({2, 2}, 1.0);
    inf[0] = INFINITY;
    CHECK_THROWS_AS(power_iteration_forward(inf, 3), NumericError);
    CHECK_THROWS_AS(power_iteration_forward(Tensor({1, 1}, 1.0), 0), ContractError);
}

TEST_CASE("power backward of a zero gradient is zero") {
    std::mt19937_64 rng(8);
    const auto A = random_A(rng, {3, 2, 3});
    const auto s = power_iteration_forward(A, 5);
    std::vector<AssignmentVector> zero{AssignmentVector(6, 0.0), AssignmentVector(6, 0.0)};
    const auto g = power_iteration_backward(A, s, zero);
    for (double v : g.dL_dA.data()) CHECK(v == 0.0);
    PowerIterationState broken = s;
    broken.history.pop_back();
    CHECK_THROWS_AS(power_iteration_backward(A, broken, zero), ContractError);
}

TEST_CASE("one-step backward matches hand differentiation") {
    // With unit start vectors, x1_r = rowsum_r / C and x2_c = colsum_c / C, so
    // dL/da_rc = (g1_r - g1.x1) / C + (g2_c - g2.x2) / C.
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const Shape I{2, 2, 2};
        const auto A = random_A(rng, I);
        const auto s = power_iteration_forward(A, 1);
        const std::vector<AssignmentVector> g{test::uniform_vector(rng, 4, -1, 1), test::uniform_vector(rng, 4, -1, 1)};
        const auto out = power_iteration_backward(A, s, g);
        const auto& x = s.history[1];
        const double C = s.contraction[0];
        double g1x1 = 0, g2x2 = 0;
        for (std::size_t i = 0; i < 4; ++i) g1x1 += g[0][i] * x[0][i], g2x2 += g[1][i] * x[1][i];
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                const std::size_t j[2] = {r, c};
                if (!on_support(I, j)) continue;
                const double expected = (g[0][r] - g1x1) / C + (g[1][c] - g2x2) / C;
                CHECK(out.dL_dA.at({r, c}) == doctest::Approx(expected).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("power backward matches central differences") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<std::size_t> iters(1, 3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto I = random_shape(rng, trial % 3 == 2 ? 4 : 3, 3);
        const auto A = random_A(rng, I);
        const std::size_t N = iters(rng);
        std::vector<AssignmentVector> w;
        for (std::size_t k = 0; k < A.order(); ++k) w.push_back(test::uniform_vector(rng, A.dim(k), -1, 1));
        const auto s = power_iteration_forward(A, N);
        const auto out = power_iteration_backward(A, s, w);

        std::vector<std::size_t> j(A.order());
        for (std::size_t flat = 0; flat < A.size(); ++flat) {
            if (A[flat] <= 0.0) continue;
            const double x0[1] = {A[flat]};
            const auto fd = oracle::finite_diff_grad(
                [&](std::span<const double> v) {
                    return linear_readout(power_iteration_forward(with_entry(A, flat, v[0]), N).final(), w);
                },
                x0);
            INFO("trial " << trial << " entry " << flat);
            CHECK(oracle::gradients_agree(out.dL_dA[flat], fd[0], 1e-4, 1e-7));
        }
    }
}

TEST_CASE("backward stays finite at ten iterations on peaked windows") {
    std::mt19937_64 rng(21);
    Tensor C({6, 6, 6}, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            for (std::size_t k = 0; k < 6; ++k) C.at({i, j, k}) = (i == j && j == k) ? 2.0 : 1e-3 * (1 + rng() % 7);
        }
    }
    const auto A = reshape_C_to_A(C, std::vector<char>(C.size(), 1));
    const auto state = solve_assignment(A, C.shape(), PartialNormMask::empty(2), {});
    std::vector<Matrix> g{test::random_matrix(rng, 6, 6, -1, 1), test::random_matrix(rng, 6, 6, -1, 1)};
    const auto dA = solve_assignment_backward(A, state, g);
    CHECK(dA.all_finite());
}

TEST_CASE("doubly stochastic input is a fixed point") {
    Matrix X(3, 3);
    X.values = {0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2};
    const auto s = l1_normalize_forward({X}, PartialNormMask::empty(1), 10);
    const auto out = s.final()[0];
    for (std::size_t i = 0; i < 9; ++i) CHECK(out.values[i] == doctest::Approx(X.values[i]).epsilon(1e-15));
}

TEST_CASE("diagonal matrix is normalised by one row pass") {
    Matrix X(2, 2);
    X.values = {2, 0, 0, 3};
    const auto s = l1_normalize_forward({X}, PartialNormMask::empty(1), 1);
    Matrix I(2, 2);
    I.values = {1, 0, 0, 1};
    CHECK(s.history[0][1] == I);
    CHECK(s.final()[0] == I);
}

TEST_CASE("fifty normalisation pairs give unit row and column sums") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + trial % 5;
        const auto X = test::random_matrix(rng, n, n, 0.01, 1.0);
        const auto out = l1_normalize_forward({X}, PartialNormMask::empty(1), 50).final()[0];
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(row_sum(out, i) - 1.0) <= 1e-6);
            CHECK(std::abs(col_sum(out, i) - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("masked lines are skipped in the masked direction") {
    std::mt19937_64 rng(6);
    const auto X = test::random_matrix(rng, 3, 4, 0.1, 1.0);
    PartialNormMask mask = PartialNormMask::empty(1);
    mask.row_only_cols[0] = {3};
    const auto s = l1_normalize_forward({X}, mask, 5);
    const auto& h = s.history[0];
    for (std::size_t step = 1; step < h.size(); ++step) {
        if (step % 2 == 1) {
            for (std::size_t r = 0; r < 3; ++r) CHECK(row_sum(h[step], r) == doctest::Approx(1.0));
        } else {
            for (std::size_t c = 0; c < 3; ++c) CHECK(col_sum(h[step], c) == doctest::Approx(1.0));
            for (std::size_t r = 0; r < 3; ++r) CHECK(h[step](r, 3) == h[step - 1](r, 3));
        }
    }
}

TEST_CASE("zero lines raise unless excluded") {
    Matrix X(2, 2);
    X.values = {1, 2, 0, 0};
    CHECK_THROWS_AS(l1_normalize_forward({X}, PartialNormMask::empty(1), 3), DegenerateNormalizationError);
    CHECK(l1_normalize_forward({X}, PartialNormMask::empty(1), 3, true).excluded_rows[0] ==
          std::vector<std::size_t>{1});

    // the remaining 2x2 block is positive, so it still balances
    Matrix Y(3, 2);
    Y.values = {1, 2, 0, 0, 3, 1};
    const auto s = l1_normalize_forward({Y}, PartialNormMask::empty(1), 50, true);
    CHECK(s.excluded_rows[0] == std::vector<std::size_t>{1});
    CHECK(s.excluded_cols[0].empty());
    const auto out = s.final()[0];
    CHECK(out(1, 0) == 0.0);
    CHECK(out(1, 1) == 0.0);
    for (std::size_t r : {0, 2}) CHECK(std::abs(row_sum(out, r) - 1.0) <= 1e-6);
    for (std::size_t c : {0, 1}) CHECK(std::abs(col_sum(out, c) - 1.0) <= 1e-6);
}

TEST_CASE("l1 backward: zero in, zero out; 1x1 is constant") {
    std::mt19937_64 rng(13);
    const auto X = test::random_matrix(rng, 3, 3, 0.1, 1.0);
    const auto s = l1_normalize_forward({X}, PartialNormMask::empty(1), 3);
    const auto g0 = l1_normalize_backward(s, {Matrix(3, 3)});
    for (double v : g0[0].values) CHECK(v == 0.0);

    Matrix one(1, 1, 4.2);
    const auto s1 = l1_normalize_forward({one}, PartialNormMask::empty(1), 3);
    CHECK(s1.final()[0](0, 0) == 1.0);
    const auto g1 = l1_normalize_backward(s1, {Matrix(1, 1, 7.0)});
    CHECK(g1[0](0, 0) == 0.0);

    NormalizationState empty;
    CHECK_THROWS_AS(l1_normalize_backward(empty, {Matrix(3, 3)}), ContractError);
}

TEST_CASE("l1 backward matches central differences") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 2 + trial % 3, cols = 2 + (trial / 3) % 3;
        const std::size_t M = 1 + trial % 3;
        const auto X = test::random_matrix(rng, rows, cols, 0.05, 1.0);
        PartialNormMask mask = PartialNormMask::empty(1);
        if (trial % 2) mask.row_only_cols[0] = {cols - 1};
        if (trial % 4 == 1) mask.column_only_rows[0] = {rows - 1};
        const auto W = test::random_matrix(rng, rows, cols, -1.0, 1.0);
        const auto s = l1_normalize_forward({X}, mask, M);
        const auto analytic = l1_normalize_backward(s, {W});
        const auto fd = oracle::finite_diff_grad(
            [&](std::span<const double> v) {
                Matrix Y(rows, cols);
                Y.values.assign(v.begin(), v.end());
                return matrix_readout(l1_normalize_forward({Y}, mask, M).final(), {W});
            },
            X.values);
        for (std::size_t i = 0; i < X.values.size(); ++i) {
            INFO("trial " << trial << " entry " << i);
            CHECK(oracle::gradients_agree(analytic[0].values[i], fd[i], 1e-4, 1e-7));
        }
    }
}

TEST_CASE("bce examples") {
    Matrix t(2, 3);
    t.values = {1, 0, 0, 0, 1, 0};
    const auto perfect = bce_loss({t}, {t});
    CHECK(perfect.loss >= 0.0);
    CHECK(perfect.loss <= 6 * std::abs(std::log(1 - kBceClamp)) + 1e-15);

    const auto half = bce_loss({Matrix(2, 3, 0.5), Matrix(1, 4, 0.5)}, {t, Matrix(1, 4, 1.0)});
    CHECK(half.loss == doctest::Approx(10 * std::log(2.0)).epsilon(1e-14));

    CHECK_THROWS_AS(bce_loss({t}, {Matrix(3, 2)}), ContractError);
    CHECK_THROWS_AS(bce_loss({t}, {}), ContractError);
}

TEST_CASE("bce gradient matches central differences") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const auto X = test::random_matrix(rng, 3, 4, 0.05, 0.95);
        Matrix T(3, 4);
        for (auto& v : T.values) v = static_cast<double>(rng() % 2);
        const auto res = bce_loss({X}, {T});
        const auto fd = oracle::finite_diff_grad(
            [&](std::span<const double> v) {
                Matrix Y(3, 4);
                Y.values.assign(v.begin(), v.end());
                return bce_loss({Y}, {T}).loss;
            },
            X.values);
        for (std::size_t i = 0; i < 12; ++i) CHECK(oracle::gradients_agree(res.dL_dX[0].values[i], fd[i], 1e-6, 1e-12));
    }
}

TEST_CASE("discretize examples") {
    const auto none = PartialNormMask::empty(1);
    Matrix near(3, 3, 0.05);
    for (std::size_t i = 0; i < 3; ++i) near(i, i) = 0.9;
    Matrix eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    CHECK(discretize({near}, none)[0] == eye);

    Matrix cross(2, 2);
    cross.values = {0.4, 0.6, 0.6, 0.4};
    Matrix anti(2, 2);
    anti.values = {0, 1, 1, 0};
    CHECK(discretize({cross}, none)[0] == anti);

    // rows 0 and 1 prefer the virtual column (index 2); row 2 keeps its real partner
    Matrix v(3, 3);
    v.values = {0.2, 0.2, 0.5, 0.2, 0.2, 0.5, 0.9, 0.1, 0.1};
    PartialNormMask mask = PartialNormMask::empty(1);
    mask.row_only_cols[0] = {2};
    const auto b = discretize({v}, mask)[0];
    CHECK(b(0, 2) == 1.0);
    CHECK(b(1, 2) == 1.0);
    CHECK(b(2, 0) == 1.0);
    CHECK(row_sum(b, 0) == 1.0);
    CHECK(row_sum(b, 1) == 1.0);
    CHECK(col_sum(b, 2) == 2.0);
}

TEST_CASE("discretize gives each real line at most one partner") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + trial % 5, cols = 1 + (trial / 5) % 5;
        const auto X = test::random_matrix(rng, rows, cols, 0.0, 1.0);
        const auto b = discretize({X}, PartialNormMask::empty(1))[0];
        for (std::size_t r = 0; r < rows; ++r) CHECK(row_sum(b, r) <= 1.0);
        for (std::size_t c = 0; c < cols; ++c) CHECK(col_sum(b, c) <= 1.0);
        double used = 0;
        for (double x : b.values) used += x;
        CHECK(used == static_cast<double>(std::min(rows, cols)));
    }
}

TEST_CASE("scaling A leaves every iterate unchanged") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto I = random_shape(rng, 3, 4);
        const auto A = random_A(rng, I);
        Tensor B = A;
        const double s = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
        for (auto& v : B.data()) v *= s;
        const auto a = power_iteration_forward(A, 6), b = power_iteration_forward(B, 6);
        for (std::size_t n = 0; n < a.history.size(); ++n) {
            for (std::size_t k = 0; k < 2; ++k) {
                for (std::size_t j = 0; j < a.history[n][k].size(); ++j) {
                    CHECK(b.history[n][k][j] == doctest::Approx(a.history[n][k][j]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("solver is deterministic") {
    std::mt19937_64 rng(29);
    const auto A = random_A(rng, {3, 4, 3});
    const auto s1 = solve_assignment(A, {3, 4, 3}, PartialNormMask::empty(2), {});
    const auto s2 = solve_assignment(A, {3, 4, 3}, PartialNormMask::empty(2), {});
    CHECK(s1.soft == s2.soft);
    std::ostringstream d1, d2;
    dump_state(d1, s1);
    dump_state(d2, s2);
    CHECK(d1.str() == d2.str());
    CHECK_FALSE(d1.str().empty());
}

TEST_CASE("soft assignment entries stay in the unit interval") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 30; ++trial) {
        const auto I = random_shape(rng, 3, 4);
        const auto A = random_A(rng, I);
        const auto s = solve_assignment(A, I, PartialNormMask::empty(2), {});
        for (const auto& step : s.power.history) {
            for (const auto& x : step) {
                for (double v : x) CHECK((std::isfinite(v) && v >= 0.0));
            }
        }
        for (const auto& m : s.soft) {
            for (double v : m.values) CHECK((v >= 0.0 && v <= 1.0 + 1e-12));
        }
    }
}
