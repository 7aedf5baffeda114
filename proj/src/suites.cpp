#include "mdatrack/suites.hpp"

#include "mdatrack/affinity.hpp"
#include "mdatrack/errors.hpp"
#include "mdatrack/evalio.hpp"
#include "mdatrack/mda.hpp"
#include "mdatrack/oracle.hpp"
#include "mdatrack/pipeline.hpp"
#include "mdatrack/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace mdt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(gen_);
    }
    bool coin(double p) { return uniform(0.0, 1.0) < p; }
    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

struct RandomC {
    Tensor C;
    std::vector<char> valid;
};

// Positive entries on a random support; at least one entry stays valid.
RandomC random_affinity(Rng& rng, const Shape& shape, double keep) {
    RandomC r{Tensor(shape), {}};
    r.valid.assign(r.C.size(), 0);
    for (std::size_t f = 0; f < r.C.size(); ++f) {
        if (rng.coin(keep)) {
            r.valid[f] = 1;
            r.C[f] = rng.uniform(0.05, 1.0);
        }
    }
    if (std::none_of(r.valid.begin(), r.valid.end(), [](char v) { return v != 0; })) {
        const auto f = rng.index(0, r.C.size() - 1);
        r.valid[f] = 1;
        r.C[f] = rng.uniform(0.05, 1.0);
    }
    return r;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (auto& v : m.values) v = rng.uniform(lo, hi);
    return m;
}

double weighted_sum(const std::vector<Matrix>& X, const std::vector<Matrix>& W) {
    double s = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        for (std::size_t i = 0; i < X[k].values.size(); ++i) s += X[k].values[i] * W[k].values[i];
    }
    return s;
}

struct Mismatch {
    std::size_t checked = 0;
    std::size_t failed = 0;
    std::string first;
};

void compare(Mismatch& m, const std::string& where, std::span<const double> analytic, std::span<const double> numeric) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        ++m.checked;
        if (!oracle::gradients_agree(analytic[i], numeric[i], tolerance::kGradRelative, tolerance::kGradAbsolute)) {
            if (m.failed++ == 0) {
                std::ostringstream os;
                os << where << " coord " << i << ": analytic " << analytic[i] << " numeric " << numeric[i];
                m.first = os.str();
            }
        }
    }
}

// Finite differences over the positive entries of A only; zeros sit on the
// boundary of the nonnegative domain.
void check_A_gradient(Mismatch& m, const std::string& where, const Tensor& A, const Tensor& analytic,
                      const std::function<double(const Tensor&)>& loss) {
    std::vector<std::size_t> support;
    for (std::size_t f = 0; f < A.size(); ++f) {
        if (A[f] > 0.0) support.push_back(f);
    }
    std::vector<double> x0;
    for (auto f : support) x0.push_back(A[f]);
    auto f = [&](std::span<const double> x) {
        Tensor B = A;
        for (std::size_t i = 0; i < support.size(); ++i) B[support[i]] = x[i];
        return loss(B);
    };
    const auto numeric = oracle::finite_diff_grad(f, x0);
    std::vector<double> an;
    for (auto s : support) an.push_back(analytic[s]);
    compare(m, where, an, numeric);
}

std::vector<Matrix> random_weights(Rng& rng, const std::vector<Matrix>& like) {
    std::vector<Matrix> w;
    for (const auto& m : like) w.push_back(random_matrix(rng, m.rows, m.cols, -1.0, 1.0));
    return w;
}

std::vector<Matrix> random_binary(Rng& rng, const std::vector<Matrix>& like) {
    std::vector<Matrix> w;
    for (const auto& m : like) {
        Matrix b(m.rows, m.cols);
        for (auto& v : b.values) v = rng.coin(0.4) ? 1.0 : 0.0;
        w.push_back(std::move(b));
    }
    return w;
}

}  // namespace

std::string format_result(const SuiteResult& result) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << (result.passed ? "PASS " : "FAIL ") << result.name << ": " << result.detail << " (" << result.seconds << " s)";
    return os.str();
}

// ---------------------------------------------------------------------------

SuiteResult gradient_suite(std::size_t seeds) {
    const auto t0 = Clock::now();
    Mismatch power, norm, chain;
    std::size_t errors = 0;
    std::string error_text;
    for (std::size_t seed = 1; seed <= seeds; ++seed) {
        Rng rng(seed);
        const Shape shape{rng.index(1, 3), rng.index(1, 3), rng.index(1, 3)};
        const std::size_t N = rng.index(1, 3);
        const std::size_t M = rng.index(1, 3);
        const std::string tag = "seed " + std::to_string(seed);
        try {
            const auto rc = random_affinity(rng, shape, 0.8);
            const Tensor A = reshape_C_to_A(rc.C, rc.valid);

            // power layer under a random linear read-out of x(N)
            const auto state = power_iteration_forward(A, N);
            std::vector<AssignmentVector> w;
            for (const auto& x : state.final()) {
                AssignmentVector v(x.size());
                for (auto& e : v) e = rng.uniform(-1.0, 1.0);
                w.push_back(std::move(v));
            }
            const auto grad = power_iteration_backward(A, state, w);
            check_A_gradient(power, tag + " power", A, grad.dL_dA, [&](const Tensor& B) {
                const auto s = power_iteration_forward(B, N);
                double v = 0.0;
                for (std::size_t k = 0; k < w.size(); ++k) {
                    for (std::size_t j = 0; j < w[k].size(); ++j) v += w[k][j] * s.final()[k][j];
                }
                return v;
            });

            // l1 layer on positive matrices, tracking-style mask half of the time
            std::vector<Matrix> X;
            for (std::size_t k = 0; k + 1 < shape.size(); ++k) {
                X.push_back(random_matrix(rng, shape[k], shape[k + 1], 0.05, 1.0));
            }
            auto mask = PartialNormMask::empty(X.size());
            if (rng.coin(0.5)) {
                mask.column_only_rows[0].push_back(X[0].rows - 1);
                mask.row_only_cols[1].push_back(X[1].cols - 1);
            }
            const auto ns = l1_normalize_forward(X, mask, M);
            const auto W = random_weights(rng, ns.final());
            const auto dX = l1_normalize_backward(ns, W);
            std::vector<double> x0, an;
            for (std::size_t k = 0; k < X.size(); ++k) {
                x0.insert(x0.end(), X[k].values.begin(), X[k].values.end());
                an.insert(an.end(), dX[k].values.begin(), dX[k].values.end());
            }
            const auto numeric = oracle::finite_diff_grad(
                [&](std::span<const double> x) {
                    auto Y = X;
                    std::size_t o = 0;
                    for (auto& m : Y) {
                        for (auto& v : m.values) v = x[o++];
                    }
                    return weighted_sum(l1_normalize_forward(Y, mask, M).final(), W);
                },
                x0);
            compare(norm, tag + " l1", an, numeric);

            // BCE after both layers
            SolverConfig cfg{N, M, true};
            const auto empty = PartialNormMask::empty(2);
            const auto solved = solve_assignment(A, rc.C.shape(), empty, cfg);
            const auto truth = random_binary(rng, solved.soft);
            const auto bce = bce_loss(solved.soft, truth);
            const Tensor dA = solve_assignment_backward(A, solved, bce.dL_dX);
            check_A_gradient(chain, tag + " bce", A, dA, [&](const Tensor& B) {
                return bce_loss(solve_assignment(B, rc.C.shape(), empty, cfg).soft, truth).loss;
            });
        } catch (const std::exception& e) {
            if (errors++ == 0) error_text = tag + ": " + e.what();
        }
    }
    SuiteResult r;
    r.name = "gradient";
    r.seconds = seconds_since(t0);
    r.passed = errors == 0 && power.failed == 0 && norm.failed == 0 && chain.failed == 0 &&
               r.seconds < tolerance::kGradSeconds;
    std::ostringstream os;
    os << seeds << " seeds; power " << power.checked - power.failed << "/" << power.checked << ", l1 "
       << norm.checked - norm.failed << "/" << norm.checked << ", bce chain " << chain.checked - chain.failed << "/"
       << chain.checked << " within " << tolerance::kGradRelative << " rel / " << tolerance::kGradAbsolute << " abs";
    for (const auto* m : {&power, &norm, &chain}) {
        if (m->failed) os << "; " << m->first;
    }
    if (errors) os << "; " << errors << " errors, first " << error_text;
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------

namespace {

// Trajectories chained through the binary pair matrices, 1-based like the oracle.
std::optional<oracle::FullAssignment> chain_assignment(const std::vector<Matrix>& bin) {
    const std::size_t I0 = bin[0].rows;
    oracle::FullAssignment z;
    std::vector<std::vector<std::size_t>> used(bin.size() + 1);
    for (std::size_t i = 0; i < I0; ++i) {
        std::vector<std::size_t> t{i};
        std::size_t cur = i;
        for (const auto& m : bin) {
            std::optional<std::size_t> next;
            for (std::size_t c = 0; c < m.cols; ++c) {
                if (m(cur, c) == 1.0) {
                    if (next) return std::nullopt;
                    next = c;
                }
            }
            if (!next) return std::nullopt;
            cur = *next;
            t.push_back(cur);
        }
        for (auto& v : t) ++v;
        z.push_back(std::move(t));
    }
    // each candidate exactly once
    for (std::size_t k = 0; k <= bin.size(); ++k) {
        const std::size_t size = k == 0 ? bin[0].rows : bin[k - 1].cols;
        std::vector<int> count(size, 0);
        for (const auto& t : z) ++count[t[k] - 1];
        if (std::any_of(count.begin(), count.end(), [](int c) { return c != 1; })) return std::nullopt;
    }
    std::sort(z.begin(), z.end());
    return z;
}

std::vector<Matrix> solve_and_discretize(const Tensor& C, std::size_t N) {
    std::vector<char> valid(C.size(), 1);
    const Tensor A = reshape_C_to_A(C, valid);
    SolverConfig cfg;
    cfg.power_iterations = N;
    const auto mask = PartialNormMask::empty(C.order() - 1);
    return discretize(solve_assignment(A, C.shape(), mask, cfg).soft, mask);
}

}  // namespace

SuiteResult oracle_suite(std::size_t trials, std::size_t identity_seeds) {
    const auto t0 = Clock::now();
    std::size_t hits = 0;
    std::vector<std::string> failures;
    for (std::size_t trial = 1; trial <= trials; ++trial) {
        Rng rng(1000 + trial);
        const std::size_t n = rng.index(1, 4);
        Tensor C({n, n, n});
        for (std::size_t f = 0; f < C.size(); ++f) C[f] = rng.uniform(0.1, 1.0);
        std::vector<std::size_t> p1(n), p2(n);
        for (std::size_t i = 0; i < n; ++i) p1[i] = p2[i] = i;
        std::shuffle(p1.begin(), p1.end(), rng.engine());
        std::shuffle(p2.begin(), p2.end(), rng.engine());
        for (std::size_t i = 0; i < n; ++i) C.at({i, p1[i], p2[p1[i]]}) = rng.uniform(2.0, 3.0);

        const auto truth = oracle::brute_force_mda(C, oracle::MdaConstraints::strict(3));
        const auto z = chain_assignment(solve_and_discretize(C, SolverConfig{}.power_iterations));
        const double value = z ? oracle::assignment_value(C, *z) : -1.0;
        if (z && value >= truth.best_value - 1e-12 * std::max(1.0, truth.best_value)) {
            ++hits;
        } else {
            std::ostringstream os;
            os << "trial " << trial << " n=" << n << " solver " << value << " optimum " << truth.best_value;
            failures.push_back(os.str());
        }
    }

    std::size_t identity = 0;
    for (std::size_t seed = 1; seed <= identity_seeds; ++seed) {
        Rng rng(5000 + seed);
        const double scale = std::exp(rng.uniform(-3.0, 3.0));
        // Seeds vary a positive scale and a relabelling shared by all frames; both
        // keep the instance exact. Breaking its symmetry by even 1e-3 lets twenty
        // multiplicative steps drive one diagonal hypothesis to zero.
        const bool swap = rng.coin(0.5);
        Tensor C({2, 2, 2}, 0.1 * scale);
        C.at({0, 0, 0}) = scale;
        C.at({1, 1, 1}) = scale;
        if (swap) {
            Tensor P(C.shape());
            std::vector<std::size_t> idx(3);
            for (std::size_t f = 0; f < C.size(); ++f) {
                C.unravel(f, idx);
                for (auto& i : idx) i = 1 - i;
                P.at(idx) = C[f];
            }
            C = P;
        }
        const auto bin = solve_and_discretize(C, 20);
        const auto truth = oracle::brute_force_mda(C, oracle::MdaConstraints::strict(3));
        const oracle::FullAssignment id{{1, 1, 1}, {2, 2, 2}};
        if (chain_assignment(bin) == id && truth.best_assignment == id) ++identity;
    }

    SuiteResult r;
    r.name = "oracle";
    r.seconds = seconds_since(t0);
    const double rate = static_cast<double>(hits) / static_cast<double>(trials);
    r.passed = rate >= tolerance::kOracleRecovery && identity == identity_seeds && r.seconds < tolerance::kOracleSeconds;
    std::ostringstream os;
    os << "planted optimum " << hits << "/" << trials << " (need >= " << tolerance::kOracleRecovery * 100
       << "%); identity " << identity << "/" << identity_seeds;
    for (std::size_t i = 0; i < failures.size() && i < 3; ++i) os << "; " << failures[i];
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------

SuiteResult constraint_suite(std::size_t instances) {
    const auto t0 = Clock::now();
    constexpr std::size_t kPairs = 50;
    double worst_full = 0.0;
    double worst_masked = 0.0;
    std::size_t violations = 0;
    for (std::size_t i = 1; i <= instances; ++i) {
        Rng rng(9000 + i);
        const std::size_t n = rng.index(1, 10);
        const Matrix X = random_matrix(rng, n, n, 0.01, 1.0);
        const auto full = l1_normalize_forward({X}, PartialNormMask::empty(1), kPairs).final()[0];
        for (std::size_t r = 0; r < n; ++r) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                rs += full(r, c);
                cs += full(c, r);
            }
            worst_full = std::max({worst_full, std::abs(rs - 1.0), std::abs(cs - 1.0)});
        }

        // n real columns plus a row-only virtual column. Rows are checked after each
        // row pass and real columns after each column pass; both cannot hold at once
        // until the virtual column has drained.
        const Matrix V = random_matrix(rng, n, n + 1, 0.01, 1.0);
        auto mask = PartialNormMask::empty(1);
        mask.row_only_cols[0].push_back(n);
        const auto st = l1_normalize_forward({V}, mask, kPairs);
        const auto& hist = st.history[0];
        for (std::size_t s = 1; s < hist.size(); ++s) {
            const Matrix& prev = hist[s - 1];
            const Matrix& cur = hist[s];
            if (s % 2 == 1) {
                for (std::size_t r = 0; r < n; ++r) {
                    double rs = 0.0;
                    for (std::size_t c = 0; c <= n; ++c) rs += cur(r, c);
                    worst_masked = std::max(worst_masked, std::abs(rs - 1.0));
                }
            } else {
                for (std::size_t c = 0; c < n; ++c) {
                    double cs = 0.0;
                    for (std::size_t r = 0; r < n; ++r) cs += cur(r, c);
                    worst_masked = std::max(worst_masked, std::abs(cs - 1.0));
                }
                // a column pass leaves the virtual column alone
                for (std::size_t r = 0; r < n; ++r) {
                    if (cur(r, n) != prev(r, n)) ++violations;
                }
            }
        }
    }
    SuiteResult r;
    r.name = "constraint";
    r.seconds = seconds_since(t0);
    r.passed = worst_full <= tolerance::kMarginal && worst_masked <= tolerance::kMarginal && violations == 0;
    std::ostringstream os;
    os << instances << " instances, M=" << kPairs << "; full max |sum-1| " << worst_full << ", masked max |sum-1| "
       << worst_masked << " (tol " << tolerance::kMarginal << "), virtual column touched by column pass " << violations
       << " times";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------

SuiteResult energy_suite(std::size_t instances) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::size_t i = 1; i <= instances; ++i) {
        Rng rng(13000 + i);
        const std::size_t order = i % 4 == 0 ? 4 : 3;  // every fourth instance has K = 3
        Shape shape;
        for (std::size_t k = 0; k < order; ++k) shape.push_back(rng.index(1, 4));
        const auto rc = random_affinity(rng, shape, 0.7);
        std::vector<Matrix> X;
        for (std::size_t k = 0; k + 1 < order; ++k) X.push_back(random_matrix(rng, shape[k], shape[k + 1], 0.0, 1.0));

        // direct sum over trajectories
        double direct = 0.0;
        std::vector<std::size_t> idx(order);
        for (std::size_t f = 0; f < rc.C.size(); ++f) {
            if (!rc.valid[f]) continue;
            rc.C.unravel(f, idx);
            double p = rc.C[f];
            for (std::size_t k = 0; k + 1 < order; ++k) p *= X[k](idx[k], idx[k + 1]);
            direct += p;
        }
        const double via_A = multilinear_objective(reshape_C_to_A(rc.C, rc.valid), to_vectors(X));
        worst = std::max(worst, std::abs(direct - via_A));
    }
    SuiteResult r;
    r.name = "energy";
    r.seconds = seconds_since(t0);
    r.passed = worst <= tolerance::kEnergy;
    std::ostringstream os;
    os << instances << " instances; max |C-sum - A-contraction| " << worst << " (tol " << tolerance::kEnergy << ")";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------

namespace {

ScenarioSpec noisy_spec(std::uint64_t seed, double false_positives) {
    ScenarioSpec s;
    s.seed = seed;
    s.detection_noise = 1.0;
    s.miss_probability = 0.1;
    s.false_positive_rate = false_positives;
    return s;
}

}  // namespace

SuiteResult training_suite() {
    const auto t0 = Clock::now();
    const auto sc = generate_scenario(noisy_spec(1, 0.2));
    const auto res = train(sc.truth_candidates, AffinityProviderParams::untrained(), TrainingConfig{});
    SuiteResult r;
    r.name = "training";
    r.seconds = seconds_since(t0);
    const double first = res.loss_curve.front();
    const double last = res.loss_curve.back();
    const double ratio = last / first;
    r.passed = ratio < tolerance::kTrainingRatio;
    std::ostringstream os;
    os << res.loss_curve.size() << " epochs; loss " << first << " -> " << last << ", ratio " << ratio << " (need < "
       << tolerance::kTrainingRatio << "); skipped windows " << res.skipped_windows;
    r.detail = os.str();
    return r;
}

SuiteResult tracking_suite() {
    const auto t0 = Clock::now();
    const PipelineConfig pc;

    const auto clean = generate_scenario(ScenarioSpec{});
    const GroundTruthQuality clean_quality(clean.ground_truth);
    const auto clean_report =
        clear_mot(clean.ground_truth, run_sequence(clean.detections, AffinityProviderParams{}, pc, clean_quality));

    const auto training = generate_scenario(noisy_spec(1, 0.2));
    const auto trained = train(training.truth_candidates, AffinityProviderParams::untrained(), TrainingConfig{}).params;
    const auto held_out = generate_scenario(noisy_spec(2, 0.0));
    const GroundTruthQuality noisy_quality(held_out.ground_truth);
    const auto noisy_report =
        clear_mot(held_out.ground_truth, run_sequence(held_out.detections, trained, pc, noisy_quality));

    SuiteResult r;
    r.name = "tracking";
    r.seconds = seconds_since(t0);
    r.passed = clean_report.mota == 1.0 && clean_report.id_switches == 0 &&
               noisy_report.id_switches <= tolerance::kNoisyIdSwitches && r.seconds < tolerance::kTrackingSeconds;
    std::ostringstream os;
    os << "noiseless MOTA " << clean_report.mota << " IDS " << clean_report.id_switches << "; noisy (trained) MOTA "
       << noisy_report.mota << " IDS " << noisy_report.id_switches << " (need <= " << tolerance::kNoisyIdSwitches << ")";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------------------

SuiteResult format_suite(std::size_t records) {
    const auto t0 = Clock::now();
    Rng rng(424242);
    auto decimal = [&](double lo, double hi, int places) {
        const double scale = std::pow(10.0, places);
        return std::round(rng.uniform(lo, hi) * scale) / scale;
    };
    std::vector<MotRecord> corpus;
    for (std::size_t i = 0; i < records; ++i) {
        MotRecord m;
        m.frame = static_cast<std::int64_t>(rng.index(1, 500));
        m.id = rng.coin(0.3) ? -1 : static_cast<std::int64_t>(rng.index(1, 99));
        const int places = static_cast<int>(rng.index(0, 6));
        m.left = decimal(-50.0, 1900.0, places);
        m.top = decimal(-50.0, 1000.0, places);
        m.width = decimal(1.0, 300.0, places);
        m.height = decimal(1.0, 500.0, places);
        m.conf = decimal(0.0, 1.0, places);
        corpus.push_back(m);
    }
    std::ostringstream first;
    write_mot_records(first, corpus);
    std::istringstream in(first.str());
    const auto back = read_mot_records(in);
    std::ostringstream second;
    write_mot_records(second, back);
    const bool exact = back == corpus && second.str() == first.str();

    std::size_t perfect = 0;
    std::size_t scenarios = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ScenarioSpec s = noisy_spec(seed, 0.2);
        s.target_count = 1 + seed % 12;
        s.frame_count = 10 + 5 * (seed % 9);
        const auto sc = generate_scenario(s);
        const auto rep = clear_mot(sc.ground_truth, sc.ground_truth);
        ++scenarios;
        if (rep.mota == 1.0 && std::abs(rep.motp - 1.0) <= 1e-12 && rep.id_switches == 0 && rep.false_positives == 0 &&
            rep.false_negatives == 0 && rep.mostly_tracked == 100.0) {
            ++perfect;
        }
    }

    SuiteResult r;
    r.name = "format";
    r.seconds = seconds_since(t0);
    r.passed = exact && perfect == scenarios;
    std::ostringstream os;
    os << records << "-record round trip " << (exact ? "bit-exact" : "MISMATCH") << "; clear_mot(gt, gt) perfect on "
       << perfect << "/" << scenarios << " scenarios";
    r.detail = os.str();
    return r;
}

std::vector<SuiteResult> check_suites() {
    return {gradient_suite(), oracle_suite(), constraint_suite(), energy_suite(), format_suite()};
}

std::vector<SuiteResult> acceptance_suites() {
    return {gradient_suite(), oracle_suite(),   constraint_suite(), energy_suite(),
            training_suite(), tracking_suite(), format_suite()};
}

}  // namespace mdt
