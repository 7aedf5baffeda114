#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mdt {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// "PASS name: detail (t s)" or "FAIL ...".
std::string format_result(const SuiteResult& result);

namespace tolerance {
inline constexpr double kGradRelative = 1e-4;
inline constexpr double kGradAbsolute = 1e-7;
inline constexpr double kGradSeconds = 60.0;
inline constexpr double kOracleRecovery = 0.95;
inline constexpr double kOracleSeconds = 120.0;
inline constexpr double kMarginal = 1e-6;
inline constexpr double kEnergy = 1e-12;
inline constexpr double kTrainingRatio = 0.5;
inline constexpr std::size_t kNoisyIdSwitches = 2;
inline constexpr double kTrackingSeconds = 300.0;
}  // namespace tolerance

/// Analytic backward of the power-iteration layer, the l1 layer and their
/// composition under BCE against central differences, one random instance per seed.
SuiteResult gradient_suite(std::size_t seeds = 50);

/// Solver + discretisation against brute force on planted instances, then the
/// identity-dominant 2x2x2 instance under random positive rescaling.
SuiteResult oracle_suite(std::size_t trials = 200, std::size_t identity_seeds = 50);

/// Row/column sums after full normalisation, and the partial semantics with a
/// row-only virtual column.
SuiteResult constraint_suite(std::size_t instances = 100);

/// Multilinear objective over A equals the direct sum over C.
SuiteResult energy_suite(std::size_t instances = 100);

/// 50 epochs on the noisy 10-target scenario from the untrained parameters.
SuiteResult training_suite();

/// Noiseless scenario with default parameters, then a held-out noisy scenario
/// with parameters trained on the training scenario.
SuiteResult tracking_suite();

/// MOT text round trip of a generated corpus; clear_mot(gt, gt) on generated scenarios.
SuiteResult format_suite(std::size_t records = 1000);

/// Suites run by `check`: gradient, oracle, constraint, energy, format.
std::vector<SuiteResult> check_suites();

/// Every acceptance suite in order.
std::vector<SuiteResult> acceptance_suites();

}  // namespace mdt
