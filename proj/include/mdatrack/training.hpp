#pragma once

#include "mdatrack/affinity.hpp"
#include "mdatrack/core_types.hpp"
#include "mdatrack/kvconfig.hpp"
#include "mdatrack/mda.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mdt {

struct TrainingConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 50;
    ConnectionGateConfig gate;
    SolverConfig solver;

    void validate() const;
    static TrainingConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
};

/// Per-pair 0/1 matrices: 1 where both candidates carry the same non-negative label.
std::vector<Matrix> label_assignments(const AssociationBatch& batch);

struct WindowLoss {
    double loss = 0.0;  // mean BCE over every entry of every pair
    ParamGradient gradient{};
};

/// Loss and parameter gradient of one labelled window (no virtuals, full normalisation).
/// Returns nullopt when the window is degenerate (no hypotheses or a zero contraction).
std::optional<WindowLoss> window_loss(const AssociationBatch& batch, const AffinityProviderParams& params,
                                      const TrainingConfig& config);

struct TrainingResult {
    AffinityProviderParams params;
    std::vector<double> loss_curve;  // per epoch: mean of each window loss taken just before its step
    std::size_t skipped_windows = 0;
};

/// Plain gradient descent, one step per window, parameters projected after every step.
TrainingResult train(const std::vector<std::vector<Candidate>>& frames, const AffinityProviderParams& initial,
                     const TrainingConfig& config);

void write_loss_curve(const std::string& path, const std::vector<double>& curve);

}  // namespace mdt
