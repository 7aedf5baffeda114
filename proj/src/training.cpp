#include "mdatrack/training.hpp"

#include "mdatrack/errors.hpp"

#include <cmath>
#include <fstream>

namespace mdt {

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("train.lr must be >= 0");
    if (solver.power_iterations < 1) throw ValidationError("solver.N must be >= 1");
    gate.validate();
}

TrainingConfig TrainingConfig::from_config(const KeyValueConfig& cfg) {
    TrainingConfig t;
    t.learning_rate = cfg.get_double("train.lr", t.learning_rate);
    const auto epochs = cfg.get_int("train.epochs", static_cast<std::int64_t>(t.epochs));
    if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
    t.epochs = static_cast<std::size_t>(epochs);
    t.gate = ConnectionGateConfig::from_config(cfg);
    const auto n = cfg.get_int("solver.N", static_cast<std::int64_t>(t.solver.power_iterations));
    const auto m = cfg.get_int("solver.M", static_cast<std::int64_t>(t.solver.normalization_pairs));
    if (n < 1 || m < 0) throw ValidationError("solver.N must be >= 1 and solver.M >= 0");
    t.solver.power_iterations = static_cast<std::size_t>(n);
    t.solver.normalization_pairs = static_cast<std::size_t>(m);
    t.validate();
    return t;
}

void TrainingConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set_double("train.lr", learning_rate);
    cfg.set_int("train.epochs", static_cast<std::int64_t>(epochs));
    cfg.set_int("solver.N", static_cast<std::int64_t>(solver.power_iterations));
    cfg.set_int("solver.M", static_cast<std::int64_t>(solver.normalization_pairs));
    gate.to_config(cfg);
}

std::vector<Matrix> label_assignments(const AssociationBatch& batch) {
    std::vector<Matrix> out;
    for (std::size_t k = 1; k <= batch.order(); ++k) {
        const auto& prev = batch.candidates(k - 1);
        const auto& next = batch.candidates(k);
        Matrix m(prev.size(), next.size());
        for (std::size_t i = 0; i < prev.size(); ++i) {
            for (std::size_t j = 0; j < next.size(); ++j) {
                if (prev[i].label() >= 0 && prev[i].label() == next[j].label()) m(i, j) = 1.0;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::optional<WindowLoss> window_loss(const AssociationBatch& batch, const AffinityProviderParams& params,
                                      const TrainingConfig& config) {
    for (std::size_t k = 0; k <= batch.order(); ++k) {
        if (batch.virtual_index(k)) throw ContractError("training windows carry no virtual candidates");
        if (batch.size(k) == 0) return std::nullopt;
    }
    const auto hyps = generate_hypotheses(batch, config.gate);
    if (hyps.empty()) return std::nullopt;
    const auto bundle = compute_affinity(batch, hyps, params);
    const auto mask = PartialNormMask::empty(batch.order());

    AssignmentState state;
    try {
        state = solve_assignment(bundle.A, bundle.C.shape(), mask, config.solver);
    } catch (const DegenerateInputError&) {
        return std::nullopt;
    }
    const auto truth = label_assignments(batch);
    auto bce = bce_loss(state.soft, truth);

    std::size_t entries = 0;
    for (const auto& m : truth) entries += m.values.size();
    const double scale = 1.0 / static_cast<double>(entries);
    for (auto& m : bce.dL_dX) {
        for (auto& v : m.values) v *= scale;
    }
    const Tensor dL_dA = solve_assignment_backward(bundle.A, state, bce.dL_dX);
    WindowLoss out;
    out.loss = bce.loss * scale;
    out.gradient = backprop_affinity(bundle, dL_dA);
    return out;
}

TrainingResult train(const std::vector<std::vector<Candidate>>& frames, const AffinityProviderParams& initial,
                     const TrainingConfig& config) {
    config.validate();
    const auto schedule = batch_windows(frames.size(), 2, 2);
    if (schedule.warning) throw ValidationError(schedule.message);

    std::vector<AssociationBatch> windows;
    for (const auto& w : schedule.windows) {
        std::vector<std::vector<Candidate>> lists;
        for (auto f : w) lists.push_back(frames[f]);
        windows.emplace_back(w, std::move(lists));
    }

    TrainingResult result;
    result.params = initial;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t used = 0;
        for (const auto& batch : windows) {
            const auto wl = window_loss(batch, result.params, config);
            if (!wl) {
                if (epoch == 0) ++result.skipped_windows;
                continue;
            }
            total += wl->loss;
            ++used;
            auto values = result.params.as_array();
            for (std::size_t p = 0; p < values.size(); ++p) values[p] -= config.learning_rate * wl->gradient[p];
            result.params = AffinityProviderParams::from_array(values);
            result.params.project();
        }
        result.loss_curve.push_back(used ? total / static_cast<double>(used) : 0.0);
    }
    return result;
}

void write_loss_curve(const std::string& path, const std::vector<double>& curve) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write loss curve to " + path);
    out << "# epoch mean_loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e) out << e << ' ' << format_double(curve[e]) << '\n';
}

}  // namespace mdt
