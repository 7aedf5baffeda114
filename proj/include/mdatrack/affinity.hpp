#pragma once

#include "mdatrack/core_types.hpp"
#include "mdatrack/kvconfig.hpp"
#include "mdatrack/tensor.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mdt {

/// Spatial/size gate deciding which candidates of adjacent frames may connect.
///
/// Distances are measured in units of the mean box diagonal of the pair. A
/// candidate with no connection at the base threshold re-searches with a
/// degraded threshold, up to `base * relaxation_factor^max_relaxations`.
struct ConnectionGateConfig {
    double base_distance_factor = 1.0;
    double size_ratio_low = 0.5;
    double size_ratio_high = 2.0;
    double relaxation_factor = 2.0;
    int max_relaxations = 2;

    double relaxed_threshold(int relaxations) const;
    void validate() const;
    static ConnectionGateConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
};

/// Per frame pair k (1..K): connection[k-1][i_prev][i_next], 0-based storage.
using ConnectionMatrix = std::vector<std::vector<char>>;
std::vector<ConnectionMatrix> gate_connections(const AssociationBatch& batch, const ConnectionGateConfig& gate);

/// All tuples whose consecutive pairs are connected, sorted by anchor then lexicographically.
std::vector<HypothesisTrajectory> generate_hypotheses(const AssociationBatch& batch, const ConnectionGateConfig& gate);

/// Learnable parameters of the closed-form affinity provider.
struct AffinityProviderParams {
    static constexpr std::size_t kCount = 5;

    double motion_weight = 1.0;
    double position_scale = 20.0;
    double size_weight = 1.0;
    double appearance_weight = 2.0;
    double long_term_weight = 1.0;

    std::array<double, kCount> as_array() const;
    static AffinityProviderParams from_array(const std::array<double, kCount>& v);
    static const std::array<const char*, kCount>& names();

    /// Starting point for training: every weight at 0.1, default position scale.
    static AffinityProviderParams untrained();

    /// Keeps position_scale >= 1e-3 and every weight >= 0.
    void project();

    static AffinityProviderParams from_config(const KeyValueConfig& cfg);
    static AffinityProviderParams from_config(const KeyValueConfig& cfg, const AffinityProviderParams& fallback);
    void to_config(KeyValueConfig& cfg) const;
    static AffinityProviderParams load_file(const std::string& path);
    void save_file(const std::string& path) const;

    friend bool operator==(const AffinityProviderParams&, const AffinityProviderParams&) = default;
};

using ParamGradient = std::array<double, AffinityProviderParams::kCount>;

/// Location and template of a virtual candidate, resolved for one reference candidate.
struct VirtualPlacement {
    Box box;
    std::vector<double> appearance;
};

/// Key: (batch slot of the virtual, storage index of the reference candidate).
/// The reference is the anchor for non-anchor slots and the predecessor for the anchor slot.
using VirtualTable = std::map<std::pair<std::size_t, std::size_t>, VirtualPlacement>;

struct AffinityOptions {
    double alpha = 1.0;                      // multiplies c once per virtual in the hypothesis
    const VirtualTable* virtuals = nullptr;  // required when hypotheses touch virtual slots
};

/// Storage index of the candidate a virtual in `slot` is resolved against.
std::size_t virtual_reference(const AssociationBatch& batch, std::size_t slot,
                              const std::vector<std::size_t>& storage_indices);

struct TapeEntry {
    std::size_t c_flat = 0;
    ParamGradient dc_dparams{};
};

struct AffinityTensorBundle {
    Tensor C;                       // shape (I_0, ..., I_K)
    Tensor A;                       // shape (I_0 I_1, ..., I_{K-1} I_K)
    std::vector<char> valid_mask;   // same flat layout as C
    std::vector<TapeEntry> tape;    // one per valid hypothesis
};

/// Pairwise appearance-plus-position score between two placed candidates.
double pairwise_affinity(const Box& a, const std::vector<double>& fa, const Box& b, const std::vector<double>& fb,
                         const AffinityProviderParams& params, ParamGradient* grad = nullptr);

/// Constant-velocity and size-smoothness consistency over three consecutive placements.
double long_term_affinity(const Box& b0, const Box& b1, const Box& b2, const AffinityProviderParams& params,
                          ParamGradient* grad = nullptr);

double appearance_similarity(const std::vector<double>& a, const std::vector<double>& b);

AffinityTensorBundle compute_affinity(const AssociationBatch& batch, const std::vector<HypothesisTrajectory>& hyps,
                                      const AffinityProviderParams& params, const AffinityOptions& options = {});

Shape pair_tensor_shape(const Shape& c_shape);
Tensor reshape_C_to_A(const Tensor& C, const std::vector<char>& valid_mask);
/// dL/dC from dL/dA: each C entry reads the single A entry it was reshaped into.
Tensor reshape_A_grad_to_C(const Tensor& dL_dA, const Shape& c_shape);

ParamGradient backprop_affinity(const AffinityTensorBundle& bundle, const Tensor& dL_dA);

}  // namespace mdt
