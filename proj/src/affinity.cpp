#include "mdatrack/affinity.hpp"

#include "mdatrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdt {

// ---------------------------------------------------------------------------
// gate

double ConnectionGateConfig::relaxed_threshold(int relaxations) const {
    return base_distance_factor * std::pow(relaxation_factor, relaxations);
}

void ConnectionGateConfig::validate() const {
    if (!(base_distance_factor > 0.0)) throw ValidationError("gate.base_distance_factor must be > 0");
    if (!(size_ratio_low > 0.0 && size_ratio_low < 1.0 && size_ratio_high > 1.0)) {
        throw ValidationError("gate.size_ratio bounds must satisfy 0 < low < 1 < high");
    }
    if (!(relaxation_factor > 1.0)) throw ValidationError("gate.relaxation_factor must be > 1");
    if (max_relaxations < 0) throw ValidationError("gate.max_relaxations must be >= 0");
}

ConnectionGateConfig ConnectionGateConfig::from_config(const KeyValueConfig& cfg) {
    ConnectionGateConfig g;
    g.base_distance_factor = cfg.get_double("gate.base_distance_factor", g.base_distance_factor);
    g.size_ratio_low = cfg.get_double("gate.size_ratio_low", g.size_ratio_low);
    g.size_ratio_high = cfg.get_double("gate.size_ratio_high", g.size_ratio_high);
    g.relaxation_factor = cfg.get_double("gate.relaxation_factor", g.relaxation_factor);
    g.max_relaxations = static_cast<int>(cfg.get_int("gate.max_relaxations", g.max_relaxations));
    g.validate();
    return g;
}

void ConnectionGateConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set_double("gate.base_distance_factor", base_distance_factor);
    cfg.set_double("gate.size_ratio_low", size_ratio_low);
    cfg.set_double("gate.size_ratio_high", size_ratio_high);
    cfg.set_double("gate.relaxation_factor", relaxation_factor);
    cfg.set_int("gate.max_relaxations", max_relaxations);
}

namespace {

bool size_compatible(const Box& p, const Box& q, const ConnectionGateConfig& gate) {
    const double rw = q.width / p.width;
    const double rh = q.height / p.height;
    return rw >= gate.size_ratio_low && rw <= gate.size_ratio_high && rh >= gate.size_ratio_low &&
           rh <= gate.size_ratio_high;
}

// Centre distance in units of the pair's mean box diagonal.
double normalized_distance(const Candidate& p, const Candidate& q) {
    const double scale = 0.5 * (p.box().diagonal() + q.box().diagonal());
    return norm(p.center() - q.center()) / scale;
}

ConnectionMatrix gate_pair(const std::vector<Candidate>& prev, const std::vector<Candidate>& next,
                           const ConnectionGateConfig& gate) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    ConnectionMatrix conn(prev.size(), std::vector<char>(next.size(), 0));
    Matrix rho(prev.size(), next.size(), kInf);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        for (std::size_t j = 0; j < next.size(); ++j) {
            const auto& p = prev[i];
            const auto& q = next[j];
            if (p.is_virtual() || q.is_virtual()) {
                conn[i][j] = (p.is_virtual() != q.is_virtual()) ? 1 : 0;
                continue;
            }
            if (!size_compatible(p.box(), q.box(), gate)) continue;
            rho(i, j) = normalized_distance(p, q);
            if (rho(i, j) <= gate.base_distance_factor) conn[i][j] = 1;
        }
    }
    // Degraded re-search for isolated real candidates: the threshold is lowered
    // only as far as the nearest compatible partner, capped at the last ladder rung.
    const double cap = gate.relaxed_threshold(gate.max_relaxations);
    std::vector<char> row_has(prev.size(), 0), col_has(next.size(), 0);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (conn[i][j] && !prev[i].is_virtual() && !next[j].is_virtual()) row_has[i] = col_has[j] = 1;
        }
    }
    ConnectionMatrix relaxed = conn;
    for (std::size_t i = 0; i < prev.size(); ++i) {
        if (prev[i].is_virtual() || row_has[i]) continue;
        double best = kInf;
        for (std::size_t j = 0; j < next.size(); ++j) best = std::min(best, rho(i, j));
        if (best > cap) continue;
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (rho(i, j) <= best) relaxed[i][j] = 1;
        }
    }
    for (std::size_t j = 0; j < next.size(); ++j) {
        if (next[j].is_virtual() || col_has[j]) continue;
        double best = kInf;
        for (std::size_t i = 0; i < prev.size(); ++i) best = std::min(best, rho(i, j));
        if (best > cap) continue;
        for (std::size_t i = 0; i < prev.size(); ++i) {
            if (rho(i, j) <= best) relaxed[i][j] = 1;
        }
    }
    return relaxed;
}

}  // namespace

std::vector<ConnectionMatrix> gate_connections(const AssociationBatch& batch, const ConnectionGateConfig& gate) {
    gate.validate();
    std::vector<ConnectionMatrix> out;
    for (std::size_t k = 1; k <= batch.order(); ++k) {
        out.push_back(gate_pair(batch.candidates(k - 1), batch.candidates(k), gate));
    }
    return out;
}

std::vector<HypothesisTrajectory> generate_hypotheses(const AssociationBatch& batch,
                                                      const ConnectionGateConfig& gate) {
    const auto conn = gate_connections(batch, gate);
    const std::size_t K = batch.order();
    std::vector<HypothesisTrajectory> out;
    std::vector<std::size_t> path(K + 1);

    auto extend = [&](auto&& self, std::size_t k) -> void {
        if (k > K) {
            HypothesisTrajectory h;
            h.indices.reserve(K + 1);
            for (auto s : path) h.indices.push_back(to_math(s));
            out.push_back(std::move(h));
            return;
        }
        for (std::size_t j = 0; j < batch.size(k); ++j) {
            if (!conn[k - 1][path[k - 1]][j]) continue;
            path[k] = j;
            self(self, k + 1);
        }
    };
    for (std::size_t i = 0; i < batch.size(0); ++i) {
        path[0] = i;
        extend(extend, 1);
    }

    const std::size_t anchor = batch.anchor_slot();
    std::stable_sort(out.begin(), out.end(), [anchor](const auto& a, const auto& b) {
        if (a.indices[anchor] != b.indices[anchor]) return a.indices[anchor] < b.indices[anchor];
        return a.indices < b.indices;
    });
    return out;
}

// ---------------------------------------------------------------------------
// provider parameters

std::array<double, AffinityProviderParams::kCount> AffinityProviderParams::as_array() const {
    return {motion_weight, position_scale, size_weight, appearance_weight, long_term_weight};
}

AffinityProviderParams AffinityProviderParams::from_array(const std::array<double, kCount>& v) {
    return {v[0], v[1], v[2], v[3], v[4]};
}

const std::array<const char*, AffinityProviderParams::kCount>& AffinityProviderParams::names() {
    static const std::array<const char*, kCount> n = {"motion_weight", "position_scale", "size_weight",
                                                      "appearance_weight", "long_term_weight"};
    return n;
}

AffinityProviderParams AffinityProviderParams::untrained() {
    AffinityProviderParams p;
    p.motion_weight = p.size_weight = p.appearance_weight = p.long_term_weight = 0.1;
    return p;
}

void AffinityProviderParams::project() {
    position_scale = std::max(position_scale, 1e-3);
    motion_weight = std::max(motion_weight, 0.0);
    size_weight = std::max(size_weight, 0.0);
    appearance_weight = std::max(appearance_weight, 0.0);
    long_term_weight = std::max(long_term_weight, 0.0);
}

AffinityProviderParams AffinityProviderParams::from_config(const KeyValueConfig& cfg) {
    return from_config(cfg, AffinityProviderParams{});
}

AffinityProviderParams AffinityProviderParams::from_config(const KeyValueConfig& cfg,
                                                           const AffinityProviderParams& fallback) {
    auto values = fallback.as_array();
    for (std::size_t i = 0; i < kCount; ++i) {
        values[i] = cfg.get_double(names()[i], values[i]);
        if (!std::isfinite(values[i])) throw ValidationError(std::string("non-finite parameter ") + names()[i]);
    }
    auto p = from_array(values);
    if (!(p.position_scale > 0.0)) throw ValidationError("position_scale must be > 0");
    return p;
}

void AffinityProviderParams::to_config(KeyValueConfig& cfg) const {
    const auto values = as_array();
    for (std::size_t i = 0; i < kCount; ++i) cfg.set_double(names()[i], values[i]);
}

AffinityProviderParams AffinityProviderParams::load_file(const std::string& path) {
    return from_config(KeyValueConfig::load_file(path));
}

void AffinityProviderParams::save_file(const std::string& path) const {
    KeyValueConfig cfg;
    to_config(cfg);
    cfg.save_file(path);
}

// ---------------------------------------------------------------------------
// provider

double appearance_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("descriptor length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    // An empty or all-zero descriptor carries no evidence either way.
    if (na == 0.0 || nb == 0.0) return 1.0;
    return dot / std::sqrt(na * nb);
}

namespace {

double log_size_change_sq(const Box& a, const Box& b) {
    const double lw = std::log(b.width / a.width);
    const double lh = std::log(b.height / a.height);
    return lw * lw + lh * lh;
}

enum Param : std::size_t { kMotion = 0, kScale = 1, kSize = 2, kAppearance = 3, kLongTerm = 4 };

}  // namespace

double pairwise_affinity(const Box& a, const std::vector<double>& fa, const Box& b, const std::vector<double>& fb,
                         const AffinityProviderParams& params, ParamGradient* grad) {
    const double sim = appearance_similarity(fa, fb);
    const Point d = b.center() - a.center();
    const double d2 = d.x * d.x + d.y * d.y;
    const double s = params.position_scale;
    const double size2 = log_size_change_sq(a, b);
    const double value =
        std::exp(params.appearance_weight * (sim - 1.0) - d2 / (2.0 * s * s) - params.size_weight * size2);
    if (grad) {
        (*grad)[kAppearance] += value * (sim - 1.0);
        (*grad)[kScale] += value * d2 / (s * s * s);
        (*grad)[kSize] -= value * size2;
    }
    return value;
}

double long_term_affinity(const Box& b0, const Box& b1, const Box& b2, const AffinityProviderParams& params,
                          ParamGradient* grad) {
    const Point accel = (b2.center() - b1.center()) - (b1.center() - b0.center());
    const double a = norm(accel);
    const double s = params.position_scale;
    const double dw = std::log(b2.width / b1.width) - std::log(b1.width / b0.width);
    const double dh = std::log(b2.height / b1.height) - std::log(b1.height / b0.height);
    const double size_accel = dw * dw + dh * dh;
    const double value = std::exp(-params.motion_weight * a / s - params.size_weight * size_accel);
    if (grad) {
        (*grad)[kMotion] -= value * a / s;
        (*grad)[kScale] += value * params.motion_weight * a / (s * s);
        (*grad)[kSize] -= value * size_accel;
    }
    return value;
}

std::size_t virtual_reference(const AssociationBatch& batch, std::size_t slot,
                              const std::vector<std::size_t>& storage_indices) {
    const std::size_t anchor = batch.anchor_slot();
    if (slot != anchor) return storage_indices[anchor];
    if (slot == 0) throw ContractError("virtual anchor in slot 0 has no predecessor");
    return storage_indices[slot - 1];
}

AffinityTensorBundle compute_affinity(const AssociationBatch& batch, const std::vector<HypothesisTrajectory>& hyps,
                                      const AffinityProviderParams& params, const AffinityOptions& options) {
    if (hyps.empty()) throw ContractError("compute_affinity: no hypotheses");
    if (!(params.position_scale > 0.0)) throw ValidationError("position_scale must be > 0");
    if (!(options.alpha > 0.0 && options.alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");

    for (const auto& frame : batch.candidates()) {
        for (const auto& cand : frame) {
            for (double v : cand.appearance()) {
                if (!std::isfinite(v)) throw ValidationError("non-finite appearance descriptor value");
            }
        }
    }

    const std::size_t K = batch.order();
    const Shape c_shape = batch.sizes();
    AffinityTensorBundle bundle;
    bundle.C = Tensor(c_shape);
    bundle.valid_mask.assign(bundle.C.size(), 0);
    bundle.tape.reserve(hyps.size());

    std::vector<std::size_t> idx(K + 1);
    std::vector<const Box*> boxes(K + 1);
    std::vector<const std::vector<double>*> feats(K + 1);
    for (const auto& h : hyps) {
        if (h.indices.size() != K + 1) throw ContractError("hypothesis length != K+1");
        int virtual_count = 0;
        for (std::size_t k = 0; k <= K; ++k) {
            if (h.indices[k] < 1 || h.indices[k] > batch.size(k)) throw RangeError("hypothesis index out of range");
            idx[k] = to_storage(h.indices[k]);
        }
        for (std::size_t k = 0; k <= K; ++k) {
            const Candidate& cand = batch.candidates(k)[idx[k]];
            if (!cand.is_virtual()) {
                boxes[k] = &cand.box();
                feats[k] = &cand.appearance();
                continue;
            }
            ++virtual_count;
            if (!options.virtuals) throw ContractError("hypothesis uses a virtual candidate but no placements given");
            const auto it = options.virtuals->find({k, virtual_reference(batch, k, idx)});
            if (it == options.virtuals->end()) throw ContractError("virtual candidate has no resolved placement");
            boxes[k] = &it->second.box;
            feats[k] = &it->second.appearance;
        }

        ParamGradient g{};
        double c = 0.0;
        for (std::size_t t = 1; t + 1 <= K; ++t) {
            ParamGradient gl{};
            const double phi = long_term_affinity(*boxes[t - 1], *boxes[t], *boxes[t + 1], params, &gl);
            c += params.long_term_weight * phi;
            g[kLongTerm] += phi;
            for (std::size_t p = 0; p < g.size(); ++p) {
                if (p != kLongTerm) g[p] += params.long_term_weight * gl[p];
            }
        }
        for (std::size_t k = 1; k <= K; ++k) {
            c += pairwise_affinity(*boxes[k - 1], *feats[k - 1], *boxes[k], *feats[k], params, &g);
        }
        const double scale = std::pow(options.alpha, virtual_count);
        c *= scale;
        for (auto& v : g) v *= scale;

        const std::size_t flat = bundle.C.flat_index(idx);
        if (bundle.valid_mask[flat]) throw ContractError("duplicate hypothesis");
        bundle.C[flat] = c;
        bundle.valid_mask[flat] = 1;
        bundle.tape.push_back({flat, g});
    }
    if (!bundle.C.all_finite()) throw NumericError("affinity tensor contains non-finite values");
    bundle.A = reshape_C_to_A(bundle.C, bundle.valid_mask);
    return bundle;
}

// ---------------------------------------------------------------------------
// reshape

Shape pair_tensor_shape(const Shape& c_shape) {
    if (c_shape.size() < 2) throw ContractError("affinity tensor needs order >= 2");
    Shape s;
    for (std::size_t k = 1; k < c_shape.size(); ++k) s.push_back(c_shape[k - 1] * c_shape[k]);
    return s;
}

namespace {

// Flat index into A of the entry that C's multi-index reshapes into.
std::size_t pair_flat_index(const Shape& c_shape, std::span<const std::size_t> idx) {
    std::size_t flat = 0;
    for (std::size_t k = 1; k < c_shape.size(); ++k) {
        const std::size_t dim = c_shape[k - 1] * c_shape[k];
        const std::size_t j = to_storage(flatten_pair(to_math(idx[k - 1]), to_math(idx[k]), c_shape[k]));
        flat = flat * dim + j;
    }
    return flat;
}

}  // namespace

Tensor reshape_C_to_A(const Tensor& C, const std::vector<char>& valid_mask) {
    if (valid_mask.size() != C.size()) throw ContractError("valid mask size != C size");
    Tensor A(pair_tensor_shape(C.shape()));
    std::vector<std::size_t> idx(C.order());
    for (std::size_t flat = 0; flat < C.size(); ++flat) {
        if (!valid_mask[flat] || C[flat] == 0.0) continue;
        C.unravel(flat, idx);
        A[pair_flat_index(C.shape(), idx)] = C[flat];
    }
    return A;
}

Tensor reshape_A_grad_to_C(const Tensor& dL_dA, const Shape& c_shape) {
    if (dL_dA.shape() != pair_tensor_shape(c_shape)) throw ContractError("dL/dA shape does not match C");
    Tensor out(c_shape);
    std::vector<std::size_t> idx(c_shape.size());
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        out.unravel(flat, idx);
        out[flat] = dL_dA[pair_flat_index(c_shape, idx)];
    }
    return out;
}

ParamGradient backprop_affinity(const AffinityTensorBundle& bundle, const Tensor& dL_dA) {
    if (dL_dA.shape() != bundle.A.shape()) {
        throw ContractError("backprop_affinity: dL/dA shape (" + shape_string(dL_dA.shape()) + ") != A shape (" +
                            shape_string(bundle.A.shape()) + ")");
    }
    const Tensor dL_dC = reshape_A_grad_to_C(dL_dA, bundle.C.shape());
    ParamGradient grad{};
    for (const auto& entry : bundle.tape) {
        const double g = dL_dC[entry.c_flat];
        for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g * entry.dc_dparams[p];
    }
    return grad;
}

}  // namespace mdt
