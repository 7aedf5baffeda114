#include "mdatrack/pipeline.hpp"

#include "mdatrack/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mdt {

void PipelineConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("pipeline.alpha must lie strictly inside (0, 1)");
    if (!(t_dif >= 0.0 && t_dif <= 1.0)) throw ValidationError("pipeline.t_dif must lie in [0, 1]");
    if (!(t_exit >= 0.0 && t_exit <= 1.0)) throw ValidationError("pipeline.t_exit must lie in [0, 1]");
    if (!(quality_threshold >= 0.0 && quality_threshold <= 1.0)) {
        throw ValidationError("pipeline.quality_threshold must lie in [0, 1]");
    }
    if (max_coast_frames < 0) throw ValidationError("pipeline.max_coast_frames must be >= 0");
    if (!(frame_width > 0.0 && frame_height > 0.0)) throw ValidationError("pipeline frame size must be positive");
    if (solver.power_iterations < 1) throw ValidationError("pipeline.N must be >= 1");
    gate.validate();
}

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& cfg) {
    PipelineConfig p;
    p.alpha = cfg.get_double("pipeline.alpha", p.alpha);
    p.t_dif = cfg.get_double("pipeline.t_dif", p.t_dif);
    p.t_exit = cfg.get_double("pipeline.t_exit", p.t_exit);
    p.quality_threshold = cfg.get_double("pipeline.quality_threshold", p.quality_threshold);
    p.max_coast_frames = static_cast<int>(cfg.get_int("pipeline.max_coast_frames", p.max_coast_frames));
    p.frame_width = cfg.get_double("pipeline.frame_width", cfg.get_double("scenario.frame_width", p.frame_width));
    p.frame_height = cfg.get_double("pipeline.frame_height", cfg.get_double("scenario.frame_height", p.frame_height));
    p.suppress_duplicate_births = cfg.get_bool("pipeline.suppress_duplicate_births", p.suppress_duplicate_births);
    p.gate = ConnectionGateConfig::from_config(cfg);
    const auto n = cfg.get_int("pipeline.N", static_cast<std::int64_t>(p.solver.power_iterations));
    const auto m = cfg.get_int("pipeline.M", static_cast<std::int64_t>(p.solver.normalization_pairs));
    if (n < 1 || m < 0) throw ValidationError("pipeline.N must be >= 1 and pipeline.M >= 0");
    p.solver.power_iterations = static_cast<std::size_t>(n);
    p.solver.normalization_pairs = static_cast<std::size_t>(m);
    p.validate();
    return p;
}

void PipelineConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set_double("pipeline.alpha", alpha);
    cfg.set_double("pipeline.t_dif", t_dif);
    cfg.set_double("pipeline.t_exit", t_exit);
    cfg.set_double("pipeline.quality_threshold", quality_threshold);
    cfg.set_int("pipeline.max_coast_frames", max_coast_frames);
    cfg.set_double("pipeline.frame_width", frame_width);
    cfg.set_double("pipeline.frame_height", frame_height);
    cfg.set("pipeline.suppress_duplicate_births", suppress_duplicate_births ? "true" : "false");
    cfg.set_int("pipeline.N", static_cast<std::int64_t>(solver.power_iterations));
    cfg.set_int("pipeline.M", static_cast<std::int64_t>(solver.normalization_pairs));
    gate.to_config(cfg);
}

// ---------------------------------------------------------------------------
// quality

GroundTruthQuality::GroundTruthQuality(const std::vector<Trajectory>& truth) {
    for (const auto& t : truth) {
        for (const auto& [frame, box] : t.boxes) {
            if (per_frame_.size() <= frame) per_frame_.resize(frame + 1);
            per_frame_[frame].push_back(box);
        }
    }
}

double GroundTruthQuality::evaluate(std::size_t frame, const Box& box, double) const {
    if (frame >= per_frame_.size()) return 0.0;
    double best = 0.0;
    for (const auto& g : per_frame_[frame]) best = std::max(best, iou(box, g));
    return best;
}

double ConfidenceQuality::evaluate(std::size_t, const Box&, double score) const {
    return 1.0 / (1.0 + std::exp(-slope_ * (score - midpoint_)));
}

// ---------------------------------------------------------------------------
// virtual candidates

namespace {

constexpr double kSotBackground = 0.1;
constexpr double kSotSharpness = 10.0;

}  // namespace

Box sot_search(const Box& reference, const std::vector<double>& appearance, Point velocity,
               const std::vector<Candidate>& frame_candidates) {
    const Point predicted = reference.center() + velocity;
    const double diag = reference.diagonal();
    const double step = diag / 8.0;
    const double prior_sigma2 = 0.25 * diag * diag;
    const double bump_sigma2 = step * step;

    // Candidates that can reach the search disc, weighted by descriptor match.
    std::vector<std::pair<Point, double>> peaks;
    for (const auto& c : frame_candidates) {
        if (c.is_virtual()) continue;
        if (norm(c.center() - predicted) > 2.0 * diag) continue;
        const double sim = appearance.size() == c.appearance().size() ? appearance_similarity(appearance, c.appearance())
                                                                      : 0.0;
        peaks.emplace_back(c.center(), std::exp(kSotSharpness * (sim - 1.0)));
    }

    auto score = [&](Point q) {
        const Point dp = q - predicted;
        double s = kSotBackground;
        for (const auto& [centre, w] : peaks) {
            const Point d = q - centre;
            s += w * std::exp(-(d.x * d.x + d.y * d.y) / (2.0 * bump_sigma2));
        }
        return s * std::exp(-(dp.x * dp.x + dp.y * dp.y) / (2.0 * prior_sigma2));
    };

    Point best = predicted;
    double best_score = score(predicted);
    for (int iy = -8; iy <= 8; ++iy) {
        for (int ix = -8; ix <= 8; ++ix) {
            if (ix * ix + iy * iy > 64 || (ix == 0 && iy == 0)) continue;
            const Point q{predicted.x + ix * step, predicted.y + iy * step};
            const double s = score(q);
            if (s > best_score) {
                best_score = s;
                best = q;
            }
        }
    }
    return Box::centered_at(best, reference.width, reference.height);
}

VirtualTable resolve_virtuals(const AssociationBatch& batch, const VelocityTable& velocities) {
    VirtualTable table;
    const std::size_t K = batch.order();
    const std::size_t anchor = batch.anchor_slot();
    for (std::size_t slot = 0; slot <= K; ++slot) {
        if (!batch.virtual_index(slot)) continue;
        const std::size_t ref_slot = slot == anchor ? anchor - 1 : anchor;
        if (slot == anchor && anchor == 0) continue;
        // Signed number of frames from the reference to this slot.
        const double steps = static_cast<double>(slot) - static_cast<double>(ref_slot);
        const auto& refs = batch.candidates(ref_slot);
        for (std::size_t r = 0; r < refs.size(); ++r) {
            if (refs[r].is_virtual()) continue;
            const Point v = steps * velocities.at(ref_slot).at(r);
            VirtualPlacement placement;
            placement.box = sot_search(refs[r].box(), refs[r].appearance(), v, batch.candidates(slot));
            placement.appearance = refs[r].appearance();
            table.emplace(std::make_pair(slot, r), std::move(placement));
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// track state

TrackedTarget& TrackState::target(int id) {
    if (id < 1 || id >= next_id) throw InternalInvariantError("unknown track id " + std::to_string(id));
    return targets[static_cast<std::size_t>(id - 1)];
}

const TrackedTarget& TrackState::target(int id) const {
    if (id < 1 || id >= next_id) throw InternalInvariantError("unknown track id " + std::to_string(id));
    return targets[static_cast<std::size_t>(id - 1)];
}

std::vector<Trajectory> TrackState::trajectories() const {
    std::vector<Trajectory> out;
    for (const auto& t : targets) {
        if (!t.boxes.empty()) out.push_back({t.id, t.boxes});
    }
    return out;
}

// ---------------------------------------------------------------------------
// tracker

Tracker::Tracker(std::vector<std::vector<Candidate>> detections, AffinityProviderParams params, PipelineConfig config,
                 const QualityEstimator& quality)
    : params_(params), config_(std::move(config)), quality_(quality) {
    config_.validate();
    state_.frames = std::move(detections);
    for (std::size_t f = 0; f < state_.frames.size(); ++f) {
        for (const auto& c : state_.frames[f]) {
            if (c.is_virtual()) throw ValidationError("input frames must not contain virtual candidates");
        }
        state_.owner.emplace_back(state_.frames[f].size(), -1);
    }
}

AssociationBatch Tracker::build_batch(std::size_t anchor) const {
    if (anchor < 1 || anchor + 1 >= state_.frames.size()) throw RangeError("anchor frame has no full window");
    std::vector<std::size_t> frames{anchor - 1, anchor, anchor + 1};
    std::vector<std::vector<Candidate>> lists;
    // Virtuals sit in the frames next to the anchor only. One in the anchor frame
    // would link every predecessor to every successor and soak up the rank-1 mass.
    for (std::size_t slot = 0; slot < frames.size(); ++slot) {
        auto list = state_.frames[frames[slot]];
        if (slot != 1) list.push_back(Candidate::virtual_slot(frames[slot]));
        lists.push_back(std::move(list));
    }
    return AssociationBatch(std::move(frames), std::move(lists));
}

Point Tracker::velocity_of(std::size_t frame, std::size_t index) const {
    if (index >= state_.owner[frame].size()) return {};
    const int id = state_.owner[frame][index];
    return id < 0 ? Point{} : state_.target(id).velocity;
}

VelocityTable Tracker::velocities(const AssociationBatch& batch) const {
    VelocityTable v;
    for (std::size_t k = 0; k <= batch.order(); ++k) {
        std::vector<Point> row;
        for (std::size_t i = 0; i < batch.size(k); ++i) row.push_back(velocity_of(batch.frames()[k], i));
        v.push_back(std::move(row));
    }
    return v;
}

bool Tracker::overlaps_tracked(std::size_t frame, const Box& box) const {
    for (std::size_t i = 0; i < state_.frames[frame].size(); ++i) {
        if (state_.owner[frame][i] < 0) continue;
        if (iou(state_.frames[frame][i].box(), box) >= config_.t_dif) return true;
    }
    return false;
}

int Tracker::start_target(std::size_t frame, std::size_t index) {
    const Candidate& c = state_.frames[frame][index];
    TrackedTarget t;
    t.id = state_.next_id++;
    t.boxes[frame] = c.box();
    t.appearance = c.appearance();
    state_.targets.push_back(std::move(t));
    state_.owner[frame][index] = state_.targets.back().id;
    return state_.targets.back().id;
}

void Tracker::materialise(std::size_t frame, const Box& box, TrackedTarget& target) {
    auto cand = Candidate::real(frame, box, 0.0, target.appearance, -1).with_prediction_flag(true);
    state_.frames[frame].push_back(std::move(cand));
    state_.owner[frame].push_back(target.id);
}

WindowReport Tracker::manage_pair(std::size_t anchor, std::size_t pair) {
    const AssociationBatch batch = build_batch(anchor);
    const VirtualTable virtuals = resolve_virtuals(batch, velocities(batch));
    const auto hyps = generate_hypotheses(batch, config_.gate);

    WindowReport report;
    report.anchor_frame = anchor;
    report.hypotheses = hyps.size();

    const std::size_t K = batch.order();
    PartialNormMask mask = PartialNormMask::empty(K);
    for (std::size_t k = 0; k < K; ++k) {
        if (const auto v = batch.virtual_index(k)) mask.column_only_rows[k].push_back(*v);
        if (const auto v = batch.virtual_index(k + 1)) mask.row_only_cols[k].push_back(*v);
    }

    if (hyps.empty()) {
        for (std::size_t k = 0; k < K; ++k) report.binary.emplace_back(batch.size(k), batch.size(k + 1));
    } else {
        AffinityOptions options;
        options.alpha = config_.alpha;
        options.virtuals = &virtuals;
        const auto bundle = compute_affinity(batch, hyps, params_, options);
        const auto solved = solve_assignment(bundle.A, bundle.C.shape(), mask, config_.solver);
        report.binary = discretize(solved.soft, mask);
    }

    // Rows of X^(pair) live in slot pair-1, columns in slot pair.
    const std::size_t row_slot = pair - 1;
    const std::size_t frame = batch.frames()[row_slot];
    const std::size_t next = batch.frames()[pair];
    const Matrix& X = report.binary[pair - 1];
    const std::size_t real_rows = state_.frames[frame].size();
    const std::size_t real_cols = state_.frames[next].size();

    for (std::size_t i = 0; i < real_rows; ++i) {
        const Candidate& cand = state_.frames[frame][i];
        int column = -1;
        for (std::size_t j = 0; j < real_cols; ++j) {
            if (X(i, j) > 0.5) column = static_cast<int>(j);
        }
        report.assigned_column.push_back(column);

        int id = state_.owner[frame][i];
        AnchorOutcome outcome = AnchorOutcome::Untracked;
        if (id < 0) {
            const bool confident =
                quality_.evaluate(frame, cand.box(), cand.score()) > config_.quality_threshold;
            const bool duplicate = config_.suppress_duplicate_births && overlaps_tracked(frame, cand.box());
            if (confident && !duplicate) {
                id = start_target(frame, i);
                outcome = AnchorOutcome::Started;
            }
        }
        if (id < 0) {
            report.outcomes.push_back(outcome);
            continue;
        }
        TrackedTarget& target = state_.target(id);
        if (target.status == TargetStatus::Exited) {
            throw InternalInvariantError("exited track " + std::to_string(id) + " is linked to a live candidate");
        }
        if (target.boxes.count(next)) {
            throw InternalInvariantError("track " + std::to_string(id) + " already has a box in frame " +
                                         std::to_string(next));
        }
        // The next frame's virtual gives the prediction; the bootstrap pair has none
        // and runs the same search directly.
        const auto it = virtuals.find({pair, i});
        const Box predicted = it != virtuals.end()
                                  ? it->second.box
                                  : sot_search(cand.box(), target.appearance, target.velocity, state_.frames[next]);

        auto coast = [&]() {
            ++target.frames_coasting;
            if (target.frames_coasting > config_.max_coast_frames) {
                target.status = TargetStatus::Exited;
                return AnchorOutcome::Exited;
            }
            target.status = TargetStatus::Coasting;
            target.velocity = predicted.center() - cand.center();
            target.boxes[next] = predicted;
            materialise(next, predicted, target);
            return AnchorOutcome::Coasted;
        };

        if (column >= 0) {
            const auto j = static_cast<std::size_t>(column);
            const Candidate& partner = state_.frames[next][j];
            if (state_.owner[next][j] >= 0) {
                throw InternalInvariantError("candidate claimed by two tracks in frame " + std::to_string(next));
            }
            const bool disagree = iou(predicted, partner.box()) < config_.t_dif;
            if (disagree && quality_.evaluate(next, partner.box(), partner.score()) < config_.quality_threshold) {
                const auto r = coast();
                outcome = r == AnchorOutcome::Coasted ? AnchorOutcome::UpdatedPrediction : r;
            } else {
                target.status = TargetStatus::Active;
                target.frames_coasting = 0;
                target.velocity = partner.center() - cand.center();
                target.appearance = partner.appearance();
                target.boxes[next] = partner.box();
                state_.owner[next][j] = id;
                outcome = AnchorOutcome::UpdatedReal;
            }
        } else {
            // Virtual partner, or no admissible partner at all: follow the prediction.
            if (coverage(predicted, config_.frame_box()) < config_.t_exit) {
                target.status = TargetStatus::Exited;
                outcome = AnchorOutcome::Exited;
            } else {
                outcome = coast();
            }
        }
        report.outcomes.push_back(outcome);
    }
    return report;
}

WindowReport Tracker::track_batch(std::size_t anchor) {
    if (!bootstrapped_) {
        if (anchor != 1) throw ContractError("the first window must be centred on frame 1");
        manage_pair(anchor, 1);
        bootstrapped_ = true;
    }
    return manage_pair(anchor, 2);
}

std::vector<Trajectory> run_sequence(const std::vector<std::vector<Candidate>>& frames,
                                     const AffinityProviderParams& params, const PipelineConfig& config,
                                     const QualityEstimator& quality) {
    const auto schedule = batch_windows(frames.size(), 2, 2);
    if (schedule.warning) throw ValidationError(schedule.message);
    Tracker tracker(frames, params, config, quality);
    for (const auto& w : schedule.windows) tracker.track_batch(w[1]);
    return tracker.state().trajectories();
}

}  // namespace mdt
