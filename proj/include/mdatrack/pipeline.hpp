#pragma once

#include "mdatrack/affinity.hpp"
#include "mdatrack/core_types.hpp"
#include "mdatrack/kvconfig.hpp"
#include "mdatrack/mda.hpp"

#include <cstddef>
#include <memory>
#include <vector>

namespace mdt {

struct PipelineConfig {
    double alpha = 0.8;
    double t_dif = 0.5;
    double t_exit = 0.3;
    double quality_threshold = 0.5;
    int max_coast_frames = 10;
    double frame_width = 640.0;
    double frame_height = 480.0;
    // Refuse to start a track on a detection that overlaps an already tracked
    // candidate of the same frame by at least t_dif.
    bool suppress_duplicate_births = true;
    ConnectionGateConfig gate;
    // Fewer power iterations than the solver default: by ten steps the iterates
    // spread over hundreds of decades and partial normalisation can no longer
    // compare a virtual row with a rescaled real row.
    SolverConfig solver{5, 10, true};

    void validate() const;
    static PipelineConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
    Box frame_box() const { return {0.0, 0.0, frame_width, frame_height}; }
};

/// Stands in for the bounding-box quality classifier: a score in [0, 1].
class QualityEstimator {
public:
    virtual ~QualityEstimator() = default;
    virtual double evaluate(std::size_t frame, const Box& box, double score) const = 0;
};

/// Best IoU against the ground-truth boxes of the frame.
class GroundTruthQuality : public QualityEstimator {
public:
    explicit GroundTruthQuality(const std::vector<Trajectory>& truth);
    double evaluate(std::size_t frame, const Box& box, double score) const override;

private:
    std::vector<std::vector<Box>> per_frame_;
};

/// Detector confidence squashed by a logistic centred at `midpoint`.
class ConfidenceQuality : public QualityEstimator {
public:
    explicit ConfidenceQuality(double midpoint = 0.5, double slope = 10.0) : midpoint_(midpoint), slope_(slope) {}
    double evaluate(std::size_t frame, const Box& box, double score) const override;

private:
    double midpoint_;
    double slope_;
};

/// SOT stand-in: searches a grid of radius one box diagonal (step diagonal / 8)
/// around `reference.center() + velocity` for the best match of `appearance`
/// among `frame_candidates`. Returns a box of the reference's size.
Box sot_search(const Box& reference, const std::vector<double>& appearance, Point velocity,
               const std::vector<Candidate>& frame_candidates);

/// Per-slot, per-candidate motion estimate used to extrapolate virtual positions.
using VelocityTable = std::vector<std::vector<Point>>;

/// Places the virtual of every slot once per reference candidate. References are
/// the anchors for non-anchor slots and the slot-0 candidates for the anchor slot.
VirtualTable resolve_virtuals(const AssociationBatch& batch, const VelocityTable& velocities);

enum class TargetStatus { Active, Coasting, Exited };

struct TrackedTarget {
    int id = 0;
    std::map<std::size_t, Box> boxes;
    TargetStatus status = TargetStatus::Active;
    int frames_coasting = 0;
    Point velocity;
    std::vector<double> appearance;  // last confident descriptor
};

struct TrackState {
    std::vector<TrackedTarget> targets;
    int next_id = 1;
    /// Working candidate lists: detections followed by materialised predictions.
    std::vector<std::vector<Candidate>> frames;
    /// Track id linked to each working candidate, -1 when untracked.
    std::vector<std::vector<int>> owner;

    TrackedTarget& target(int id);
    const TrackedTarget& target(int id) const;
    std::vector<Trajectory> trajectories() const;
};

enum class AnchorOutcome { Untracked, Started, UpdatedReal, UpdatedPrediction, Coasted, Exited };

struct WindowReport {
    std::size_t anchor_frame = 0;
    std::size_t hypotheses = 0;
    std::vector<Matrix> binary;                  // discretised assignment per pair
    std::vector<AnchorOutcome> outcomes;         // per real row of the processed pair
    std::vector<int> assigned_column;            // -1 = virtual / none
};

/// Sequential tracker over a fixed list of frames.
class Tracker {
public:
    Tracker(std::vector<std::vector<Candidate>> detections, AffinityProviderParams params, PipelineConfig config,
            const QualityEstimator& quality);

    /// Solves the window centred on `anchor` and applies target management to
    /// the anchor -> next pair. The first window also manages frame 0 -> 1.
    WindowReport track_batch(std::size_t anchor);

    /// Builds the window batch from the current working lists (virtuals appended).
    AssociationBatch build_batch(std::size_t anchor) const;

    const TrackState& state() const noexcept { return state_; }

private:
    WindowReport manage_pair(std::size_t anchor, std::size_t pair);
    VelocityTable velocities(const AssociationBatch& batch) const;
    Point velocity_of(std::size_t frame, std::size_t index) const;
    int start_target(std::size_t frame, std::size_t index);
    bool overlaps_tracked(std::size_t frame, const Box& box) const;
    void materialise(std::size_t frame, const Box& box, TrackedTarget& target);

    AffinityProviderParams params_;
    PipelineConfig config_;
    const QualityEstimator& quality_;
    TrackState state_;
    bool bootstrapped_ = false;
};

/// Runs every window of the sequence and returns the trajectories.
std::vector<Trajectory> run_sequence(const std::vector<std::vector<Candidate>>& frames,
                                     const AffinityProviderParams& params, const PipelineConfig& config,
                                     const QualityEstimator& quality);

}  // namespace mdt
