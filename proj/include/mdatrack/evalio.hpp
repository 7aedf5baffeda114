#pragma once

#include "mdatrack/core_types.hpp"
#include "mdatrack/kvconfig.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mdt {

// ---------------------------------------------------------------------------
// MOTChallenge text format

/// One line: frame,id,left,top,width,height,conf,x,y,z[,descriptor...]
/// Frames are 1-based in the file. Trailing fields, when present, are an
/// appearance descriptor.
struct MotRecord {
    std::int64_t frame = 1;
    std::int64_t id = -1;
    double left = 0.0;
    double top = 0.0;
    double width = 0.0;
    double height = 0.0;
    double conf = 1.0;
    double x = -1.0;
    double y = -1.0;
    double z = -1.0;
    std::vector<double> appearance;

    Box box() const { return {left, top, width, height}; }
    friend bool operator==(const MotRecord&, const MotRecord&) = default;
};

/// Parses every record; malformed lines raise ParseError with their line number.
std::vector<MotRecord> read_mot_records(std::istream& in);
std::vector<MotRecord> read_mot_file(const std::string& path);
void write_mot_records(std::ostream& out, const std::vector<MotRecord>& records);

/// Groups records into per-frame candidate lists (index 0 = file frame 1),
/// sorted by frame. `frame_count` pads trailing empty frames when larger.
/// Record ids become candidate labels.
std::vector<std::vector<Candidate>> records_to_frames(const std::vector<MotRecord>& records,
                                                      std::size_t frame_count = 0);

std::vector<std::vector<Candidate>> load_mot(std::istream& in);
std::vector<std::vector<Candidate>> load_mot(const std::string& path);

std::vector<MotRecord> trajectories_to_records(const std::vector<Trajectory>& tracks);
std::vector<Trajectory> records_to_trajectories(const std::vector<MotRecord>& records);
void save_mot(std::ostream& out, const std::vector<Trajectory>& tracks);
void save_mot(const std::string& path, const std::vector<Trajectory>& tracks);

// ---------------------------------------------------------------------------
// CLEAR MOT

struct MatchEvent {
    std::size_t frame = 0;
    int gt_id = 0;
    int hyp_id = 0;
    double iou = 0.0;
    bool switched = false;
};

struct ClearMotReport {
    double mota = 0.0;
    double motp = 0.0;  // mean IoU of matched pairs (higher is better)
    double mostly_tracked = 0.0;  // percent of GT targets tracked >= 80% of their lifespan
    double mostly_lost = 0.0;     // percent tracked <= 20%
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t id_switches = 0;
    std::size_t gt_boxes = 0;
    std::size_t matches = 0;
    std::size_t gt_targets = 0;
    std::vector<MatchEvent> log;
};

ClearMotReport clear_mot(const std::vector<Trajectory>& gt, const std::vector<Trajectory>& hyp,
                         double iou_threshold = 0.5);

std::string format_report(const ClearMotReport& report);

// ---------------------------------------------------------------------------
// synthetic scenarios

struct ScenarioSpec {
    std::size_t frame_count = 50;
    std::size_t target_count = 10;
    double frame_width = 640.0;
    double frame_height = 480.0;
    double speed_min = 1.0;  // px/frame
    double speed_max = 4.0;
    double box_width_min = 24.0;
    double box_width_max = 40.0;
    double aspect_min = 1.5;  // height / width
    double aspect_max = 2.5;
    double detection_noise = 0.0;  // centre noise sigma, px
    double miss_probability = 0.0;
    double false_positive_rate = 0.0;  // mean false positives per frame
    std::size_t descriptor_length = kDefaultDescriptorLength;
    double appearance_noise = 0.02;
    std::uint64_t seed = 1;

    void validate() const;
    static ScenarioSpec from_config(const KeyValueConfig& cfg);
    static ScenarioSpec from_config(const KeyValueConfig& cfg, const ScenarioSpec& fallback);
    void to_config(KeyValueConfig& cfg) const;
};

struct Scenario {
    ScenarioSpec spec;
    std::vector<Trajectory> ground_truth;                    // ids 1..target_count
    std::vector<std::vector<Candidate>> truth_candidates;     // GT boxes as labelled candidates
    std::vector<std::vector<Candidate>> detections;           // noisy; label -1 for false positives

    Box frame_box() const { return {0.0, 0.0, spec.frame_width, spec.frame_height}; }
};

/// Constant-velocity targets reflecting off the frame border; fully determined by the seed.
Scenario generate_scenario(const ScenarioSpec& spec);

/// Detections as MOT records, descriptor appended; ids carry the true label.
std::vector<MotRecord> candidates_to_records(const std::vector<std::vector<Candidate>>& frames);

}  // namespace mdt
