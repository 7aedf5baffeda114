#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdt {

/// Default appearance descriptor length: 8 bins per colour channel.
inline constexpr std::size_t kDefaultDescriptorLength = 24;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
double norm(Point p);

/// Axis-aligned box in pixels: (left, top, width, height).
struct Box {
    double left = 0.0;
    double top = 0.0;
    double width = 0.0;
    double height = 0.0;

    Point center() const { return {left + 0.5 * width, top + 0.5 * height}; }
    double area() const { return width * height; }
    double diagonal() const;
    static Box centered_at(Point c, double width, double height) {
        return {c.x - 0.5 * width, c.y - 0.5 * height, width, height};
    }

    friend bool operator==(const Box&, const Box&) = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
/// Fraction of `box` lying inside `frame`.
double coverage(const Box& box, const Box& frame);

/// A detection, a carried prediction, or the per-frame virtual placeholder.
///
/// A virtual candidate has no position of its own; the tracker resolves one
/// per anchor. Reading `center()` of an unresolved virtual is a contract error.
class Candidate {
public:
    static Candidate real(std::size_t frame_index, const Box& box, double score, std::vector<double> appearance,
                          int label = -1);
    static Candidate virtual_slot(std::size_t frame_index);

    std::size_t frame_index() const noexcept { return frame_index_; }
    bool is_virtual() const noexcept { return is_virtual_; }
    bool has_center() const noexcept { return center_.has_value(); }
    const Point& center() const;
    const Box& box() const { return box_; }
    double score() const noexcept { return score_; }
    const std::vector<double>& appearance() const noexcept { return appearance_; }
    /// Ground-truth identity when known (synthetic data, training); -1 otherwise.
    int label() const noexcept { return label_; }
    /// Set on real-slot candidates that were materialised from a tracker prediction.
    bool from_prediction() const noexcept { return from_prediction_; }

    Candidate with_prediction_flag(bool flag) const;

private:
    Candidate() = default;

    std::size_t frame_index_ = 0;
    std::optional<Point> center_;
    Box box_;
    double score_ = 0.0;
    bool is_virtual_ = false;
    bool from_prediction_ = false;
    std::vector<double> appearance_;
    int label_ = -1;
};

// Index algebra. The math layer is 1-based; storage is 0-based. These two
// adapters are the only place the offset is applied.
inline constexpr std::size_t to_storage(std::size_t math_index) { return math_index - 1; }
inline constexpr std::size_t to_math(std::size_t storage_index) { return storage_index + 1; }

/// j = (i_prev - 1) * I_next + i_next, all 1-based.
std::size_t flatten_pair(std::size_t i_prev, std::size_t i_next, std::size_t next_size);

/// Inverse of flatten_pair. `prev_size` bounds j when known (0 means unbounded).
std::pair<std::size_t, std::size_t> unflatten_pair(std::size_t j, std::size_t next_size, std::size_t prev_size = 0);

struct PairIndex {
    std::size_t k = 0;       // frame pair, 1..K
    std::size_t i_prev = 0;  // 1..I_{k-1}
    std::size_t i_next = 0;  // 1..I_k
    std::size_t j = 0;       // flattened

    static PairIndex make(std::size_t k, std::size_t i_prev, std::size_t i_next, std::size_t next_size);
};

/// (K+1)-tuple of 1-based candidate indices with its affinity.
struct HypothesisTrajectory {
    std::vector<std::size_t> indices;
    double affinity = 0.0;

    friend bool operator==(const HypothesisTrajectory&, const HypothesisTrajectory&) = default;
};

/// K+1 consecutive frames of candidates solved as one instance.
class AssociationBatch {
public:
    AssociationBatch(std::vector<std::size_t> frames, std::vector<std::vector<Candidate>> candidates);

    std::size_t order() const noexcept { return frames_.size() - 1; }  // K
    const std::vector<std::size_t>& frames() const noexcept { return frames_; }
    const std::vector<std::vector<Candidate>>& candidates() const noexcept { return candidates_; }
    const std::vector<Candidate>& candidates(std::size_t k) const { return candidates_.at(k); }
    std::size_t size(std::size_t k) const { return candidates_.at(k).size(); }
    std::vector<std::size_t> sizes() const;
    /// Position of the anchor frame inside the batch (K/2).
    std::size_t anchor_slot() const noexcept { return order() / 2; }
    std::size_t anchor_frame() const { return frames_[anchor_slot()]; }
    /// 0-based storage index of the virtual slot of frame k, if present.
    std::optional<std::size_t> virtual_index(std::size_t k) const;

private:
    std::vector<std::size_t> frames_;
    std::vector<std::vector<Candidate>> candidates_;
};

/// Output track: one box per frame it covers (0-based frame index).
struct Trajectory {
    int id = 0;
    std::map<std::size_t, Box> boxes;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct WindowSchedule {
    std::vector<std::vector<std::size_t>> windows;
    bool warning = false;
    std::string message;
};

/// Sliding K+1-frame windows where consecutive windows share `overlap` frames.
WindowSchedule batch_windows(std::size_t frame_count, std::size_t K, std::size_t overlap);

}  // namespace mdt
