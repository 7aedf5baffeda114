#include "mdatrack/core_types.hpp"

#include "mdatrack/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mdt {

double norm(Point p) { return std::hypot(p.x, p.y); }

double Box::diagonal() const { return std::hypot(width, height); }

double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.left + a.width, b.left + b.width) - std::max(a.left, b.left);
    const double h = std::min(a.top + a.height, b.top + b.height) - std::max(a.top, b.top);
    return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double coverage(const Box& box, const Box& frame) {
    const double a = box.area();
    return a > 0.0 ? intersection_area(box, frame) / a : 0.0;
}

Candidate Candidate::real(std::size_t frame_index, const Box& box, double score, std::vector<double> appearance,
                          int label) {
    if (!(box.width > 0.0) || !(box.height > 0.0)) {
        throw ValidationError("candidate box must have positive width and height");
    }
    Candidate c;
    c.frame_index_ = frame_index;
    c.box_ = box;
    c.center_ = box.center();
    c.score_ = score;
    c.appearance_ = std::move(appearance);
    c.label_ = label;
    return c;
}

Candidate Candidate::virtual_slot(std::size_t frame_index) {
    Candidate c;
    c.frame_index_ = frame_index;
    c.is_virtual_ = true;
    return c;
}

const Point& Candidate::center() const {
    if (!center_) throw ContractError("center of an unresolved virtual candidate was read");
    return *center_;
}

Candidate Candidate::with_prediction_flag(bool flag) const {
    Candidate c = *this;
    c.from_prediction_ = flag;
    return c;
}

std::size_t flatten_pair(std::size_t i_prev, std::size_t i_next, std::size_t next_size) {
    if (i_prev < 1 || i_next < 1 || i_next > next_size) {
        throw RangeError("flatten_pair: index out of range (" + std::to_string(i_prev) + ", " +
                         std::to_string(i_next) + ") for I_next=" + std::to_string(next_size));
    }
    return (i_prev - 1) * next_size + i_next;
}

std::pair<std::size_t, std::size_t> unflatten_pair(std::size_t j, std::size_t next_size, std::size_t prev_size) {
    if (next_size == 0 || j < 1 || (prev_size != 0 && j > prev_size * next_size)) {
        throw RangeError("unflatten_pair: j=" + std::to_string(j) + " out of range");
    }
    return {(j - 1) / next_size + 1, (j - 1) % next_size + 1};
}

PairIndex PairIndex::make(std::size_t k, std::size_t i_prev, std::size_t i_next, std::size_t next_size) {
    return {k, i_prev, i_next, flatten_pair(i_prev, i_next, next_size)};
}

AssociationBatch::AssociationBatch(std::vector<std::size_t> frames, std::vector<std::vector<Candidate>> candidates)
    : frames_(std::move(frames)), candidates_(std::move(candidates)) {
    if (frames_.size() < 3) throw ContractError("association batch needs K >= 2 (at least 3 frames)");
    if (candidates_.size() != frames_.size()) throw ContractError("one candidate list per frame required");
    for (std::size_t k = 1; k < frames_.size(); ++k) {
        if (frames_[k] <= frames_[k - 1]) throw ContractError("batch frames must be strictly increasing");
    }
    for (const auto& frame : candidates_) {
        std::size_t virtuals = 0;
        for (std::size_t i = 0; i < frame.size(); ++i) {
            if (frame[i].is_virtual()) {
                ++virtuals;
                if (i + 1 != frame.size()) throw ContractError("virtual candidate must occupy the last slot");
            }
        }
        if (virtuals > 1) throw ContractError("at most one virtual candidate per frame");
    }
}

std::vector<std::size_t> AssociationBatch::sizes() const {
    std::vector<std::size_t> s;
    s.reserve(candidates_.size());
    for (const auto& f : candidates_) s.push_back(f.size());
    return s;
}

std::optional<std::size_t> AssociationBatch::virtual_index(std::size_t k) const {
    const auto& f = candidates_.at(k);
    if (!f.empty() && f.back().is_virtual()) return f.size() - 1;
    return std::nullopt;
}

WindowSchedule batch_windows(std::size_t frame_count, std::size_t K, std::size_t overlap) {
    WindowSchedule schedule;
    if (K < 1 || overlap > K) {
        throw ContractError("batch_windows: require K >= 1 and overlap <= K");
    }
    if (frame_count < K + 1) {
        schedule.warning = true;
        schedule.message = "sequence has " + std::to_string(frame_count) + " frames, fewer than K+1=" +
                           std::to_string(K + 1) + "; nothing to associate";
        return schedule;
    }
    const std::size_t stride = K + 1 - overlap;
    std::size_t start = 0;
    for (; start + K < frame_count; start += stride) {
        std::vector<std::size_t> w(K + 1);
        for (std::size_t k = 0; k <= K; ++k) w[k] = start + k;
        schedule.windows.push_back(std::move(w));
    }
    // Larger strides can leave a tail uncovered; close it with a window aligned to the end.
    if (schedule.windows.back().back() + 1 < frame_count) {
        std::vector<std::size_t> w(K + 1);
        for (std::size_t k = 0; k <= K; ++k) w[k] = frame_count - K - 1 + k;
        schedule.windows.push_back(std::move(w));
    }
    return schedule;
}

}  // namespace mdt
