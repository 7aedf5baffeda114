#include "mdatrack/evalio.hpp"

#include "mdatrack/errors.hpp"
#include "mdatrack/hungarian.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace mdt {

// ---------------------------------------------------------------------------
// MOT records

namespace {

std::string trim_field(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    if (begin != end && *begin == '+') ++begin;
    const auto res = std::from_chars(begin, end, out);
    return !text.empty() && res.ec == std::errc() && res.ptr == end;
}

// Integer-valued float fields ("1.0") are accepted for frame and id.
bool parse_integer_field(const std::string& text, std::int64_t& out) {
    if (parse_number(text, out)) return true;
    double d = 0.0;
    if (!parse_number(text, d) || d != std::floor(d) || std::abs(d) > 9e15) return false;
    out = static_cast<std::int64_t>(d);
    return true;
}

}  // namespace

std::vector<MotRecord> read_mot_records(std::istream& in) {
    std::vector<MotRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_field(line).empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(trim_field(std::string_view(line).substr(start, comma - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() < 10) {
            throw ParseError("expected at least 10 comma-separated fields, got " + std::to_string(fields.size()),
                             line_no);
        }
        MotRecord r;
        if (!parse_integer_field(fields[0], r.frame)) throw ParseError("bad frame '" + fields[0] + "'", line_no);
        if (r.frame < 1) throw ParseError("frame numbers start at 1", line_no);
        if (!parse_integer_field(fields[1], r.id)) throw ParseError("bad id '" + fields[1] + "'", line_no);
        double* reals[] = {&r.left, &r.top, &r.width, &r.height, &r.conf, &r.x, &r.y, &r.z};
        for (std::size_t f = 0; f < 8; ++f) {
            if (!parse_number(fields[f + 2], *reals[f]) || !std::isfinite(*reals[f])) {
                throw ParseError("bad numeric field " + std::to_string(f + 3) + " '" + fields[f + 2] + "'", line_no);
            }
        }
        if (!(r.width > 0.0) || !(r.height > 0.0)) throw ParseError("box width and height must be positive", line_no);
        for (std::size_t f = 10; f < fields.size(); ++f) {
            double v = 0.0;
            if (!parse_number(fields[f], v) || !std::isfinite(v)) {
                throw ParseError("bad descriptor field " + std::to_string(f + 1) + " '" + fields[f] + "'", line_no);
            }
            r.appearance.push_back(v);
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<MotRecord> read_mot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open MOT file '" + path + "'");
    return read_mot_records(in);
}

void write_mot_records(std::ostream& out, const std::vector<MotRecord>& records) {
    for (const auto& r : records) {
        out << r.frame << ',' << r.id << ',' << format_double(r.left) << ',' << format_double(r.top) << ','
            << format_double(r.width) << ',' << format_double(r.height) << ',' << format_double(r.conf) << ','
            << format_double(r.x) << ',' << format_double(r.y) << ',' << format_double(r.z);
        for (double v : r.appearance) out << ',' << format_double(v);
        out << '\n';
    }
}

std::vector<std::vector<Candidate>> records_to_frames(const std::vector<MotRecord>& records, std::size_t frame_count) {
    std::size_t last = frame_count;
    for (const auto& r : records) last = std::max(last, static_cast<std::size_t>(r.frame));
    std::vector<std::vector<Candidate>> frames(last);
    std::vector<const MotRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->frame < b->frame; });
    for (const auto* r : sorted) {
        const std::size_t f = static_cast<std::size_t>(r->frame - 1);
        frames[f].push_back(Candidate::real(f, r->box(), r->conf, r->appearance, static_cast<int>(r->id)));
    }
    return frames;
}

std::vector<std::vector<Candidate>> load_mot(std::istream& in) { return records_to_frames(read_mot_records(in)); }

std::vector<std::vector<Candidate>> load_mot(const std::string& path) { return records_to_frames(read_mot_file(path)); }

std::vector<MotRecord> trajectories_to_records(const std::vector<Trajectory>& tracks) {
    std::vector<MotRecord> records;
    for (const auto& t : tracks) {
        for (const auto& [frame, box] : t.boxes) {
            MotRecord r;
            r.frame = static_cast<std::int64_t>(frame) + 1;
            r.id = t.id;
            r.left = box.left;
            r.top = box.top;
            r.width = box.width;
            r.height = box.height;
            r.conf = 1.0;
            records.push_back(r);
        }
    }
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
    });
    return records;
}

std::vector<Trajectory> records_to_trajectories(const std::vector<MotRecord>& records) {
    std::map<std::int64_t, Trajectory> by_id;
    for (const auto& r : records) {
        auto& t = by_id[r.id];
        t.id = static_cast<int>(r.id);
        t.boxes[static_cast<std::size_t>(r.frame - 1)] = r.box();
    }
    std::vector<Trajectory> out;
    for (auto& [id, t] : by_id) out.push_back(std::move(t));
    return out;
}

void save_mot(std::ostream& out, const std::vector<Trajectory>& tracks) {
    write_mot_records(out, trajectories_to_records(tracks));
}

void save_mot(const std::string& path, const std::vector<Trajectory>& tracks) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write MOT file '" + path + "'");
    save_mot(out, tracks);
}

std::vector<MotRecord> candidates_to_records(const std::vector<std::vector<Candidate>>& frames) {
    std::vector<MotRecord> records;
    for (const auto& frame : frames) {
        for (const auto& c : frame) {
            if (c.is_virtual()) continue;
            MotRecord r;
            r.frame = static_cast<std::int64_t>(c.frame_index()) + 1;
            r.id = c.label();
            r.left = c.box().left;
            r.top = c.box().top;
            r.width = c.box().width;
            r.height = c.box().height;
            r.conf = c.score();
            r.appearance = c.appearance();
            records.push_back(std::move(r));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// CLEAR MOT

namespace {

struct Labelled {
    int id;
    Box box;
};

std::map<std::size_t, std::vector<Labelled>> by_frame(const std::vector<Trajectory>& tracks) {
    std::map<std::size_t, std::vector<Labelled>> out;
    for (const auto& t : tracks) {
        for (const auto& [f, b] : t.boxes) out[f].push_back({t.id, b});
    }
    return out;
}

}  // namespace

ClearMotReport clear_mot(const std::vector<Trajectory>& gt, const std::vector<Trajectory>& hyp, double iou_threshold) {
    ClearMotReport rep;
    const auto gt_frames = by_frame(gt);
    const auto hyp_frames = by_frame(hyp);
    std::set<std::size_t> frames;
    for (const auto& [f, _] : gt_frames) frames.insert(f);
    for (const auto& [f, _] : hyp_frames) frames.insert(f);

    std::map<int, int> last_match;  // gt id -> hyp id it was last matched to
    std::map<int, std::size_t> present, matched;
    double iou_sum = 0.0;
    const std::vector<Labelled> none;

    for (std::size_t f : frames) {
        const auto git = gt_frames.find(f);
        const auto hit = hyp_frames.find(f);
        const auto& gs = git == gt_frames.end() ? none : git->second;
        const auto& hs = hit == hyp_frames.end() ? none : hit->second;
        std::vector<int> gt_to_hyp(gs.size(), -1);
        std::vector<char> hyp_used(hs.size(), 0);

        // Keep last frame's correspondences that are still valid.
        for (std::size_t g = 0; g < gs.size(); ++g) {
            ++present[gs[g].id];
            const auto lm = last_match.find(gs[g].id);
            if (lm == last_match.end()) continue;
            for (std::size_t h = 0; h < hs.size(); ++h) {
                if (hyp_used[h] || hs[h].id != lm->second) continue;
                if (iou(gs[g].box, hs[h].box) >= iou_threshold) {
                    gt_to_hyp[g] = static_cast<int>(h);
                    hyp_used[h] = 1;
                    break;
                }
            }
        }
        // Optimal IoU matching among the rest.
        std::vector<std::size_t> free_g, free_h;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            if (gt_to_hyp[g] < 0) free_g.push_back(g);
        }
        for (std::size_t h = 0; h < hs.size(); ++h) {
            if (!hyp_used[h]) free_h.push_back(h);
        }
        if (!free_g.empty() && !free_h.empty()) {
            Matrix w(free_g.size(), free_h.size());
            for (std::size_t a = 0; a < free_g.size(); ++a) {
                for (std::size_t b = 0; b < free_h.size(); ++b) {
                    const double v = iou(gs[free_g[a]].box, hs[free_h[b]].box);
                    w(a, b) = v >= iou_threshold ? v : 0.0;
                }
            }
            const auto choice = max_weight_assignment(w);
            for (std::size_t a = 0; a < free_g.size(); ++a) {
                if (choice[a] < 0 || !(w(a, static_cast<std::size_t>(choice[a])) > 0.0)) continue;
                const std::size_t h = free_h[static_cast<std::size_t>(choice[a])];
                gt_to_hyp[free_g[a]] = static_cast<int>(h);
                hyp_used[h] = 1;
            }
        }

        for (std::size_t g = 0; g < gs.size(); ++g) {
            ++rep.gt_boxes;
            if (gt_to_hyp[g] < 0) {
                ++rep.false_negatives;
                continue;
            }
            const auto& h = hs[static_cast<std::size_t>(gt_to_hyp[g])];
            const double v = iou(gs[g].box, h.box);
            const auto lm = last_match.find(gs[g].id);
            const bool switched = lm != last_match.end() && lm->second != h.id;
            if (switched) ++rep.id_switches;
            last_match[gs[g].id] = h.id;
            ++matched[gs[g].id];
            ++rep.matches;
            iou_sum += v;
            rep.log.push_back({f, gs[g].id, h.id, v, switched});
        }
        for (std::size_t h = 0; h < hs.size(); ++h) {
            if (!hyp_used[h]) ++rep.false_positives;
        }
    }

    rep.gt_targets = present.size();
    std::size_t mt = 0, ml = 0;
    for (const auto& [id, n] : present) {
        const double ratio = static_cast<double>(matched[id]) / static_cast<double>(n);
        if (ratio >= 0.8) ++mt;
        if (ratio <= 0.2) ++ml;
    }
    if (rep.gt_targets > 0) {
        rep.mostly_tracked = 100.0 * static_cast<double>(mt) / static_cast<double>(rep.gt_targets);
        rep.mostly_lost = 100.0 * static_cast<double>(ml) / static_cast<double>(rep.gt_targets);
    }
    const double errors = static_cast<double>(rep.false_positives + rep.false_negatives + rep.id_switches);
    rep.mota = rep.gt_boxes > 0 ? 1.0 - errors / static_cast<double>(rep.gt_boxes) : std::nan("");
    rep.motp = rep.matches > 0 ? iou_sum / static_cast<double>(rep.matches) : 0.0;
    return rep;
}

std::string format_report(const ClearMotReport& r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "MOTA " << r.mota << '\n'
        << "MOTP " << r.motp << '\n'
        << "MT% " << r.mostly_tracked << '\n'
        << "ML% " << r.mostly_lost << '\n'
        << "FP " << r.false_positives << '\n'
        << "FN " << r.false_negatives << '\n'
        << "IDS " << r.id_switches << '\n'
        << "GT " << r.gt_boxes << '\n'
        << "TARGETS " << r.gt_targets << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// scenarios

void ScenarioSpec::validate() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
    };
    prob(miss_probability, "scenario.miss_probability");
    if (!(detection_noise >= 0.0)) throw ValidationError("scenario.detection_noise must be >= 0");
    if (!(false_positive_rate >= 0.0)) throw ValidationError("scenario.false_positive_rate must be >= 0");
    if (!(appearance_noise >= 0.0)) throw ValidationError("scenario.appearance_noise must be >= 0");
    if (!(speed_min >= 0.0 && speed_max >= speed_min)) throw ValidationError("scenario speed range is invalid");
    if (!(box_width_min > 0.0 && box_width_max >= box_width_min)) throw ValidationError("scenario box range invalid");
    if (!(aspect_min > 0.0 && aspect_max >= aspect_min)) throw ValidationError("scenario aspect range invalid");
    if (!(frame_width > 2.0 * box_width_max * aspect_max && frame_height > 2.0 * box_width_max * aspect_max)) {
        throw ValidationError("scenario frame is too small for its boxes");
    }
}

ScenarioSpec ScenarioSpec::from_config(const KeyValueConfig& cfg) { return from_config(cfg, ScenarioSpec{}); }

ScenarioSpec ScenarioSpec::from_config(const KeyValueConfig& cfg, const ScenarioSpec& fb) {
    ScenarioSpec s = fb;
    s.frame_count = static_cast<std::size_t>(cfg.get_int("scenario.frame_count", static_cast<std::int64_t>(fb.frame_count)));
    s.target_count =
        static_cast<std::size_t>(cfg.get_int("scenario.target_count", static_cast<std::int64_t>(fb.target_count)));
    s.frame_width = cfg.get_double("scenario.frame_width", fb.frame_width);
    s.frame_height = cfg.get_double("scenario.frame_height", fb.frame_height);
    s.speed_min = cfg.get_double("scenario.speed_min", fb.speed_min);
    s.speed_max = cfg.get_double("scenario.speed_max", fb.speed_max);
    s.box_width_min = cfg.get_double("scenario.box_width_min", fb.box_width_min);
    s.box_width_max = cfg.get_double("scenario.box_width_max", fb.box_width_max);
    s.aspect_min = cfg.get_double("scenario.aspect_min", fb.aspect_min);
    s.aspect_max = cfg.get_double("scenario.aspect_max", fb.aspect_max);
    s.detection_noise = cfg.get_double("scenario.detection_noise", fb.detection_noise);
    s.miss_probability = cfg.get_double("scenario.miss_probability", fb.miss_probability);
    s.false_positive_rate = cfg.get_double("scenario.false_positive_rate", fb.false_positive_rate);
    s.descriptor_length = static_cast<std::size_t>(
        cfg.get_int("scenario.descriptor_length", static_cast<std::int64_t>(fb.descriptor_length)));
    s.appearance_noise = cfg.get_double("scenario.appearance_noise", fb.appearance_noise);
    s.seed = static_cast<std::uint64_t>(cfg.get_int("scenario.seed", static_cast<std::int64_t>(fb.seed)));
    s.validate();
    return s;
}

void ScenarioSpec::to_config(KeyValueConfig& cfg) const {
    cfg.set_int("scenario.frame_count", static_cast<std::int64_t>(frame_count));
    cfg.set_int("scenario.target_count", static_cast<std::int64_t>(target_count));
    cfg.set_double("scenario.frame_width", frame_width);
    cfg.set_double("scenario.frame_height", frame_height);
    cfg.set_double("scenario.speed_min", speed_min);
    cfg.set_double("scenario.speed_max", speed_max);
    cfg.set_double("scenario.box_width_min", box_width_min);
    cfg.set_double("scenario.box_width_max", box_width_max);
    cfg.set_double("scenario.aspect_min", aspect_min);
    cfg.set_double("scenario.aspect_max", aspect_max);
    cfg.set_double("scenario.detection_noise", detection_noise);
    cfg.set_double("scenario.miss_probability", miss_probability);
    cfg.set_double("scenario.false_positive_rate", false_positive_rate);
    cfg.set_int("scenario.descriptor_length", static_cast<std::int64_t>(descriptor_length));
    cfg.set_double("scenario.appearance_noise", appearance_noise);
    cfg.set_int("scenario.seed", static_cast<std::int64_t>(seed));
}

namespace {

// Skewed non-negative histogram; distinct targets get clearly different shapes.
std::vector<double> random_descriptor(std::mt19937_64& rng, std::size_t length) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d(length);
    for (auto& v : d) {
        const double r = u(rng);
        v = r * r * r;
    }
    return d;
}

std::vector<double> noisy_descriptor(const std::vector<double>& base, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> d = base;
    for (auto& v : d) v = std::max(0.0, v + sigma * n(rng));
    return d;
}

void reflect(double& pos, double& vel, double half, double limit) {
    if (pos - half < 0.0) {
        pos = 2.0 * half - pos;
        vel = -vel;
    } else if (pos + half > limit) {
        pos = 2.0 * (limit - half) - pos;
        vel = -vel;
    }
}

}  // namespace

Scenario generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    Scenario sc;
    sc.spec = spec;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    constexpr double kPi = 3.14159265358979323846;

    struct Target {
        double x, y, vx, vy, w, h;
        std::vector<double> descriptor;
    };
    std::vector<Target> targets;
    for (std::size_t t = 0; t < spec.target_count; ++t) {
        Target tg{};
        tg.w = uniform(spec.box_width_min, spec.box_width_max);
        tg.h = tg.w * uniform(spec.aspect_min, spec.aspect_max);
        tg.x = uniform(0.5 * tg.w, spec.frame_width - 0.5 * tg.w);
        tg.y = uniform(0.5 * tg.h, spec.frame_height - 0.5 * tg.h);
        const double speed = uniform(spec.speed_min, spec.speed_max);
        const double angle = uniform(0.0, 2.0 * kPi);
        tg.vx = speed * std::cos(angle);
        tg.vy = speed * std::sin(angle);
        tg.descriptor = random_descriptor(rng, spec.descriptor_length);
        targets.push_back(std::move(tg));
    }
    sc.ground_truth.resize(spec.target_count);
    for (std::size_t t = 0; t < spec.target_count; ++t) sc.ground_truth[t].id = static_cast<int>(t + 1);
    sc.truth_candidates.resize(spec.frame_count);
    sc.detections.resize(spec.frame_count);

    for (std::size_t f = 0; f < spec.frame_count; ++f) {
        for (std::size_t t = 0; t < targets.size(); ++t) {
            auto& tg = targets[t];
            if (f > 0) {
                tg.x += tg.vx;
                tg.y += tg.vy;
                reflect(tg.x, tg.vx, 0.5 * tg.w, spec.frame_width);
                reflect(tg.y, tg.vy, 0.5 * tg.h, spec.frame_height);
            }
            const Box gt_box = Box::centered_at({tg.x, tg.y}, tg.w, tg.h);
            const int label = static_cast<int>(t + 1);
            sc.ground_truth[t].boxes[f] = gt_box;
            sc.truth_candidates[f].push_back(
                Candidate::real(f, gt_box, 1.0, noisy_descriptor(tg.descriptor, spec.appearance_noise, rng), label));

            // Draw every random quantity unconditionally so the stream layout is fixed.
            const bool missed = u(rng) < spec.miss_probability;
            const double nx = spec.detection_noise * n(rng);
            const double ny = spec.detection_noise * n(rng);
            const double score = uniform(0.6, 1.0);
            auto desc = noisy_descriptor(tg.descriptor, spec.appearance_noise, rng);
            if (missed) continue;
            const Box det = spec.detection_noise == 0.0 ? gt_box : Box::centered_at({tg.x + nx, tg.y + ny}, tg.w, tg.h);
            sc.detections[f].push_back(Candidate::real(f, det, score, std::move(desc), label));
        }
        if (spec.false_positive_rate > 0.0) {
            std::poisson_distribution<int> fp(spec.false_positive_rate);
            const int count = fp(rng);
            for (int i = 0; i < count; ++i) {
                const double w = uniform(spec.box_width_min, spec.box_width_max);
                const double h = w * uniform(spec.aspect_min, spec.aspect_max);
                const double x = uniform(0.5 * w, spec.frame_width - 0.5 * w);
                const double y = uniform(0.5 * h, spec.frame_height - 0.5 * h);
                const double score = uniform(0.3, 0.6);
                sc.detections[f].push_back(Candidate::real(f, Box::centered_at({x, y}, w, h), score,
                                                           random_descriptor(rng, spec.descriptor_length), -1));
            }
        }
    }
    return sc;
}

}  // namespace mdt
